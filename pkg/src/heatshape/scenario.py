"""Scenario files: parsing, validation and construction of problem objects.

A scenario is a YAML mapping::

    task: dtn                   # solve | dtn | shape-diff | verify | invert
    seed: 0
    geometry:
      outer: {radius: 2.0}      # or {coefficients: {cos_x: [...], ...}}
      inner: {coefficients: {cos_x: [0, 1], sin_y: [0, 0.8]}}
      phi: {coefficients: ...}  # optional, defaults to the identity map
    discretization: {n_outer: 64, n_inner: 64, steps: 64, horizon: 2.0}
    data: {kind: manufactured}  # | zero | profile | tables

Validation errors carry the dotted path of the offending field.
"""

import copy
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ScenarioError
from .geometry import ClosedCurve, PerturbationField, ShapeMap, _as_coeffs
from .potentials import BASES, TimeGrid

TASKS = ("solve", "dtn", "shape-diff", "verify", "invert")
DATA_KINDS = ("manufactured", "zero", "profile", "tables")
PROFILES = ("quadratic", "quadratic-tilted")
COEFF_KEYS = ("cos_x", "sin_x", "cos_y", "sin_y")

DEFAULT_INNER = {"cos_x": [0.1, 1.0, 0.0, 0.1], "sin_x": [0.0, 0.0, 0.08],
                 "cos_y": [0.0, 0.0, 0.08], "sin_y": [0.0, 0.8, 0.0, 0.05]}


def _fail(path, msg):
    raise ScenarioError(f"{path}: {msg}")


def _mapping(obj, path):
    if obj is None:
        return {}
    if not isinstance(obj, dict):
        _fail(path, "expected a mapping")
    return obj


def _number(obj, path, positive=False, default=None):
    if obj is None:
        if default is None:
            _fail(path, "required field is missing")
        return float(default)
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        _fail(path, f"expected a number, got {obj!r}")
    if not np.isfinite(obj) or (positive and not obj > 0):
        _fail(path, f"expected a {'positive ' if positive else ''}finite number, got {obj!r}")
    return float(obj)


def _integer(obj, path, minimum=1, default=None, even=False):
    if obj is None:
        if default is None:
            _fail(path, "required field is missing")
        obj = default
    if isinstance(obj, bool) or not isinstance(obj, int):
        _fail(path, f"expected an integer, got {obj!r}")
    if obj < minimum:
        _fail(path, f"must be >= {minimum}")
    if even and obj % 2:
        _fail(path, "must be even")
    return int(obj)


def _vector(obj, path, length=None):
    if not isinstance(obj, (list, tuple)):
        _fail(path, "expected a list of numbers")
    vals = [_number(v, f"{path}[{i}]") for i, v in enumerate(obj)]
    if length is not None and len(vals) != length:
        _fail(path, f"expected {length} entries")
    return vals


def _coefficients(obj, path):
    obj = _mapping(obj, path)
    unknown = set(obj) - set(COEFF_KEYS)
    if unknown:
        _fail(f"{path}.{sorted(unknown)[0]}", f"unknown key (allowed: {', '.join(COEFF_KEYS)})")
    vals = {k: _vector(obj.get(k, [0.0]), f"{path}.{k}") for k in COEFF_KEYS}
    return _as_coeffs(*(vals[k] for k in COEFF_KEYS))


def _curve_coeffs(obj, path):
    """Coefficients of a curve given as ``{radius, center}`` or ``{coefficients}``."""
    obj = _mapping(obj, path)
    if "coefficients" in obj:
        return _coefficients(obj["coefficients"], f"{path}.coefficients")
    r = _number(obj.get("radius"), f"{path}.radius", positive=True)
    cx, cy = _vector(obj.get("center", [0.0, 0.0]), f"{path}.center", 2)
    return _as_coeffs([cx, r], [0.0, 0.0], [cy, 0.0], [0.0, r])


def _time_table(obj, path):
    """``{powers: [...], cos: [[...]], sin: [[...]]}`` -> (powers, cos, sin) arrays."""
    obj = _mapping(obj, path)
    powers = _vector(obj.get("powers", []), f"{path}.powers")
    if any(p <= 0 for p in powers):
        _fail(f"{path}.powers", "time powers must be positive so data vanish at t = 0")
    out = []
    for key in ("cos", "sin"):
        rows = obj.get(key, [[0.0]] * len(powers))
        if not isinstance(rows, list) or len(rows) != len(powers):
            _fail(f"{path}.{key}", "expected one coefficient row per time power")
        out.append([_vector(r, f"{path}.{key}[{i}]") for i, r in enumerate(rows)])
    return powers, out[0], out[1]


def eval_time_table(table, t, theta):
    powers, cos, sin = table
    val = np.zeros_like(theta)
    for p, c, s in zip(powers, cos, sin):
        fourier = sum(ck * np.cos(k * theta) for k, ck in enumerate(c))
        fourier = fourier + sum(sk * np.sin(k * theta) for k, sk in enumerate(s))
        val = val + t**p * fourier
    return val


@dataclass
class Scenario:
    """Validated scenario; ``raw`` keeps the resolved mapping for the manifest."""

    task: str
    seed: int
    outer_coeffs: np.ndarray
    inner_coeffs: np.ndarray
    phi_coeffs: np.ndarray
    n_outer: int
    n_inner: int
    steps: int
    horizon: float
    basis: str
    data: dict
    options: dict
    output: str = None
    raw: dict = field(default_factory=dict, repr=False)

    def outer(self, n=None):
        return ClosedCurve(self.outer_coeffs, n or self.n_outer)

    def shape(self, n=None):
        ref = ClosedCurve(self.inner_coeffs, n or self.n_inner)
        return ShapeMap(ref, self.phi_coeffs)

    def grid(self, steps=None):
        return TimeGrid(self.horizon, steps or self.steps, self.basis)


def _parse_data(obj, path):
    obj = _mapping(obj, path)
    kind = obj.get("kind", "manufactured")
    if kind not in DATA_KINDS:
        _fail(f"{path}.kind", f"unknown data kind {kind!r} (allowed: {', '.join(DATA_KINDS)})")
    out = {"kind": kind}
    if kind == "manufactured":
        if "sources" in obj:
            src = obj["sources"]
            if not isinstance(src, list) or not src:
                _fail(f"{path}.sources", "expected a non-empty list of points")
            out["sources"] = [_vector(p, f"{path}.sources[{i}]", 2) for i, p in enumerate(src)]
            prof = obj.get("profiles")
            if not isinstance(prof, list) or len(prof) != len(src):
                _fail(f"{path}.profiles", "expected one polynomial coefficient list per source")
            out["profiles"] = [_vector(p, f"{path}.profiles[{i}]") for i, p in enumerate(prof)]
            for i, p in enumerate(out["profiles"]):
                if any(p[:2]):
                    _fail(f"{path}.profiles[{i}]", "constant and linear coefficients must be zero")
    elif kind == "profile":
        name = obj.get("name")
        if name not in PROFILES:
            _fail(f"{path}.name", f"unknown profile {name!r} (allowed: {', '.join(PROFILES)})")
        out["name"] = name
        out["amplitude"] = _number(obj.get("amplitude"), f"{path}.amplitude", default=1.0)
    elif kind == "tables":
        out["outer"] = _time_table(obj.get("outer"), f"{path}.outer")
        out["inner"] = _time_table(obj.get("inner"), f"{path}.inner")
    return out


def _parse_options(task, obj, path):
    obj = _mapping(obj, path)
    opts = {}
    if task == "shape-diff":
        if "direction" not in obj:
            _fail(f"{path}.direction", "required field is missing")
        opts["direction"] = _coefficients(obj["direction"], f"{path}.direction")
        eps = obj.get("eps", [1e-3, 5e-4])
        opts["eps"] = _vector(eps, f"{path}.eps", 2)
        if not all(e > 0 for e in opts["eps"]):
            _fail(f"{path}.eps", "steps must be positive")
        opts["check_fd"] = bool(obj.get("check_fd", True))
    elif task == "verify":
        ladder = obj.get("ladder", [[32, 32], [64, 64], [128, 128]])
        if not isinstance(ladder, list) or not ladder:
            _fail(f"{path}.ladder", "expected a non-empty list of [n, steps] rungs")
        rungs = []
        for i, r in enumerate(ladder):
            if not isinstance(r, list) or len(r) not in (2, 3):
                _fail(f"{path}.ladder[{i}]", "expected [n, steps] or [n_outer, n_inner, steps]")
            rungs.append([_integer(v, f"{path}.ladder[{i}][{j}]", 4 if j < len(r) - 1 else 1,
                                   even=j < len(r) - 1) for j, v in enumerate(r)])
        opts["ladder"] = rungs
    elif task == "invert":
        opts["truth"] = _curve_coeffs(obj.get("truth", {"radius": 1.0}), f"{path}.truth")
        opts["initial"] = _curve_coeffs(obj.get("initial", {"radius": 0.8}), f"{path}.initial")
        td = _mapping(obj.get("truth_discretization"), f"{path}.truth_discretization")
        opts["truth_n"] = _integer(td.get("n"), f"{path}.truth_discretization.n", 4, default=96, even=True)
        opts["truth_steps"] = _integer(td.get("steps"), f"{path}.truth_discretization.steps", 1, default=96)
        opts["degree"] = _integer(obj.get("degree"), f"{path}.degree", 1, default=4)
        opts["reg"] = _number(obj.get("reg"), f"{path}.reg", default=1e-4)
        opts["max_iter"] = _integer(obj.get("max_iter"), f"{path}.max_iter", 1, default=20)
        opts["noise"] = _number(obj.get("noise"), f"{path}.noise", default=0.0)
        if opts["noise"] < 0:
            _fail(f"{path}.noise", "must be non-negative")
    return opts


def parse_scenario(obj):
    """Validate a scenario mapping and return a :class:`Scenario`."""
    obj = _mapping(obj, "scenario")
    raw = copy.deepcopy(obj)
    task = obj.get("task")
    if task is None:
        _fail("task", "required field is missing")
    if task not in TASKS:
        _fail("task", f"unknown task {task!r} (allowed: {', '.join(TASKS)})")
    seed = _integer(obj.get("seed"), "seed", 0, default=0)
    geo = _mapping(obj.get("geometry"), "geometry")
    outer = _curve_coeffs(geo.get("outer", {"radius": 2.0}), "geometry.outer")
    inner = _curve_coeffs(geo.get("inner", {"coefficients": DEFAULT_INNER}), "geometry.inner")
    phi = inner
    if "phi" in geo:
        phi = _curve_coeffs(geo["phi"], "geometry.phi")
    disc = _mapping(obj.get("discretization"), "discretization")
    if "discretization" not in obj:
        _fail("discretization", "required field is missing")
    n_outer = _integer(disc.get("n_outer"), "discretization.n_outer", 4, even=True)
    n_inner = _integer(disc.get("n_inner", n_outer), "discretization.n_inner", 4, even=True)
    steps = _integer(disc.get("steps"), "discretization.steps", 1)
    horizon = _number(disc.get("horizon"), "discretization.horizon", positive=True)
    basis = disc.get("basis", "linear")
    if basis not in BASES:
        _fail("discretization.basis", f"unknown basis {basis!r} (allowed: {', '.join(BASES)})")
    data = _parse_data(obj.get("data"), "data")
    options = _parse_options(task, obj.get(task.replace("-", "_")), task.replace("-", "_"))
    output = obj.get("output")
    if output is not None and not isinstance(output, str):
        _fail("output", "expected a directory path")
    return Scenario(task, seed, outer, inner, phi, n_outer, n_inner, steps, horizon, basis,
                    data, options, output, raw)


def load_scenario(path):
    try:
        with open(path) as fh:
            obj = yaml.safe_load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ScenarioError(f"scenario is not valid YAML: {exc}") from exc
    return parse_scenario(obj)


def boundary_data(scenario, outer, shape, grid, ms=None):
    """Outer and pulled-back inner Dirichlet data for the scenario's data block.

    Returns ``(g_outer, g_inner, manufactured)`` where ``manufactured`` is the
    ManufacturedData (or None).
    """
    from .verify import ManufacturedSolution, manufactured_data

    d = scenario.data
    rows = grid.steps + 1
    n_i = shape.reference.n_nodes
    if d["kind"] == "zero":
        return np.zeros((rows, outer.n_nodes)), np.zeros((rows, n_i)), None
    if d["kind"] == "manufactured":
        if ms is None:
            if "sources" in d:
                width = max(len(p) for p in d["profiles"])
                coeffs = np.zeros((len(d["profiles"]), width))
                for i, p in enumerate(d["profiles"]):
                    coeffs[i, :len(p)] = p
                ms = ManufacturedSolution(np.array(d["sources"]), coeffs)
            else:
                ms = ManufacturedSolution.default(shape)
        md = manufactured_data(ms, outer, shape, grid)
        return md.g_outer, md.g_inner, md
    if d["kind"] == "profile":
        a = d["amplitude"]
        th = outer.theta
        tilt = 1.0 + 0.3 * np.cos(th) + 0.2 * np.sin(th) if d["name"] == "quadratic-tilted" else np.ones_like(th)
        g_o = a * np.outer(grid.times**2, tilt)
        return g_o, np.zeros((rows, n_i)), None
    g_o = np.array([eval_time_table(d["outer"], t, outer.theta) for t in grid.times])
    g_i = np.array([eval_time_table(d["inner"], t, shape.reference.theta) for t in grid.times])
    return g_o, g_i, None


def direction_field(scenario):
    return PerturbationField(scenario.options["direction"])
