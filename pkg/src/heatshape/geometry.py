"""Trigonometric closed curves, shape maps and perturbation fields.

A curve is ``gamma(theta) = sum_k (cx_k cos k theta + sx_k sin k theta,
cy_k cos k theta + sy_k sin k theta)`` sampled at ``theta_j = 2 pi j / N``.
Coefficients are stored as a ``(4, D + 1)`` array in the order
``cos_x, sin_x, cos_y, sin_y``.  A shape map ``phi`` is represented only
through the composed parameterization ``phi o gamma``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import AdmissibilityError, GeometryError

MIN_SPEED = 1e-12


def _as_coeffs(cos_x, sin_x, cos_y, sin_y):
    arrs = [np.atleast_1d(np.asarray(a, dtype=float)) for a in (cos_x, sin_x, cos_y, sin_y)]
    size = max(a.size for a in arrs)
    out = np.zeros((4, size))
    for row, a in zip(out, arrs):
        row[: a.size] = a
    return out


def _pad(coeffs, size):
    if coeffs.shape[1] >= size:
        return coeffs
    out = np.zeros((4, size))
    out[:, : coeffs.shape[1]] = coeffs
    return out


def trig_eval(coeffs, theta, order=0):
    """Evaluate the ``order``-th theta-derivative of a coefficient table.

    Returns an array of shape ``theta.shape + (2,)``.
    """
    theta = np.asarray(theta, dtype=float)
    k = np.arange(coeffs.shape[1])
    arg = theta[..., None] * k
    cos, sin = np.cos(arg), np.sin(arg)
    # d^m/dθ^m cos(kθ) and sin(kθ) cycle with period 4
    fac = k.astype(float) ** order
    m = order % 4
    if m == 0:
        bc, bs = cos, sin
    elif m == 1:
        bc, bs = -sin, cos
    elif m == 2:
        bc, bs = -cos, -sin
    else:
        bc, bs = sin, -cos
    bc, bs = bc * fac, bs * fac
    x = bc @ coeffs[0] + bs @ coeffs[1]
    y = bc @ coeffs[2] + bs @ coeffs[3]
    return np.stack([x, y], axis=-1)


def coefficients_from_samples(values, degree=None):
    """Trigonometric coefficients of periodic samples ``values`` of shape (N, 2)."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    degree = n // 2 if degree is None else degree
    fx = np.fft.rfft(values[:, 0]) / n
    fy = np.fft.rfft(values[:, 1]) / n
    coeffs = np.zeros((4, degree + 1))
    for row, f in ((0, fx), (2, fy)):
        kmax = min(degree, f.size - 1)
        coeffs[row, 0] = f[0].real
        coeffs[row, 1 : kmax + 1] = 2.0 * f[1 : kmax + 1].real
        coeffs[row + 1, 1 : kmax + 1] = -2.0 * f[1 : kmax + 1].imag
        if n % 2 == 0 and kmax == n // 2:
            coeffs[row, kmax] /= 2.0
            coeffs[row + 1, kmax] = 0.0
    return coeffs


class ClosedCurve:
    """Planar closed curve with cached node data.

    Attributes ``points``, ``velocity``, ``acceleration`` are ``(N, 2)``
    arrays; ``speed`` is ``|gamma'|`` and ``normal`` the unit vector
    ``(y', -x') / |gamma'|``, which points outward for counterclockwise
    curves.  Node arrays are read-only.
    """

    def __init__(self, coeffs, n_nodes):
        coeffs = np.array(coeffs, dtype=float)
        if coeffs.ndim != 2 or coeffs.shape[0] != 4:
            raise GeometryError("coefficients must have shape (4, D + 1)")
        if n_nodes < 4 or n_nodes % 2:
            raise GeometryError("node count must be even and >= 4")
        self.coeffs = coeffs
        self.n_nodes = int(n_nodes)
        self.theta = 2.0 * np.pi * np.arange(n_nodes) / n_nodes
        self.points = trig_eval(coeffs, self.theta, 0)
        self.velocity = trig_eval(coeffs, self.theta, 1)
        self.acceleration = trig_eval(coeffs, self.theta, 2)
        self.speed = np.hypot(self.velocity[:, 0], self.velocity[:, 1])
        with np.errstate(divide="ignore", invalid="ignore"):
            self.tangent = self.velocity / self.speed[:, None]
        self.normal = np.stack([self.tangent[:, 1], -self.tangent[:, 0]], axis=-1)
        for arr in (self.coeffs, self.theta, self.points, self.velocity,
                    self.acceleration, self.speed, self.tangent, self.normal):
            arr.flags.writeable = False

    @classmethod
    def from_coefficients(cls, cos_x, sin_x, cos_y, sin_y, n_nodes):
        return cls(_as_coeffs(cos_x, sin_x, cos_y, sin_y), n_nodes)

    @classmethod
    def circle(cls, radius=1.0, n_nodes=64, center=(0.0, 0.0)):
        return cls.from_coefficients([center[0], radius], [0.0, 0.0],
                                     [center[1], 0.0], [0.0, radius], n_nodes)

    @classmethod
    def ellipse(cls, a, b, n_nodes=64, center=(0.0, 0.0)):
        return cls.from_coefficients([center[0], a], [0.0, 0.0],
                                     [center[1], 0.0], [0.0, b], n_nodes)

    @property
    def degree(self):
        return self.coeffs.shape[1] - 1

    @property
    def h(self):
        """Parameter step ``2 pi / N``."""
        return 2.0 * np.pi / self.n_nodes

    @property
    def weights(self):
        """Trapezoid arc-length weights ``|gamma'(theta_j)| 2 pi / N``."""
        return self.speed * self.h

    def with_nodes(self, n_nodes):
        return ClosedCurve(self.coeffs, n_nodes)

    def evaluate(self, theta, order=0):
        return trig_eval(self.coeffs, theta, order)

    def sample(self, n):
        """Points at ``n`` equispaced parameters (for polygon tests)."""
        return trig_eval(self.coeffs, 2.0 * np.pi * np.arange(n) / n)

    @property
    def signed_area(self):
        # exact for trigonometric polynomials once N > 2 D
        n = max(self.n_nodes, 4 * self.degree + 4)
        th = 2.0 * np.pi * np.arange(n) / n
        p = trig_eval(self.coeffs, th)
        v = trig_eval(self.coeffs, th, 1)
        return 0.5 * np.sum(p[:, 0] * v[:, 1] - p[:, 1] * v[:, 0]) * 2.0 * np.pi / n

    @property
    def diameter(self):
        p = self.sample(max(self.n_nodes, 128))
        d = p[:, None, :] - p[None, :, :]
        return float(np.sqrt(np.max(np.sum(d * d, axis=-1))))

    def check_immersed(self):
        if np.min(self.speed) < MIN_SPEED:
            raise GeometryError(f"curve not immersed: min speed {np.min(self.speed):.3e}")

    def __repr__(self):
        return f"ClosedCurve(degree={self.degree}, n_nodes={self.n_nodes})"


def curve_frame(curve, theta):
    """Point, unit tangent, outward unit normal and speed at parameter ``theta``."""
    p = curve.evaluate(theta)
    v = curve.evaluate(theta, 1)
    speed = np.hypot(v[..., 0], v[..., 1])
    if np.any(speed < MIN_SPEED):
        raise GeometryError("degenerate speed in curve_frame")
    tangent = v / speed[..., None]
    normal = np.stack([tangent[..., 1], -tangent[..., 0]], axis=-1)
    return p, tangent, normal, speed


class PerturbationField:
    """Vector field ``h o gamma`` given by trigonometric coefficients."""

    def __init__(self, coeffs):
        coeffs = np.array(coeffs, dtype=float)
        if coeffs.ndim != 2 or coeffs.shape[0] != 4:
            raise GeometryError("coefficients must have shape (4, D + 1)")
        if not np.all(np.isfinite(coeffs)):
            raise GeometryError("perturbation coefficients must be finite")
        self.coeffs = coeffs
        self.coeffs.flags.writeable = False

    @classmethod
    def from_coefficients(cls, cos_x, sin_x, cos_y, sin_y):
        return cls(_as_coeffs(cos_x, sin_x, cos_y, sin_y))

    @classmethod
    def zero(cls):
        return cls(np.zeros((4, 1)))

    def values(self, theta, order=0):
        return trig_eval(self.coeffs, theta, order)

    def __add__(self, other):
        size = max(self.coeffs.shape[1], other.coeffs.shape[1])
        return PerturbationField(_pad(self.coeffs, size) + _pad(other.coeffs, size))

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, scalar):
        return PerturbationField(self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0


class ShapeMap:
    """Diffeomorphism ``phi`` of the reference inner curve, stored as ``phi o gamma``."""

    def __init__(self, reference, coeffs):
        self.reference = reference
        self.coeffs = np.array(coeffs, dtype=float)
        self.coeffs.flags.writeable = False
        self.image = ClosedCurve(self.coeffs, reference.n_nodes)

    @classmethod
    def identity(cls, reference):
        return cls(reference, reference.coeffs)

    def perturbed(self, h, eps=1.0):
        size = max(self.coeffs.shape[1], h.coeffs.shape[1])
        return ShapeMap(self.reference, _pad(self.coeffs, size) + eps * _pad(h.coeffs, size))

    def with_nodes(self, n_nodes):
        return ShapeMap(self.reference.with_nodes(n_nodes), self.coeffs)

    def __repr__(self):
        return f"ShapeMap(degree={self.coeffs.shape[1] - 1}, n_nodes={self.reference.n_nodes})"


def surface_jacobian(phi):
    """Pull-back weights ``|(phi o gamma)'| / |gamma'|`` at the reference nodes."""
    img = phi.image
    if np.min(img.speed) < MIN_SPEED:
        raise GeometryError("image curve has zero speed")
    phi.reference.check_immersed()
    return img.speed / phi.reference.speed


def surface_jacobian_diff(phi0, h):
    """Directional derivative of :func:`surface_jacobian` at ``phi0`` along ``h``."""
    img = phi0.image
    if np.min(img.speed) < MIN_SPEED:
        raise GeometryError("image curve has zero speed")
    dh = h.values(img.theta, 1)
    return np.sum(img.velocity * dh, axis=-1) / (img.speed * phi0.reference.speed)


@dataclass(frozen=True)
class AdmissibilityVerdict:
    ok: bool
    reason: str = ""
    detail: str = ""

    def __bool__(self):
        return self.ok

    def raise_if_rejected(self):
        if not self.ok:
            raise AdmissibilityError(self)


def _segments_intersect(p):
    """True if the closed polygon ``p`` has two crossing non-adjacent edges."""
    a = p
    b = np.roll(p, -1, axis=0)
    n = len(p)

    def orient(p1, p2, p3):
        return (p2[..., 0] - p1[..., 0]) * (p3[..., 1] - p1[..., 1]) - \
            (p2[..., 1] - p1[..., 1]) * (p3[..., 0] - p1[..., 0])

    A, B = a[:, None, :], b[:, None, :]
    C, D = a[None, :, :], b[None, :, :]
    o1, o2 = orient(A, B, C), orient(A, B, D)
    o3, o4 = orient(C, D, A), orient(C, D, B)
    cross = (o1 * o2 < 0) & (o3 * o4 < 0)
    i, j = np.indices((n, n))
    gap = np.abs(i - j)
    adjacent = (gap <= 1) | (gap >= n - 1)
    return bool(np.any(cross & ~adjacent))


def winding_numbers(polygon, points):
    """Winding number of a closed polygon around each point."""
    d = polygon[None, :, :] - points[:, None, :]
    ang = np.arctan2(d[..., 1], d[..., 0])
    dang = np.diff(np.concatenate([ang, ang[:, :1]], axis=1), axis=1)
    dang = (dang + np.pi) % (2.0 * np.pi) - np.pi
    return np.rint(np.sum(dang, axis=1) / (2.0 * np.pi)).astype(int)


def validate_admissible(phi, outer, clearance=1e-2, samples=None):
    """Check that ``phi`` maps the reference curve to a hole strictly inside ``outer``.

    ``clearance`` is relative to the outer diameter.  Conditions are tested
    in the order: immersion, orientation, simplicity, containment, clearance.
    """
    img = phi.image
    n = samples or max(4 * img.n_nodes, 8 * img.degree + 8, 256)
    th = 2.0 * np.pi * np.arange(n) / n
    v = trig_eval(img.coeffs, th, 1)
    speed = np.hypot(v[:, 0], v[:, 1])
    smin = float(min(np.min(speed), np.min(img.speed)))
    if not smin >= MIN_SPEED:
        return AdmissibilityVerdict(False, "not immersed", f"min speed {smin:.3e}")
    area = img.signed_area
    if area <= 0.0:
        return AdmissibilityVerdict(False, "orientation reversed", f"signed area {area:.3e}")
    poly = trig_eval(img.coeffs, th)
    if _segments_intersect(poly):
        return AdmissibilityVerdict(False, "self-intersection", "image polygon edges cross")
    outer_poly = outer.sample(max(n, 4 * outer.n_nodes))
    if outer.signed_area <= 0.0 or _segments_intersect(outer.sample(max(256, 2 * outer.n_nodes))):
        return AdmissibilityVerdict(False, "invalid outer curve", "outer curve not simple/positive")
    wn = winding_numbers(outer_poly, poly)
    if np.any(wn != 1):
        return AdmissibilityVerdict(False, "not inside outer",
                                    f"{int(np.sum(wn != 1))} of {n} samples outside")
    d = poly[:, None, :] - outer_poly[None, :, :]
    gap = float(np.sqrt(np.min(np.sum(d * d, axis=-1))))
    need = clearance * outer.diameter
    if gap < need:
        return AdmissibilityVerdict(False, "clearance violated", f"gap {gap:.4g} < {need:.4g}")
    return AdmissibilityVerdict(True, "", f"gap {gap:.4g}")
