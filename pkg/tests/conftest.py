import numpy as np
import pytest

from heatshape.geometry import ClosedCurve, ShapeMap
from heatshape.scenario import DEFAULT_INNER, _coefficients


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def wavy_shape(n=32):
    """Non-circular reference inner curve with identity map."""
    ref = ClosedCurve(_coefficients(DEFAULT_INNER, "inner"), n)
    return ShapeMap.identity(ref)


def random_map(shape, rng, size=0.05, degree=3):
    """Small random trigonometric deformation of the identity (stays admissible)."""
    c = np.zeros((4, degree + 1))
    c[:, :shape.coeffs.shape[1]] = shape.coeffs[:, :degree + 1]
    pert = rng.uniform(-size, size, c.shape)
    pert[1, 0] = pert[3, 0] = 0.0
    return ShapeMap(shape.reference, c + pert)


def random_field(rng, degree=3, size=1.0):
    from heatshape.geometry import PerturbationField

    c = rng.uniform(-size, size, (4, degree + 1))
    c[1, 0] = c[3, 0] = 0.0
    return PerturbationField(c)


def tangential_field_for(shape, f_coeffs, normal=False):
    """``f(theta) P'(theta)`` (or ``f |P'| nu`` with ``normal``) as a trigonometric field."""
    from heatshape.geometry import PerturbationField, coefficients_from_samples

    n = 8 * (shape.coeffs.shape[1] + len(f_coeffs))
    th = 2 * np.pi * np.arange(n) / n
    f = sum(c * np.cos(k * th) for k, c in enumerate(f_coeffs))
    v = shape.image.evaluate(th, 1)
    if normal:
        v = np.stack([v[:, 1], -v[:, 0]], axis=-1)
    return PerturbationField(coefficients_from_samples(f[:, None] * v, n // 2 - 1))


ACCEPTANCE_LINES = []


def record_criterion(number, title, ok, detail):
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
