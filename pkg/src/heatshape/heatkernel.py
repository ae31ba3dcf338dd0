"""Heat kernel, exponential integrals and closed-form time-slab integrals.

All slab formulas are for the planar kernel S_2.  Time integrals are taken
over a segment ``[a, b]`` of the *elapsed* time ``s = t - tau`` against an
affine weight ``alpha + beta * s``; every piecewise-linear time basis used by
the layer operators decomposes into such segments.  Writing ``c = |x|^2 / 4``
the primitives are::

    int e^{-c/s} / s   ds = E1(c/s)
    int e^{-c/s}       ds = s e^{-c/s} - c E1(c/s)
    int e^{-c/s} / s^2 ds = e^{-c/s} / c
    int e^{-c/s} / s^3 ds = (1/(c s) + 1/c^2) e^{-c/s}

so scalar, gradient and Hessian slab integrals are combinations of E1 and
Gaussian factors.  ``E1(inf) = 0`` covers segments starting at ``s = 0``.
"""

import math

import numpy as np

from .errors import DomainError

EULER_GAMMA = 0.57721566490153286061
# exponents below this underflow to exactly zero
UNDERFLOW = 745.0

_EPS = 1e-16
_FPMIN = 1e-300
_MAXIT = 2000


def _expint_unchecked(n, x):
    """Generalized exponential integral E_n(x) for x >= 0 (x = inf allowed)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    if n == 0:
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            out = np.where(x > UNDERFLOW, 0.0, np.exp(-x) / x)
        return out
    zero = x == 0.0
    if np.any(zero):
        out[zero] = np.inf if n == 1 else 1.0 / (n - 1)

    nm1 = n - 1
    small = (x > 0.0) & (x <= 1.0)
    if np.any(small):
        xs = x[small]
        ans = np.full_like(xs, 1.0 / nm1) if nm1 else -np.log(xs) - EULER_GAMMA
        fact = np.ones_like(xs)
        for i in range(1, 60):
            fact *= -xs / i
            if i != nm1:
                delta = -fact / (i - nm1)
            else:
                psi = -EULER_GAMMA + sum(1.0 / k for k in range(1, nm1 + 1))
                delta = fact * (-np.log(xs) + psi)
            ans += delta
            if np.all(np.abs(delta) < np.abs(ans) * _EPS):
                break
        out[small] = ans

    large = (x > 1.0) & (x <= UNDERFLOW)
    if np.any(large):
        xl = x[large]
        # modified Lentz evaluation of the continued fraction
        b = xl + n
        c = np.full_like(xl, 1.0 / _FPMIN)
        d = 1.0 / b
        h = d.copy()
        active = np.arange(xl.size)
        for i in range(1, _MAXIT):
            a = -i * (nm1 + i)
            b[active] += 2.0
            d[active] = 1.0 / (a * d[active] + b[active])
            c[active] = b[active] + a / c[active]
            delta = c[active] * d[active]
            h[active] *= delta
            active = active[np.abs(delta - 1.0) >= _EPS]
            if active.size == 0:
                break
        out[large] = h * np.exp(-xl)
    # x > UNDERFLOW (including inf) stays zero
    return out


def expint(n, x):
    """Generalized exponential integral ``E_n(x) = int_1^inf e^{-xt} t^{-n} dt``.

    Series expansion for ``x <= 1`` and a continued fraction for ``x > 1``.
    ``n = 0`` returns ``e^{-x}/x``.  Arguments beyond the underflow threshold
    return exactly zero.
    """
    if n < 0:
        raise DomainError("order n must be non-negative")
    x = np.asarray(x, dtype=float)
    if np.any(~(x >= 0.0)) or (n <= 1 and np.any(x == 0.0)):
        raise DomainError("E_n(x) requires x > 0 (x >= 0 for n >= 2)")
    out = _expint_unchecked(n, x)
    return out if out.ndim else float(out)


def exp_integral_e1(z):
    """Exponential integral ``E1(z) = int_z^inf e^{-u}/u du`` for ``z > 0``."""
    z = np.asarray(z, dtype=float)
    if np.any(~(z > 0.0)):
        raise DomainError("E1(z) is defined here for z > 0 only")
    out = _expint_unchecked(1, z)
    return out if out.ndim else float(out)


def _e1(z):
    return _expint_unchecked(1, z)


def heat_kernel(n, t, x):
    """Fundamental solution ``S_n(t, x)`` of the heat operator.

    ``x`` has trailing dimension ``n``; ``t`` broadcasts against ``x[..., 0]``.
    Zero for ``t <= 0``.
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if x.shape[-1] != n:
        raise DomainError(f"x must have trailing dimension {n}")
    r2 = np.sum(x * x, axis=-1)
    t, r2 = np.broadcast_arrays(t, r2)
    if np.any((t == 0.0) & (r2 == 0.0)):
        raise DomainError("heat kernel is undefined at (t, x) = (0, 0)")
    out = np.zeros(t.shape)
    pos = t > 0.0
    tp = t[pos]
    expo = r2[pos] / (4.0 * tp)
    with np.errstate(under="ignore"):
        out[pos] = np.where(expo > UNDERFLOW, 0.0, np.exp(-expo)) / (4.0 * np.pi * tp) ** (n / 2)
    return out if out.ndim else float(out)


def heat_kernel_grad(n, t, x):
    """Spatial gradient ``-x / (2t) * S_n(t, x)``; zero vector for ``t <= 0``."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    tb = np.broadcast_to(t, x.shape[:-1])
    out = np.zeros(np.broadcast_shapes(x.shape, tb.shape + (n,)))
    pos = tb > 0.0
    if np.any(pos):
        s = heat_kernel(n, tb[pos], x[pos])
        out[pos] = -x[pos] / (2.0 * tb[pos])[..., None] * np.asarray(s)[..., None]
    return out


def _ratio(c, s):
    if s == 0.0:
        return np.full_like(c, np.inf)
    with np.errstate(over="ignore"):
        return c / s


def segment_scalar(c, a, b, alpha=1.0, beta=0.0):
    """``int_a^b (alpha + beta s) S_2(s, x) ds`` with ``c = |x|^2/4``.

    Entries with ``c = 0`` and ``a > 0`` get their finite limit; ``c = 0`` with
    ``a = 0`` is the log-singular diagonal and returns ``inf``.
    """
    c = np.asarray(c, dtype=float)
    zb = _ratio(c, b)
    za = _ratio(c, a)
    with np.errstate(invalid="ignore", over="ignore", under="ignore"):
        de1 = _e1(zb) - _e1(za)
        gb = np.where(zb > UNDERFLOW, 0.0, b * np.exp(-np.minimum(zb, UNDERFLOW)))
        ga = 0.0 if a == 0.0 else np.where(za > UNDERFLOW, 0.0, a * np.exp(-np.minimum(za, UNDERFLOW)))
        out = (alpha * de1 + beta * ((gb - ga) - c * de1)) / (4.0 * np.pi)
    at0 = c == 0.0
    if np.any(at0):
        if a > 0.0:
            out = np.where(at0, (alpha * math.log(b / a) + beta * (b - a)) / (4.0 * np.pi), out)
        else:
            out = np.where(at0, np.inf, out)
    return out


def _gauss_diff_over_c(c, a, b):
    """``(e^{-c/b} - e^{-c/a}) / c`` evaluated without cancellation."""
    zb = _ratio(c, b)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
        eb = np.where(zb > UNDERFLOW, 0.0, np.exp(-np.minimum(zb, UNDERFLOW)))
        if a == 0.0:
            return eb / c
        gap = c * (1.0 / a - 1.0 / b)
        ratio = np.where(c > 0.0, -np.expm1(-gap) / np.where(c > 0.0, c, 1.0), 1.0 / a - 1.0 / b)
        return eb * ratio


def segment_grad_factor(c, a, b, alpha=1.0, beta=0.0):
    """Scalar ``g`` with ``int_a^b (alpha + beta s) grad S_2(s, x) ds = g * x``."""
    c = np.asarray(c, dtype=float)
    with np.errstate(invalid="ignore", over="ignore"):
        de1 = _e1(_ratio(c, b)) - _e1(_ratio(c, a))
        if a > 0.0:
            de1 = np.where(c == 0.0, math.log(b / a), de1)
        return -(alpha * _gauss_diff_over_c(c, a, b) + beta * de1) / (8.0 * np.pi)


def segment_hessian_factors(c, a, b, alpha=1.0, beta=0.0):
    """Pair ``(f_xx, f_id)`` with ``int (alpha + beta s) D^2 S_2 ds = f_xx x x^T + f_id I``.

    Only valid for ``c > 0``.
    """
    c = np.asarray(c, dtype=float)
    zb = _ratio(c, b)
    za = _ratio(c, a)
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        def k3(z):
            return np.where(z > UNDERFLOW, 0.0, (z + 1.0) * np.exp(-np.minimum(z, UNDERFLOW))) / c**2
        dk3 = k3(zb) - (k3(za) if a > 0.0 else 0.0)
        dj2 = _gauss_diff_over_c(c, a, b)
        di0 = _e1(zb) - _e1(za)
    f_xx = (alpha * dk3 + beta * dj2) / (16.0 * np.pi)
    f_id = -(alpha * dj2 + beta * di0) / (8.0 * np.pi)
    return f_xx, f_id


def slab_integral(r, a, b):
    """``int_a^b S_2(s, r) ds = (E1(r^2/4b) - E1(r^2/4a)) / (4 pi)``."""
    r = np.asarray(r, dtype=float)
    if a < 0.0 or b < a:
        raise DomainError("slab requires 0 <= a <= b")
    if a == 0.0 and np.any(r == 0.0):
        raise DomainError("slab integral diverges at r = 0 when a = 0")
    if a == b:
        out = np.zeros_like(r)
    else:
        out = segment_scalar(r * r / 4.0, a, b)
    return out if out.ndim else float(out)


def slab_integral_grad(x, a, b):
    """``int_a^b grad S_2(s, x) ds = -x (e^{-|x|^2/4b} - e^{-|x|^2/4a}) / (2 pi |x|^2)``."""
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1)
    if np.any(r2 == 0.0):
        raise DomainError("slab gradient requires x != 0")
    if a < 0.0 or b < a:
        raise DomainError("slab requires 0 <= a <= b")
    if a == b:
        return np.zeros_like(x)
    g = segment_grad_factor(r2 / 4.0, a, b)
    return np.asarray(g)[..., None] * x


def source_moment(c, t, k):
    """``int_0^t s^k S_2(s, x) ds = t^k E_{k+1}(c/t) / (4 pi)`` for ``c > 0``."""
    return t**k * _expint_unchecked(k + 1, np.asarray(c, dtype=float) / t) / (4.0 * np.pi)


def source_moment_grad_factor(c, t, k):
    """Scalar ``g`` with ``int_0^t s^k grad S_2(s, x) ds = g * x`` for ``c > 0``."""
    c = np.asarray(c, dtype=float)
    # int_0^t s^{j-1} e^{-c/s} ds = t^j E_{j+1}(c/t), here j = k - 1
    return -(t ** (k - 1)) * _expint_unchecked(k, c / t) / (8.0 * np.pi)
