"""Normalized Jacobi polynomials on the sphere, harmonic dimensions and measures.

``P_k^n`` denotes the Jacobi polynomial with parameters
``alpha = beta = (n - 3) / 2`` normalized by ``P_k^n(1) = 1``.  For ``n = 3``
these are the Legendre polynomials, for ``n = 2`` the Chebyshev polynomials of
the first kind.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
import numpy as np

DEFAULT_PRECISION = 256
MIN_TAIL_CELLS = 1024
MAX_TAIL_CELLS = 1 << 15


@dataclass(frozen=True)
class JacobiFamily:
    """Recurrence data for ``P_k^n``, ``k = 0, 1, ...``.

    The three-term recurrence is ``P_k = a_k u P_{k-1} + b_k P_{k-2}`` with
    ``a_k = (2k + 2 alpha - 1) / (k + 2 alpha)`` and
    ``b_k = -(k - 1) / (k + 2 alpha)``.
    """

    n: int
    alpha: Fraction = field(init=False)
    _float_cache: dict = field(init=False, repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"dimension must be an integer >= 2, got {self.n!r}")
        object.__setattr__(self, "alpha", Fraction(self.n - 3, 2))

    def coefficients(self, k: int) -> tuple[Fraction, Fraction]:
        """Exact ``(a_k, b_k)`` for ``k >= 2``."""
        if k < 2:
            raise ValueError("recurrence coefficients are defined for k >= 2")
        two_alpha = 2 * self.alpha
        return (2 * k + two_alpha - 1) / (k + two_alpha), Fraction(-(k - 1)) / (k + two_alpha)

    def float_coefficients(self, kmax: int) -> tuple[np.ndarray, np.ndarray]:
        """Arrays ``a[k], b[k]`` for ``k <= kmax`` (entries 0 and 1 unused)."""
        cached = self._float_cache.get("ab")
        if cached is None or len(cached[0]) <= kmax:
            k = np.arange(max(kmax, 2) + 1, dtype=float)
            two_alpha = float(self.n - 3)
            with np.errstate(divide="ignore", invalid="ignore"):
                a = (2 * k + two_alpha - 1) / (k + two_alpha)
                b = -(k - 1) / (k + two_alpha)
            a[:2] = 0.0
            b[:2] = 0.0
            cached = (a, b)
            self._float_cache["ab"] = cached
        return cached[0][: kmax + 1], cached[1][: kmax + 1]


@functools.lru_cache(maxsize=None)
def family(n: int) -> JacobiFamily:
    return JacobiFamily(n)


def _as_family(fam) -> JacobiFamily:
    return fam if isinstance(fam, JacobiFamily) else family(int(fam))


def _check_point(u):
    if not -1 <= u <= 1:
        raise ValueError(f"evaluation point must lie in [-1, 1], got {u!r}")


def jacobi_sequence(fam, kmax: int, u, precision: int = DEFAULT_PRECISION) -> list:
    """Return ``[P_0^n(u), ..., P_kmax^n(u)]`` as mpmath floats."""
    fam = _as_family(fam)
    if kmax < 0:
        raise ValueError("degree must be nonnegative")
    with mpmath.workprec(precision):
        x = mpmath.mpf(u)
        _check_point(x)
        out = [mpmath.mpf(1)]
        if kmax >= 1:
            out.append(x)
        two_alpha = fam.n - 3
        for k in range(2, kmax + 1):
            den = k + two_alpha
            out.append(((2 * k + two_alpha - 1) * x * out[-1] - (k - 1) * out[-2]) / den)
    return out


def jacobi_eval(fam, k: int, u, precision: int = DEFAULT_PRECISION):
    """``P_k^n(u)`` by the three-term recurrence at ``precision`` bits."""
    if k < 0:
        raise ValueError("degree must be nonnegative")
    return jacobi_sequence(fam, k, u, precision)[k]


def jacobi_table(fam, kmax: int, u) -> np.ndarray:
    """Double-precision table ``T[k, j] = P_k^n(u_j)`` for ``k <= kmax``."""
    fam = _as_family(fam)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any(np.abs(u) > 1):
        raise ValueError("evaluation points must lie in [-1, 1]")
    a, b = fam.float_coefficients(kmax)
    out = np.empty((kmax + 1, u.size))
    out[0] = 1.0
    if kmax >= 1:
        out[1] = u
    for k in range(2, kmax + 1):
        out[k] = a[k] * u * out[k - 1] + b[k] * out[k - 2]
    return out


@functools.lru_cache(maxsize=None)
def jacobi_poly(n: int, k: int) -> tuple[Fraction, ...]:
    """Exact coefficients ``(c_0, ..., c_k)`` of ``P_k^n(x) = sum c_i x^i``."""
    fam = family(n)
    if k == 0:
        return (Fraction(1),)
    if k == 1:
        return (Fraction(0), Fraction(1))
    a, b = fam.coefficients(k)
    p1, p2 = jacobi_poly(n, k - 1), jacobi_poly(n, k - 2)
    out = [Fraction(0)] * (k + 1)
    for i, c in enumerate(p1):
        out[i + 1] += a * c
    for i, c in enumerate(p2):
        out[i] += b * c
    return tuple(out)


def harmonic_dim(n: int, k: int) -> int:
    """Dimension ``h_k^n`` of the space of degree-``k`` spherical harmonics in ``n`` variables."""
    if n < 3:
        raise ValueError("harmonic dimensions are provided for n >= 3")
    if k < 0:
        raise ValueError("degree must be nonnegative")
    if k == 0:
        return 1
    h = Fraction(2 * k + n - 2, k + n - 2) * math.comb(k + n - 2, k)
    assert h.denominator == 1
    return int(h)


def sphere_surface(n: int, precision: int = DEFAULT_PRECISION):
    """Surface measure of the unit sphere ``S^{n-1}``: ``2 pi^{n/2} / Gamma(n/2)``."""
    if n < 2:
        raise ValueError("dimension must be >= 2")
    with mpmath.workprec(precision):
        return 2 * mpmath.pi ** (mpmath.mpf(n) / 2) / mpmath.gamma(mpmath.mpf(n) / 2)


def _sine_power_integral(m: int) -> tuple[Fraction, bool]:
    """``int_0^pi sin^m = q * (pi if flag else 2)`` with ``q`` rational."""
    q = Fraction(1)
    for j in range(m, 1, -2):
        q *= Fraction(j - 1, j)
    return q, m % 2 == 0


def normalizing_integral(n: int, precision: int = DEFAULT_PRECISION):
    """``R(n) = int_0^pi sin^{n-3}(phi) dphi``."""
    if n < 3:
        raise ValueError("R(n) needs n >= 3")
    q, has_pi = _sine_power_integral(n - 3)
    with mpmath.workprec(precision):
        base = mpmath.pi if has_pi else mpmath.mpf(2)
        return mpmath.mpf(q.numerator) / q.denominator * base


@dataclass(frozen=True)
class SphereConstants:
    n: int
    precision: int = DEFAULT_PRECISION

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("sphere constants are provided for n >= 3")

    @functools.cached_property
    def omega_n(self):
        return sphere_surface(self.n, self.precision)

    @functools.cached_property
    def R_n(self):
        return normalizing_integral(self.n, self.precision)

    def h(self, k: int) -> int:
        return harmonic_dim(self.n, k)


def tail_cells(k0: int) -> int:
    """Number of uniform cells on ``[0, pi]`` used for the tail integral at ``k0``."""
    cells = MIN_TAIL_CELLS
    while cells < MAX_TAIL_CELLS and cells < 64 * math.isqrt(max(k0, 1)):
        cells *= 2
    return cells


@functools.lru_cache(maxsize=64)
def _tail_grid(n: int, t, cells: int, precision: int):
    # Upper bounds of t^2 + (1 - t^2) cos^2 and sin^{n-3} at the endpoints of
    # the cells covering [0, pi/2]; the integrand is symmetric about pi/2.
    iv = mpmath.iv
    old = iv.prec
    iv.prec = precision
    try:
        half = cells // 2
        t2 = iv.mpf(t) ** 2
        step = iv.pi / cells
        cos_part, sin_part = [], []
        for j in range(half + 1):
            phi = step * j
            c = iv.cos(phi)
            cos_part.append(t2 + (1 - t2) * c * c)
            sin_part.append(iv.sin(phi) ** (n - 3) if n > 3 else iv.mpf(1))
        q, has_pi = _sine_power_integral(n - 3)
        r_n = iv.mpf(q.numerator) / q.denominator * (iv.pi if has_pi else iv.mpf(2))
        return tuple(cos_part), tuple(sin_part), step, r_n
    finally:
        iv.prec = old


def jacobi_tail_bound(n: int, t, k0: int, precision: int = DEFAULT_PRECISION, cells: int | None = None):
    """Rigorous upper bound on ``|P_k^n(t)|`` valid for every ``k >= k0``.

    Bounds ``R(n)^{-1} int_0^pi (t^2 + (1 - t^2) cos^2 phi)^{k0/2} sin^{n-3} phi dphi``
    from above by an outward-rounded upper Riemann sum over ``cells`` uniform
    cells; on each cell the cosine factor is monotone and the sine factor is
    monotone, so the endpoint values bound the integrand.  The result is
    clipped at 1, which always bounds ``|P_k^n|`` on ``[-1, 1]``.
    """
    if n < 3:
        raise ValueError("the integral bound needs n >= 3")
    if k0 < 0:
        raise ValueError("k0 must be nonnegative")
    with mpmath.workprec(precision):
        tm = mpmath.mpf(t)
    if not abs(tm) < 1:
        raise ValueError("the tail bound requires |t| < 1")
    if cells is None:
        cells = tail_cells(k0)
    if cells < 2 or cells % 2:
        raise ValueError("cells must be an even integer >= 2")
    cos_part, sin_part, step, r_n = _tail_grid(n, tm, cells, precision)
    iv = mpmath.iv
    old = iv.prec
    iv.prec = precision
    try:
        expo = iv.mpf(k0) / 2
        total = iv.mpf(0)
        for j in range(cells // 2):
            # cos^2 decreases and sin increases on [0, pi/2]
            c = iv.mpf(cos_part[j].b)
            s = iv.mpf(sin_part[j + 1].b)
            total += (c ** expo if k0 else iv.mpf(1)) * s
        bound = (2 * total * step) / r_n
        upper = bound.b
    finally:
        iv.prec = old
    with mpmath.workprec(precision):
        return min(mpmath.mpf(upper), mpmath.mpf(1))
