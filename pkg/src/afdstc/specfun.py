"""Special functions and semi-infinite quadrature.

Everything here is vectorised over numpy arrays and pure, so it is safe to
call from several threads at once. Scalars in give Python floats out.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import special as _sp

from .errors import ConvergenceError, DomainError

EULER_GAMMA = 0.57721566490153286061

_SERIES_TERMS = 30
_CF_MAX_ITER = 5000
_EPS = np.finfo(float).eps
_ASYMPTOTIC_FROM = 25.0


def _as_positive_array(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    if np.any(arr <= 0.0):
        raise DomainError(f"{name} must be strictly positive")
    return arr


def _scalarize(arr, like):
    if np.ndim(like) == 0:
        return float(arr)
    return arr


def _k01_series(x):
    """K0 and K1 from their ascending series; intended for 0 < x <= 2."""
    y = 0.25 * x * x
    lg = np.log(0.5 * x)
    term0 = np.ones_like(x)  # y^k / (k!)^2
    term1 = np.ones_like(x)  # y^k / (k!(k+1)!)
    i0 = np.zeros_like(x)
    s0 = np.zeros_like(x)
    i1 = np.zeros_like(x)
    s1 = np.zeros_like(x)
    harm = 0.0
    for k in range(_SERIES_TERMS):
        harm_next = harm + 1.0 / (k + 1)
        i0 += term0
        s0 += term0 * harm
        i1 += term1
        s1 += term1 * (harm + harm_next - 2.0 * EULER_GAMMA)
        term0 = term0 * y / ((k + 1) ** 2)
        term1 = term1 * y / ((k + 1) * (k + 2))
        harm = harm_next
    k0 = -(lg + EULER_GAMMA) * i0 + s0
    k1 = 1.0 / x + lg * (0.5 * x * i1) - 0.25 * x * s1
    return k0, k1


def _k01_cf2_scaled(x):
    """exp(x)*K0 and exp(x)*K1 via Steed's continued fraction; for x > 2."""
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = d.copy()
    delh = d.copy()
    q1 = np.zeros_like(x)
    q2 = np.ones_like(x)
    a1 = 0.25
    q = np.full_like(x, a1)
    c = np.full_like(x, a1)
    a = -a1
    s = 1.0 + q * delh
    for i in range(1, _CF_MAX_ITER):
        a -= 2 * i
        c = -a * c / (i + 1.0)
        qnew = (q1 - b * q2) / a
        q1 = q2
        q2 = qnew
        q = q + c * qnew
        b = b + 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h = h + delh
        dels = q * delh
        s = s + dels
        if np.all(np.abs(dels) < _EPS * np.abs(s)):
            break
    h = a1 * h
    k0 = np.sqrt(np.pi / (2.0 * x)) / s
    k1 = k0 * (x + 0.5 - h) / x
    return k0, k1


def _k01_asymptotic_scaled(x):
    """exp(x)*K0 and exp(x)*K1 from the large-argument expansion; for x > 25."""
    out = []
    for nu in (0, 1):
        mu = 4.0 * nu * nu
        term = np.ones_like(x)
        acc = np.ones_like(x)
        for k in range(1, 60):
            term = term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
            acc = acc + term
            if np.all(np.abs(term) < _EPS * np.abs(acc)):
                break
        out.append(np.sqrt(np.pi / (2.0 * x)) * acc)
    return out


def _log_k01(x):
    """Natural logs of K0(x) and K1(x) for a positive float array."""
    lk0 = np.empty_like(x)
    lk1 = np.empty_like(x)
    small = x <= 2.0
    huge = x > _ASYMPTOTIC_FROM
    mid = ~small & ~huge
    if np.any(small):
        k0, k1 = _k01_series(x[small])
        lk0[small] = np.log(k0)
        lk1[small] = np.log(k1)
    for mask, fn in ((mid, _k01_cf2_scaled), (huge, _k01_asymptotic_scaled)):
        if np.any(mask):
            xb = x[mask]
            k0, k1 = fn(xb)
            lk0[mask] = np.log(k0) - xb
            lk1[mask] = np.log(k1) - xb
    return lk0, lk1


def log_bessel_k_sequence(max_order, x):
    """Return ``log K_n(x)`` for ``n = 0..max_order`` stacked on a new leading axis.

    The upward recurrence runs on logarithms, so very large orders at small
    arguments do not overflow.
    """
    if int(max_order) != max_order or max_order < 0:
        raise DomainError("max_order must be a nonnegative integer")
    max_order = int(max_order)
    xa = _as_positive_array(x)
    flat = np.atleast_1d(xa).ravel()
    out = np.empty((max_order + 1, flat.size))
    lk0, lk1 = _log_k01(flat)
    out[0] = lk0
    if max_order >= 1:
        out[1] = lk1
    for n in range(1, max_order):
        out[n + 1] = out[n] + np.log(np.exp(out[n - 1] - out[n]) + 2.0 * n / flat)
    return out.reshape((max_order + 1,) + xa.shape)


def log_bessel_k(order, x):
    """Natural log of ``K_order(x)`` for integer ``order`` and ``x > 0``."""
    if int(order) != order:
        raise DomainError("order must be an integer")
    n = abs(int(order))
    seq = log_bessel_k_sequence(n, x)
    return _scalarize(seq[n], x)


def bessel_k(order, x, scaled=False):
    """Modified Bessel function of the second kind for integer order.

    Ascending series up to 2, Steed's continued fraction up to 25 and the
    large-argument expansion beyond, followed by upward recurrence in order.

    Parameters
    ----------
    order : int
        Any integer; ``K_{-n} = K_n``.
    x : float or array_like
        Strictly positive, finite arguments.
    scaled : bool
        If true, return ``exp(x) * K_order(x)`` which stays representable
        for large ``x``.

    Notes
    -----
    Unscaled values underflow to zero once ``x`` exceeds roughly 700.
    """
    lk = np.asarray(log_bessel_k(order, x))
    xa = np.asarray(x, dtype=float)
    if scaled:
        lk = lk + xa
    with np.errstate(over="ignore", under="ignore"):
        val = np.exp(lk)
    return _scalarize(val, x)


def gaussian_q(x):
    """Gaussian tail probability ``Q(x) = P(N(0,1) > x)``."""
    xa = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xa)):
        raise DomainError("gaussian_q needs finite input")
    return _scalarize(0.5 * _sp.erfc(xa / math.sqrt(2.0)), x)


def upper_incomplete_gamma(order, x):
    """Upper incomplete gamma ``Gamma(order, x)`` for a positive integer order."""
    if int(order) != order or order < 1:
        raise DomainError("order must be a positive integer")
    order = int(order)
    xa = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xa)) or np.any(xa < 0.0):
        raise DomainError("x must be finite and nonnegative")
    term = np.ones_like(xa)
    acc = np.ones_like(xa)
    for m in range(1, order):
        term = term * xa / m
        acc = acc + term
    with np.errstate(under="ignore"):
        val = math.factorial(order - 1) * np.exp(-xa) * acc
    return _scalarize(val, x)


class SemiInfiniteTransform(str, Enum):
    LOG_MAP = "log-map"
    RATIONAL_MAP = "rational-map"


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances and mapping for :func:`integrate_semi_infinite`.

    Convergence is declared once the summed error estimate drops below
    ``max(abs_tol, rel_tol * |estimate|)``.
    """

    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_subdivisions: int = 4000
    semi_infinite_transform: SemiInfiniteTransform = SemiInfiniteTransform.LOG_MAP

    def __post_init__(self):
        if not (self.abs_tol > 0 and math.isfinite(self.abs_tol)):
            raise DomainError("abs_tol must be positive")
        if not (self.rel_tol > 0 and math.isfinite(self.rel_tol)):
            raise DomainError("rel_tol must be positive")
        if int(self.max_subdivisions) != self.max_subdivisions or self.max_subdivisions < 1:
            raise DomainError("max_subdivisions must be a positive integer")
        object.__setattr__(
            self, "semi_infinite_transform", SemiInfiniteTransform(self.semi_infinite_transform)
        )


_G10_X, _G10_W = np.polynomial.legendre.leggauss(10)
_G21_X, _G21_W = np.polynomial.legendre.leggauss(21)
_NODES = np.concatenate([_G10_X, _G21_X])

# log-map window: t = scale * exp(u), u in [_U_LO, _U_HI]
_U_LO = -80.0
_U_HI = 60.0


def _mapped_integrand(f, transform, scale):
    if transform is SemiInfiniteTransform.LOG_MAP:

        def g(u):
            t = scale * np.exp(u)
            return np.asarray(f(t), dtype=float) * t

    else:

        def g(s):
            one_minus = 1.0 - s
            t = scale * s / one_minus
            return np.asarray(f(t), dtype=float) * scale / (one_minus * one_minus)

    return g


def _rule(g, lows, highs):
    """Apply the 10- and 21-point Gauss rules to many intervals in one call."""
    half = 0.5 * (highs - lows)
    mid = 0.5 * (highs + lows)
    pts = mid[:, None] + half[:, None] * _NODES[None, :]
    vals = g(pts.ravel()).reshape(pts.shape)
    if not np.all(np.isfinite(vals)):
        raise ConvergenceError("integrand returned a non-finite value", math.nan, math.inf)
    i10 = half * (vals[:, :10] @ _G10_W)
    i21 = half * (vals[:, 10:] @ _G21_W)
    mag = half * (np.abs(vals[:, 10:]) @ _G21_W)
    return i21, np.abs(i21 - i10), mag


def integrate_semi_infinite(f, spec=None, *, scale=1.0, upper=math.inf):
    """Integrate a vectorised function over ``(0, upper)``.

    Parameters
    ----------
    f : callable
        Accepts a 1-D float array of abscissae and returns values of the same
        shape. An integrable singularity at zero is fine.
    spec : QuadratureSpec, optional
    scale : float
        Characteristic size of the integrand's support; the map is centred
        here.
    upper : float
        Optional finite upper limit.
    """
    spec = spec or QuadratureSpec()
    if not (scale > 0 and math.isfinite(scale)):
        raise DomainError("scale must be positive and finite")
    if not upper > 0:
        raise DomainError("upper limit must be positive")
    transform = spec.semi_infinite_transform
    g = _mapped_integrand(f, transform, scale)
    if transform is SemiInfiniteTransform.LOG_MAP:
        lo = _U_LO
        hi = _U_HI if math.isinf(upper) else math.log(upper / scale)
        if hi <= lo:
            return 0.0
        n0 = max(4, int(math.ceil((hi - lo) / 4.0)))
    else:
        lo = 0.0
        hi = 1.0 if math.isinf(upper) else upper / (scale + upper)
        n0 = 8
    edges = np.linspace(lo, hi, n0 + 1)
    vals, errs, mags = _rule(g, edges[:-1], edges[1:])
    # max-heap keyed on error; the counter keeps ordering deterministic
    heap = [(-e, k, a, b, v, m) for k, (a, b, v, e, m) in
            enumerate(zip(edges[:-1], edges[1:], vals, errs, mags))]
    heapq.heapify(heap)
    counter = len(heap)
    total = math.fsum(vals)
    total_err = math.fsum(errs)
    total_mag = math.fsum(mags)
    splits = 0
    while True:
        floor = 50.0 * _EPS * total_mag
        if total_err <= max(spec.abs_tol, spec.rel_tol * abs(total), floor):
            return total
        if splits >= spec.max_subdivisions:
            raise ConvergenceError("tolerance not reached", total, total_err)
        # split the worst few intervals together to amortise the call overhead
        batch = []
        while heap and len(batch) < 16:
            item = heapq.heappop(heap)
            batch.append(item)
            if heap and -heap[0][0] < 0.25 * -batch[0][0]:
                break
        a = np.array([it[2] for it in batch])
        b = np.array([it[3] for it in batch])
        mid = 0.5 * (a + b)
        lows = np.concatenate([a, mid])
        highs = np.concatenate([mid, b])
        nv, ne, nm = _rule(g, lows, highs)
        for a_, b_, v_, e_, m_ in zip(lows, highs, nv, ne, nm):
            heapq.heappush(heap, (-e_, counter, a_, b_, v_, m_))
            counter += 1
        splits += len(batch)
        total = math.fsum(it[4] for it in heap)
        total_err = math.fsum(-it[0] for it in heap)
        total_mag = math.fsum(it[5] for it in heap)
