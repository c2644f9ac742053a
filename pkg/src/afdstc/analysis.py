"""Closed-form and numerical performance analysis.

Two per-relay SNR families are covered:

* ``gamma = X Y / (a Y + b)`` with ``X ~ Gamma(Ns, x_scale)`` (sum of the
  source-relay gains) and ``Y ~ Gamma(Nd, y_scale)``;
* ``zeta = X Y / (alpha Y + beta)`` with ``X`` the largest of ``Ns``
  exponential gains of mean ``sigma_f_sq``.

Densities are sums of Bessel-K terms evaluated in log space. Sums with
alternating signs are tracked for cancellation and, when it gets severe,
replaced by a direct one-dimensional quadrature over ``Y``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import special as _sp

from .errors import CapabilityError, ContractError, DomainError, PrecisionWarning
from .network import ModulationFamily, sample_channel_batch, sigma_xi_sq
from .powerctl import RelayReference, SchemeId, allocate_batch
from .specfun import (
    EULER_GAMMA,
    QuadratureSpec,
    gaussian_q,
    integrate_semi_infinite,
    log_bessel_k_sequence,
)

CANCELLATION_LIMIT = 1e6
SER_QUADRATURE = QuadratureSpec(abs_tol=1e-20, rel_tol=1e-8, max_subdivisions=4000)
_LOG2 = math.log(2.0)


def _lbinom(n, k):
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def _per_relay(values, R, name):
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.size == 1:
        arr = np.full(R, arr.item())
    if arr.shape != (R,) or np.any(~np.isfinite(arr)) or np.any(arr <= 0):
        raise ContractError(f"{name} needs {R} positive entries")
    return arr


def _phase_powers(config, tau):
    if not 0.0 < tau < 1.0:
        raise DomainError(f"tau must lie in (0, 1), got {tau!r}")
    return tau * config.total_power, (1.0 - tau) * config.total_power


@dataclass(frozen=True)
class GammaRatioParams:
    """Parameters of ``gamma_r = X Y / (a Y + b_r)`` for every relay.

    ``x_scale`` and ``y_scale`` are the per-entry variances of the two hops,
    i.e. the scale parameters of the gamma-distributed squared norms.
    """

    a: float
    b: np.ndarray
    x_scale: np.ndarray
    y_scale: np.ndarray
    ns: int
    nd: int

    def __post_init__(self):
        if not (self.a > 0 and math.isfinite(self.a)):
            raise ContractError("a must be positive")
        if int(self.ns) < 1 or int(self.nd) < 1:
            raise ContractError("antenna counts must be positive")
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        R = b.size
        object.__setattr__(self, "b", _per_relay(b, R, "b"))
        object.__setattr__(self, "x_scale", _per_relay(self.x_scale, R, "x_scale"))
        object.__setattr__(self, "y_scale", _per_relay(self.y_scale, R, "y_scale"))
        object.__setattr__(self, "ns", int(self.ns))
        object.__setattr__(self, "nd", int(self.nd))

    @property
    def num_relays(self):
        return self.b.size

    @property
    def mu(self):
        return self.ns + self.nd

    @property
    def nu(self):
        return self.nd - self.ns

    @classmethod
    def from_config(cls, config, tau=0.5, power_ratio_snr=False):
        """Parameters for opportunistic relaying over ``config``.

        By default ``b`` describes the SNR after matched filtering at the
        destination. ``power_ratio_snr`` multiplies ``b`` by ``Nd`` to model
        the received signal-to-noise power ratio instead; both agree for a
        single destination antenna.
        """
        P1, P2 = _phase_powers(config, tau)
        Ns, Nd = config.src_antennas, config.dst_antennas
        b = Ns * config.noise2 * (config.sigma_f_array * P1 + config.noise1) / (P1 * P2)
        if power_ratio_snr:
            b = b * Nd
        return cls(Ns * config.noise1 / P1, b, config.sigma_f_array, config.sigma_g_array, Ns, Nd)


@dataclass(frozen=True)
class ZetaParams:
    """Parameters of ``zeta_r = X Y / (alpha Y + beta_r)`` with ``X`` the best of Ns gains."""

    alpha: float
    beta: np.ndarray
    sigma_f_sq: np.ndarray
    y_scale: np.ndarray
    ns: int
    nd: int

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ContractError("alpha must be positive")
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        R = beta.size
        object.__setattr__(self, "beta", _per_relay(beta, R, "beta"))
        object.__setattr__(self, "sigma_f_sq", _per_relay(self.sigma_f_sq, R, "sigma_f_sq"))
        object.__setattr__(self, "y_scale", _per_relay(self.y_scale, R, "y_scale"))
        object.__setattr__(self, "ns", int(self.ns))
        object.__setattr__(self, "nd", int(self.nd))

    @property
    def num_relays(self):
        return self.beta.size

    @classmethod
    def from_config(cls, config, tau=0.5, power_ratio_snr=False,
                    relay_reference=RelayReference.SIGMA_F):
        """Parameters for full opportunism; see :meth:`GammaRatioParams.from_config`."""
        P1, P2 = _phase_powers(config, tau)
        if RelayReference(relay_reference) is RelayReference.SIGMA_XI:
            ref = sigma_xi_sq(config)
        else:
            ref = config.sigma_f_array
        beta = config.noise2 * (ref * P1 + config.noise1) / (P1 * P2)
        if power_ratio_snr:
            beta = beta * config.dst_antennas
        return cls(config.noise1 / P1, beta, config.sigma_f_array, config.sigma_g_array,
                   config.src_antennas, config.dst_antennas)


class Provenance(str, Enum):
    SIMULATED = "simulated"
    EXACT = "exact"
    ASYMPTOTIC = "asymptotic"
    UPPER_BOUND = "upper_bound"
    MGF = "mgf"


@dataclass(frozen=True)
class SerCurve:
    """Error rate versus SNR; ``points`` holds ``(snr_db, value, ci_halfwidth)`` triples."""

    points: tuple
    provenance: Provenance
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        pts = tuple((float(s), float(v), float(c)) for s, v, c in self.points)
        snrs = [p[0] for p in pts]
        if snrs != sorted(snrs):
            raise ContractError("curve points must be sorted by snr_db")
        for s, v, c in pts:
            if not (0.0 <= v <= 1.0) or c < 0 or not math.isfinite(s):
                raise ContractError(f"invalid curve point {(s, v, c)}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "provenance", Provenance(self.provenance))

    @property
    def snr_db(self):
        return np.array([p[0] for p in self.points])

    @property
    def values(self):
        return np.array([p[1] for p in self.points])

    @property
    def ci_halfwidth(self):
        return np.array([p[2] for p in self.points])


# ---------------------------------------------------------------- gamma family


def _check_gamma_arg(gamma):
    t = np.asarray(gamma, dtype=float)
    if not np.all(np.isfinite(t)) or np.any(t <= 0):
        raise DomainError("gamma must be positive and finite")
    return t


def _out(val, like):
    return float(val) if np.ndim(like) == 0 else val


def _log_pdf_gamma(p, r, t):
    """Log of each Bessel term of the density, shape (Ns+1, n)."""
    a, b, tx, ty = p.a, p.b[r], p.x_scale[r], p.y_scale[r]
    Ns, Nd = p.ns, p.nd
    t = np.atleast_1d(t).ravel()
    w = t * b / (tx * ty)
    lk = log_bessel_k_sequence(max(Nd, Ns - Nd), 2.0 * np.sqrt(w))
    base = (_LOG2 - a * t / tx + (Ns - 1) * np.log(t) - math.lgamma(Ns) - math.lgamma(Nd)
            - Ns * math.log(tx) - Nd * math.log(ty))
    lw = np.log(w)
    terms = []
    for k in range(Ns + 1):
        nu = Nd - k
        terms.append(base + _lbinom(Ns, k) + (Ns - k) * math.log(a) + k * math.log(b)
                     + 0.5 * nu * lw + nu * math.log(ty) + lk[abs(nu)])
    return np.array(terms)


def pdf_gamma_r(params, r, gamma):
    """Density of ``gamma_r`` (relay index ``r``, 0-based)."""
    t = _check_gamma_arg(gamma)
    lt = _log_pdf_gamma(params, r, t)
    val = np.exp(lt).sum(axis=0).reshape(t.shape)
    return _out(val, gamma)


def _y_expectation(h, nd, y_scale, anchor):
    """``E[h(Y)]`` for ``Y ~ Gamma(nd, y_scale)`` by composite Gauss-Legendre on ``log Y``.

    ``anchor`` (one per evaluation point, relative to ``y_scale``) marks where
    ``h`` changes character so the window reaches far enough below it.
    ``h`` takes ``(y, point_index_array)`` with broadcastable shapes.
    """
    n_panels, x, w = 48, *_GL20
    anchor = np.atleast_1d(anchor)
    lo = np.minimum(np.log(anchor), 0.0) - 45.0 / nd - 2.0
    hi = math.log(nd + 80.0)
    edges = lo[:, None] + (hi - lo)[:, None] * np.linspace(0.0, 1.0, n_panels + 1)[None, :]
    half = 0.5 * np.diff(edges, axis=1)
    mid = 0.5 * (edges[:, 1:] + edges[:, :-1])
    u = (mid[:, :, None] + half[:, :, None] * x[None, None, :]).reshape(anchor.size, -1)
    wt = (half[:, :, None] * w[None, None, :]).reshape(anchor.size, -1)
    eu = np.exp(u)
    dens = np.exp(nd * u - eu - math.lgamma(nd))
    return np.sum(wt * dens * h(y_scale * eu), axis=1)


_GL20 = np.polynomial.legendre.leggauss(20)


def _cdf_gamma_fallback(p, r, t):
    a, b, tx = p.a, p.b[r], p.x_scale[r]
    tt = t[:, None]
    return _y_expectation(lambda y: _sp.gammainc(p.ns, tt * (a + b / y) / tx),
                          p.nd, p.y_scale[r], t * b / (a * p.y_scale[r]))


def cdf_gamma_r(params, r, gamma):
    """Distribution function of ``gamma_r``; zero for nonpositive arguments."""
    t = np.asarray(gamma, dtype=float)
    if np.any(np.isnan(t)):
        raise DomainError("gamma must not be NaN")
    out = np.zeros(t.shape)
    pos = t > 0
    if np.any(pos):
        tp = t[pos]
        inf = np.isinf(tp)
        res = np.ones(tp.shape)
        fin = ~inf
        if np.any(fin):
            res[fin] = _cdf_gamma_finite(params, r, tp[fin])
        out[pos] = res
    return _out(out, gamma)


def _cdf_gamma_finite(p, r, t):
    a, b, tx, ty = p.a, p.b[r], p.x_scale[r], p.y_scale[r]
    Ns, Nd = p.ns, p.nd
    w = t * b / (tx * ty)
    lk = log_bessel_k_sequence(max(Nd, 1), 2.0 * np.sqrt(w))
    lw = np.log(w)
    lt = np.log(t / tx)
    base = _LOG2 - a * t / tx - math.lgamma(Nd) - Nd * math.log(ty)
    total = np.zeros_like(t)
    for m in range(Ns):
        for k in range(m + 1):
            nu = Nd - k
            ln_term = (base + m * lt - math.lgamma(m + 1) + _lbinom(m, k)
                       + (m - k) * math.log(a) + k * math.log(b)
                       + 0.5 * nu * lw + nu * math.log(ty) + lk[abs(nu)])
            total = total + np.exp(ln_term)
    cdf = 1.0 - total
    small = cdf < 1e-6
    if np.any(small):
        cdf[small] = _cdf_gamma_fallback(p, r, t[small])
    return np.clip(cdf, 0.0, 1.0)


def pdf_gamma_max(params, gamma):
    """Density of the largest ``gamma_r`` across independent relays."""
    t = _check_gamma_arg(gamma)
    flat = t.ravel()
    R = params.num_relays
    pdfs = [pdf_gamma_r(params, r, flat) for r in range(R)]
    if R == 1:
        return _out(pdfs[0].reshape(t.shape), gamma)
    cdfs = [cdf_gamma_r(params, r, flat) for r in range(R)]
    return _out(_order_statistic(pdfs, cdfs).reshape(t.shape), gamma)


def cdf_gamma_max(params, gamma):
    t = np.asarray(gamma, dtype=float)
    return _out(np.prod([np.asarray(cdf_gamma_r(params, r, t)) for r in range(params.num_relays)], axis=0), gamma)


def _order_statistic(pdfs, cdfs):
    total = np.zeros_like(pdfs[0])
    for r, p in enumerate(pdfs):
        term = p.copy()
        for j, c in enumerate(cdfs):
            if j != r:
                term = term * c
        total += term
    return total


# ----------------------------------------------------------------- zeta family


def _signed_sum(terms):
    """Neumaier-compensated sum along axis 0 plus the cancellation ratio."""
    s = np.zeros(terms.shape[1:])
    comp = np.zeros_like(s)
    for x in terms:
        t = s + x
        comp += np.where(np.abs(s) >= np.abs(x), (s - t) + x, (x - t) + s)
        s = t
    res = s + comp
    mag = np.sum(np.abs(terms), axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(res != 0, mag / np.abs(res), np.inf)
    return res, ratio


def _zeta_terms(p, r, t, kind):
    alpha, beta, s2, ty = p.alpha, p.beta[r], p.sigma_f_sq[r], p.y_scale[r]
    Ns, Nd = p.ns, p.nd
    terms = []
    for k in range(1, Ns + 1):
        w = k * t * beta / (s2 * ty)
        lk = log_bessel_k_sequence(Nd, 2.0 * np.sqrt(w))
        lw = np.log(w)
        sign = (-1.0) ** k
        lead = _lbinom(Ns, k) - k * t * alpha / s2 + _LOG2 - math.lgamma(Nd)
        if kind == "cdf":
            terms.append(sign * np.exp(lead + 0.5 * Nd * lw + lk[Nd]))
        else:
            lead += math.log(k / s2)
            first = np.exp(lead + math.log(alpha) + 0.5 * Nd * lw + lk[Nd])
            second = np.exp(lead + math.log(beta / ty) + 0.5 * (Nd - 1) * lw + lk[Nd - 1])
            terms.append(-sign * (first + second))
    if kind == "cdf":
        terms.insert(0, np.ones_like(t))
    return np.array(terms)


def _zeta_fallback(p, r, t, kind):
    alpha, beta, s2 = p.alpha, p.beta[r], p.sigma_f_sq[r]
    Ns = p.ns
    tt = t[:, None]

    def h(y):
        rate = (alpha + beta / y) / s2
        c = tt * rate
        one_minus = -np.expm1(-c)
        if kind == "cdf":
            return one_minus ** Ns
        return Ns * one_minus ** (Ns - 1) * np.exp(-c) * rate

    return _y_expectation(h, p.nd, p.y_scale[r], t * beta / (alpha * p.y_scale[r]))


def _zeta_eval(p, r, t, kind):
    flat = np.atleast_1d(t).ravel()
    res, ratio = _signed_sum(_zeta_terms(p, r, flat, kind))
    bad = (ratio > CANCELLATION_LIMIT) | (res < 0) | ~np.isfinite(res)
    if np.any(bad):
        res = res.copy()
        res[bad] = _zeta_fallback(p, r, flat[bad], kind)
    return res.reshape(np.shape(t))


def pdf_zeta_r(zparams, r, zeta):
    """Density of ``zeta_r`` (0-based relay index)."""
    t = _check_gamma_arg(zeta)
    return _out(np.maximum(_zeta_eval(zparams, r, t, "pdf"), 0.0), zeta)


def cdf_zeta_r(zparams, r, zeta):
    t = np.asarray(zeta, dtype=float)
    if np.any(np.isnan(t)):
        raise DomainError("zeta must not be NaN")
    out = np.zeros(t.shape)
    pos = (t > 0) & np.isfinite(t)
    out[np.isinf(t) & (t > 0)] = 1.0
    if np.any(pos):
        out[pos] = np.clip(_zeta_eval(zparams, r, t[pos], "cdf"), 0.0, 1.0)
    return _out(out, zeta)


def pdf_zeta_max(zparams, zeta):
    t = _check_gamma_arg(zeta)
    flat = t.ravel()
    R = zparams.num_relays
    pdfs = [np.asarray(pdf_zeta_r(zparams, r, flat)) for r in range(R)]
    if R == 1:
        return _out(pdfs[0].reshape(t.shape), zeta)
    cdfs = [np.asarray(cdf_zeta_r(zparams, r, flat)) for r in range(R)]
    return _out(_order_statistic(pdfs, cdfs).reshape(t.shape), zeta)


def cdf_zeta_max(zparams, zeta):
    t = np.asarray(zeta, dtype=float)
    return _out(np.prod([np.asarray(cdf_zeta_r(zparams, r, t)) for r in range(zparams.num_relays)], axis=0), zeta)


# ------------------------------------------------------------------ exact SER


def _ser_integral(pdf_max, modulation, quad):
    c, g = modulation.c, modulation.g
    upper = 2.0 * math.log(c / (2.0 * 1e-30)) / g
    val = integrate_semi_infinite(
        lambda t: c * gaussian_q(np.sqrt(g * t)) * pdf_max(t),
        quad or SER_QUADRATURE, scale=1.0 / g, upper=upper)
    return min(max(val, 0.0), 1.0)


def ser_exact_opportunistic(params, modulation, quad=None):
    """``E[c Q(sqrt(g gamma_max))]`` by quadrature of the order-statistic density."""
    return _ser_integral(lambda t: pdf_gamma_max(params, t), modulation, quad)


def ser_exact_full_opportunism(zparams, modulation, quad=None):
    """``E[c Q(sqrt(g zeta_max))]`` for joint relay and antenna selection."""
    return _ser_integral(lambda t: pdf_zeta_max(zparams, t), modulation, quad)


# ------------------------------------------------------------------ MGF route


_GL64 = np.polynomial.legendre.leggauss(64)


def opportunistic_source_eta(config, n_draws, rng, tau=0.5):
    """Per-relay SNR contributions ``eta_r`` (n_draws, R) under antenna selection.

    Their sum is the destination signal-to-noise power ratio.
    """
    P1, P2 = _phase_powers(config, tau)
    f, g = sample_channel_batch(config, rng, n_draws)
    p1, p2, iv = allocate_batch(SchemeId.OPPORTUNISTIC_SOURCE, config, f, g, tau)
    rho2 = p2 / (iv[None, :] * P1 + config.noise1)
    g2 = np.sum(np.abs(g) ** 2, axis=2)
    sig = np.einsum("bn,bnr->br", p1, np.abs(f) ** 2) * rho2 * g2
    den = np.sum(rho2 * g2, axis=1) * config.noise1 + config.dst_antennas * config.noise2
    return sig / den[:, None]


def ser_mgf_opportunistic_source(config, modulation, mc_samples=100_000, seed=0, tau=0.5):
    """MGF-based SER with Monte Carlo estimates of each relay's MGF.

    The product over relays treats the ``eta_r`` as independent, which they
    are not exactly because they share a denominator.
    """
    if mc_samples < 1000:
        warnings.warn(f"only {mc_samples} samples for the MGF estimate", PrecisionWarning, stacklevel=2)
    if mc_samples < 1:
        raise DomainError("mc_samples must be positive")
    eta = opportunistic_source_eta(config, int(mc_samples), np.random.default_rng(seed), tau)
    x, w = _GL64
    phi = 0.25 * np.pi * (x + 1.0)
    s = -modulation.g / (2.0 * np.sin(phi) ** 2)
    mgf = np.mean(np.exp(s[:, None, None] * eta[None, :, :]), axis=1)  # (64, R)
    integrand = np.prod(mgf, axis=1)
    val = modulation.c / np.pi * 0.25 * np.pi * float(np.dot(w, integrand))
    return min(max(val, 0.0), 1.0)


# ------------------------------------------------------------------ asymptotics


def _log_double_factorial_odd(n):
    """log of (2n-1)!! = 1*3*...*(2n-1)."""
    return math.lgamma(2 * n + 1) - n * _LOG2 - math.lgamma(n + 1)


def phi_constant(params, r):
    """Leading coefficient of the density at zero: the (N-1)th derivative, N = min(Ns, Nd).

    Requires ``Ns != Nd`` (the equal case carries a logarithm).
    """
    Ns, Nd = params.ns, params.nd
    a, b, tx, ty = params.a, params.b[r], params.x_scale[r], params.y_scale[r]
    if Ns < Nd:
        logs = [
            _lbinom(Ns, k) + (Ns - k) * math.log(a) + k * math.log(b)
            + math.lgamma(Nd - k) - math.lgamma(Nd) - k * math.log(ty)
            for k in range(Ns + 1)
        ]
        return math.exp(np.logaddexp.reduce(logs) - Ns * math.log(tx))
    if Ns > Nd:
        return math.exp(math.lgamma(Ns - Nd) - math.lgamma(Ns)
                        + Nd * (math.log(b) - math.log(tx) - math.log(ty)))
    raise CapabilityError("the zero-order coefficient has a logarithmic factor when Ns == Nd")


def delta_constant(zparams, r):
    """(Ns-1)th derivative of the zeta density at zero; needs ``Ns < Nd``."""
    Ns, Nd = zparams.ns, zparams.nd
    if Ns >= Nd:
        raise CapabilityError("the joint-selection asymptote needs fewer source than destination antennas")
    al, be, s2, ty = zparams.alpha, zparams.beta[r], zparams.sigma_f_sq[r], zparams.y_scale[r]
    logs = [
        _lbinom(Ns, k) + (Ns - k) * math.log(al) + k * math.log(be)
        + math.lgamma(Nd - k) - math.lgamma(Nd) - k * math.log(ty)
        for k in range(Ns + 1)
    ]
    return math.exp(math.lgamma(Ns + 1) + np.logaddexp.reduce(logs) - Ns * math.log(s2))


def _max_order_asymptote(consts, N, modulation):
    R = len(consts)
    log_coef = (math.log(R) + sum(math.log(c) for c in consts)
                - math.lgamma(N) - (R - 1) * math.lgamma(N + 1))
    m = N * R
    log_ser = (math.log(modulation.c) + _log_double_factorial_odd(m) - math.log(2 * m)
               - m * math.log(modulation.g) + log_coef)
    return min(math.exp(log_ser), 1.0)


def ser_asymptotic(config, modulation, scheme, tau=0.5, power_ratio_snr=False,
                   relay_reference=RelayReference.SIGMA_F):
    """High-SNR SER approximation ``~ const / SNR^(R min(Ns, Nd))``.

    Opportunistic relaying with ``Ns == Nd`` is routed to
    :func:`ser_upper_bound_equal_antennas`.
    """
    scheme = SchemeId(scheme)
    Ns, Nd = config.src_antennas, config.dst_antennas
    if scheme is SchemeId.OPPORTUNISTIC_RELAY:
        if Ns == Nd:
            return ser_upper_bound_equal_antennas(config, modulation, tau, power_ratio_snr)
        params = GammaRatioParams.from_config(config, tau, power_ratio_snr)
        consts = [phi_constant(params, r) for r in range(params.num_relays)]
        return _max_order_asymptote(consts, min(Ns, Nd), modulation)
    if scheme is SchemeId.FULL_OPPORTUNISM:
        if Ns >= Nd:
            raise CapabilityError(
                "joint-selection asymptote requires src_antennas < dst_antennas")
        zp = ZetaParams.from_config(config, tau, power_ratio_snr, relay_reference)
        consts = [delta_constant(zp, r) for r in range(zp.num_relays)]
        return _max_order_asymptote(consts, Ns, modulation)
    raise CapabilityError(f"no asymptotic expression for scheme {scheme.value!r}")


def pdf_gamma_r_small_argument(params, r, gamma):
    """Small-argument approximation of the density when ``Ns == Nd``.

    Uses ``K_nu(x) ~ Gamma(nu)/2 (x/2)^-nu`` and ``K_0(x) ~ -ln x``.
    """
    p = params
    if p.ns != p.nd:
        raise CapabilityError("the small-argument form is defined for Ns == Nd")
    t = _check_gamma_arg(gamma)
    psi0, psik = _psi_coefficients(p, r)
    z = p.b[r] * t / (p.x_scale[r] * p.y_scale[r])
    val = np.exp(-p.a * t / p.x_scale[r]) * t ** (p.ns - 1) * (
        math.fsum(psik) - 2.0 * psi0 * np.log(2.0 * np.sqrt(z)))
    return _out(val, gamma)


def _psi_coefficients(p, r):
    """``Psi_{r,0}`` and ``[Psi_{r,k}]_{k=1..Ns}`` of the equal-antenna expansion."""
    Ns = p.ns
    a, b, tx, ty = p.a, p.b[r], p.x_scale[r], p.y_scale[r]
    lf = 2.0 * math.lgamma(Ns)
    psi0 = math.exp(Ns * math.log(b) - lf - Ns * math.log(tx) - Ns * math.log(ty))
    psik = [
        math.exp(_lbinom(Ns, k) + k * math.log(a) + (Ns - k) * math.log(b) + math.lgamma(k)
                 - lf - Ns * math.log(tx) - (Ns - k) * math.log(ty))
        for k in range(1, Ns + 1)
    ]
    return psi0, psik


def _bound_block(p, r, rate, power):
    """``int_0^inf e^{-rate t} t^power p~_r(t) dt`` with the small-argument density."""
    psi0, psik = _psi_coefficients(p, r)
    n = p.ns + power
    lead = math.exp(math.lgamma(n) - n * math.log(rate))
    log_arg = math.log(rate * p.x_scale[r] * p.y_scale[r] / (4.0 * p.b[r]))
    harmonic = math.fsum(1.0 / i for i in range(1, n))
    return lead * (sum(psik) + psi0 * (log_arg + EULER_GAMMA - harmonic))


def ser_upper_bound_equal_antennas(config, modulation, tau=0.5, power_ratio_snr=False):
    """Closed-form Chernoff-type SER bound for ``Ns == Nd``.

    General ``R`` uses the product-of-rates form; ``R = 2`` uses the tighter
    two-relay expression. Clamped to ``[0, 1]``.
    """
    if config.src_antennas != config.dst_antennas:
        raise CapabilityError("this bound requires src_antennas == dst_antennas")
    p = GammaRatioParams.from_config(config, tau, power_ratio_snr)
    R, g, a = p.num_relays, modulation.g, p.a
    total = 0.0
    if R == 2:
        for r in range(2):
            rate1 = g + a / p.x_scale[r]
            rate2 = g + 2.0 * a / p.x_scale[r]
            total += _bound_block(p, r, rate1, 0) - _bound_block(p, r, rate2, 0)
    else:
        for r in range(R):
            prod = math.prod(a / p.x_scale[j] for j in range(R) if j != r)
            total += prod * _bound_block(p, r, g + a / p.x_scale[r], R - 1)
    return min(max(total, 0.0), 1.0)


# ------------------------------------------------------------------ diversity


def estimate_diversity_order(curve, tail_points=3):
    """Negated least-squares slope of ``log10 SER`` against ``snr_db / 10``.

    Uses the last ``tail_points`` points with positive value.
    """
    if tail_points < 3:
        raise ContractError("at least three tail points are needed")
    pts = [(s, v) for s, v, _ in curve.points if v > 0]
    if len(pts) < tail_points:
        raise ContractError(f"need {tail_points} positive points, curve has {len(pts)}")
    tail = np.array(pts[-tail_points:])
    slope = np.polyfit(tail[:, 0] / 10.0, np.log10(tail[:, 1]), 1)[0]
    return float(-slope)


def analytic_curve(kind, config, modulation, scheme, snr_db_grid, tau=0.5,
                   mc_samples=100_000, seed=0, relay_reference=RelayReference.SIGMA_F):
    """Evaluate an analytic SER output on a grid of SNRs (dB)."""
    kind = Provenance(kind)
    scheme = SchemeId(scheme)
    _check_capability(kind, scheme, config)
    pts = []
    for snr in sorted(snr_db_grid):
        cfg = config.with_snr_db(snr)
        if kind is Provenance.EXACT and scheme is SchemeId.OPPORTUNISTIC_RELAY:
            v = ser_exact_opportunistic(GammaRatioParams.from_config(cfg, tau), modulation)
        elif kind is Provenance.EXACT:
            v = ser_exact_full_opportunism(ZetaParams.from_config(cfg, tau, relay_reference=relay_reference), modulation)
        elif kind is Provenance.ASYMPTOTIC:
            v = ser_asymptotic(cfg, modulation, scheme, tau, relay_reference=relay_reference)
        elif kind is Provenance.UPPER_BOUND:
            v = ser_upper_bound_equal_antennas(cfg, modulation, tau)
        else:
            v = ser_mgf_opportunistic_source(cfg, modulation, mc_samples, seed, tau)
        pts.append((snr, v, 0.0))
    return SerCurve(tuple(pts), kind)


def _check_capability(kind, scheme, config):
    Ns, Nd = config.src_antennas, config.dst_antennas
    ok = {
        Provenance.EXACT: scheme in (SchemeId.OPPORTUNISTIC_RELAY, SchemeId.FULL_OPPORTUNISM),
        Provenance.ASYMPTOTIC: (scheme is SchemeId.OPPORTUNISTIC_RELAY and Ns != Nd)
        or (scheme is SchemeId.FULL_OPPORTUNISM and Ns < Nd),
        Provenance.UPPER_BOUND: scheme is SchemeId.OPPORTUNISTIC_RELAY and Ns == Nd,
        Provenance.MGF: scheme is SchemeId.OPPORTUNISTIC_SOURCE,
        Provenance.SIMULATED: False,
    }[kind]
    if not ok:
        raise CapabilityError(
            f"output {kind.value!r} is not available for scheme {scheme.value!r} with Ns={Ns}, Nd={Nd}")


def supports(kind, scheme, config):
    try:
        _check_capability(Provenance(kind), SchemeId(scheme), config)
    except CapabilityError:
        return False
    return True
