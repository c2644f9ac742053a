"""Power allocation and relay/antenna selection strategies.

Each public allocator takes one channel realization. The ``allocate_batch``
function applies the same rules to a stack of realizations and is what the
Monte Carlo engine calls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import CapabilityError, DomainError
from .network import PowerAllocation, sigma_xi_sq


class SchemeId(str, Enum):
    DSTC_UNIFORM = "dstc"
    OPPORTUNISTIC_RELAY = "opp-relay"
    FULL_OPPORTUNISM = "full-opp"
    OPPORTUNISTIC_SOURCE = "opp-source"


class RelayReference(str, Enum):
    """Variance a selected relay uses to normalise its amplification.

    ``SIGMA_F`` is the usual per-entry variance of the source-relay link;
    ``SIGMA_XI`` uses the mean of the strongest of the Ns link gains.
    """

    SIGMA_F = "sigma_f"
    SIGMA_XI = "sigma_xi"


@dataclass(frozen=True)
class SelectionMetrics:
    lambda_per_relay: np.ndarray
    xi_per_relay: np.ndarray
    theta_per_antenna: np.ndarray
    theta_tilde_per_antenna: np.ndarray
    sigma_xi_sq: np.ndarray


def _phase_powers(config, tau):
    if not 0.0 < tau < 1.0:
        raise DomainError(f"tau must lie in (0, 1), got {tau!r}")
    return tau * config.total_power, (1.0 - tau) * config.total_power


def _reference_var(config, relay_reference):
    ref = RelayReference(relay_reference)
    return sigma_xi_sq(config) if ref is RelayReference.SIGMA_XI else config.sigma_f_array


def relay_metric_batch(config, f, g, tau=0.5):
    """Selection metric of every relay when the source has no CSI; shape (B,R)."""
    P1, P2 = _phase_powers(config, tau)
    Ns, Nd = config.src_antennas, config.dst_antennas
    f2 = np.sum(np.abs(f) ** 2, axis=1)
    g2 = np.sum(np.abs(g) ** 2, axis=2)
    den = P2 * Ns * g2 * config.noise1 + Ns * Nd * config.noise2 * (config.sigma_f_array * P1 + config.noise1)
    return P1 * P2 * f2 * g2 / den


def full_opportunism_metric_batch(config, f, g, tau=0.5, relay_reference=RelayReference.SIGMA_F):
    """Metric for joint relay/antenna selection (B,R), using the strongest antenna per relay."""
    P1, P2 = _phase_powers(config, tau)
    xi = np.max(np.abs(f) ** 2, axis=1)
    g2 = np.sum(np.abs(g) ** 2, axis=2)
    ref = _reference_var(config, relay_reference)
    den = P2 * g2 * config.noise1 + config.dst_antennas * config.noise2 * (ref * P1 + config.noise1)
    return P1 * P2 * xi * g2 / den


def antenna_metric_batch(config, f, g, tau=0.5):
    """Antenna ranking used when only the source is informed; shape (B,Ns)."""
    P1, _ = _phase_powers(config, tau)
    g2 = np.sum(np.abs(g) ** 2, axis=2)
    w = g2 / (config.sigma_f_array * P1 + config.noise1)
    return np.einsum("bnr,br->bn", np.abs(f) ** 2, w)


def allocate_batch(scheme, config, f, g, tau=0.5, relay_reference=RelayReference.SIGMA_F):
    """Vectorised allocation for a stack of realizations.

    Returns ``(p1, p2, input_var)`` with shapes (B,Ns), (B,R) and (R,).
    Ties resolve to the lowest index.
    """
    scheme = SchemeId(scheme)
    P1, P2 = _phase_powers(config, tau)
    B = f.shape[0]
    Ns, R = config.src_antennas, config.num_relays
    p1 = np.zeros((B, Ns))
    p2 = np.zeros((B, R))
    rows = np.arange(B)
    input_var = config.sigma_f_array
    if scheme is SchemeId.DSTC_UNIFORM:
        p1[:] = P1 / Ns
        p2[:] = P2 / R
    elif scheme is SchemeId.OPPORTUNISTIC_RELAY:
        p1[:] = P1 / Ns
        p2[rows, np.argmax(relay_metric_batch(config, f, g, tau), axis=1)] = P2
    elif scheme is SchemeId.FULL_OPPORTUNISM:
        r_star = np.argmax(full_opportunism_metric_batch(config, f, g, tau, relay_reference), axis=1)
        n_star = np.argmax(np.abs(f[rows, :, r_star]) ** 2, axis=1)
        p1[rows, n_star] = P1
        p2[rows, r_star] = P2
        input_var = _reference_var(config, relay_reference)
    else:
        p1[rows, np.argmax(antenna_metric_batch(config, f, g, tau), axis=1)] = P1
        p2[:] = P2 / R
    return p1, p2, input_var


def _single(chan, config):
    chan.check(config)
    return chan.f[None], chan.g[None]


def _make(tau, p1, p2, input_var=None):
    iv = None if input_var is None else tuple(float(v) for v in input_var)
    return PowerAllocation(tau, tuple(p1), tuple(p2), iv)


def allocate_dstc_uniform(config, tau=0.5):
    """Equal split across antennas in phase one and across relays in phase two."""
    P1, P2 = _phase_powers(config, tau)
    Ns, R = config.src_antennas, config.num_relays
    return PowerAllocation(tau, (P1 / Ns,) * Ns, (P2 / R,) * R)


def allocate_opportunistic_relay(config, chan, tau=0.5):
    """Give all of phase-two power to the best relay. Returns ``(alloc, relay)``."""
    f, g = _single(chan, config)
    p1, p2, _ = allocate_batch(SchemeId.OPPORTUNISTIC_RELAY, config, f, g, tau)
    return _make(tau, p1[0], p2[0]), int(np.argmax(p2[0]))


def allocate_full_opportunism(config, chan, tau=0.5, relay_reference=RelayReference.SIGMA_F):
    """Pick the best relay, then that relay's strongest source antenna.

    Returns ``(alloc, relay, antenna)``. The selected relay normalises its
    gain with the variance named by ``relay_reference``.
    """
    f, g = _single(chan, config)
    p1, p2, iv = allocate_batch(SchemeId.FULL_OPPORTUNISM, config, f, g, tau, relay_reference)
    return _make(tau, p1[0], p2[0], iv), int(np.argmax(p2[0])), int(np.argmax(p1[0]))


def allocate_opportunistic_source(config, chan, tau=0.5):
    """Transmit from the single best source antenna; relays split power equally.

    Returns ``(alloc, antenna)``.
    """
    f, g = _single(chan, config)
    p1, p2, _ = allocate_batch(SchemeId.OPPORTUNISTIC_SOURCE, config, f, g, tau)
    return _make(tau, p1[0], p2[0]), int(np.argmax(p1[0]))


def allocate(scheme, config, chan, tau=0.5, relay_reference=RelayReference.SIGMA_F):
    """Dispatch by scheme and return only the allocation."""
    scheme = SchemeId(scheme)
    if scheme is SchemeId.DSTC_UNIFORM:
        return allocate_dstc_uniform(config, tau)
    if scheme is SchemeId.OPPORTUNISTIC_RELAY:
        return allocate_opportunistic_relay(config, chan, tau)[0]
    if scheme is SchemeId.FULL_OPPORTUNISM:
        return allocate_full_opportunism(config, chan, tau, relay_reference)[0]
    return allocate_opportunistic_source(config, chan, tau)[0]


def selection_metrics(config, chan, tau=0.5):
    """All per-relay and per-antenna quantities the selection rules rank on."""
    f, g = _single(chan, config)
    P1, P2 = _phase_powers(config, tau)
    R = config.num_relays
    rho2 = (P2 / R) / (config.sigma_f_array * P1 + config.noise1)
    g2 = np.sum(np.abs(chan.g) ** 2, axis=1)
    den = np.sum(rho2 * g2) * config.noise1 + config.dst_antennas * config.noise2
    theta = np.abs(chan.f) ** 2 @ (rho2 * g2) / den
    return SelectionMetrics(
        lambda_per_relay=relay_metric_batch(config, f, g, tau)[0],
        xi_per_relay=np.max(np.abs(chan.f) ** 2, axis=0),
        theta_per_antenna=theta,
        theta_tilde_per_antenna=antenna_metric_batch(config, f, g, tau)[0],
        sigma_xi_sq=sigma_xi_sq(config),
    )


def _require_homogeneous(config):
    if not config.homogeneous:
        raise CapabilityError("this operation assumes identical variances on every relay")


def average_snr_two_phase(config, tau):
    """Average destination SNR as a function of the phase split ``tau``.

    Ratio of mean signal to mean noise power with equal power per relay.
    """
    _require_homogeneous(config)
    if not 0.0 < tau < 1.0:
        raise DomainError(f"tau must lie in (0, 1), got {tau!r}")
    P = config.total_power
    sf, sg = config.sigma_f_sq[0], config.sigma_g_sq[0]
    n1, n2 = config.noise1, config.noise2
    num = tau * (1.0 - tau) * P * P * sf * sg
    den = tau * (n2 * sf - n1 * sg) * P + n1 * sg * P + n1 * n2
    return num / den


def optimal_tau(config):
    """Phase split maximising :func:`average_snr_two_phase`.

    Uses ``1 / (sqrt(1 + delta) + 1)``, which is the cancellation-free form
    of ``(sqrt(1 + delta) - 1) / delta`` and equals 1/2 at ``delta = 0``.
    """
    _require_homogeneous(config)
    P = config.total_power
    sf, sg = config.sigma_f_sq[0], config.sigma_g_sq[0]
    n1, n2 = config.noise1, config.noise2
    delta = (n2 * sf - n1 * sg) * P / (n1 * sg * P + n1 * n2)
    return 1.0 / (math.sqrt(1.0 + delta) + 1.0)
