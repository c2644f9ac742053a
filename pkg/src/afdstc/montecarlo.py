"""Monte Carlo estimation of symbol and bit error rates."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analysis import Provenance, SerCurve, opportunistic_source_eta
from .errors import ConfigError
from .network import NetworkConfig, sample_channel_batch
from .powerctl import RelayReference, SchemeId, allocate_batch
from .stc import build_codebook, decode_batch, noise_covariance_batch, transmit_batch

_MIN_BATCH = 1_000
_MAX_BATCH = 40_000


@dataclass(frozen=True)
class SimPlan:
    """Everything needed to reproduce one simulated error-rate curve."""

    config: NetworkConfig
    scheme: SchemeId
    modulation: object
    snr_db_grid: tuple
    min_errors: int = 200
    max_trials: int = 1_000_000
    seed: int = 0
    tau: float = 0.5
    relay_reference: RelayReference = RelayReference.SIGMA_F
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "scheme", SchemeId(self.scheme))
        object.__setattr__(self, "relay_reference", RelayReference(self.relay_reference))
        grid = tuple(float(s) for s in self.snr_db_grid)
        if not grid or list(grid) != sorted(grid):
            raise ConfigError("snr_db_grid must be a non-empty sorted list")
        object.__setattr__(self, "snr_db_grid", grid)
        if int(self.min_errors) != self.min_errors or self.min_errors < 50:
            raise ConfigError("min_errors must be an integer of at least 50")
        if int(self.max_trials) != self.max_trials or self.max_trials < self.min_errors:
            raise ConfigError("max_trials must be an integer no smaller than min_errors")
        if int(self.workers) != self.workers or self.workers < 1:
            raise ConfigError("workers must be a positive integer")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class SimResult:
    """Simulated curves plus the effort spent on each point."""

    curve: SerCurve
    trials_used: tuple
    wall_time: float
    symbol_errors: tuple = ()
    bit_errors: tuple = ()
    ber_curve: SerCurve | None = field(default=None, compare=False)


def _ci(p, n):
    return 1.96 * math.sqrt(p * (1.0 - p) / n) if n else 0.0


def _popcount(x):
    x = np.asarray(x, dtype=np.int64)
    count = np.zeros_like(x)
    while np.any(x):
        count += x & 1
        x = x >> 1
    return count


def simulate_batch(config, scheme, modulation, codebook, rng, size, tau=0.5,
                   relay_reference=RelayReference.SIGMA_F):
    """Simulate ``size`` blocks; returns ``(symbol_errors, bit_errors)``."""
    T, R, Nd = config.block_len, config.num_relays, config.dst_antennas
    P1 = tau * config.total_power
    f, g = sample_channel_batch(config, rng, size)
    p1, p2, iv = allocate_batch(scheme, config, f, g, tau, relay_reference)
    amp = np.sqrt(T * p1)
    rho = np.sqrt(p2 / (iv[None, :] * P1 + config.noise1))
    idx = rng.integers(0, modulation.M, size=(size, T))
    s = modulation.points[idx] / math.sqrt(T)
    cn = np.array([1.0, 1j])
    v = (rng.standard_normal((size, R, T, 2)) @ cn) * math.sqrt(config.noise1 / 2.0)
    w = (rng.standard_normal((size, T, Nd, 2)) @ cn) * math.sqrt(config.noise2 / 2.0)
    _, Y = transmit_batch(codebook, amp, rho, f, g, s, v, w)
    dec = decode_batch(codebook, modulation, amp, rho, f, g, config.noise1, config.noise2, Y)
    wrong = dec != idx
    sym = int(np.count_nonzero(wrong))
    bits = int(np.sum(_popcount(modulation.labels[dec[wrong]] ^ modulation.labels[idx[wrong]])))
    return sym, bits


def _run_share(plan, point, worker, error_quota, trial_quota):
    """One worker's share of one SNR point, on its own random substream."""
    seq = np.random.SeedSequence(int(plan.seed), spawn_key=(point, worker))
    rng = np.random.default_rng(seq)
    config = plan.config.with_snr_db(plan.snr_db_grid[point])
    codebook = build_codebook(config.src_antennas, config.num_relays, config.block_len)
    trials = sym = bits = 0
    batch = _MIN_BATCH
    T = config.block_len
    while sym < error_quota and trials < trial_quota:
        size = min(batch, trial_quota - trials)
        e, b = simulate_batch(config, plan.scheme, plan.modulation, codebook, rng, size,
                              plan.tau, plan.relay_reference)
        trials += size
        sym += e
        bits += b
        rate = max(sym, 1) / (trials * T)
        need = (error_quota - sym) / (rate * T)
        batch = int(min(_MAX_BATCH, max(_MIN_BATCH, 1.2 * need)))
    return trials, sym, bits


def _split(total, parts):
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def run_sim(plan):
    """Simulate every SNR point of ``plan``.

    Each point stops once ``min_errors`` symbol errors or ``max_trials``
    blocks are reached. With several workers the quotas are split evenly
    and each worker draws from its own substream, so results depend on the
    worker count but not on scheduling.
    """
    start = time.perf_counter()
    build_codebook(plan.config.src_antennas, plan.config.num_relays, plan.config.block_len)
    W = plan.workers
    jobs = []
    for i in range(len(plan.snr_db_grid)):
        errs = _split(plan.min_errors, W)
        trials = _split(plan.max_trials, W)
        jobs.extend((i, w, errs[w], trials[w]) for w in range(W) if trials[w] > 0)
    if W == 1:
        results = [_run_share(plan, *job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=W) as pool:
            futures = [pool.submit(_run_share, plan, *job) for job in jobs]
            results = [f.result() for f in futures]
    n_pts = len(plan.snr_db_grid)
    trials = [0] * n_pts
    sym = [0] * n_pts
    bits = [0] * n_pts
    for (i, *_), (t, e, b) in zip(jobs, results):
        trials[i] += t
        sym[i] += e
        bits[i] += b
    T = plan.config.block_len
    k = plan.modulation.bits_per_symbol
    ser_pts, ber_pts = [], []
    for i, snr in enumerate(plan.snr_db_grid):
        ns = trials[i] * T
        p = sym[i] / ns
        q = bits[i] / (ns * k)
        ser_pts.append((snr, p, _ci(p, ns)))
        ber_pts.append((snr, q, _ci(q, ns * k)))
    return SimResult(
        curve=SerCurve(tuple(ser_pts), Provenance.SIMULATED),
        trials_used=tuple(trials),
        wall_time=time.perf_counter() - start,
        symbol_errors=tuple(sym),
        bit_errors=tuple(bits),
        ber_curve=SerCurve(tuple(ber_pts), Provenance.SIMULATED),
    )


def decision_snr_batch(config, p1, p2, input_var, f, g, tau=0.5):
    """Per-block SNR of the whitened ML decision statistic, shape (B,)."""
    P1 = tau * config.total_power
    rho = np.sqrt(p2 / (input_var[None, :] * P1 + config.noise1))
    K = noise_covariance_batch(rho, g, config.noise1, config.noise2)
    Kinv_g = np.linalg.solve(K, np.swapaxes(g, 1, 2))  # (B,Nd,R)
    quad = np.real(np.einsum("brj,bjr->br", g.conj(), Kinv_g))
    return np.einsum("bn,bnr,br->b", p1, np.abs(f) ** 2, rho ** 2 * quad)


def empirical_snr_distribution(config, scheme, n_draws, seed, tau=0.5,
                               relay_reference=RelayReference.SIGMA_F):
    """Samples of the post-selection SNR for ``scheme``.

    Selection schemes yield the SNR of the chosen relay (and antenna); the
    antenna-selection scheme yields the sum of per-relay contributions.
    """
    scheme = SchemeId(scheme)
    rng = np.random.default_rng(seed)
    if scheme is SchemeId.OPPORTUNISTIC_SOURCE:
        return opportunistic_source_eta(config, n_draws, rng, tau).sum(axis=1)
    out = np.empty(n_draws)
    for lo in range(0, n_draws, 200_000):
        size = min(200_000, n_draws - lo)
        f, g = sample_channel_batch(config, rng, size)
        p1, p2, iv = allocate_batch(scheme, config, f, g, tau, relay_reference)
        out[lo:lo + size] = decision_snr_batch(config, p1, p2, iv, f, g, tau)
    return out
