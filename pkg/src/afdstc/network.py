"""Network description, channel sampling and modulation constants."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import ConfigError, ContractError, DomainError


def _positive(name, value):
    if not (isinstance(value, (int, float, np.floating, np.integer)) and math.isfinite(value) and value > 0):
        raise ConfigError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)


def _positive_int(name, value):
    if isinstance(value, bool) or int(value) != value or value < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


@dataclass(frozen=True)
class NetworkConfig:
    """Static description of a source/relays/destination network.

    ``sigma_f_sq`` and ``sigma_g_sq`` hold one variance per relay; a scalar is
    broadcast to all relays. ``noise1`` and ``noise2`` are the relay and
    destination noise powers.
    """

    num_relays: int
    src_antennas: int
    dst_antennas: int
    block_len: int = 4
    sigma_f_sq: tuple = 1.0
    sigma_g_sq: tuple = 1.0
    noise1: float = 1.0
    noise2: float = 1.0
    total_power: float = 1.0

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("num_relays", _positive_int("num_relays", self.num_relays))
        set_("src_antennas", _positive_int("src_antennas", self.src_antennas))
        set_("dst_antennas", _positive_int("dst_antennas", self.dst_antennas))
        set_("block_len", _positive_int("block_len", self.block_len))
        R = self.num_relays
        for name in ("sigma_f_sq", "sigma_g_sq"):
            raw = getattr(self, name)
            vals = (raw,) * R if np.ndim(raw) == 0 else tuple(raw)
            if len(vals) != R:
                raise ConfigError(f"{name} must have one entry per relay ({R}), got {len(vals)}")
            set_(name, tuple(_positive(name, v) for v in vals))
        for name in ("noise1", "noise2", "total_power"):
            set_(name, _positive(name, getattr(self, name)))
        if self.block_len < self.src_antennas:
            raise ConfigError("block_len must be at least src_antennas")
        if self.block_len < self.num_relays:
            raise ConfigError("block_len must be at least num_relays")

    @property
    def homogeneous(self):
        return len(set(self.sigma_f_sq)) == 1 and len(set(self.sigma_g_sq)) == 1

    @property
    def sigma_f_array(self):
        return np.asarray(self.sigma_f_sq)

    @property
    def sigma_g_array(self):
        return np.asarray(self.sigma_g_sq)

    def with_total_power(self, power):
        return replace(self, total_power=power)

    def with_snr_db(self, snr_db):
        """Copy with ``total_power`` set so that ``10 log10(P / noise1) = snr_db``."""
        return replace(self, total_power=self.noise1 * 10.0 ** (snr_db / 10.0))

    @property
    def snr_db(self):
        return 10.0 * math.log10(self.total_power / self.noise1)

    def to_dict(self):
        d = asdict(self)
        d["sigma_f_sq"] = list(self.sigma_f_sq)
        d["sigma_g_sq"] = list(self.sigma_g_sq)
        return d

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("network config must be a JSON object")
        names = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown network config field(s): {sorted(unknown)}")
        missing = {"num_relays", "src_antennas", "dst_antennas"} - set(data)
        if missing:
            raise ConfigError(f"missing network config field(s): {sorted(missing)}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(data)


@dataclass(frozen=True)
class ChannelRealization:
    """Fading coefficients for one coherence interval.

    ``f[n, r]`` links source antenna ``n`` to relay ``r``; ``g[r, j]`` links
    relay ``r`` to destination antenna ``j``.
    """

    f: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.f, dtype=complex)
        g = np.asarray(self.g, dtype=complex)
        if f.ndim != 2 or g.ndim != 2 or f.shape[1] != g.shape[0]:
            raise ContractError(f"incompatible channel shapes f{f.shape}, g{g.shape}")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
            raise ContractError("channel entries must be finite")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "g", g)

    def check(self, config):
        want_f = (config.src_antennas, config.num_relays)
        want_g = (config.num_relays, config.dst_antennas)
        if self.f.shape != want_f or self.g.shape != want_g:
            raise ContractError(
                f"channel shapes f{self.f.shape}, g{self.g.shape} do not match config {want_f}, {want_g}"
            )


def sample_channel_batch(config, rng, size):
    """Draw ``size`` independent realizations as arrays ``f (size,Ns,R)``, ``g (size,R,Nd)``."""
    Ns, R, Nd = config.src_antennas, config.num_relays, config.dst_antennas
    sf = np.sqrt(config.sigma_f_array / 2.0)
    sg = np.sqrt(config.sigma_g_array / 2.0)
    f = rng.standard_normal((size, Ns, R, 2)) @ np.array([1.0, 1j])
    g = rng.standard_normal((size, R, Nd, 2)) @ np.array([1.0, 1j])
    return f * sf[None, None, :], g * sg[None, :, None]


def sample_channel(config, rng):
    """Draw one Rayleigh realization; ``f ~ CN(0, sigma_f^2)``, ``g ~ CN(0, sigma_g^2)``."""
    f, g = sample_channel_batch(config, rng, 1)
    return ChannelRealization(f[0], g[0])


@dataclass(frozen=True)
class PowerAllocation:
    """Phase split and per-antenna / per-relay powers.

    ``relay_input_var`` optionally overrides the per-relay variance used to
    normalise the amplification gain (``sigma_f^2`` otherwise).
    """

    tau: float
    p1_per_antenna: tuple
    p2_per_relay: tuple
    relay_input_var: tuple | None = None

    def __post_init__(self):
        if not (0.0 < self.tau < 1.0):
            raise ConfigError(f"tau must lie in (0, 1), got {self.tau!r}")
        p1 = tuple(float(v) for v in self.p1_per_antenna)
        p2 = tuple(float(v) for v in self.p2_per_relay)
        if any(v < 0 or not math.isfinite(v) for v in p1 + p2):
            raise ConfigError("powers must be finite and nonnegative")
        object.__setattr__(self, "p1_per_antenna", p1)
        object.__setattr__(self, "p2_per_relay", p2)
        if self.relay_input_var is not None:
            rv = tuple(_positive("relay_input_var", v) for v in self.relay_input_var)
            if len(rv) != len(p2):
                raise ConfigError("relay_input_var needs one entry per relay")
            object.__setattr__(self, "relay_input_var", rv)

    @property
    def p1(self):
        return math.fsum(self.p1_per_antenna)

    @property
    def p2(self):
        return math.fsum(self.p2_per_relay)

    def check(self, config, rtol=1e-12):
        if len(self.p1_per_antenna) != config.src_antennas or len(self.p2_per_relay) != config.num_relays:
            raise ContractError("allocation lengths do not match the network shape")
        P1 = self.tau * config.total_power
        P2 = (1.0 - self.tau) * config.total_power
        slack = rtol * config.total_power
        if self.p1 > P1 + slack or self.p2 > P2 + slack:
            raise ContractError("allocation exceeds the phase power budget")

    def input_var(self, config):
        if self.relay_input_var is not None:
            return np.asarray(self.relay_input_var)
        return config.sigma_f_array


def relay_gains(config, alloc):
    """Amplification factors for all relays as an array of length R."""
    P1 = alloc.tau * config.total_power
    p2 = np.asarray(alloc.p2_per_relay)
    return np.sqrt(p2 / (alloc.input_var(config) * P1 + config.noise1))


def relay_gain(config, alloc, r):
    """Amplification factor of relay ``r`` (0-based)."""
    if not 0 <= r < config.num_relays:
        raise ContractError(f"relay index {r} out of range")
    return float(relay_gains(config, alloc)[r])


class ModulationFamily(str, Enum):
    MPSK = "MPSK"
    MQAM = "MQAM"


def _gray(n):
    return n ^ (n >> 1)


@dataclass(frozen=True)
class ModulationSpec:
    """Constellation family with the SER constants ``c`` and ``g``.

    The SER approximations used throughout take the form
    ``c * Q(sqrt(g * snr))``.
    """

    family: ModulationFamily
    M: int
    c: float
    g: float
    points: np.ndarray = field(repr=False, compare=False, default=None)
    labels: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def bits_per_symbol(self):
        return int(round(math.log2(self.M)))

    @property
    def is_real(self):
        return bool(np.all(np.abs(self.points.imag) < 1e-15))

    def to_dict(self):
        return {"family": self.family.value, "M": self.M, "c": self.c, "g": self.g}


def _constellation(family, M):
    if family is ModulationFamily.MPSK:
        m = np.arange(M)
        pts = np.exp(2j * np.pi * m / M)
        pts = np.where(np.abs(pts.imag) < 1e-15, pts.real + 0j, pts)
        labels = np.array([_gray(k) for k in m])
        return pts, labels
    side = int(round(math.sqrt(M)))
    levels = 2 * np.arange(side) - (side - 1)
    gray_axis = np.array([_gray(k) for k in range(side)])
    half_bits = int(round(math.log2(side)))
    pts, labels = [], []
    for i in range(side):
        for q in range(side):
            pts.append(levels[i] + 1j * levels[q])
            labels.append((gray_axis[i] << half_bits) | gray_axis[q])
    pts = np.asarray(pts)
    pts = pts / np.sqrt(np.mean(np.abs(pts) ** 2))
    return pts, np.asarray(labels)


def modulation_constants(family, M, nearest_neighbour=False):
    """Constants ``c``, ``g`` and the unit-energy constellation for a family.

    For M-PSK the usual nearest-neighbour constant is ``c = 2``; for BPSK the
    exact error probability is ``Q(sqrt(2 snr))`` so ``c = 1`` is returned
    unless ``nearest_neighbour`` is set.
    """
    try:
        family = ModulationFamily(family)
    except ValueError as exc:
        raise ConfigError(f"unknown modulation family {family!r}") from exc
    if isinstance(M, bool) or int(M) != M or M < 2 or (int(M) & (int(M) - 1)):
        raise ConfigError(f"M must be a power of two >= 2, got {M!r}")
    M = int(M)
    if family is ModulationFamily.MPSK:
        c = 1.0 if (M == 2 and not nearest_neighbour) else 2.0
        g = 2.0 * math.sin(math.pi / M) ** 2
    else:
        root = math.isqrt(M)
        if root * root != M:
            raise ConfigError(f"MQAM needs a square constellation size, got M={M}")
        c = 4.0 * (root - 1) / root
        g = 3.0 / (M - 1)
    pts, labels = _constellation(family, M)
    return ModulationSpec(family, M, c, g, pts, labels)


def sigma_xi_sq(config):
    """Mean of ``max_n |f_{n,r}|^2`` per relay: ``sigma_f^2`` times the Ns-th harmonic number."""
    harmonic = math.fsum(1.0 / k for k in range(1, config.src_antennas + 1))
    return config.sigma_f_array * harmonic


def check_relay_index(config, r):
    if not 0 <= r < config.num_relays:
        raise DomainError(f"relay index {r} out of range")
    return r
