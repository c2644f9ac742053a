"""Distributed space-time code construction, signal model and ML decoding.

Batch helpers (``*_batch``) operate on a leading trial axis and carry the
Monte Carlo engine; the single-trial functions wrap them.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import CapabilityError, ContractError
from .network import relay_gains

BRUTE_FORCE_LIMIT = 4096

_I4 = np.eye(4)
_A2 = np.array([[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]], dtype=float)
_C2 = np.array([[0, 0, -1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, -1, 0, 0]], dtype=float)
# Four mutually "anti-commuting" 4x4 dispersion matrices of the rate-one real
# orthogonal design: B_i^T B_j is antisymmetric for every i != j.
_BASIS4 = (_I4, _A2, _C2, _C2 @ _A2)
_BASIS2 = (np.eye(2), np.array([[0.0, -1.0], [1.0, 0.0]]))

SUPPORTED_SHAPES = "block_len in {2, 4} with src_antennas * num_relays <= block_len"


@dataclass(frozen=True)
class CodeBook:
    """Source dispersion matrices ``A`` (Ns,T,T) and relay matrices ``C`` (R,T,T)."""

    A: np.ndarray
    C: np.ndarray

    @property
    def block_len(self):
        return self.A.shape[1]

    @property
    def dispersion(self):
        """Products ``C_r A_n`` indexed ``[r, n]``; shape (R, Ns, T, T)."""
        return np.einsum("rtu,nuv->rntv", self.C, self.A)

    def codeword(self, s):
        """The T x (Ns R) matrix whose column ``r*Ns + n`` is ``C_r A_n s``."""
        D = self.dispersion
        R, Ns, T, _ = D.shape
        cols = np.einsum("rntv,v->trn", D, np.asarray(s))
        return cols.reshape(T, R * Ns)


def build_codebook(Ns, R, T=4):
    """Construct the dispersion matrices for ``Ns`` source antennas and ``R`` relays.

    With at most two antennas and two relays at ``T = 4`` the classic pair
    ``A = [I, A2]``, ``C = [I, C2]`` is returned. Single-antenna sources (or
    single relays) draw up to four matrices from the same real orthogonal
    design. Every product ``C_r A_n`` is then a distinct member of that
    design, which makes the codeword column-orthogonal for real symbols.
    """
    if T == 4:
        basis = _BASIS4
        pairs_a, pairs_c = (_I4, _A2), (_I4, _C2)
    elif T == 2:
        basis = _BASIS2
        pairs_a = pairs_c = _BASIS2
    else:
        raise CapabilityError(f"unsupported block length {T}; supported: {SUPPORTED_SHAPES}")
    if Ns < 1 or R < 1 or Ns * R > T:
        raise CapabilityError(f"unsupported shape (Ns={Ns}, R={R}, T={T}); supported: {SUPPORTED_SHAPES}")
    if Ns <= 2 and R <= 2 and T == 4:
        A, C = pairs_a[:Ns], pairs_c[:R]
    elif Ns == 1:
        order = (basis[0], basis[2], basis[1], basis[3]) if T == 4 else basis
        A, C = (basis[0],), order[:R]
    elif R == 1:
        A, C = basis[:Ns], (basis[0],)
    else:
        A, C = pairs_a[:Ns], pairs_c[:R]
    return CodeBook(np.array(A, dtype=float), np.array(C, dtype=float))


@dataclass(frozen=True)
class TransmissionTrace:
    """Everything observed during one coherence interval.

    ``s`` is normalised so that ``E||s||^2 = 1``. ``x`` holds the relay
    inputs (R,T), ``Y`` the destination block (T,Nd), ``H`` the (Ns R)xNd
    equivalent channel ``F diag(rho) G`` and ``W`` the total noise (T,Nd).
    ``amplitudes`` are the per-antenna factors ``sqrt(T P_{1,n})``.
    """

    s: np.ndarray
    x: np.ndarray
    Y: np.ndarray
    H: np.ndarray
    W: np.ndarray
    amplitudes: np.ndarray


def symbol_vectors(modulation, indices, T):
    """Map constellation indices to transmitted symbols scaled by ``1/sqrt(T)``."""
    return modulation.points[np.asarray(indices)] / np.sqrt(T)


def transmit_batch(codebook, amp, rho, f, g, s, v, w):
    """Two-phase AF relaying for a batch of trials.

    Shapes: ``amp (B,Ns)``, ``rho (B,R)``, ``f (B,Ns,R)``, ``g (B,R,Nd)``,
    ``s (B,T)``, ``v (B,R,T)``, ``w (B,T,Nd)``. Returns ``(x, Y)``.
    """
    As = np.einsum("ntu,bu->bnt", codebook.A, s)
    x = np.einsum("bn,bnr,bnt->brt", amp, f, As) + v
    cx = np.einsum("rtu,bru->brt", codebook.C, x) * rho[:, :, None]
    Y = np.einsum("brt,brj->btj", cx, g) + w
    return x, Y


def noise_covariance_batch(rho, g, noise1, noise2):
    """Per-row covariance across destination antennas, shape (B,Nd,Nd)."""
    Nd = g.shape[2]
    K = noise1 * np.einsum("br,brj,brl->bjl", rho ** 2, g, g.conj())
    return K + noise2 * np.eye(Nd)[None]


def _real_columns(phi, complex_symbols):
    """Stack real-parameter regressors; phi has shape (B, T, n) complex."""
    cols = [np.concatenate([phi.real, phi.imag], axis=-1)]
    if complex_symbols:
        cols.append(np.concatenate([-phi.imag, phi.real], axis=-1))
    return np.concatenate(cols, axis=1)


def decode_batch(codebook, modulation, amp, rho, f, g, noise1, noise2, Y):
    """Maximum-likelihood symbol indices (B,T) under whitened Gaussian noise."""
    B, T, Nd = Y.shape
    D = codebook.dispersion
    h = amp[:, :, None] * f * rho[:, None, :]
    phi = np.einsum("bnr,rntk,brj->bktj", h, D, g)
    L = np.linalg.cholesky(noise_covariance_batch(rho, g, noise1, noise2))
    yw = np.linalg.solve(L, np.swapaxes(Y, 1, 2))  # (B,Nd,T)
    pw = np.linalg.solve(L, np.transpose(phi, (0, 3, 1, 2)).reshape(B, Nd, T * T))
    yw = np.swapaxes(yw, 1, 2).reshape(B, T * Nd)
    pw = pw.reshape(B, Nd, T, T).transpose(0, 2, 3, 1).reshape(B, T, T * Nd)
    complex_symbols = not modulation.is_real
    Cm = _real_columns(pw, complex_symbols)  # (B, P, 2 T Nd)
    yr = np.concatenate([yw.real, yw.imag], axis=-1)
    G = np.einsum("bpm,bqm->bpq", Cm, Cm)
    z = np.einsum("bpm,bm->bp", Cm, yr)
    scale = 1.0 / np.sqrt(T)
    pts = modulation.points * scale
    npar = G.shape[1]
    # group each symbol's parameters: k (real) and T + k (imag)
    owner = np.arange(npar) % T
    cross = owner[:, None] != owner[None, :]
    diag_mag = np.max(np.abs(np.diagonal(G, axis1=1, axis2=2)), axis=1)
    coupled = np.max(np.abs(G * cross[None]), axis=(1, 2)) > 1e-9 * diag_mag
    out = np.empty((B, T), dtype=int)
    free = ~coupled
    if np.any(free):
        out[free] = _decode_decoupled(G[free], z[free], pts, T, complex_symbols)
    if np.any(coupled):
        out[coupled] = _decode_exhaustive(G[coupled], z[coupled], pts, T, complex_symbols)
    return out


def _decode_decoupled(G, z, pts, T, complex_symbols):
    pr, pi = pts.real, pts.imag
    k = np.arange(T)
    gkk = G[:, k, k]
    metric = gkk[:, :, None] * pr ** 2 - 2.0 * z[:, :T, None] * pr
    if complex_symbols:
        gii = G[:, T + k, T + k]
        gri = G[:, k, T + k]
        metric = metric + gii[:, :, None] * pi ** 2 + 2.0 * gri[:, :, None] * pr * pi
        metric = metric - 2.0 * z[:, T:, None] * pi
    return np.argmin(metric, axis=2)


def _decode_exhaustive(G, z, pts, T, complex_symbols):
    M = pts.size
    if M ** T > BRUTE_FORCE_LIMIT:
        raise CapabilityError(
            f"non-orthogonal decoding needs {M}^{T} candidates (limit {BRUTE_FORCE_LIMIT})"
        )
    cand = np.array(list(itertools.product(range(M), repeat=T)))
    theta = pts[cand]
    params = np.concatenate([theta.real, theta.imag], axis=1) if complex_symbols else theta.real
    quad = np.einsum("cp,bpq,cq->bc", params, G, params)
    metric = quad - 2.0 * z @ params.T
    return cand[np.argmin(metric, axis=1)]


def _trial_arrays(config, alloc, chan):
    chan.check(config)
    alloc.check(config)
    T = config.block_len
    amp = np.sqrt(T * np.asarray(alloc.p1_per_antenna))[None]
    rho = relay_gains(config, alloc)[None]
    return amp, rho, chan.f[None], chan.g[None]


def simulate_transmission(config, codebook, alloc, chan, s, rng, noise_scale=1.0):
    """Run one block through both hops and return the full trace.

    ``noise_scale`` multiplies both noise standard deviations; zero gives a
    noiseless block with exactly zero noise samples.
    """
    T, R, Nd = config.block_len, config.num_relays, config.dst_antennas
    s = np.asarray(s, dtype=complex)
    if s.shape != (T,):
        raise ContractError(f"symbol vector must have length {T}")
    if codebook.A.shape[0] != config.src_antennas or codebook.C.shape[0] != R or codebook.block_len != T:
        raise ContractError("codebook does not match the network shape")
    amp, rho, f, g = _trial_arrays(config, alloc, chan)

    def cn(shape, var):
        z = rng.standard_normal(shape + (2,)) @ np.array([1.0, 1j])
        return z * np.sqrt(var / 2.0) * noise_scale

    v = cn((1, R, T), config.noise1)
    w = cn((1, T, Nd), config.noise2)
    x, Y = transmit_batch(codebook, amp, rho, f, g, s[None], v, w)
    cv = np.einsum("rtu,bru->brt", codebook.C, v) * rho[:, :, None]
    W = np.einsum("brt,brj->btj", cv, g) + w
    H = (chan.f[:, :, None] * rho[0][None, :, None] * chan.g[None, :, :])  # (Ns,R,Nd)
    H = np.transpose(H, (1, 0, 2)).reshape(R * config.src_antennas, Nd)
    return TransmissionTrace(s=s, x=x[0], Y=Y[0], H=H, W=W[0], amplitudes=amp[0])


def decode_ml(trace, codebook, config, alloc, chan, modulation):
    """ML decision for one trace, returned as transmitted-scale symbols."""
    amp, rho, f, g = _trial_arrays(config, alloc, chan)
    idx = decode_batch(codebook, modulation, amp, rho, f, g, config.noise1, config.noise2, trace.Y[None])
    return symbol_vectors(modulation, idx[0], config.block_len)


def instantaneous_snr(config, alloc, chan):
    """Signal-to-noise power ratio of the destination block.

    Signal energy ``sum_{n,r} P_{1,n} |f_{n,r}|^2 rho_r^2 ||g_r||^2`` over
    noise energy ``sum_r rho_r^2 ||g_r||^2 N1 + Nd N2``; with uniform
    antenna powers this is the familiar ``P1/Ns`` weighted form.
    """
    chan.check(config)
    rho2 = relay_gains(config, alloc) ** 2
    g2 = np.sum(np.abs(chan.g) ** 2, axis=1)
    p1 = np.asarray(alloc.p1_per_antenna)
    signal = np.sum(p1[:, None] * np.abs(chan.f) ** 2 * (rho2 * g2)[None, :])
    noise = np.sum(rho2 * g2) * config.noise1 + config.dst_antennas * config.noise2
    return float(signal / noise)


def decision_snr(config, alloc, chan):
    """Per-symbol SNR seen by the whitened ML metric (equals the power ratio when Nd = 1).

    For a real constellation the symbol error probability is
    ``Q(sqrt(2 * decision_snr))``-shaped.
    """
    chan.check(config)
    rho = relay_gains(config, alloc)
    K = noise_covariance_batch(rho[None], chan.g[None], config.noise1, config.noise2)[0]
    Kinv_g = np.linalg.solve(K, chan.g.T)  # (Nd, R)
    quad = np.real(np.sum(chan.g.T.conj() * Kinv_g, axis=0))
    p1 = np.asarray(alloc.p1_per_antenna)
    return float(np.sum(p1[:, None] * np.abs(chan.f) ** 2 * (rho ** 2 * quad)[None, :]))
