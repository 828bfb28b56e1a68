"""Update direction and the closed-form proportionate gain (the key matrix).

The raw gain ``gain_matrix`` evaluates the generalized-correntropy closed
form entrywise::

    g_r = (beta/mu) * (-ln(lam * beta^a / (mu^a A) * |p_r|^-a))^(1/a) / p_r

with ``lam`` from ``lambda_star``.  ``proportionate_gain`` turns it into the
matrix the algorithms actually use: magnitudes normalized to unit trace and
blended with the uniform gain ``I/L`` (IPNLMS-style), which keeps the update
scale-covariant in ``p`` and the key well conditioned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

LN_ARG_MIN = 1e-12
# ln-argument clamped to [LN_ARG_MIN, 1]  <=>  radicand clamped to [0, RADICAND_MAX]
RADICAND_MAX = -math.log(LN_ARG_MIN)
NORMALIZATIONS = ("trace", "none")


class DegenerateDirectionError(ArithmeticError):
    pass


def kernel_constant(alpha: float, beta: float) -> float:
    """Normalizing constant of the generalized Gaussian kernel,
    ``alpha / (2 beta Gamma(1/alpha))``."""
    return alpha / (2.0 * beta * math.gamma(1.0 / alpha))


@dataclass(frozen=True)
class GainParams:
    alpha: float = 1.5
    beta: float = 10.0
    kernel_const: float | None = None  # None -> kernel_constant(alpha, beta)
    mu: float = 0.1
    floor_p: float = 1e-8
    gain_clip: tuple[float, float] = (1e-4, 1e4)
    mix: float = 0.005
    normalization: str = "trace"

    def __post_init__(self):
        for name in ("alpha", "beta", "mu", "floor_p"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.kernel_const is not None and not self.kernel_const > 0:
            raise ValueError(f"kernel_const must be positive, got {self.kernel_const}")
        lo, hi = self.gain_clip
        if not 0 < lo < hi:
            raise ValueError(f"gain_clip must satisfy 0 < g_min < g_max, got {self.gain_clip}")
        if not 0 <= self.mix <= 1:
            raise ValueError(f"mix must lie in [0, 1], got {self.mix}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}, got {self.normalization!r}")

    @property
    def A(self) -> float:
        if self.kernel_const is None:
            return kernel_constant(self.alpha, self.beta)
        return self.kernel_const

    def with_mu(self, mu: float) -> "GainParams":
        return GainParams(
            self.alpha, self.beta, self.kernel_const, mu, self.floor_p, self.gain_clip, self.mix, self.normalization
        )


@dataclass(frozen=True, eq=False)
class DiagonalGain:
    diag: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.diag)

    @property
    def spectral_norm(self) -> float:
        return float(np.max(np.abs(self.diag)))

    def __matmul__(self, vec):
        return self.diag * np.asarray(vec)


def update_direction(omega_k, regressors, measurements, c_col, neighbors=None) -> np.ndarray:
    """``p_k = sum_l c[l,k] u_l (d_l - u_l^T omega_k)`` for one node.

    ``regressors`` is (N, L) and ``measurements`` (N,) for the whole network;
    only rows with non-zero ``c_col`` (or listed in ``neighbors``) are read.
    NaN in a used row means the neighbor's data is missing.
    """
    c_col = np.asarray(c_col, dtype=float)
    hood = np.flatnonzero(c_col) if neighbors is None else np.asarray(sorted(neighbors))
    u = np.asarray(regressors, dtype=float)[hood]
    d = np.asarray(measurements, dtype=float)[hood]
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(d))):
        missing = hood[~(np.isfinite(d) & np.all(np.isfinite(u), axis=1))]
        raise ValueError(f"missing neighbor data from nodes {missing.tolist()}")
    residual = d - u @ np.asarray(omega_k, dtype=float)
    return (c_col[hood] * residual) @ u



def network_update_directions(omega, regressors, measurements, c):
    """Batched ``p`` for every node.

    omega, regressors: (..., N, L); measurements: (..., N); c: (N, N).
    Returns (..., N, L).
    """
    # residual[..., l, k] = d_l - u_l^T omega_k
    residual = measurements[..., :, None] - np.einsum("...lj,...kj->...lk", regressors, omega)
    return np.einsum("...lk,...lj->...kj", c * residual, regressors)


def _floored(p, floor_p):
    p = np.asarray(p, dtype=float)
    mag = np.maximum(np.abs(p), floor_p)
    sign = np.where(p < 0, -1.0, 1.0)
    return mag, sign


def _log_terms(mag, alpha, beta, mu):
    """ln c, ln x_r and ln s with c = (beta/mu)^alpha, x_r = |p_r|^-alpha."""
    log_c = alpha * (np.log(beta) - np.log(mu))
    log_x = -alpha * np.log(mag)
    log_s = logsumexp(log_x, axis=-1, keepdims=True)
    return log_c, log_x, log_s


def _radicand(mag, alpha, beta, mu):
    # -ln(lam* beta^a/(mu^a A) |p_r|^-a) rearranged so A and the large
    # log terms cancel analytically:
    #   1/(c s) + alpha * sum_j w_j (ln|p_r| - ln|p_j|),  w_j = x_j / s
    log_c, log_x, log_s = _log_terms(mag, alpha, beta, mu)
    w = softmax(log_x, axis=-1)
    log_mag = np.log(mag)
    mean_log = np.sum(w * log_mag, axis=-1, keepdims=True)
    return np.exp(-(log_c + log_s)) + alpha * (log_mag - mean_log)


def lambda_star(p, params: GainParams) -> float:
    mag, _ = _floored(p, params.floor_p)
    alpha, beta, mu, A = params.alpha, params.beta, params.mu, params.A
    log_c, log_x, log_s = _log_terms(mag, alpha, beta, mu)
    w = softmax(log_x, axis=-1)
    # ln lam = -1/(c s) - sum_r w_r ln(c x_r / A)
    log_lam = -np.exp(-(log_c + log_s[..., 0])) - np.sum(w * (log_c + log_x - math.log(A)), axis=-1)
    lam = np.exp(log_lam)
    if not (np.all(np.isfinite(lam)) and np.all(lam > 0)):
        raise DegenerateDirectionError(f"lambda* not finite and positive: {lam}")
    return float(lam) if np.ndim(lam) == 0 else lam


def raw_gain_diag(p, alpha, beta, mu, floor_p=1e-8, gain_clip=(1e-4, 1e4)):
    """Vectorized raw closed-form gain over the last axis of ``p``.

    ``mu`` broadcasts against ``p[..., :1]``.  Returns signed gains.
    """
    mag, sign = _floored(p, floor_p)
    rad = np.clip(_radicand(mag, alpha, beta, mu), 0.0, RADICAND_MAX)
    g = (beta / mu) * rad ** (1.0 / alpha) / mag
    g = np.clip(g, gain_clip[0], gain_clip[1])
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite gain after guards")
    return sign * g


def gain_matrix(p, params: GainParams) -> DiagonalGain:
    return DiagonalGain(
        raw_gain_diag(p, params.alpha, params.beta, params.mu, params.floor_p, params.gain_clip)
    )


def operative_gain_diag(p, alpha, beta, mu, floor_p=1e-8, gain_clip=(1e-4, 1e4), mix=0.005, normalization="trace"):
    """Vectorized gain used by adaptation and encryption."""
    g = raw_gain_diag(p, alpha, beta, mu, floor_p, gain_clip)
    if normalization == "none":
        return g
    mag = np.abs(g)
    L = mag.shape[-1]
    return (1.0 - mix) / L + mix * mag / mag.sum(axis=-1, keepdims=True)


def proportionate_gain(p, params: GainParams) -> DiagonalGain:
    return DiagonalGain(
        operative_gain_diag(
            p, params.alpha, params.beta, params.mu, params.floor_p, params.gain_clip, params.mix, params.normalization
        )
    )


def invert_gain(G: DiagonalGain) -> DiagonalGain:
    return DiagonalGain(1.0 / np.asarray(G.diag, dtype=float))
