"""Key-matrix encryption, shared DP noise, AWGN links and key reconstruction.

Per-message functions here mirror one link of the exchange; the batched
simulation engine performs the same arithmetic over all links at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._random import stream_rows
from .gain import DiagonalGain, GainParams, proportionate_gain, update_direction

VARIANTS = ("oracle", "v1", "v2", "none")
KNOWLEDGE = ("none", "noise-only", "key-only")


@dataclass(frozen=True)
class PrivacyConfig:
    dp_noise_variance: float = 0.05
    channel_noise_variance: float = 0.05
    shared_seed: int = 12345
    variant: str = "v2"

    def __post_init__(self):
        if self.dp_noise_variance < 0 or self.channel_noise_variance < 0:
            raise ValueError("noise variances must be non-negative")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")


@dataclass(frozen=True, eq=False)
class CipherVector:
    """Transmitted payload plus the variant's auxiliary broadcast.

    ``aux`` holds ``{"d": float, "u": (L,)}`` for v1, ``{"p": (L,)}`` for v2
    and is empty otherwise.
    """

    payload: np.ndarray
    aux: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class KeyErrorMatrix:
    """Diagonal of ``V = G_tilde - G``."""

    V: np.ndarray

    @classmethod
    def between(cls, reconstructed: DiagonalGain, true: DiagonalGain) -> "KeyErrorMatrix":
        return cls(np.asarray(reconstructed.diag) - np.asarray(true.diag))


def _diag(G) -> np.ndarray:
    return np.asarray(getattr(G, "diag", G), dtype=float)


def dp_noise(shared_seed: int, node: int, iteration: int, dim: int, variance: float) -> np.ndarray:
    """Honest agents' shared noise for ``(node, iteration)``."""
    if variance == 0:
        return np.zeros(dim)
    rows = stream_rows(shared_seed, "dp-noise", node, n_rows=iteration + 1, row_shape=(dim,))
    return np.sqrt(variance) * rows[iteration]


def encrypt(phi, G_inv, eta, variant: str = "none", local: dict | None = None) -> CipherVector:
    """``G^-1 phi + eta`` plus the auxiliary data the variant broadcasts.

    ``local`` carries the sender's own ``d`` and ``u`` (v1) or ``p`` (v2).
    """
    phi = np.asarray(phi, dtype=float)
    g_inv, eta = _diag(G_inv), np.asarray(eta, dtype=float)
    if not (phi.shape == g_inv.shape == eta.shape):
        raise ValueError(f"dimension mismatch: phi {phi.shape}, key {g_inv.shape}, noise {eta.shape}")
    local = local or {}
    if variant == "v1":
        aux = {"d": float(local["d"]), "u": np.array(local["u"], dtype=float)}
    elif variant == "v2":
        aux = {"p": np.array(local["p"], dtype=float)}
    else:
        aux = {}
    return CipherVector(g_inv * phi + eta, aux)


def channel(cipher: CipherVector, rng: np.random.Generator, variance: float) -> CipherVector:
    """AWGN link: independent ``N(0, variance)`` on every real entry."""
    if variance == 0:
        return cipher
    sd = np.sqrt(variance)

    def noisy(x):
        x = np.asarray(x, dtype=float)
        return x + sd * rng.standard_normal(x.shape)

    aux = {k: (float(noisy(v)) if np.ndim(v) == 0 else noisy(v)) for k, v in cipher.aux.items()}
    return CipherVector(noisy(cipher.payload), aux)


def reconstruct_key(
    variant: str,
    received: CipherVector,
    params: GainParams,
    *,
    true_gain: DiagonalGain | None = None,
    neighborhood_aux: dict | None = None,
    receiver_omega=None,
    c_col=None,
) -> DiagonalGain:
    """Receiver-side key ``G_tilde`` for a message.

    oracle
        ``true_gain`` delivered out of band.
    v1
        ``p_hat = sum_{l' in N_k} c[l',k] u~_l' (d~_l' - u~_l'^T omega_k)``
        from the noisy ``(d, u)`` broadcasts in ``neighborhood_aux``
        (``{node: (d, u)}``, the receiver's own data included) with the
        receiver's estimate standing in for the sender's.
    v2
        the noisy ``p`` carried in the message.

    ``params`` must carry the sender's step size.
    """
    if variant == "oracle":
        if true_gain is None:
            raise ValueError("oracle reconstruction needs the true key")
        return DiagonalGain(np.array(true_gain.diag, dtype=float))
    if variant == "v2":
        if "p" not in received.aux:
            raise ValueError("v2 reconstruction needs the exchanged direction p in aux")
        return proportionate_gain(received.aux["p"], params)
    if variant == "v1":
        if not neighborhood_aux or receiver_omega is None or c_col is None:
            raise ValueError("v1 reconstruction needs neighborhood (d, u) broadcasts, omega_k and c weights")
        c_col = np.asarray(c_col, dtype=float)
        nodes = sorted(neighborhood_aux)
        dim = len(receiver_omega)
        u = np.full((len(c_col), dim), np.nan)
        d = np.full(len(c_col), np.nan)
        for l in nodes:
            d[l], u[l] = neighborhood_aux[l]
        p_hat = update_direction(receiver_omega, u, d, c_col)
        return proportionate_gain(p_hat, params)
    raise ValueError(f"no key reconstruction for variant {variant!r}")


def decrypt(received: CipherVector, eta, G_tilde) -> np.ndarray:
    r, eta, g = received.payload, np.asarray(eta, dtype=float), _diag(G_tilde)
    if not (r.shape == eta.shape == g.shape):
        raise ValueError(f"dimension mismatch: payload {r.shape}, noise {eta.shape}, key {g.shape}")
    return g * (r - eta)


def eavesdrop(received: CipherVector, knowledge: str, *, eta=None, key=None) -> np.ndarray:
    """Adversary's estimate of the sender's intermediate vector."""
    if knowledge == "none":
        return np.array(received.payload)
    if knowledge == "noise-only":
        return received.payload - np.asarray(eta, dtype=float)
    if knowledge == "key-only":
        return _diag(key) * received.payload
    raise ValueError(f"knowledge must be one of {KNOWLEDGE}, got {knowledge!r}")


def with_variant(config: PrivacyConfig, variant: str) -> PrivacyConfig:
    return replace(config, variant=variant)
