"""Adapt-then-combine diffusion: DLMS, PGCDLMS and double-private PGCDLMS.

``simulate`` advances any number of independent runs in lockstep (leading
batch axis), which is how the Monte-Carlo harness gets its speed.  The
per-node functions ``adapt``, ``exchange`` and ``combine`` spell out one
iteration message by message and serve as the reference the batched engine
is tested against.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ._random import BlockStream, derive_seed
from .gain import (
    DiagonalGain,
    GainParams,
    invert_gain,
    network_update_directions,
    operative_gain_diag,
    proportionate_gain,
)
from .privacy import CipherVector, PrivacyConfig, channel, decrypt, dp_noise, encrypt, reconstruct_key
from .signal import Scenario
from .topology import CombinationWeights, Topology

logger = logging.getLogger(__name__)

FAMILIES = ("dlms", "pgcdlms", "dp-pgcdlms")


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class AlgorithmSpec:
    name: str
    family: str = "dlms"
    variant: str | None = None
    step_size: float | tuple = 0.01
    normalize_phi: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.family == "dp-pgcdlms" and self.variant not in ("oracle", "v1", "v2"):
            raise ValueError(f"dp-pgcdlms needs variant oracle, v1 or v2, got {self.variant!r}")
        if np.any(np.asarray(self.step_size, dtype=float) <= 0):
            raise ValueError(f"step sizes must be positive, got {self.step_size}")

    @property
    def private(self) -> bool:
        return self.family == "dp-pgcdlms"

    def step_sizes(self, n_agents: int) -> np.ndarray:
        mu = np.broadcast_to(np.asarray(self.step_size, dtype=float), (n_agents,))
        return np.array(mu)


@dataclass(frozen=True)
class Collect:
    """What ``simulate`` records besides the MSD trace."""

    estimates: bool = False
    bounds: bool = False
    diagnostics: bool = False
    diag_stride: int = 10
    diag_burn_in: int = 0
    adversary: bool = False


@dataclass
class RunLog:
    """Per-run records, leading axis = run.

    ``sq_dev[r, i]`` is the node-mean of ``||w_{k,i} - w_o(i)||^2`` for the
    estimates entering iteration ``i`` (so ``i = 0`` is the zero start).
    """

    algorithm: str
    sq_dev: np.ndarray
    final_estimates: np.ndarray
    estimates: np.ndarray | None = None
    d2: np.ndarray | None = None
    d2_max: np.ndarray | None = None
    diag_iterations: np.ndarray | None = None
    key_error: np.ndarray | None = None
    gi_omega: np.ndarray | None = None
    gi_p: np.ndarray | None = None
    adversary: dict = field(default_factory=dict)

    def run(self, r: int) -> "RunLog":
        """The records of one run, keeping a length-1 batch axis."""
        sl = slice(r, r + 1)
        pick = lambda x: None if x is None else x[sl]  # noqa: E731
        return RunLog(
            self.algorithm,
            self.sq_dev[sl],
            self.final_estimates[sl],
            pick(self.estimates),
            pick(self.d2),
            pick(self.d2_max),
            self.diag_iterations,
            pick(self.key_error),
            pick(self.gi_omega),
            pick(self.gi_p),
            {k: v[sl] for k, v in self.adversary.items()},
        )


# -- per-node reference operations -------------------------------------------


def adapt(omega_k, p_k, spec: AlgorithmSpec, mu_k: float, params: GainParams):
    """Intermediate estimate ``phi_k`` and the gain used to form it."""
    omega_k = np.asarray(omega_k, dtype=float)
    if spec.family == "dlms":
        G = DiagonalGain(np.ones_like(omega_k))
    else:
        G = proportionate_gain(p_k, params.with_mu(mu_k))
    phi = omega_k + mu_k * G.diag * np.asarray(p_k, dtype=float)
    if spec.normalize_phi:
        phi = _unit(phi)
    return phi, G


def combine(inbox: dict, a_col) -> np.ndarray:
    """``sum_{l in N_k} a[l,k] inbox[l]``; ``inbox`` must cover ``N_k``."""
    a_col = np.asarray(a_col, dtype=float)
    hood = np.flatnonzero(a_col)
    missing = [int(l) for l in hood if l not in inbox]
    if missing:
        raise ValueError(f"incomplete inbox: no message from nodes {missing}")
    return sum(a_col[l] * np.asarray(inbox[l], dtype=float) for l in hood)


def exchange(
    phi,
    gains,
    p,
    omega,
    regressors,
    measurements,
    iteration: int,
    topology: Topology,
    weights: CombinationWeights,
    spec: AlgorithmSpec,
    privacy: PrivacyConfig,
    params: GainParams,
    rng: np.random.Generator | None = None,
) -> dict:
    """Decrypted inboxes ``{k: {l: phi~~_l}}`` for one iteration, built link
    by link (sender, receiver) in lexicographic order.

    Channel noise draws come from ``rng``; pass ``None`` only with a
    zero-variance channel.
    """
    n = topology.n_agents
    mu = spec.step_sizes(n)
    ch_var = privacy.channel_noise_variance
    if ch_var > 0 and rng is None:
        raise ValueError("a noisy channel needs an rng")
    inboxes = {k: {k: np.array(phi[k])} for k in range(n)}
    variant = spec.variant if spec.private else "none"
    dim = len(phi[0])
    etas = {}
    v1_aux = {}
    if variant == "v1":
        # every sender's (d, u) broadcast, as received by each of its neighbors
        for l, k in topology.links():
            msg = CipherVector(np.zeros(0), {"d": measurements[l], "u": regressors[l]})
            v1_aux[(l, k)] = channel(msg, rng, ch_var).aux
    for l, k in topology.links():
        if variant == "none":
            msg = channel(CipherVector(np.array(phi[l])), rng, ch_var)
            inboxes[k][l] = msg.payload
            continue
        G_l = DiagonalGain(gains[l])
        if l not in etas:
            etas[l] = dp_noise(privacy.shared_seed, l, iteration, dim, privacy.dp_noise_variance)
        local = {"p": p[l]} if variant == "v2" else {"d": measurements[l], "u": regressors[l]}
        sent = encrypt(phi[l], invert_gain(G_l), etas[l], variant, local)
        received = channel(sent, rng, ch_var)
        hood_aux = None
        if variant == "v1":
            hood_aux = {k: (measurements[k], regressors[k])}
            for j in topology.neighborhoods[k] - {k}:
                hood_aux[j] = (v1_aux[(j, k)]["d"], v1_aux[(j, k)]["u"])
        G_tilde = reconstruct_key(
            variant,
            received,
            params.with_mu(mu[l]),
            true_gain=G_l,
            neighborhood_aux=hood_aux,
            receiver_omega=omega[k],
            c_col=weights.c[:, k],
        )
        inboxes[k][l] = decrypt(received, etas[l], G_tilde)
    return inboxes


def _unit(x):
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    return np.where(norm > 0, x / np.where(norm > 0, norm, 1.0), x)


# -- batched engine ----------------------------------------------------------


class _RunNoise:
    """Noise streams of one run, consumed chunk by chunk.

    Link streams are keyed by the run's master seed and read one row per
    iteration, links in lexicographic order inside a row; DP noise streams
    are keyed by ``(shared_seed, sender)``.
    """

    def __init__(self, master_seed, shared_seed, n_links, n_agents, dim, spec, privacy):
        self.ch_sd = np.sqrt(privacy.channel_noise_variance)
        self.dp_sd = np.sqrt(privacy.dp_noise_variance)
        variant = spec.variant if spec.private else "none"
        seed = derive_seed(master_seed, "channel")
        self.h = BlockStream(seed, "link-payload", row_shape=(n_links, dim)) if self.ch_sd > 0 else None
        self.aux_u = self.aux_d = self.aux_p = None
        if self.ch_sd > 0 and variant == "v1":
            self.aux_u = BlockStream(seed, "link-aux-u", row_shape=(n_links, dim))
            self.aux_d = BlockStream(seed, "link-aux-d", row_shape=(n_links,))
        if self.ch_sd > 0 and variant == "v2":
            self.aux_p = BlockStream(seed, "link-aux-p", row_shape=(n_links, dim))
        self.eta = None
        if spec.private and self.dp_sd > 0:
            self.eta = [BlockStream(shared_seed, "dp-noise", l, row_shape=(dim,)) for l in range(n_agents)]

    def take(self, n):
        out = {}
        for name in ("h", "aux_u", "aux_d", "aux_p"):
            st = getattr(self, name)
            out[name] = None if st is None else self.ch_sd * st.take(n)
        out["eta"] = None if self.eta is None else self.dp_sd * np.stack([s.take(n) for s in self.eta], axis=1)
        return out


def _stack(chunks, key):
    vals = [c[key] for c in chunks]
    return None if vals[0] is None else np.stack(vals)


class ArraySource:
    """Replays pre-recorded data, regressors (T, N, L) and measurements
    (T, N), through the same chunked interface as a scenario's streams."""

    def __init__(self, regressors, measurements):
        self.u = np.asarray(regressors, dtype=float)
        self.d = np.asarray(measurements, dtype=float)
        self.position = 0

    def take(self, n):
        sl = slice(self.position, self.position + n)
        self.position += n
        return self.u[sl], self.d[sl]


def simulate(
    spec: AlgorithmSpec,
    scenarios: list[Scenario],
    topology: Topology,
    weights: CombinationWeights,
    privacy: PrivacyConfig,
    params: GainParams,
    shared_seeds: list[int] | None = None,
    collect: Collect = Collect(),
    chunk: int = 50,
) -> RunLog:
    """Run ``spec`` on every scenario in lockstep from ``w_{k,0} = 0``."""
    scenarios = list(scenarios)
    s0 = scenarios[0]
    if any((s.n_agents, s.dim, s.horizon) != (s0.n_agents, s0.dim, s0.horizon) for s in scenarios):
        raise ValueError("all scenarios in a batch must share n_agents, dim and horizon")
    return propagate(
        spec,
        [s.streams() for s in scenarios],
        topology,
        weights,
        privacy,
        params,
        horizon=s0.horizon,
        dim=s0.dim,
        noise_seeds=[s.master_seed for s in scenarios],
        shared_seeds=shared_seeds,
        truth=lambda t0, n: np.stack([s.omega_path(t0, t0 + n) for s in scenarios], axis=1),
        collect=collect,
        chunk=chunk,
    )


def propagate(
    spec: AlgorithmSpec,
    sources: list,
    topology: Topology,
    weights: CombinationWeights,
    privacy: PrivacyConfig,
    params: GainParams,
    *,
    horizon: int,
    dim: int,
    noise_seeds: list[int],
    shared_seeds: list[int] | None = None,
    truth=None,
    initial=None,
    collect: Collect = Collect(),
    chunk: int = 50,
) -> RunLog:
    """Engine behind ``simulate``: ``sources`` yield data chunks via
    ``take(n)``, ``truth(t0, n)`` gives the (n, R, L) ground truth (or is
    None, in which case ``sq_dev`` is NaN) and ``initial`` is an optional
    (R, N, L) starting estimate."""
    R = len(sources)
    N, L, T = topology.n_agents, dim, horizon
    if T < 1:
        raise ValueError(f"horizon must be >= 1, got {T}")
    if shared_seeds is None:
        shared_seeds = [privacy.shared_seed] * R

    links = topology.links()
    src, dst = links[:, 0], links[:, 1]
    E = len(links)
    a, c = weights.a, weights.c
    a_self = np.diag(a).copy()
    comb = np.zeros((N, E))  # comb[k, e] = a[src_e, k] if dst_e == k
    comb[dst, np.arange(E)] = a[src, dst]
    c_self = np.diag(c).copy()
    c_comb = np.zeros((N, E))
    c_comb[dst, np.arange(E)] = c[src, dst]
    mu = spec.step_sizes(N)
    mu_col = mu[:, None]
    variant = spec.variant if spec.private else "none"
    gain_kw = dict(
        alpha=params.alpha,
        beta=params.beta,
        floor_p=params.floor_p,
        gain_clip=params.gain_clip,
        mix=params.mix,
        normalization=params.normalization,
    )

    noise = [_RunNoise(noise_seeds[r], shared_seeds[r], E, N, L, spec, privacy) for r in range(R)]

    w = np.zeros((R, N, L)) if initial is None else np.array(initial, dtype=float).reshape(R, N, L)
    sq_dev = np.empty((R, T))
    log = RunLog(spec.name, sq_dev, w)
    if collect.estimates:
        log.estimates = np.empty((R, T, N, L))
    if collect.bounds:
        log.d2 = np.empty((R, T, N))
        log.d2_max = np.empty((R, T, N))
    diag_iters = np.arange(collect.diag_burn_in, T, collect.diag_stride) if collect.diagnostics else np.array([], int)
    if collect.diagnostics:
        log.diag_iterations = diag_iters
        shape = (R, len(diag_iters), E, L)
        log.key_error, log.gi_omega, log.gi_p = np.empty(shape), np.empty(shape), np.empty(shape)
    if collect.adversary:
        log.adversary = {k: np.empty((R, T)) for k in ("honest", "none", "noise-only", "key-only")}
    diag_pos = {int(i): j for j, i in enumerate(diag_iters)}

    i = 0
    try:
        for t0 in range(0, T, chunk):
            n = min(chunk, T - t0)
            batches = [src_.take(n) for src_ in sources]
            U = np.stack([b[0] for b in batches], axis=1)  # (n, R, N, L)
            D = np.stack([b[1] for b in batches], axis=1)  # (n, R, N)
            if U.shape[2:] != (N, L):
                raise ValueError(f"data has shape (N, L) = {U.shape[2:]}, expected {(N, L)}")
            omega_true = None if truth is None else truth(t0, n)  # (n, R, L)
            chunks = [nz.take(n) for nz in noise]
            H, AU, AD, AP, ETA = (_stack(chunks, k) for k in ("h", "aux_u", "aux_d", "aux_p", "eta"))

            for j in range(n):
                i = t0 + j
                if omega_true is None:
                    sq_dev[:, i] = np.nan
                else:
                    sq_dev[:, i] = np.mean(np.sum((w - omega_true[j][:, None, :]) ** 2, axis=-1), axis=-1)
                u, d = U[j], D[j]
                p = network_update_directions(w, u, d, c)
                if spec.family == "dlms":
                    G = np.ones_like(p)
                else:
                    G = operative_gain_diag(p, mu=mu_col, **gain_kw)
                phi = w + mu_col * G * p
                if spec.normalize_phi:
                    phi = _unit(phi)

                phi_src = phi[:, src]
                h = None if H is None else H[:, j]
                if variant == "none":
                    dec = phi_src if h is None else phi_src + h
                else:
                    G_src = G[:, src]
                    eta_src = 0.0 if ETA is None else ETA[:, j][:, src]
                    received = phi_src / G_src + eta_src
                    if h is not None:
                        received = received + h
                    if variant == "oracle":
                        G_tilde = G_src
                    elif variant == "v2":
                        p_hat = p[:, src] if AP is None else p[:, src] + AP[:, j]
                        G_tilde = operative_gain_diag(p_hat, mu=mu[src][:, None], **gain_kw)
                    else:  # v1
                        u_t, d_t = u[:, src], d[:, src]
                        if AU is not None:
                            u_t = u_t + AU[:, j]
                            d_t = d_t + AD[:, j]
                        res = d_t - np.einsum("rej,rej->re", u_t, w[:, dst])
                        own = (d - np.einsum("rkj,rkj->rk", u, w))[..., None] * u
                        p_hat = c_self[:, None] * own + np.einsum("ke,rej->rkj", c_comb, res[..., None] * u_t)
                        G_tilde = operative_gain_diag(p_hat[:, dst], mu=mu[src][:, None], **gain_kw)
                    dec = G_tilde * (received - eta_src)

                w_new = a_self[:, None] * phi + np.einsum("ke,rej->rkj", comb, dec)

                if collect.bounds or (collect.diagnostics and i in diag_pos):
                    V = np.zeros_like(dec) if variant == "none" else G_tilde - G_src
                if collect.bounds:
                    # one-step counterfactual: same intermediates combined without privacy
                    plain = a_self[:, None] * phi + np.einsum("ke,rej->rkj", comb, phi_src)
                    log.d2[:, i] = np.sum((w_new - plain) ** 2, axis=-1)
                    gi_norm = np.max(np.abs(1.0 / G), axis=-1)[:, src]
                    v_norm = np.max(np.abs(V), axis=-1)
                    log.d2_max[:, i] = np.einsum("ke,re->rk", comb, gi_norm * v_norm) ** 2
                if collect.diagnostics and i in diag_pos:
                    q = diag_pos[i]
                    log.key_error[:, q] = V
                    log.gi_omega[:, q] = w[:, src] / G[:, src]
                    log.gi_p[:, q] = p[:, src] / G[:, src]
                if collect.adversary:
                    rec = phi_src + (0.0 if h is None else h) if variant == "none" else received
                    eta_a = 0.0 if variant == "none" else eta_src
                    key_a = 1.0 if variant == "none" else G_tilde
                    err = lambda est: np.mean(np.sum((est - phi_src) ** 2, axis=-1), axis=-1)  # noqa: E731
                    log.adversary["honest"][:, i] = err(dec)
                    log.adversary["none"][:, i] = err(rec)
                    log.adversary["noise-only"][:, i] = err(rec - eta_a)
                    log.adversary["key-only"][:, i] = err(key_a * rec)

                w = w_new
                if collect.estimates:
                    log.estimates[:, i] = w
    except (ValueError, ArithmeticError) as exc:
        raise SimulationError(f"{spec.name}: iteration {i}: {exc}") from exc
    log.final_estimates = w
    return log


def run(
    spec: AlgorithmSpec,
    scenario: Scenario,
    topology: Topology,
    weights: CombinationWeights,
    privacy: PrivacyConfig,
    params: GainParams,
    collect: Collect = Collect(),
    shared_seed: int | None = None,
) -> RunLog:
    """A single deterministic run (batch of one)."""
    shared = None if shared_seed is None else [shared_seed]
    return simulate(spec, [scenario], topology, weights, privacy, params, shared, collect=collect)
