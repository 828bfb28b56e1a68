"""Error bound of the privacy layer, mean-stability analysis and the
assumption diagnostics used to sanity-check them."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from ._random import derive_seed
from .diffusion import AlgorithmSpec, Collect, RunLog, simulate
from .gain import GainParams
from .privacy import PrivacyConfig
from .signal import ScenarioConfig, generate_scenario
from .topology import CombinationWeights, Topology

logger = logging.getLogger(__name__)

POWER_TOL = 1e-10
POWER_MAX_ITER = 10_000
MIN_DIAGNOSTIC_SAMPLES = 100


# -- error bound -------------------------------------------------------------


@dataclass(frozen=True)
class BoundReport:
    """``d2``, ``d2_max`` and ``satisfied`` with shape (runs, iterations, nodes)."""

    d2: np.ndarray
    d2_max: np.ndarray
    satisfied: np.ndarray

    @property
    def fraction_satisfied(self) -> float:
        return float(np.mean(self.satisfied))


def bound_satisfied(d2, d2_max, rtol: float = 1e-9, atol: float = 1e-15):
    """``d2 <= d2_max`` up to floating-point slack (equality is attainable)."""
    return np.asarray(d2) <= np.asarray(d2_max) * (1.0 + rtol) + atol


def d2_and_bound(a_col, phi, gain, key_error, node: int | None = None):
    """Privacy-induced deviation of one node's combined estimate and its bound.

    ``phi``, ``gain`` and ``key_error`` are (N, L): every sender's
    intermediate estimate, true gain diagonal and ``V = G_tilde - G``.
    With ``node`` given its own row is skipped (the self term is never
    encrypted).  Returns ``(d2, d2_max)`` with

        d2     = || sum_l a_l V_l G_l^-1 phi_l ||^2
        d2_max = ( sum_l a_l ||G_l^-1|| ||V_l|| )^2

    and ``||.||`` the spectral norm, i.e. max absolute diagonal entry.
    """
    a_col = np.array(a_col, dtype=float)
    phi, gain, V = (np.atleast_2d(np.asarray(x, dtype=float)) for x in (phi, gain, key_error))
    if not (phi.shape == gain.shape == V.shape and phi.shape[0] == a_col.shape[0]):
        raise ValueError(f"shape mismatch: a {a_col.shape}, phi {phi.shape}, G {gain.shape}, V {V.shape}")
    if node is not None:
        a_col[node] = 0.0
    delta = np.sum(a_col[:, None] * V * phi / gain, axis=0)
    d2 = float(delta @ delta)
    d2_max = float(np.sum(a_col * np.max(np.abs(1.0 / gain), axis=1) * np.max(np.abs(V), axis=1)) ** 2)
    return d2, d2_max


def bound_report(log: RunLog) -> BoundReport:
    if log.d2 is None:
        raise ValueError("run log has no bound records; simulate with Collect(bounds=True)")
    return BoundReport(log.d2, log.d2_max, bound_satisfied(log.d2, log.d2_max))


# -- mean stability ----------------------------------------------------------


def spectral_radius(M, tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER) -> float:
    """Power iteration from the all-ones vector; falls back to a dense
    eigen-solve when the iteration does not settle (complex or tied
    dominant eigenvalues)."""
    M = np.asarray(M, dtype=float)
    x = np.ones(M.shape[0]) / np.sqrt(M.shape[0])
    est = 0.0
    for _ in range(max_iter):
        y = M @ x
        norm = np.linalg.norm(y)
        if norm == 0.0:
            break
        # two steps per check so period-2 sign flips (eigenvalues +r, -r) settle
        z = M @ (y / norm)
        new = np.sqrt(norm * np.linalg.norm(z))
        x = z / np.linalg.norm(z) if np.linalg.norm(z) > 0 else z
        if abs(new - est) <= tol * max(new, 1e-300):
            # confirm with the Rayleigh-type residual before trusting it
            if np.linalg.norm(M @ (M @ x) - new**2 * x) <= 1e-6 * max(new**2, 1e-300):
                return float(new)
        est = new
    logger.debug("power iteration did not converge; using eigvals")
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def lambda_max(S, tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER) -> float:
    """Largest eigenvalue of a symmetric positive semi-definite matrix."""
    S = np.asarray(S, dtype=float)
    if not np.allclose(S, S.T, rtol=0, atol=1e-12 * max(1.0, np.max(np.abs(S)))):
        raise ValueError("covariance matrices must be symmetric")
    return spectral_radius(S, tol, max_iter)


@dataclass(frozen=True)
class StabilityReport:
    B: np.ndarray  # (N, L, L), weighted sum_{l'} a[l', l] R_l'
    B_unweighted: np.ndarray  # (N, L, L), sum_{l'} R_l'
    spectral_radius_F: float | None
    spectral_radius_block: float | None  # rho(I - M B)
    mu_bound: np.ndarray  # (N,), 2 / max_l lambda_max(B_l)
    white_case_bound: float  # 2 / max_l lambda_max(R_ll)


def _covariances(regressor_covariances, n: int) -> np.ndarray:
    R = np.asarray(regressor_covariances, dtype=float)
    if R.ndim == 0:
        raise ValueError("regressor covariance must be (L, L) or (N, L, L)")
    if R.ndim == 2:
        R = np.broadcast_to(R, (n,) + R.shape)
    if R.ndim != 3 or R.shape[0] != n or R.shape[1] != R.shape[2]:
        raise ValueError(f"regressor covariance must be (L, L) or ({n}, L, L), got {R.shape}")
    if not np.allclose(R, np.swapaxes(R, 1, 2), rtol=0, atol=1e-12 * max(1.0, np.max(np.abs(R)))):
        raise ValueError("covariance matrices must be symmetric")
    return R


def mean_recursion_matrices(weights: CombinationWeights, B, step_sizes):
    """``F = A^T (I - M B)`` and ``I - M B`` with ``A = a (x) I_L``."""
    n, L = B.shape[0], B.shape[1]
    mu = np.broadcast_to(np.asarray(step_sizes, dtype=float), (n,))
    block = np.zeros((n * L, n * L))
    for l in range(n):
        block[l * L : (l + 1) * L, l * L : (l + 1) * L] = np.eye(L) - mu[l] * B[l]
    F = np.kron(weights.a.T, np.eye(L)) @ block
    return F, block


def stepsize_bound(
    topology: Topology,
    weights: CombinationWeights,
    regressor_covariances,
    step_sizes=None,
) -> StabilityReport:
    """Step-size condition of the mean error recursion.

    ``regressor_covariances`` is ``R_l = E{u_l u_l^T}``, either one (L, L)
    matrix shared by all nodes or (N, L, L).  ``step_sizes`` (scalar or
    per node) enables the spectral radii of ``F`` and ``I - M B``.
    """
    n = topology.n_agents
    R = _covariances(regressor_covariances, n)
    a = weights.a
    B = np.einsum("pl,pij->lij", a, R)
    B_unw = np.einsum("pl,pij->lij", topology.adjacency.astype(float), R)
    lam_B = max(lambda_max(B[l]) for l in range(n))
    lam_R = max(lambda_max(R[l]) for l in range(n))
    rho_F = rho_block = None
    if step_sizes is not None:
        F, block = mean_recursion_matrices(weights, B, step_sizes)
        rho_F = spectral_radius(F)
        rho_block = spectral_radius(block)
    return StabilityReport(
        B=B,
        B_unweighted=B_unw,
        spectral_radius_F=rho_F,
        spectral_radius_block=rho_block,
        mu_bound=np.full(n, 2.0 / lam_B),
        white_case_bound=2.0 / lam_R,
    )


@dataclass(frozen=True)
class StabilityProbe:
    mu_grid: tuple
    diverged_fraction: np.ndarray  # (len(mu_grid),)
    diverged: np.ndarray  # (len(mu_grid),) bool, majority vote
    initial_db: np.ndarray  # (len(mu_grid), seeds)
    final_db: np.ndarray  # (len(mu_grid), seeds), MSD at the last iteration
    smoothed_final_db: np.ndarray  # (len(mu_grid), seeds), mean of the last `smooth` iterations
    bracket: tuple  # (largest converged mu, smallest diverged mu); None where absent

    @property
    def monotone(self) -> bool:
        d = self.diverged[np.argsort(self.mu_grid)]
        return bool(np.all(d[1:] >= d[:-1]))


def mean_stability_probe(
    spec: AlgorithmSpec,
    topology: Topology,
    weights: CombinationWeights,
    mu_grid=(0.05, 0.5, 1.0, 3.0),
    seeds: int = 20,
    horizon: int = 200,
    dim: int = 20,
    regressor_variance: float = 1.0,
    measurement_noise_variance: float = 0.05,
    privacy: PrivacyConfig | None = None,
    params: GainParams | None = None,
    master_seed: int = 0,
    smooth: int = 20,
) -> StabilityProbe:
    """Empirical divergence map over ``mu_grid`` on white regressors.

    A run is classified diverged when its network MSD at ``i = horizon``
    exceeds the MSD at ``i = 0``.
    """
    privacy = privacy or PrivacyConfig(dp_noise_variance=0.0, channel_noise_variance=0.0, variant="none")
    params = params or GainParams()
    scenarios = [
        generate_scenario(
            ScenarioConfig(
                dim=dim,
                n_agents=topology.n_agents,
                regressor_variance=regressor_variance,
                measurement_noise_variance=measurement_noise_variance,
                horizon=horizon + 1,
                master_seed=derive_seed(master_seed, "run", r),
            )
        )
        for r in range(seeds)
    ]
    init, fin, smoothed = [], [], []
    with np.errstate(over="ignore", invalid="ignore"):
        for mu in mu_grid:
            log = simulate(replace(spec, step_size=mu), scenarios, topology, weights, privacy, params)
            sq = np.nan_to_num(log.sq_dev, nan=np.inf)
            init.append(10 * np.log10(sq[:, 0]))
            fin.append(10 * np.log10(sq[:, horizon]))
            smoothed.append(10 * np.log10(np.mean(sq[:, horizon + 1 - smooth :], axis=1)))
    init, fin, smoothed = np.array(init), np.array(fin), np.array(smoothed)
    frac = np.mean(fin > init, axis=1)
    div = frac > 0.5
    grid = np.asarray(mu_grid, dtype=float)
    conv_mus, div_mus = grid[~div], grid[div]
    bracket = (float(conv_mus.max()) if conv_mus.size else None, float(div_mus.min()) if div_mus.size else None)
    return StabilityProbe(tuple(mu_grid), frac, div, init, fin, smoothed, bracket)


# -- assumption diagnostics --------------------------------------------------


@dataclass(frozen=True)
class DiagnosticsReport:
    r_ab: float
    r_cd: float
    mean_v: float
    n_samples: int


def pearson(x, y) -> float:
    """Pearson correlation; 0 by convention when either sample is constant."""
    x = np.ravel(np.asarray(x, dtype=float))
    y = np.ravel(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise ValueError(f"samples differ in size: {x.size} vs {y.size}")
    xc, yc = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(xc @ xc), np.sqrt(yc @ yc)
    if sx == 0.0 or sy == 0.0:
        return 0.0
    return float(np.clip((xc @ yc) / (sx * sy), -1.0, 1.0))


def correlation_report(key_error, gi_omega, gi_p) -> DiagnosticsReport:
    """Pool entrywise samples of ``V``, ``G^-1 w`` and ``G^-1 p``."""
    V = np.ravel(key_error)
    if V.size < MIN_DIAGNOSTIC_SAMPLES:
        raise ValueError(f"need at least {MIN_DIAGNOSTIC_SAMPLES} pooled samples, got {V.size}")
    return DiagnosticsReport(pearson(V, gi_omega), pearson(V, gi_p), float(V.mean()), int(V.size))


def assumption_diagnostics(log: RunLog) -> list[DiagnosticsReport]:
    """One report per run of a log recorded with ``Collect(diagnostics=True)``."""
    if log.key_error is None:
        raise ValueError("run log has no diagnostic records; simulate with Collect(diagnostics=True)")
    return [correlation_report(log.key_error[r], log.gi_omega[r], log.gi_p[r]) for r in range(log.key_error.shape[0])]


def diagnostics_collect(stride: int = 10, burn_in: int = 0) -> Collect:
    return Collect(diagnostics=True, diag_stride=stride, diag_burn_in=burn_in)
