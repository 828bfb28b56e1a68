"""scikit-learn style wrappers around the diffusion engine.

Training data is a network stream: ``X`` of shape (T, N, L) holds every
node's regressor at every iteration and ``y`` of shape (T, N) the matching
measurements.  After ``fit`` the per-node estimates live in ``coef_``
(N, L); ``predict`` accepts either plain rows (n, L), scored with the
network-average estimate, or network batches (n, N, L), scored per node.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .diffusion import AlgorithmSpec, ArraySource, Collect, propagate
from .gain import GainParams
from .privacy import PrivacyConfig
from .topology import Topology, TopologySpec, build_topology, uniform_weights


def check_network_data(X, y=None):
    """Validate a (T, N, L) regressor stream and optional (T, N) targets."""
    X = check_array(X, allow_nd=True, ensure_2d=False, dtype=np.float64)
    if X.ndim != 3:
        raise ValueError(f"X must have shape (T, N, L), got {X.shape}")
    if y is None:
        return X
    y = check_array(y, ensure_2d=False, dtype=np.float64)
    if y.shape != X.shape[:2]:
        raise ValueError(f"y must have shape {X.shape[:2]}, got {y.shape}")
    return X, y


class _DiffusionEstimator(RegressorMixin, BaseEstimator):
    _family = "dlms"

    def _topology(self, n_agents: int) -> Topology:
        if isinstance(self.topology, Topology):
            if self.topology.n_agents != n_agents:
                raise ValueError(f"topology has {self.topology.n_agents} agents, data has {n_agents}")
            return self.topology
        return build_topology(TopologySpec(kind=self.topology, n_agents=n_agents, seed=self.topology_seed))

    def _gain_params(self) -> GainParams:
        return GainParams()

    def _privacy(self) -> PrivacyConfig:
        return PrivacyConfig(dp_noise_variance=0.0, channel_noise_variance=self.channel_noise_variance, variant="none")

    def _spec(self) -> AlgorithmSpec:
        return AlgorithmSpec(type(self).__name__, self._family, None, self.step_size)

    def _advance(self, X, y, initial):
        T, N, L = X.shape
        topo = self._topology(N)
        privacy = self._privacy()
        log = propagate(
            self._spec(),
            [ArraySource(X, y)],
            topo,
            uniform_weights(topo),
            privacy,
            self._gain_params(),
            horizon=T,
            dim=L,
            # offset by the iterations already seen so partial_fit draws fresh noise
            noise_seeds=[self.random_state + self.n_iter_],
            shared_seeds=[privacy.shared_seed + self.n_iter_],
            initial=initial,
            collect=Collect(),
        )
        self.topology_ = topo
        return log.final_estimates[0]

    def fit(self, X, y):
        X, y = check_network_data(X, y)
        self.n_iter_ = 0
        self.coef_ = self._advance(X, y, None)
        self.n_iter_ = X.shape[0]
        self.n_agents_, self.n_features_in_ = X.shape[1:]
        return self

    def partial_fit(self, X, y):
        """Continue from the current estimates on a further stretch of data."""
        X, y = check_network_data(X, y)
        if not hasattr(self, "coef_"):
            return self.fit(X, y)
        if X.shape[1:] != self.coef_.shape:
            raise ValueError(f"expected data for (N, L) = {self.coef_.shape}, got {X.shape[1:]}")
        self.coef_ = self._advance(X, y, self.coef_[None])
        self.n_iter_ += X.shape[0]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, allow_nd=True, dtype=np.float64)
        if X.ndim == 2:
            if X.shape[1] != self.n_features_in_:
                raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
            return X @ self.coef_.mean(axis=0)
        if X.ndim == 3 and X.shape[1:] == self.coef_.shape:
            return np.einsum("tkj,kj->tk", X, self.coef_)
        raise ValueError(f"X must be (n, L) or (n, N, L) with (N, L) = {self.coef_.shape}, got {X.shape}")


class DiffusionLMS(_DiffusionEstimator):
    """Adapt-then-combine diffusion LMS with uniform weights."""

    _family = "dlms"

    def __init__(
        self,
        step_size=0.01,
        topology="random-geometric",
        topology_seed=7,
        channel_noise_variance=0.0,
        random_state=0,
    ):
        self.step_size = step_size
        self.topology = topology
        self.topology_seed = topology_seed
        self.channel_noise_variance = channel_noise_variance
        self.random_state = random_state


class ProportionateDiffusionLMS(_DiffusionEstimator):
    """Diffusion LMS with the correntropy proportionate gain."""

    _family = "pgcdlms"

    def __init__(
        self,
        step_size=0.05,
        alpha=1.5,
        beta=10.0,
        kernel_const=None,
        mix=0.005,
        topology="random-geometric",
        topology_seed=7,
        channel_noise_variance=0.0,
        random_state=0,
    ):
        self.step_size = step_size
        self.alpha = alpha
        self.beta = beta
        self.kernel_const = kernel_const
        self.mix = mix
        self.topology = topology
        self.topology_seed = topology_seed
        self.channel_noise_variance = channel_noise_variance
        self.random_state = random_state

    def _gain_params(self):
        return GainParams(alpha=self.alpha, beta=self.beta, kernel_const=self.kernel_const, mix=self.mix)


class DoublePrivateDiffusionLMS(ProportionateDiffusionLMS):
    """Proportionate diffusion LMS whose exchanges are encrypted with the gain
    matrix as key and masked by shared DP noise."""

    _family = "dp-pgcdlms"

    def __init__(
        self,
        step_size=0.1,
        variant="v2",
        dp_noise_variance=0.05,
        shared_seed=12345,
        alpha=1.5,
        beta=10.0,
        kernel_const=None,
        mix=0.005,
        topology="random-geometric",
        topology_seed=7,
        channel_noise_variance=0.0,
        random_state=0,
    ):
        super().__init__(
            step_size=step_size,
            alpha=alpha,
            beta=beta,
            kernel_const=kernel_const,
            mix=mix,
            topology=topology,
            topology_seed=topology_seed,
            channel_noise_variance=channel_noise_variance,
            random_state=random_state,
        )
        self.variant = variant
        self.dp_noise_variance = dp_noise_variance
        self.shared_seed = shared_seed

    def _privacy(self):
        return PrivacyConfig(self.dp_noise_variance, self.channel_noise_variance, self.shared_seed, self.variant)

    def _spec(self):
        return AlgorithmSpec(type(self).__name__, self._family, self.variant, self.step_size)
