"""Scikit-learn style front ends for the samplers and the mean-field network."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .dynamics import pmkv_run, replay_from_witness, vpsa_run
from .exceptions import ConfigError
from .functionals import MfnnSpec, PairwiseSpec
from .oracles import GaussianSummary
from .types import RunConfig
from .validation import check_count, check_init_mean, check_positive, check_seed


class _SamplerBase(BaseEstimator):
    def _run_config(self, dim, sigma):
        return RunConfig(
            eta=check_positive(self.eta, "eta"),
            T=check_count(self.T, "T"),
            n=check_count(self.n_particles, "n_particles"),
            sigma=sigma,
            dim=dim,
            batch_size=check_count(getattr(self, "batch_size", 1), "batch_size", minimum=1),
            master_seed=check_seed(self.random_state),
            init_mean=check_init_mean(self.init_mean, dim),
            init_scale=check_positive(self.init_scale, "init_scale", strict=False),
        )

    def _resolve_functional(self):
        f = self.functional
        if not isinstance(f, (PairwiseSpec, MfnnSpec)):
            raise ConfigError("functional must be a PairwiseSpec or MfnnSpec")
        return f

    def summary(self) -> GaussianSummary:
        """Gaussian fit (mean, covariance) of the fitted samples."""
        check_is_fitted(self, "samples_")
        return GaussianSummary.fit(self.samples_)


class VirtualParticleSampler(_SamplerBase):
    """Draw approximate samples from the mean-field optimum with virtual particles.

    Parameters
    ----------
    functional : PairwiseSpec or MfnnSpec
    eta, T : step size and number of steps
    n_particles : number of real particles returned by ``fit``
    batch_size : witnesses averaged per step
    random_state : 64-bit master seed
    init_mean, init_scale : initial law ``N(init_mean, init_scale^2 I)``

    Attributes
    ----------
    samples_ : (n_particles, d) array
    witness_ : WitnessPath
    trace_ : DiagnosticsTrace
    config_ : RunConfig
    """

    def __init__(self, functional=None, eta=0.01, T=1000, n_particles=1000, batch_size=1, random_state=0,
                 init_mean=None, init_scale=1.0, trace_every=None):
        self.functional = functional
        self.eta = eta
        self.T = T
        self.n_particles = n_particles
        self.batch_size = batch_size
        self.random_state = random_state
        self.init_mean = init_mean
        self.init_scale = init_scale
        self.trace_every = trace_every

    def fit(self, X=None, y=None):
        """Run the sampler. ``X`` and ``y`` are ignored."""
        f = self._resolve_functional()
        self.config_ = self._run_config(f.dim, f.sigma)
        result = vpsa_run(self.config_, f, trace_every=self.trace_every)
        self.samples_ = result.cloud.positions
        self.witness_ = result.witness
        self.trace_ = result.trace
        self.n_features_in_ = f.dim
        return self

    def sample(self, n_samples, seed_offset=None) -> np.ndarray:
        """Further samples from the law fixed by the stored witness path.

        By default the substreams after those of the fitted particles are
        used, so new samples are fresh; ``seed_offset=0`` reproduces them.
        """
        check_is_fitted(self, "witness_")
        n_samples = check_count(n_samples, "n_samples")
        offset = self.config_.n if seed_offset is None else check_count(seed_offset, "seed_offset")
        return replay_from_witness(self.witness_, n_samples, self.config_, self.functional, offset).positions


class ParticleSystemSampler(_SamplerBase):
    """Interacting particle baseline with the same interface as :class:`VirtualParticleSampler`."""

    def __init__(self, functional=None, eta=0.01, T=1000, n_particles=1000, random_state=0,
                 init_mean=None, init_scale=1.0, trace_every=None):
        self.functional = functional
        self.eta = eta
        self.T = T
        self.n_particles = n_particles
        self.random_state = random_state
        self.init_mean = init_mean
        self.init_scale = init_scale
        self.trace_every = trace_every

    def fit(self, X=None, y=None):
        f = self._resolve_functional()
        self.config_ = self._run_config(f.dim, f.sigma)
        result = pmkv_run(self.config_, f, trace_every=self.trace_every)
        self.samples_ = result.cloud.positions
        self.trace_ = result.trace
        self.n_features_in_ = f.dim
        return self


class MeanFieldNetworkRegressor(RegressorMixin, _SamplerBase):
    """Two-layer network in the mean-field regime trained by virtual particles.

    The fitted model is the empirical measure of ``n_particles`` neurons;
    its prediction is ``amplitude * mean_j tanh(<x_j, z>)``.
    """

    def __init__(self, amplitude=1.0, lam=0.1, sigma=0.5, eta=0.01, T=2000, n_particles=500, batch_size=1,
                 random_state=0, init_mean=None, init_scale=1.0, radius=None, trace_every=None):
        self.amplitude = amplitude
        self.lam = lam
        self.sigma = sigma
        self.eta = eta
        self.T = T
        self.n_particles = n_particles
        self.batch_size = batch_size
        self.random_state = random_state
        self.init_mean = init_mean
        self.init_scale = init_scale
        self.radius = radius
        self.trace_every = trace_every

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        self.functional_ = MfnnSpec(
            X, y,
            amplitude=check_positive(self.amplitude, "amplitude"),
            lam=check_positive(self.lam, "lam", strict=False),
            sigma=check_positive(self.sigma, "sigma"),
            radius=self.radius,
        )
        self.config_ = self._run_config(X.shape[1], self.functional_.sigma)
        result = vpsa_run(self.config_, self.functional_, trace_every=self.trace_every)
        self.neurons_ = result.cloud.positions
        self.witness_ = result.witness
        self.trace_ = result.trace
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "neurons_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return self.functional_.predict(self.neurons_, X)

    def sample_neurons(self, n_samples, seed_offset=None) -> np.ndarray:
        """Fresh neurons drawn from the trained law via the witness path."""
        check_is_fitted(self, "witness_")
        offset = self.config_.n if seed_offset is None else check_count(seed_offset, "seed_offset")
        return replay_from_witness(
            self.witness_, check_count(n_samples, "n_samples"), self.config_, self.functional_, offset
        ).positions
