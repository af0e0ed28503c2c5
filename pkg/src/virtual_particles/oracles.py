"""Closed-form oracles for the quadratic pairwise case and step-size planners.

With ``V(x) = lambda_V/2 |x|^2`` and ``W(v) = alpha/2 |v|^2`` every update
of the virtual particle scheme is affine in Gaussian variables, so the law
of a real particle at every step is Gaussian and can be propagated exactly.
The stationary law of the mean-field dynamics is ``N(0, s^2 I)`` with
``s^2 = sigma^2 / (2 (lambda_V + alpha))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, DivergenceError, InfeasibleScheduleError, SingularCovarianceError
from .functionals import PairwiseSpec, mfnn_lipschitz_constant
from .types import DIVERGENCE_BOUND, RunConfig

EIG_CLIP = -1e-10


def psd_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


@dataclass
class GaussianSummary:
    """Mean and covariance of a Gaussian law (or a Gaussian fit of a cloud)."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = np.asarray(self.covariance, dtype=np.float64)
        if cov.ndim == 0:
            cov = cov * np.eye(mean.shape[0])
        cov = np.atleast_2d(cov)
        if cov.shape != (mean.shape[0], mean.shape[0]):
            raise ConfigError(f"covariance shape {cov.shape} does not match mean of length {mean.shape[0]}")
        if not (np.isfinite(mean).all() and np.isfinite(cov).all()):
            raise ConfigError("mean and covariance must be finite")
        cov = 0.5 * (cov + cov.T)
        vals, vecs = np.linalg.eigh(cov)
        if vals.min() < EIG_CLIP:
            raise ConfigError(f"covariance is not positive semidefinite (eigenvalue {vals.min():.3g})")
        if vals.min() < 0:
            cov = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
        self.mean, self.covariance = mean, cov

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def isotropic(cls, mean, variance: float, dim: int | None = None) -> "GaussianSummary":
        mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        if dim is not None and mean.shape[0] == 1 and dim > 1:
            mean = np.full(dim, mean[0])
        return cls(mean, variance * np.eye(mean.shape[0]))

    @classmethod
    def fit(cls, positions) -> "GaussianSummary":
        """Gaussian fit of a particle cloud (an approximation of its law)."""
        pos = getattr(positions, "positions", positions)
        pos = np.asarray(pos, dtype=np.float64)
        return cls(pos.mean(axis=0), np.atleast_2d(np.cov(pos, rowvar=False, ddof=1)))


def _require_quadratic(spec):
    if not isinstance(spec, PairwiseSpec) or not spec.is_quadratic:
        raise ConfigError("this oracle needs a pairwise spec with quadratic potential and interaction")
    if spec.lambda_V + spec.alpha <= 0:
        raise ConfigError("need lambda_V + alpha > 0 for a stationary law")


def quadratic_stationary(spec: PairwiseSpec) -> GaussianSummary:
    """Stationary law ``N(0, sigma^2 / (2 (lambda_V + alpha)) I)``."""
    _require_quadratic(spec)
    s2 = spec.sigma**2 / (2.0 * (spec.lambda_V + spec.alpha))
    return GaussianSummary(np.zeros(spec.dim), s2 * np.eye(spec.dim))


def quadratic_lsi_constant(spec: PairwiseSpec, return_checks: bool = False):
    """Log-Sobolev constant of the quadratic stationary law.

    Under the convention ``KL <= C/2 * Fisher divergence`` the Gaussian
    ``N(0, s^2 I)`` has ``C = s^2``. The two generic bounds
    ``Var(pi) <= d C`` and ``C >= 1/L`` (``L`` the smoothness of
    ``-log pi``) hold with equality here; ``return_checks`` also returns them.
    """
    pi = quadratic_stationary(spec)
    c_lsi = float(pi.covariance[0, 0])
    if not return_checks:
        return c_lsi
    var_pi = float(np.trace(pi.covariance))
    L = 2.0 * (spec.lambda_V + spec.alpha) / spec.sigma**2 if spec.sigma > 0 else math.inf
    checks = {
        "variance": var_pi,
        "d_times_C": spec.dim * c_lsi,
        "variance_bound_holds": var_pi <= spec.dim * c_lsi * (1 + 1e-12),
        "inverse_smoothness": 1.0 / L,
        "lower_bound_holds": c_lsi >= (1.0 / L) * (1 - 1e-12),
    }
    return c_lsi, checks


def _affine_coefficients(config: RunConfig, spec: PairwiseSpec):
    if config.batch_size != 1:
        raise ConfigError("the affine recursion oracle covers batch_size = 1 only")
    if config.dim != spec.dim:
        raise ConfigError("config and spec dimensions differ")
    a = 1.0 - config.eta * (spec.lambda_V + spec.alpha)
    b = config.eta * spec.alpha
    q = config.sigma**2 * config.eta
    return a, b, q


def affine_recursion_oracle(config: RunConfig, spec: PairwiseSpec, method: str = "exchangeable"):
    """Exact Gaussian law of one real particle at every step ``0..T``.

    Each update is ``P <- a P + b Y_k^(k) + sqrt(q) Z`` with
    ``a = 1 - eta (lambda_V + alpha)``, ``b = eta alpha``, ``q = sigma^2 eta``.

    ``method="exchangeable"`` (default) uses that the real particle and all
    not-yet-frozen virtual particles are exchangeable, so the joint law is
    described by a common mean, a common variance ``v`` and a common
    pairwise covariance ``c``; the witness is one of those particles.
    ``method="dense"`` propagates the full joint covariance of
    ``(X, Y^(0), ..., Y^(T))`` per coordinate (``O(T^3)`` per step; for
    small ``T`` only).
    """
    if not isinstance(spec, PairwiseSpec) or not spec.is_quadratic:
        raise ConfigError("the affine recursion oracle needs a quadratic pairwise spec")
    a, b, q = _affine_coefficients(config, spec)
    mean0 = np.asarray(config.init_mean, dtype=np.float64)
    v0 = config.init_scale**2
    d, T = config.dim, config.T
    eye = np.eye(d)
    if method == "exchangeable":
        out = []
        m, v, c = mean0.copy(), v0, 0.0
        out.append(GaussianSummary(m, v * eye))
        for k in range(T):
            m = (a + b) * m
            v, c = (a * a + b * b) * v + 2 * a * b * c + q, (a * a + 2 * a * b) * c + b * b * v
            if not (math.isfinite(v) and v <= DIVERGENCE_BOUND**2):
                raise DivergenceError(f"exact law diverges at step {k + 1}; eta is too large", step=k + 1)
            out.append(GaussianSummary(m, v * eye))
        return out
    if method == "dense":
        # index 0: real particle, index 1 + j: virtual particle j
        size = T + 2
        mu = np.ones(size)
        cov = v0 * np.eye(size)
        out = [GaussianSummary(mean0.copy(), v0 * eye)]
        scale = 1.0
        for k in range(T):
            A = np.eye(size)
            active = [0] + [1 + j for j in range(k + 1, T + 1)]
            w = 1 + k
            for i in active:
                A[i, i] = a
                A[i, w] = b
            noise = np.zeros(size)
            noise[active] = q
            mu = A @ mu
            cov = A @ cov @ A.T + np.diag(noise)
            scale = mu[0]
            out.append(GaussianSummary(scale * mean0, cov[0, 0] * eye))
        return out
    raise ValueError(f"unknown method {method!r}")


def kl_gaussian(a: GaussianSummary, b: GaussianSummary) -> float:
    """``KL(a || b)`` between Gaussians; ``inf`` if ``a`` is degenerate."""
    if a.dim != b.dim:
        raise ConfigError("dimension mismatch")
    sign_b, logdet_b = np.linalg.slogdet(b.covariance)
    if sign_b <= 0 or not np.isfinite(logdet_b):
        raise SingularCovarianceError("target covariance is singular")
    sign_a, logdet_a = np.linalg.slogdet(a.covariance)
    if sign_a <= 0:
        return math.inf
    chol = np.linalg.cholesky(b.covariance)
    inv_b = np.linalg.inv(b.covariance)
    diff = b.mean - a.mean
    sol = np.linalg.solve(chol, diff)
    val = 0.5 * (np.trace(inv_b @ a.covariance) + sol @ sol - a.dim + logdet_b - logdet_a)
    return float(max(val, 0.0))


def w2_gaussian(a: GaussianSummary, b: GaussianSummary) -> float:
    """2-Wasserstein distance between Gaussians (Bures form)."""
    if a.dim != b.dim:
        raise ConfigError("dimension mismatch")
    root_b = psd_sqrt(b.covariance)
    cross = psd_sqrt(root_b @ a.covariance @ root_b)
    sq = float(np.sum((a.mean - b.mean) ** 2) + np.trace(a.covariance) + np.trace(b.covariance) - 2 * np.trace(cross))
    return math.sqrt(max(sq, 0.0))


# ---------------------------------------------------------------------------
# schedule planners


@dataclass
class SchedulePlan:
    """Step size and horizon that drive the exponential term below ``epsilon / 3``.

    ``rate_constant`` multiplies the horizon lower bound and ``c0`` scales
    the step-size cap; the absolute values of both are convention-dependent.
    """

    eta: float
    T: int
    epsilon: float
    inputs: dict = field(default_factory=dict)
    log_factor: float = 0.0
    T_rate: int = 0
    step_cap: float = math.inf
    cap_margin: float = math.inf

    def to_dict(self) -> dict:
        return {
            "eta": self.eta,
            "T": self.T,
            "epsilon": self.epsilon,
            "inputs": self.inputs,
            "log_factor": self.log_factor,
            "T_rate": self.T_rate,
            "step_cap": self.step_cap,
            "cap_margin": self.cap_margin,
        }


def _finish_plan(C_LSI, sigma, log_factor, T_rate, cap, epsilon, inputs, max_steps):
    # eta = 8 C log_factor / (sigma^2 T) must stay strictly below the cap
    T_cap = math.floor(8.0 * C_LSI * log_factor / (sigma**2 * cap)) + 1
    T = max(int(math.ceil(T_rate)), T_cap, 1)
    if T > max_steps:
        raise InfeasibleScheduleError(
            f"accuracy {epsilon} needs T = {T} steps, above max_steps = {max_steps}"
        )
    eta = 8.0 * C_LSI * log_factor / (sigma**2 * T)
    return SchedulePlan(eta, T, epsilon, inputs, log_factor, int(math.ceil(T_rate)), cap, cap - eta)


def plan_schedule_pairwise(
    C_LSI, L_V, L_W, sigma, d, epsilon, KL0, *, c0=0.1, rate_constant=1.0, max_steps=10**9
) -> SchedulePlan:
    """Plan ``(eta, T)`` for the pairwise interaction energy.

    ``T`` is the largest of the three horizon terms times
    ``log(3 KL0 / epsilon)``; ``eta = 8 C_LSI log(3 KL0 / epsilon) / (sigma^2 T)``.
    ``T`` is then raised as needed so that
    ``eta < c0 min(C_LSI / sigma^2, sigma^4 / (C_LSI^2 (L_V + L_W)^3))``.
    """
    if min(C_LSI, sigma, d, KL0, L_V + L_W) <= 0 or min(L_V, L_W) < 0:
        raise ConfigError("constants must be positive")
    if not 0 < epsilon < 3 * min(KL0, 1.0):
        raise ConfigError(f"epsilon must lie in (0, 3 min(KL0, 1)) = (0, {3 * min(KL0, 1.0)})")
    L = L_V + L_W
    log_factor = math.log(3.0 * KL0 / epsilon)
    T_rate = rate_constant * max(
        C_LSI**2 * d**3 * L**2 / epsilon**2,
        C_LSI**2 * d**2 * L**2 / (sigma**2 * epsilon),
        C_LSI**3 * L**3 / sigma**6,
    ) * log_factor
    cap = c0 * min(C_LSI / sigma**2, sigma**4 / (C_LSI**2 * L**3))
    inputs = dict(C_LSI=C_LSI, L_V=L_V, L_W=L_W, sigma=sigma, d=d, KL0=KL0, c0=c0, rate_constant=rate_constant)
    return _finish_plan(C_LSI, sigma, log_factor, T_rate, cap, epsilon, inputs, max_steps)


def plan_schedule_mfnn(
    C_LSI, L_u, sigma, d, epsilon, E0, M, R, B_const, *, c0=0.1, rate_constant=1.0, max_steps=10**9
) -> SchedulePlan:
    """Plan ``(eta, T)`` for the mean-field network; ``E0`` is the initial energy gap."""
    if min(C_LSI, L_u, sigma, d, E0) <= 0 or min(M, R, B_const) < 0:
        raise ConfigError("constants must be positive")
    if not 0 < epsilon < 3 * E0:
        raise ConfigError(f"epsilon must lie in (0, 3 E0) = (0, {3 * E0})")
    log_factor = math.log(3.0 * E0 / epsilon)
    spread = M**2 * R**2 * (B_const + R) ** 2
    T_rate = rate_constant * max(
        C_LSI**3 * d**2 * L_u**2 * spread / (sigma**4 * epsilon**2),
        C_LSI**2 * (sigma**2 * L_u**2 * d + L_u * spread) / (sigma**4 * epsilon),
        L_u**3 * C_LSI**3 / sigma**6,
    ) * log_factor
    cap = c0 * min(C_LSI / sigma**2, sigma**4 / (C_LSI**2 * L_u**3))
    inputs = dict(C_LSI=C_LSI, L_u=L_u, sigma=sigma, d=d, E0=E0, M=M, R=R, B=B_const, c0=c0,
                  rate_constant=rate_constant)
    return _finish_plan(C_LSI, sigma, log_factor, T_rate, cap, epsilon, inputs, max_steps)


__all__ = [
    "GaussianSummary",
    "SchedulePlan",
    "affine_recursion_oracle",
    "kl_gaussian",
    "plan_schedule_mfnn",
    "plan_schedule_pairwise",
    "psd_sqrt",
    "quadratic_lsi_constant",
    "quadratic_stationary",
    "w2_gaussian",
]
