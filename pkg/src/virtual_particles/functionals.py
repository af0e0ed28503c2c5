"""Energy functionals and their Wasserstein-gradient estimators.

Two families are supported:

* pairwise interaction energy ``int V dmu + 1/2 int int W(x - y) dmu dmu``
  with estimator ``G(x, y) = -grad V(x) - grad W(x - y)``;
* a two-layer mean-field network with square loss on a finite dataset,
  ``(1/m) sum_i (f(mu; z_i) - w_i)**2 + lam/2 int |x|^2 dmu`` where
  ``f(mu; z) = int h(x, z) dmu(x)`` and ``h(x, z) = B0 tanh(<x, z>)``.
  Its estimator draws a data index ``i`` uniformly and returns
  ``-2 (h(z_i, y) - w_i) grad_x h(z_i, x) - lam x``.

Both estimators are unbiased: averaging over ``y`` drawn from a measure
(and over ``i``) gives the negated gradient of the non-entropic part of the
energy at that measure. For empirical measures this is a finite-sum
identity, which the ``exact_gradient`` methods reproduce.

All gradient-like callables act row-wise on ``(n, d)`` arrays.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .exceptions import ConfigError, DatasetError, EmptyCloudError
from .reports import AssumptionCheck, AssumptionReport
from .rng import NoiseStream, StreamKind
from .types import ParticleCloud

# max |d/du sech(u)^2| = max |2 tanh(u) sech(u)^2| = 4 / (3 sqrt 3)
_TANH_CURVATURE = 4.0 / (3.0 * math.sqrt(3.0))


def _rows(x, dim=None) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr[None, :]
    if dim is not None and arr.shape[1] != dim:
        raise ConfigError(f"expected vectors of dimension {dim}, got {arr.shape[1]}")
    return arr


def _vector(y, dim) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if arr.shape != (dim,):
        raise ConfigError(f"expected a vector of dimension {dim}, got shape {arr.shape}")
    return arr


def _cloud_positions(cloud, dim) -> np.ndarray:
    pos = cloud.positions if isinstance(cloud, ParticleCloud) else _rows(cloud, dim)
    if pos.shape[0] == 0:
        raise EmptyCloudError("cloud must contain at least one particle")
    if pos.shape[1] != dim:
        raise ConfigError(f"cloud has dimension {pos.shape[1]}, expected {dim}")
    return pos


def _like_input(out, x):
    return out[0] if np.ndim(x) <= 1 else out


def gaussian_neg_entropy(positions: np.ndarray) -> float:
    """Plug-in estimate of ``int log mu dmu`` from a Gaussian fit.

    Returns NaN when the empirical covariance is singular (including
    ``n <= d``); this is an approximation, not an entropy estimator.
    """
    n, d = positions.shape
    if n <= d:
        return float("nan")
    cov = np.atleast_2d(np.cov(positions, rowvar=False))
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0 or not np.isfinite(logdet):
        return float("nan")
    return float(-0.5 * (d * math.log(2 * math.pi * math.e) + logdet))


# ---------------------------------------------------------------------------
# pairwise interaction energy


@dataclass(frozen=True)
class QuadraticPotential:
    """``U(x) = strength / 2 * |x|^2``; used for both ``V`` and ``W``."""

    strength: float

    is_quadratic = True

    @property
    def lipschitz(self) -> float:
        return abs(self.strength)

    def grad(self, x):
        return self.strength * x

    def value(self, x):
        return 0.5 * self.strength * np.sum(x * x, axis=-1)

    def descriptor(self):
        return {"kind": "quadratic", "strength": float(self.strength)}


@dataclass(frozen=True)
class SmoothPotential:
    """User-supplied potential given by its gradient and a declared smoothness."""

    grad_fn: Callable
    lipschitz: float
    value_fn: Callable | None = None
    name: str | None = None

    is_quadratic = False

    def __post_init__(self):
        if not (np.isfinite(self.lipschitz) and self.lipschitz > 0):
            raise ConfigError("declared smoothness constant must be positive")

    def grad(self, x):
        return np.asarray(self.grad_fn(x), dtype=np.float64)

    def value(self, x):
        if self.value_fn is None:
            return None
        return np.asarray(self.value_fn(x), dtype=np.float64)

    def descriptor(self):
        name = self.name or getattr(self.grad_fn, "__qualname__", repr(self.grad_fn))
        return {"kind": "general_smooth", "name": name, "lipschitz": float(self.lipschitz)}


class PairwiseEnergy(NamedTuple):
    v_part: float
    w_part: float
    neg_entropy: float


def _odd_violation(grad, dim, n_probes=32, seed=0) -> float:
    v = np.random.default_rng(seed).normal(scale=2.0, size=(n_probes, dim))
    g_plus, g_minus = grad(v), grad(-v)
    scale = max(1.0, float(np.abs(g_plus).max()))
    return float(np.abs(g_plus + g_minus).max() / scale)


@dataclass(frozen=True)
class PairwiseSpec:
    """Pairwise interaction energy with external potential and even interaction."""

    potential: QuadraticPotential | SmoothPotential
    interaction: QuadraticPotential | SmoothPotential
    sigma: float
    dim: int = 1

    kind = "pairwise"
    uses_xi = False
    energy_names = ("v_part", "w_part")

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if self.sigma < 0:
            raise ConfigError("sigma must be >= 0")
        if not self.interaction.is_quadratic:
            if _odd_violation(self.interaction.grad, self.dim) > 1e-8:
                raise ConfigError("interaction gradient is not odd; W must be even")

    @classmethod
    def quadratic(cls, lambda_V: float, alpha: float, sigma: float, dim: int = 1) -> "PairwiseSpec":
        return cls(QuadraticPotential(lambda_V), QuadraticPotential(alpha), sigma, dim)

    @property
    def is_quadratic(self) -> bool:
        return self.potential.is_quadratic and self.interaction.is_quadratic

    @property
    def lambda_V(self) -> float:
        return self.potential.strength

    @property
    def alpha(self) -> float:
        return self.interaction.strength

    @property
    def L_V(self) -> float:
        return self.potential.lipschitz

    @property
    def L_W(self) -> float:
        return self.interaction.lipschitz

    @property
    def lipschitz_u(self) -> float:
        return self.L_V + self.L_W

    def descriptor(self):
        return {
            "kind": self.kind,
            "potential": self.potential.descriptor(),
            "interaction": self.interaction.descriptor(),
            "sigma": float(self.sigma),
            "dim": int(self.dim),
        }

    def xi_width(self, batch_size: int) -> int:
        return 0

    def draw_xi(self, master_seed: int, step: int, batch_size: int) -> np.ndarray:
        return np.empty(0, dtype=np.int64)

    def estimate(self, x, y, xi=None):
        xs = _rows(x, self.dim)
        yv = _vector(y, self.dim)
        out = -self.potential.grad(xs) - self.interaction.grad(xs - yv)
        return _like_input(out, x)

    def estimate_many(self, x, ys, xis=None):
        """Estimator at one point ``x`` for each witness row of ``ys``."""
        xv = _vector(x, self.dim)
        ys = _rows(ys, self.dim)
        return -self.potential.grad(xv[None, :]) - self.interaction.grad(xv - ys)

    def exact_gradient(self, x, cloud):
        xs = _rows(x, self.dim)
        ys = _cloud_positions(cloud, self.dim)
        if self.interaction.is_quadratic:
            inter = self.interaction.grad(xs - ys.mean(axis=0))
        else:
            inter = np.zeros_like(xs)
            for y in ys:
                inter += self.interaction.grad(xs - y)
            inter /= ys.shape[0]
        return _like_input(self.potential.grad(xs) + inter, x)

    def exact_gradient_cost(self, n: int) -> int:
        return n * n

    def energy(self, cloud) -> PairwiseEnergy:
        pos = _cloud_positions(cloud, self.dim)
        v_vals = self.potential.value(pos)
        v_part = float("nan") if v_vals is None else float(np.mean(v_vals))
        if self.interaction.is_quadratic:
            # (1/2) mean_{i,j} alpha/2 |x_i - x_j|^2 = alpha/2 (mean |x|^2 - |mean x|^2)
            centered = pos - pos.mean(axis=0)
            w_part = 0.5 * self.alpha * float(np.mean(np.sum(centered * centered, axis=1)))
        else:
            total = 0.0
            for x in pos:
                w = self.interaction.value(x - pos)
                if w is None:
                    total = float("nan")
                    break
                total += float(np.sum(w))
            w_part = 0.5 * total / pos.shape[0] ** 2
        return PairwiseEnergy(v_part, w_part, gaussian_neg_entropy(pos))


def pairwise_estimate(x, y, spec: PairwiseSpec):
    """``-grad V(x) - grad W(x - y)``; the estimator needs no auxiliary randomness."""
    return spec.estimate(x, y)


def pairwise_exact_gradient(x, cloud, spec: PairwiseSpec):
    """``grad V(x) + mean_j grad W(x - y_j)`` over the cloud (the particle-method drift is its negation)."""
    return spec.exact_gradient(x, cloud)


def pairwise_energy(cloud, spec: PairwiseSpec) -> PairwiseEnergy:
    """Potential part, interaction part (diagonal pairs included) and plug-in negative entropy."""
    return spec.energy(cloud)


# ---------------------------------------------------------------------------
# mean-field two-layer network


class MfnnEnergy(NamedTuple):
    loss: float
    ridge: float
    neg_entropy: float


@dataclass(frozen=True, eq=False)
class MfnnSpec:
    """Mean-field network ``f(mu; z) = int B0 tanh(<x, z>) dmu(x)`` with square loss.

    ``radius`` is the bound ``R`` on feature norms and labels; it defaults
    to the smallest value the dataset satisfies. The activation bounds are
    ``B = M = amplitude`` and ``L = amplitude * 4 / (3 sqrt 3) * R``.
    """

    features: np.ndarray
    labels: np.ndarray
    amplitude: float = 1.0
    lam: float = 0.0
    sigma: float = 1.0
    radius: float | None = None

    kind = "mfnn"
    uses_xi = True
    energy_names = ("loss", "ridge")

    def __post_init__(self):
        z = np.asarray(self.features, dtype=np.float64)
        if z.ndim == 1:
            z = z[:, None]
        w = np.asarray(self.labels, dtype=np.float64).reshape(-1)
        if z.ndim != 2 or z.shape[0] < 1:
            raise ConfigError("dataset must contain at least one (z, w) pair")
        if w.shape[0] != z.shape[0]:
            raise ConfigError("features and labels have different lengths")
        if not (np.isfinite(z).all() and np.isfinite(w).all()):
            raise ConfigError("dataset contains non-finite values")
        if self.amplitude <= 0 or self.lam < 0 or self.sigma < 0:
            raise ConfigError("need amplitude > 0, lam >= 0, sigma >= 0")
        z.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "features", z)
        object.__setattr__(self, "labels", w)
        norms = np.linalg.norm(z, axis=1)
        if self.radius is None:
            object.__setattr__(self, "radius", float(max(norms.max(), np.abs(w).max())))
        bad = np.flatnonzero((norms > self.radius) | (np.abs(w) > self.radius))
        if bad.size:
            raise DatasetError(
                f"{bad.size} data points violate |z| <= R, |w| <= R with R={self.radius}: rows {bad.tolist()}",
                rows=bad.tolist(),
            )

    @property
    def m(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def B(self) -> float:
        return float(self.amplitude)

    @property
    def M(self) -> float:
        return float(self.amplitude)

    @property
    def L(self) -> float:
        return float(self.amplitude * _TANH_CURVATURE * self.radius)

    @property
    def R(self) -> float:
        return float(self.radius)

    @property
    def lipschitz_u(self) -> float:
        return mfnn_lipschitz_constant(self.B, self.R, self.L, self.lam, self.M)

    def descriptor(self):
        return {
            "kind": self.kind,
            "features": self.features,
            "labels": self.labels,
            "amplitude": float(self.amplitude),
            "lam": float(self.lam),
            "sigma": float(self.sigma),
            "radius": float(self.radius),
        }

    # activation ------------------------------------------------------------

    def _inner(self, xs, z):
        # explicit coordinate loop keeps each row's rounding independent of batch shape
        acc = xs[:, 0] * z[0]
        for c in range(1, z.shape[0]):
            acc = acc + xs[:, c] * z[c]
        return acc

    def activation(self, x, z):
        """``h(x, z) = B0 tanh(<x, z>)`` for rows of ``x``."""
        xs = _rows(x, self.dim)
        return self.amplitude * np.tanh(self._inner(xs, _vector(z, self.dim)))

    def activation_grad(self, x, z):
        """``grad_x h(x, z) = B0 (1 - tanh(<x, z>)^2) z``."""
        xs = _rows(x, self.dim)
        zv = _vector(z, self.dim)
        t = np.tanh(self._inner(xs, zv))
        return (self.amplitude * (1.0 - t * t))[:, None] * zv

    def predict(self, cloud, features=None) -> np.ndarray:
        """Network output ``f(mu_hat; z)`` of the empirical measure at each feature row."""
        pos = _cloud_positions(cloud, self.dim)
        z = self.features if features is None else _rows(features, self.dim)
        return self.amplitude * np.tanh(pos @ z.T).mean(axis=0)

    # estimator contract ----------------------------------------------------

    def xi_width(self, batch_size: int) -> int:
        return batch_size

    def draw_xi(self, master_seed: int, step: int, batch_size: int) -> np.ndarray:
        return np.array(
            [NoiseStream(master_seed, StreamKind.XI, b).integers([0], step, self.m)[0] for b in range(batch_size)],
            dtype=np.int64,
        )

    def estimate(self, x, y, xi):
        i = int(xi)
        if not 0 <= i < self.m:
            raise IndexError(f"data index {i} outside [0, {self.m})")
        xs = _rows(x, self.dim)
        yv = _vector(y, self.dim)
        z = self.features[i]
        resid = self.amplitude * np.tanh(self._inner(yv[None, :], z)[0]) - self.labels[i]
        out = -2.0 * resid * self.activation_grad(xs, z) - self.lam * xs
        return _like_input(out, x)

    def estimate_many(self, x, ys, xis):
        """Estimator at one point ``x`` for paired rows ``(ys[r], xis[r])``."""
        xv = _vector(x, self.dim)
        ys = _rows(ys, self.dim)
        idx = np.asarray(xis, dtype=np.int64).reshape(-1)
        if idx.shape[0] != ys.shape[0]:
            raise ConfigError("need one data index per witness")
        if idx.size and (idx.min() < 0 or idx.max() >= self.m):
            raise IndexError("data index out of range")
        z = self.features[idx]
        resid = self.amplitude * np.tanh(np.sum(ys * z, axis=1)) - self.labels[idx]
        t = np.tanh(z @ xv)
        grad_h = (self.amplitude * (1.0 - t * t))[:, None] * z
        return -2.0 * resid[:, None] * grad_h - self.lam * xv

    def exact_gradient(self, x, cloud):
        xs = _rows(x, self.dim)
        resid = self.predict(cloud) - self.labels
        t = np.tanh(xs @ self.features.T)
        slope = self.amplitude * (1.0 - t * t)
        out = (2.0 / self.m) * (slope * resid) @ self.features + self.lam * xs
        return _like_input(out, x)

    def exact_gradient_cost(self, n: int) -> int:
        # n*m activations for the predictions plus n*m activation gradients
        return 2 * n * self.m

    def energy(self, cloud) -> MfnnEnergy:
        pos = _cloud_positions(cloud, self.dim)
        resid = self.predict(pos) - self.labels
        loss = float(np.mean(resid * resid))
        ridge = 0.5 * self.lam * float(np.mean(np.sum(pos * pos, axis=1)))
        return MfnnEnergy(loss, ridge, gaussian_neg_entropy(pos))


def mfnn_lipschitz_constant(B, R, L, lam, M) -> float:
    """Lipschitz constant of the network estimator in ``x``: ``(B + R) L R + lam + M^2 R^2``."""
    return (B + R) * L * R + lam + M * M * R * R


def mfnn_estimate(x, y, i, spec: MfnnSpec):
    """Single-index estimator ``-2 (h(z_i, y) - w_i) grad_x h(z_i, x) - lam x`` (0-based ``i``)."""
    return spec.estimate(x, y, i)


def mfnn_exact_gradient(x, cloud, spec: MfnnSpec):
    return spec.exact_gradient(x, cloud)


def mfnn_energy(cloud, spec: MfnnSpec) -> MfnnEnergy:
    return spec.energy(cloud)


def batched_estimate(functional, x, witnesses, xis):
    """Average of the estimator over ``B`` witnesses, each paired with its own ``xi``.

    With ``B == 1`` this is exactly the single estimator.
    """
    witnesses = np.asarray(witnesses, dtype=np.float64).reshape(-1, functional.dim)
    B = witnesses.shape[0]
    total = None
    for b in range(B):
        xi = xis[b] if functional.uses_xi else None
        g = functional.estimate(x, witnesses[b], xi)
        total = g if total is None else total + g
    return total if B == 1 else total / B


# ---------------------------------------------------------------------------
# assumption checks


def check_assumptions(spec, C_LSI: float | None = None, n_probes: int = 256, seed: int = 0) -> AssumptionReport:
    """Runtime check of the structural assumptions behind the convergence theory.

    For pairwise specs ``C_LSI`` defaults to the exact Gaussian value when
    both potentials are quadratic; for general potentials the weak
    interaction check is skipped unless it is supplied.
    """
    rng = np.random.default_rng(seed)
    checks = []
    if isinstance(spec, PairwiseSpec):
        for name, pot in (("smoothness_V", spec.potential), ("smoothness_W", spec.interaction)):
            checks.append(
                AssumptionCheck(name, pot.lipschitz >= 0, pot.lipschitz, 0.0, pot.lipschitz, "declared smoothness constant")
            )
        viol = _odd_violation(spec.interaction.grad, spec.dim, n_probes, seed)
        checks.append(AssumptionCheck("interaction_gradient_odd", viol <= 1e-8, viol, 1e-8, 1e-8 - viol))
        x1 = rng.normal(size=(n_probes, spec.dim))
        x2 = rng.normal(size=(n_probes, spec.dim))
        y = rng.normal(size=spec.dim)
        lhs = np.linalg.norm(spec.estimate(x1, y) - spec.estimate(x2, y), axis=1)
        rhs = spec.lipschitz_u * np.linalg.norm(x1 - x2, axis=1)
        worst = float(np.max(lhs - rhs))
        checks.append(
            AssumptionCheck("estimator_lipschitz", worst <= 1e-9 * max(1.0, rhs.max()), worst, 0.0, -worst,
                            f"L_u = L_V + L_W = {spec.lipschitz_u}")
        )
        if C_LSI is None and spec.is_quadratic and spec.lambda_V + spec.alpha > 0 and spec.sigma > 0:
            C_LSI = spec.sigma**2 / (2.0 * (spec.lambda_V + spec.alpha))
        if C_LSI is None or C_LSI <= 0:
            checks.append(AssumptionCheck("weak_interaction", None, spec.L_W, None, None, "C_LSI not supplied; skipped"))
        else:
            bound = spec.sigma**2 / (4.0 * C_LSI)
            checks.append(
                AssumptionCheck("weak_interaction", spec.L_W <= bound, spec.L_W, bound, bound - spec.L_W,
                                f"L_W <= sigma^2 / (4 C_LSI) with C_LSI = {C_LSI}")
            )
        return AssumptionReport("pairwise", checks, {"C_LSI": C_LSI})

    if isinstance(spec, MfnnSpec):
        R = spec.R
        norms = np.linalg.norm(spec.features, axis=1)
        zmax, wmax = float(norms.max()), float(np.abs(spec.labels).max())
        checks.append(AssumptionCheck("feature_norm_bound", zmax <= R, zmax, R, R - zmax))
        checks.append(AssumptionCheck("label_bound", wmax <= R, wmax, R, R - wmax))
        xs = rng.normal(scale=3.0, size=(n_probes, spec.dim))
        hmax, gratio, lratio = 0.0, 0.0, 0.0
        for z in spec.features:
            hmax = max(hmax, float(np.abs(spec.activation(xs, z)).max()))
            zn = float(np.linalg.norm(z))
            if zn > 0:
                g = spec.activation_grad(xs, z)
                gratio = max(gratio, float(np.linalg.norm(g, axis=1).max()) / zn)
                x2 = xs + rng.normal(scale=0.5, size=xs.shape)
                dg = np.linalg.norm(g - spec.activation_grad(x2, z), axis=1)
                dx = np.linalg.norm(xs - x2, axis=1)
                lratio = max(lratio, float((dg / dx).max()) / zn)
        checks.append(AssumptionCheck("activation_bound", hmax <= spec.B, hmax, spec.B, spec.B - hmax, "probed |h| <= B"))
        checks.append(
            AssumptionCheck("activation_gradient_bound", gratio <= spec.M * (1 + 1e-12), gratio, spec.M, spec.M - gratio,
                            "probed |grad h| / |z| <= M")
        )
        checks.append(
            AssumptionCheck("activation_gradient_lipschitz", lratio <= spec.L * (1 + 1e-9), lratio, spec.L, spec.L - lratio,
                            "probed Lipschitz ratio of grad h over |z| <= L")
        )
        checks.append(AssumptionCheck("lsi", None, C_LSI, None, None, "C_LSI of proximal Gibbs measures is user input"))
        return AssumptionReport("mfnn", checks, {"C_LSI": C_LSI, "B": spec.B, "M": spec.M, "L": spec.L, "R": R,
                                                 "L_u": spec.lipschitz_u})
    raise ConfigError(f"unsupported functional {type(spec).__name__}")


# ---------------------------------------------------------------------------
# dataset ingestion


def load_mfnn_dataset(path, radius: float | None = None):
    """Read a CSV with a header row, ``k`` feature columns and a final label column.

    Rows with ``|z| > radius`` or ``|w| > radius`` are rejected; the error
    lists their 1-based data row numbers.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise DatasetError(f"{path}: header row with >= 1 feature column and a label column required")
        try:
            float(header[0])
        except ValueError:
            pass
        else:
            raise DatasetError(f"{path}: first row looks numeric; a header row is required")
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    try:
        data = np.array([[float(c) for c in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise DatasetError(f"{path}: non-numeric value ({exc})") from exc
    if data.shape[1] != len(header):
        raise DatasetError(f"{path}: rows do not match the header width")
    z, w = data[:, :-1], data[:, -1]
    if radius is not None:
        bad = np.flatnonzero((np.linalg.norm(z, axis=1) > radius) | (np.abs(w) > radius))
        if bad.size:
            rows_1b = (bad + 1).tolist()
            raise DatasetError(f"{path}: rows {rows_1b} violate |z| <= {radius} or |w| <= {radius}", rows=rows_1b)
    return z, w
