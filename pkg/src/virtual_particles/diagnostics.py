"""Statistical and structural checks on runs and estimators."""

from __future__ import annotations

import math

import numpy as np

from .dynamics import replay_from_witness
from .exceptions import ConfigError
from .functionals import PairwiseSpec, _cloud_positions, _vector
from .oracles import GaussianSummary
from .reports import Report
from .types import RunConfig, WitnessPath


def _selected(n, repeats):
    if n <= repeats:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, repeats).round().astype(int))


def cross_particle_correlations(positions: np.ndarray, max_lag: int = 10) -> np.ndarray:
    """Sample correlations between coordinate ``a`` of particle ``i`` and
    coordinate ``b`` of particle ``i + lag`` (cyclically), for every lag and
    coordinate pair. Shape ``(n_lags, d, d)``."""
    n, d = positions.shape
    lags = range(1, min(max_lag, n - 1) + 1)
    z = positions - positions.mean(axis=0)
    sd = z.std(axis=0)
    sd[sd == 0] = np.inf
    z = z / sd
    return np.array([(z.T @ np.roll(z, -lag, axis=0)) / n for lag in lags]).reshape(-1, d, d)


def independence_diagnostic(
    cloud,
    witness: WitnessPath,
    config: RunConfig,
    functional,
    repeats: int = 2,
    *,
    particle_streams=None,
    max_lag: int = 10,
    pass_fraction: float = 0.95,
) -> Report:
    """Check that real particles are i.i.d. given the witness path.

    Structural part: selected particles are regenerated from the witness
    with their own substreams and must match bit for bit; no two particles
    may coincide. Statistical part (``n >= 3``): cross-particle
    correlations must be below ``4 / sqrt(n)`` in magnitude for at least
    ``pass_fraction`` of (lag, coordinate pair) cells.
    """
    if witness is None:
        raise ConfigError("independence diagnostic needs the run's witness path")
    if repeats < 2:
        raise ConfigError("repeats must be >= 2")
    pos = np.asarray(getattr(cloud, "positions", cloud), dtype=np.float64)
    n = pos.shape[0]
    streams = np.arange(n) if particle_streams is None else np.asarray(particle_streams)

    mismatched = []
    chosen = _selected(n, repeats)
    for i in chosen:
        again = replay_from_witness(witness, 1, config, functional, seed_offset=int(streams[i]))
        if not np.array_equal(again.positions[0], pos[i]):
            mismatched.append(int(i))
    duplicates = n - np.unique(pos, axis=0).shape[0] if n else 0
    structural = not mismatched and duplicates == 0

    stats = {"checked_particles": int(chosen.size), "mismatched": mismatched,
             "duplicate_particles": int(duplicates)}
    thresholds = {}
    statistical = True
    if n >= 3:
        corr = cross_particle_correlations(pos, max_lag)
        limit = 4.0 / math.sqrt(n)
        frac = float(np.mean(np.abs(corr) < limit))
        statistical = frac >= pass_fraction
        stats.update(max_abs_correlation=float(np.abs(corr).max()), fraction_below=frac, cells=int(corr.size))
        thresholds.update(correlation_limit=limit, pass_fraction=pass_fraction)
    return Report(
        "independence",
        structural and statistical,
        stats,
        thresholds,
        {"structural_passed": structural, "statistical_passed": statistical, "statistical_run": n >= 3},
    )


def _support_pairs(functional, ys):
    """All (witness, xi) pairs of the empirical support, uniformly weighted."""
    if isinstance(functional, PairwiseSpec):
        return ys, None
    m = functional.m
    return np.repeat(ys, m, axis=0), np.tile(np.arange(m), ys.shape[0])


def unbiasedness_test(x, functional, cloud, draws: int = 10_000, seed: int = 0, rtol: float = 1e-12) -> Report:
    """Exact finite-sum identity plus a Monte-Carlo consistency check.

    The estimator averaged over the empirical support of ``cloud`` (and
    over all data indices for the network) must equal the negated exact
    empirical gradient to ``rtol`` relative to the largest term. The mean
    of ``draws`` uniformly resampled terms must lie within 5 standard
    errors of it.
    """
    xv = _vector(x, functional.dim)
    ys = _cloud_positions(cloud, functional.dim)
    target = -functional.exact_gradient(xv, ys)
    pair_y, pair_xi = _support_pairs(functional, ys)
    terms = functional.estimate_many(xv, pair_y, pair_xi)
    avg = terms.mean(axis=0)
    scale = max(1.0, float(np.abs(terms).max()))
    exact_err = float(np.abs(avg - target).max())
    exact_ok = exact_err <= rtol * scale

    rng = np.random.default_rng(seed)
    pick = rng.integers(0, pair_y.shape[0], size=draws)
    sample = terms[pick]
    mc_mean = sample.mean(axis=0)
    se = sample.std(axis=0, ddof=1) / math.sqrt(draws) if draws > 1 else np.full(functional.dim, np.inf)
    z = np.abs(mc_mean - target) / np.maximum(se, rtol * scale)
    mc_ok = bool(np.all(z <= 5.0))
    return Report(
        "unbiasedness",
        exact_ok and mc_ok,
        {"exact_abs_error": exact_err, "scale": scale, "mc_max_z": float(z.max()), "draws": draws},
        {"rtol": rtol, "mc_z": 5.0},
        {"exact_passed": exact_ok, "mc_passed": mc_ok},
    )


def batched_variance_ratio(
    functional, x, law: GaussianSummary, batch_sizes=(1, 2, 4, 8), draws: int = 100_000, seed: int = 0,
    rtol: float = 0.10,
) -> Report:
    """Total variance of the ``B``-batched estimator relative to ``B = 1``.

    Witnesses are drawn i.i.d. from ``law``; each witness carries its own
    data index for the network functional. Passes when
    ``Var(G_B) / Var(G_1)`` is within ``rtol`` of ``1 / B`` for every ``B``.
    """
    xv = _vector(x, functional.dim)
    rng = np.random.default_rng(seed)
    root = np.linalg.cholesky(law.covariance + 1e-300 * np.eye(law.dim))

    def sample(B):
        ys = law.mean + rng.standard_normal((draws * B, law.dim)) @ root.T
        xis = rng.integers(0, functional.m, size=draws * B) if functional.uses_xi else None
        g = functional.estimate_many(xv, ys, xis)
        return g.reshape(draws, B, -1).mean(axis=1)

    total_var = {B: float(np.var(sample(B), axis=0, ddof=1).sum()) for B in batch_sizes}
    base = total_var[1] if 1 in total_var else float(np.var(sample(1), axis=0, ddof=1).sum())
    ratios = {B: total_var[B] / base for B in batch_sizes}
    ok = all(abs(ratios[B] * B - 1.0) <= rtol for B in batch_sizes)
    return Report(
        "batch_variance",
        ok,
        {"total_variance": total_var, "ratio": ratios, "draws": draws},
        {"relative_tolerance": rtol},
    )


def compare_summaries(a: GaussianSummary, b: GaussianSummary, n_a: int, n_b: int | None = None, n_se: float = 4.0) -> Report:
    """Compare Gaussian fits of two clouds (or a cloud and an exact law) entrywise.

    Standard errors use normal-theory formulas: ``sqrt(S_ii / n)`` for means
    and ``sqrt((S_ij^2 + S_ii S_jj) / (n - 1))`` for covariance entries. If
    ``n_b`` is ``None``, ``b`` is treated as exact.
    """

    def se_parts(s, n):
        var = np.diag(s.covariance)
        se_mean = np.sqrt(var / n)
        se_cov = np.sqrt((s.covariance**2 + np.outer(var, var)) / max(n - 1, 1))
        return se_mean, se_cov

    sm_a, sc_a = se_parts(a, n_a)
    if n_b is None:
        sm_b, sc_b = se_parts(b, n_a)
        sm, sc = sm_b, sc_b
    else:
        sm_b, sc_b = se_parts(b, n_b)
        sm, sc = np.hypot(sm_a, sm_b), np.hypot(sc_a, sc_b)
    z_mean = np.abs(a.mean - b.mean) / sm
    z_cov = np.abs(a.covariance - b.covariance) / sc
    ok = bool(np.all(z_mean <= n_se) and np.all(z_cov <= n_se))
    return Report(
        "moment_agreement",
        ok,
        {"max_z_mean": float(z_mean.max()), "max_z_cov": float(z_cov.max()),
         "mean_a": a.mean, "mean_b": b.mean, "cov_a": a.covariance, "cov_b": b.covariance},
        {"n_se": n_se},
    )
