"""Virtual particle stochastic approximation and the interacting-particle baseline.

The virtual particle scheme runs ``n`` real particles and ``T + 1``
virtual particles per batch slot. At step ``k`` the virtual particle
``Y^(k)`` is frozen and serves as the witness that every other particle
uses in place of the unknown law ``mu_k``; the virtual particles
``Y^(k+1), ..., Y^(T)`` and all real particles then take one
Euler-Maruyama step with the stochastic drift. The frozen diagonal
``Y_0^(0), ..., Y_T^(T)`` together with the estimator randomness is the
witness path: given it, real particles are conditionally i.i.d., and more
of them can be generated later at a cost of ``T`` estimator calls each.
"""

from __future__ import annotations

import math
import time
from typing import NamedTuple

import numpy as np

from .exceptions import ConfigError, EmptyCloudError
from .functionals import batched_estimate
from .rng import NoiseStream, StreamKind
from .types import (
    DiagnosticsTrace,
    ParticleCloud,
    RunConfig,
    StepRecord,
    WitnessPath,
    check_finite,
    config_hash,
)


def eval_count(n: int, T: int, B: int = 1) -> int:
    """Exact number of estimator calls made by :func:`vpsa_run`.

    Real particles cost ``B`` calls per step; at step ``k`` each of the
    ``B`` virtual arrays updates ``T - k`` particles at ``B`` calls each.
    """
    if min(n, T) < 0 or B < 1:
        raise ValueError("need n, T >= 0 and B >= 1")
    return B * n * T + B * B * T * (T + 1) // 2


class VPSAResult(NamedTuple):
    cloud: ParticleCloud
    witness: WitnessPath
    trace: DiagnosticsTrace


class PMKVResult(NamedTuple):
    cloud: ParticleCloud
    trace: DiagnosticsTrace


class _CountingEstimator:
    """Proxy that counts one estimator call per row passed to ``estimate``."""

    def __init__(self, functional):
        self._f = functional
        self.calls = 0

    def __getattr__(self, name):
        return getattr(self._f, name)

    def estimate(self, x, y, xi=None):
        self.calls += np.shape(x)[0] if np.ndim(x) == 2 else 1
        return self._f.estimate(x, y, xi)


def _check_compatible(config: RunConfig, functional):
    config.validate_for_run()
    if functional.dim != config.dim:
        raise ConfigError(f"config dim {config.dim} != functional dim {functional.dim}")
    if config.sigma != functional.sigma:
        raise ConfigError(f"config sigma {config.sigma} != functional sigma {functional.sigma}")


def _initial_positions(config: RunConfig, kind: StreamKind, entities, batch: int = 0) -> np.ndarray:
    z = NoiseStream(config.master_seed, kind, batch).normals(entities, 0, config.dim)
    return np.asarray(config.init_mean) + config.init_scale * z


def vpsa_step(x, witness, xi, config: RunConfig, functional, noise):
    """One update ``x + eta * G(x, witness, xi) + sigma * sqrt(eta) * noise``."""
    x = np.asarray(x, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if x.shape[-1] != functional.dim or noise.shape != x.shape:
        raise ConfigError("x, witness and noise must share the functional's dimension")
    out = x + config.eta * functional.estimate(x, witness, xi)
    if config.sigma:
        out = out + config.sigma * math.sqrt(config.eta) * noise
    return out


def _advance(pos, step, witnesses, xis, entities, stream, config, functional, chunk_size=None):
    if pos.shape[0] == 0:
        return pos
    if chunk_size is not None and pos.shape[0] > chunk_size:
        parts = [
            _advance(pos[s : s + chunk_size], step, witnesses, xis, entities[s : s + chunk_size],
                     stream, config, functional)
            for s in range(0, pos.shape[0], chunk_size)
        ]
        return np.concatenate(parts, axis=0)
    out = pos + config.eta * batched_estimate(functional, pos, witnesses, xis)
    if config.sigma:
        out = out + (config.sigma * math.sqrt(config.eta)) * stream.normals(entities, step, config.dim)
    return out


def _record(trace, step, positions, evals, t0, functional, with_energy=True, on_record=None):
    n = positions.shape[0]
    if n:
        mean_norm = float(np.linalg.norm(positions.mean(axis=0)))
        cov_trace = float(np.var(positions, axis=0, ddof=1).sum()) if n > 1 else 0.0
    else:
        mean_norm = cov_trace = float("nan")
    energy = {}
    if with_energy:
        if n:
            parts = functional.energy(positions)
            energy = dict(zip(functional.energy_names + ("neg_entropy",), map(float, parts)))
        else:
            energy = {name: float("nan") for name in functional.energy_names + ("neg_entropy",)}
    extra = on_record(step, positions) if on_record is not None else {}
    trace.records.append(
        StepRecord(step, time.perf_counter() - t0, int(evals), mean_norm, cov_trace, energy, **extra)
    )


def _wants_record(step, T, trace_every):
    if step == 0 or step == T:
        return True
    return bool(trace_every) and step % trace_every == 0


def vpsa_run(
    config: RunConfig,
    functional,
    *,
    particle_streams=None,
    trace_every: int | None = 1,
    trace_energy: bool = True,
    chunk_size: int | None = None,
    on_record=None,
) -> VPSAResult:
    """Run the virtual particle stochastic approximation.

    Parameters
    ----------
    config : RunConfig
        Step size, horizon ``T``, number of real particles ``n``, noise
        level, batch size and seeds.
    functional : PairwiseSpec or MfnnSpec
        Supplies the unbiased drift estimator.
    particle_streams : array of int, optional
        Substream index of each real particle (default ``0..n-1``). A real
        particle is a deterministic function of the witness path and its
        own substream, so reusing an index reproduces that particle.
    trace_every : int or None
        Record diagnostics every this many steps (first and last step are
        always recorded). ``None`` records only the endpoints.
    trace_energy : bool
        Evaluate the energy functional in each trace record.
    chunk_size : int, optional
        Update real particles in chunks of this size; results are
        bit-identical for every chunking.
    on_record : callable, optional
        ``on_record(step, positions) -> dict`` of extra record fields
        (``oracle_kl``, ``oracle_w2``, ``fit_kl``).

    Returns
    -------
    VPSAResult
        ``(cloud, witness, trace)``; ``trace.eval_count`` is the measured
        number of estimator calls and equals ``eval_count(n, T, B)``.
    """
    _check_compatible(config, functional)
    n, T, B, d = config.n, config.T, config.batch_size, config.dim
    if particle_streams is None:
        streams = np.arange(n, dtype=np.int64)
    else:
        streams = np.asarray(particle_streams, dtype=np.int64).reshape(-1)
        if streams.shape[0] != n:
            raise ConfigError(f"particle_streams has {streams.shape[0]} entries, expected n={n}")
    seed = config.master_seed
    counted = _CountingEstimator(functional)

    x = _initial_positions(config, StreamKind.REAL_INIT, streams)
    virtual = np.stack(
        [_initial_positions(config, StreamKind.VIRTUAL_INIT, np.arange(T + 1), b) for b in range(B)]
    )
    real_noise = NoiseStream(seed, StreamKind.REAL_NOISE)
    virtual_noise = [NoiseStream(seed, StreamKind.VIRTUAL_NOISE, b) for b in range(B)]
    diagonal = np.empty((T + 1, B, d))
    xi_draws = np.empty((T, functional.xi_width(B)), dtype=np.int64)

    trace = DiagnosticsTrace(method="vpsa")
    t0 = time.perf_counter()
    _record(trace, 0, x, 0, t0, functional, trace_energy, on_record)
    for k in range(T):
        witnesses = virtual[:, k, :].copy()
        diagonal[k] = witnesses
        xis = functional.draw_xi(seed, k, B)
        if xi_draws.shape[1]:
            xi_draws[k] = xis
        x = _advance(x, k, witnesses, xis, streams, real_noise, config, counted, chunk_size)
        ahead = np.arange(k + 1, T + 1)
        for b in range(B):
            virtual[b, k + 1 :] = _advance(
                virtual[b, k + 1 :], k, witnesses, xis, ahead, virtual_noise[b], config, counted
            )
        check_finite(x, k + 1)
        check_finite(virtual[:, k + 1 :], k + 1)
        if _wants_record(k + 1, T, trace_every):
            _record(trace, k + 1, x, counted.calls, t0, functional, trace_energy, on_record)
    diagonal[T] = virtual[:, T, :]
    trace.eval_count = counted.calls

    witness = WitnessPath(diagonal, xi_draws, seed, config_hash(config, functional))
    return VPSAResult(ParticleCloud(x, T, "real"), witness, trace)


def replay_from_witness(
    witness: WitnessPath,
    n_extra: int,
    config: RunConfig,
    functional,
    seed_offset: int = 0,
    chunk_size: int | None = None,
) -> ParticleCloud:
    """Draw ``n_extra`` further samples from the law fixed by a stored witness path.

    Sample ``r`` uses real-particle substream ``seed_offset + r``; with
    ``seed_offset = 0`` the first samples reproduce the original run's
    real particles bit for bit. Fresh samples need an offset past the
    substreams used by the run (e.g. ``config.n``).
    """
    witness.check_matches(config, functional)
    if n_extra < 0:
        raise ConfigError("n_extra must be >= 0")
    streams = seed_offset + np.arange(n_extra, dtype=np.int64)
    counted = _CountingEstimator(functional)
    x = _initial_positions(config, StreamKind.REAL_INIT, streams)
    real_noise = NoiseStream(config.master_seed, StreamKind.REAL_NOISE)
    for k in range(witness.T):
        xis = witness.xi_draws[k] if witness.xi_draws.shape[1] else ()
        x = _advance(x, k, witness.diagonal[k], xis, streams, real_noise, config, counted, chunk_size)
        check_finite(x, k + 1)
    cloud = ParticleCloud(x, witness.T, "real")
    cloud.eval_count = counted.calls
    return cloud


def pmkv_run(
    config: RunConfig, functional, *, trace_every: int | None = 1, trace_energy: bool = True, on_record=None
) -> PMKVResult:
    """Standard interacting-particle Euler-Maruyama scheme.

    Each particle moves along the negated gradient against the empirical
    measure of the whole cloud. Initial positions and noise use the same
    substreams as the real particles of :func:`vpsa_run` with equal seed.
    ``trace.eval_count`` counts interaction-gradient evaluations
    (``n**2`` per step for pairwise energies).
    """
    _check_compatible(config, functional)
    if config.n < 1:
        raise EmptyCloudError("the particle method needs n >= 1")
    n, T = config.n, config.T
    streams = np.arange(n, dtype=np.int64)
    noise = NoiseStream(config.master_seed, StreamKind.REAL_NOISE)
    scale = config.sigma * math.sqrt(config.eta)
    per_step = functional.exact_gradient_cost(n)

    x = _initial_positions(config, StreamKind.REAL_INIT, streams)
    trace = DiagnosticsTrace(method="pmkv")
    t0 = time.perf_counter()
    _record(trace, 0, x, 0, t0, functional, trace_energy, on_record)
    for k in range(T):
        x = x - config.eta * functional.exact_gradient(x, x)
        if scale:
            x = x + scale * noise.normals(streams, k, config.dim)
        check_finite(x, k + 1)
        if _wants_record(k + 1, T, trace_every):
            _record(trace, k + 1, x, per_step * (k + 1), t0, functional, trace_energy, on_record)
    trace.eval_count = per_step * T
    return PMKVResult(ParticleCloud(x, T, "real"), trace)
