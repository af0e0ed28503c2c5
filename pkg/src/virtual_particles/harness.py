"""Experiment runner: JSON configs in, CSV and JSON results out.

Every CSV starts with a comment line ``# schema=v1 kind=<kind> config_hash=<hash>``
and stores floats with 17 significant digits, so a float64 survives a
round trip through the file. CSV payloads contain no wall-clock values and
are byte-identical across repeated runs; timings live in ``summary.json``.
"""

from __future__ import annotations

import datetime as _dt
import json
import math
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .diagnostics import independence_diagnostic
from .dynamics import eval_count, pmkv_run, replay_from_witness, vpsa_run
from .exceptions import ConfigError
from .functionals import MfnnSpec, PairwiseSpec, check_assumptions, load_mfnn_dataset
from .oracles import (
    GaussianSummary,
    affine_recursion_oracle,
    kl_gaussian,
    plan_schedule_mfnn,
    plan_schedule_pairwise,
    quadratic_lsi_constant,
    quadratic_stationary,
    w2_gaussian,
)
from .reports import _clean
from .types import RunConfig, WitnessPath, config_hash

CSV_SCHEMA = "v1"
SCHEMA_FILE = "experiment.schema.json"

TRACE_COLUMNS = ("step", "eval_count_cumulative", "empirical_mean_norm", "empirical_cov_trace")
ORACLE_COLUMNS = ("oracle_kl", "oracle_w2", "fit_kl")


def load_schema() -> dict:
    return json.loads(resources.files(__package__).joinpath("schemas", SCHEMA_FILE).read_text())


def fmt(v) -> str:
    """17 significant digits; integers stay integers, missing values are empty."""
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return format(v, ".17g")


def _write_csv(path, kind, chash, columns, rows, extra=""):
    lines = [f"# schema={CSV_SCHEMA} kind={kind} config_hash={chash}{extra}", ",".join(columns)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path):
    """Parse a harness CSV into ``(meta, columns, float array)``."""
    text = Path(path).read_text().splitlines()
    meta = dict(tok.split("=", 1) for tok in text[0].lstrip("# ").split() if "=" in tok)
    columns = text[1].split(",")
    rows = [[float(c) if c else math.nan for c in line.split(",")] for line in text[2:] if line]
    return meta, columns, np.array(rows, dtype=np.float64).reshape(len(rows), len(columns))


def synthetic_teacher_dataset(m, teacher, amplitude=1.0, seed=0):
    """``m`` standard normal features labelled by a fixed teacher cloud.

    The label of ``z`` is ``amplitude * mean_j tanh(<teacher_j, z>)``.
    """
    teacher = np.atleast_2d(np.asarray(teacher, dtype=np.float64))
    z = np.random.default_rng(seed).standard_normal((m, teacher.shape[1]))
    w = amplitude * np.tanh(z @ teacher.T).mean(axis=1)
    return z, w


@dataclass
class Experiment:
    """A validated and resolved experiment configuration."""

    raw: dict
    base_dir: Path
    functional: object
    config: RunConfig
    method: str = "vpsa"
    plan: object = None
    diagnostics: dict = field(default_factory=dict)
    output_dir: Path = None

    @property
    def config_hash(self) -> str:
        return config_hash(self.config, self.functional)

    @property
    def oracle_available(self) -> bool:
        f = self.functional
        return (
            isinstance(f, PairwiseSpec) and f.is_quadratic and f.lambda_V + f.alpha > 0
            and self.method == "vpsa" and self.config.batch_size == 1
        )


def _build_functional(spec, base_dir):
    kind = spec["kind"]
    if kind == "pairwise_quadratic":
        return PairwiseSpec.quadratic(spec["lambda_V"], spec["alpha"], spec["sigma"], spec.get("dim", 1))
    amplitude = spec.get("amplitude", 1.0)
    if "dataset" in spec:
        path = (base_dir / spec["dataset"]).resolve()
        if not path.is_file():
            raise ConfigError(f"dataset file {path} does not exist")
        z, w = load_mfnn_dataset(path, spec.get("radius"))
    else:
        syn = spec["synthetic"]
        widths = {len(row) for row in syn["teacher"]}
        if len(widths) != 1:
            raise ConfigError("teacher rows must share one dimension")
        z, w = synthetic_teacher_dataset(syn["m"], syn["teacher"], amplitude, syn.get("seed", 0))
    return MfnnSpec(z, w, amplitude=amplitude, lam=spec.get("lam", 0.0), sigma=spec["sigma"],
                    radius=spec.get("radius"))


def _make_plan(plan, functional, dim, init_mean, init_scale):
    kwargs = {k: plan[k] for k in ("c0", "rate_constant", "max_steps") if k in plan}
    if isinstance(functional, PairwiseSpec):
        if not functional.is_quadratic:
            raise ConfigError("planning needs C_LSI; only quadratic functionals are supported")
        C = plan.get("C_LSI") or quadratic_lsi_constant(functional)
        KL0 = plan.get("KL0", "auto")
        if KL0 == "auto":
            mu0 = GaussianSummary(np.asarray(init_mean), init_scale**2 * np.eye(dim))
            KL0 = kl_gaussian(mu0, quadratic_stationary(functional))
            if not math.isfinite(KL0) or KL0 <= 0:
                raise ConfigError("KL0 = auto needs a nondegenerate initial law different from the target")
        return plan_schedule_pairwise(C, functional.L_V, functional.L_W, functional.sigma, dim,
                                      plan["epsilon"], KL0, **kwargs)
    if "C_LSI" not in plan or "E0" not in plan:
        raise ConfigError("planning for the network functional needs C_LSI and E0")
    f = functional
    return plan_schedule_mfnn(plan["C_LSI"], f.lipschitz_u, f.sigma, dim, plan["epsilon"], plan["E0"],
                              f.M, f.R, f.B, **kwargs)


def load_experiment(config_path, *, seed=None, out_dir=None) -> Experiment:
    """Read, schema-validate and resolve an experiment config file."""
    path = Path(config_path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    try:
        jsonschema.validate(raw, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {where}: {exc.message}") from exc
    base = path.resolve().parent
    functional = _build_functional(raw["functional"], base)
    run = raw["run"]
    dim = functional.dim
    init_mean = run.get("init_mean")
    if init_mean is not None and len(init_mean) != dim:
        raise ConfigError(f"run.init_mean has length {len(init_mean)}, functional dim is {dim}")
    init_mean = tuple(init_mean) if init_mean is not None else (0.0,) * dim
    init_scale = run.get("init_scale", 1.0)

    plan = None
    if "plan" in raw:
        plan = _make_plan(raw["plan"], functional, dim, init_mean, init_scale)
    eta = run.get("eta", plan.eta if plan else None)
    T = run.get("T", plan.T if plan else None)
    if eta is None or T is None:
        raise ConfigError("run.eta and run.T are required unless a plan block is given")
    master_seed = run.get("master_seed", 0) if seed is None else seed
    config = RunConfig(
        eta=eta, T=T, n=run["n"], sigma=functional.sigma, dim=dim,
        batch_size=run.get("batch_size", 1), master_seed=master_seed,
        init_mean=init_mean, init_scale=init_scale,
    )
    method = run.get("method", "vpsa")
    if method == "pmkv" and config.batch_size != 1:
        raise ConfigError("batch_size applies to the virtual particle method only")
    diag = {"trace_every": 1, "energy": True, "oracle": True, "assumptions": True, "independence": False}
    diag.update(raw.get("diagnostics", {}))
    target = Path(out_dir) if out_dir is not None else base / raw.get("output_dir", "out")
    return Experiment(raw, base, functional, config, method, plan, diag, target)


def _oracle_hook(exp: Experiment):
    """Per-record oracle KL/W2 of the exact law and KL of the Gaussian fit, both to the stationary law."""
    f = exp.functional
    quadratic = isinstance(f, PairwiseSpec) and f.is_quadratic and f.lambda_V + f.alpha > 0
    if not (exp.diagnostics["oracle"] and quadratic):
        return None
    target = quadratic_stationary(f)
    laws = affine_recursion_oracle(exp.config, f) if exp.oracle_available else None

    def hook(step, positions):
        out = {}
        if laws is not None:
            out["oracle_kl"] = kl_gaussian(laws[step], target)
            out["oracle_w2"] = w2_gaussian(laws[step], target)
        if positions.shape[0] > f.dim:
            out["fit_kl"] = kl_gaussian(GaussianSummary.fit(positions), target)
        return out

    return hook


def trace_rows(trace, energy_names):
    columns = TRACE_COLUMNS + tuple(energy_names) + ("neg_entropy",) + ORACLE_COLUMNS
    rows = []
    for r in trace.records:
        rows.append(
            [r.step, r.eval_count_cumulative, r.empirical_mean_norm, r.empirical_cov_trace]
            + [r.energy.get(name) for name in energy_names + ("neg_entropy",)]
            + [r.oracle_kl, r.oracle_w2, r.fit_kl]
        )
    return columns, rows


def write_cloud(path, positions, chash, kind="cloud", extra=""):
    cols = tuple(f"x{j}" for j in range(positions.shape[1]))
    _write_csv(path, kind, chash, cols, positions.tolist(), extra)


def run_experiment(config_path, *, seed=None, out_dir=None) -> dict:
    """Run one experiment and write ``trace.csv``, ``cloud.csv``, ``witness.vpw`` and ``summary.json``.

    Returns the summary dictionary.
    """
    started = _dt.datetime.now(_dt.timezone.utc)
    exp = load_experiment(config_path, seed=seed, out_dir=out_dir)
    cfg, f = exp.config, exp.functional
    chash = exp.config_hash
    exp.output_dir.mkdir(parents=True, exist_ok=True)
    hook = _oracle_hook(exp)
    every = exp.diagnostics["trace_every"]
    energy = exp.diagnostics["energy"]

    t0 = time.perf_counter()
    witness = None
    if exp.method == "vpsa":
        cloud, witness, trace = vpsa_run(cfg, f, trace_every=every, trace_energy=energy, on_record=hook)
    else:
        cloud, trace = pmkv_run(cfg, f, trace_every=every, trace_energy=energy, on_record=hook)
    wall = time.perf_counter() - t0

    files = {}
    columns, rows = trace_rows(trace, f.energy_names if energy else ())
    if not energy:
        columns = tuple(c for c in columns if c != "neg_entropy")
        rows = [r[:4] + r[5:] for r in rows]
    method_tag = f" method={exp.method}"
    _write_csv(exp.output_dir / "trace.csv", "trace", chash, columns, rows, method_tag)
    files["trace"] = "trace.csv"
    write_cloud(exp.output_dir / "cloud.csv", cloud.positions, chash, extra=method_tag)
    files["cloud"] = "cloud.csv"
    if witness is not None:
        witness.save(exp.output_dir / "witness.vpw")
        files["witness"] = "witness.vpw"

    last = trace.records[-1]
    summary = {
        "format_version": 1,
        "config_hash": chash,
        "config_file": str(Path(config_path).resolve()),
        "method": exp.method,
        "run": cfg.to_dict(),
        "functional": f.descriptor(),
        "eval_count": trace.eval_count,
        "predicted_eval_count": eval_count(cfg.n, cfg.T, cfg.batch_size) if exp.method == "vpsa" else None,
        "final": {
            "step": last.step,
            "empirical_mean": cloud.positions.mean(axis=0) if len(cloud) else None,
            "empirical_cov_trace": last.empirical_cov_trace,
            "energy": last.energy,
            "oracle_kl": last.oracle_kl,
            "oracle_w2": last.oracle_w2,
            "fit_kl": last.fit_kl,
        },
        "plan": exp.plan.to_dict() if exp.plan else None,
        "epsilon": exp.raw.get("plan", {}).get("epsilon"),
        "assumptions": check_assumptions(f).to_dict() if exp.diagnostics["assumptions"] else None,
        "timing": {
            "started": started.isoformat(),
            "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "wall_time_seconds": wall,
            "record_wall_times": [r.elapsed_wall_time for r in trace.records],
        },
        "files": files,
    }
    if exp.diagnostics["independence"] and witness is not None:
        summary["independence"] = independence_diagnostic(cloud, witness, cfg, f).to_dict()
    summary = _clean(summary)
    (exp.output_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def resample(config_path, witness_file, n_extra, seed_offset, *, out_path, seed=None) -> Path:
    """Draw ``n_extra`` samples from a stored witness path and write them as CSV.

    The config (and ``seed`` override) must be the one the witness was made
    with; otherwise :class:`WitnessMismatchError` is raised.
    """
    exp = load_experiment(config_path, seed=seed)
    witness = WitnessPath.load(witness_file)
    cloud = replay_from_witness(witness, n_extra, exp.config, exp.functional, seed_offset)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_cloud(out_path, cloud.positions, witness.config_hash, kind="resample",
                extra=f" seed_offset={seed_offset} n_extra={n_extra}")
    return out_path


def benchmark_complexity(grid, functional, seed=0, *, batch_size=1, eta=0.01, baseline=True, repeats=3,
                         out_path=None):
    """Measured against predicted estimator calls over a grid of ``(n, T)``.

    Returns ``(rows, fit)`` where ``fit`` holds the log-log slope of wall
    time against the predicted count; each cell's wall time is the best of
    ``repeats`` runs after one warm-up run. Rows are sorted by ``(n, T)``. The
    slope is reported for inspection; wall time at small sizes is dominated
    by fixed overheads, so it is not a pass/fail quantity.
    """
    cells = sorted({(int(n), int(T)) for n, T in grid})
    if not cells:
        raise ConfigError("benchmark grid is empty")
    rows = []
    warm = RunConfig(eta=eta, T=2, n=2, sigma=functional.sigma, dim=functional.dim, batch_size=batch_size)
    vpsa_run(warm, functional, trace_every=None, trace_energy=False)
    for n, T in cells:
        cfg = RunConfig(eta=eta, T=T, n=n, sigma=functional.sigma, dim=functional.dim,
                        batch_size=batch_size, master_seed=seed)
        wall = math.inf
        for _ in range(max(1, repeats)):
            t0 = time.perf_counter()
            res = vpsa_run(cfg, functional, trace_every=None, trace_energy=False)
            wall = min(wall, time.perf_counter() - t0)
        row = {"n": n, "T": T, "predicted_evals": eval_count(n, T, batch_size),
               "measured_evals": res.trace.eval_count, "wall_time": wall}
        if baseline:
            row["pmkv_evals"] = functional.exact_gradient_cost(n) * T
        rows.append(row)
    pred = np.array([r["predicted_evals"] for r in rows], dtype=float)
    wall = np.array([r["wall_time"] for r in rows], dtype=float)
    fit = {"slope": math.nan, "within_15_percent": None, "all_counts_match": all(
        r["predicted_evals"] == r["measured_evals"] for r in rows)}
    ok = (pred > 0) & (wall > 0)
    if np.unique(pred[ok]).size >= 2:
        slope = float(np.polyfit(np.log(pred[ok]), np.log(wall[ok]), 1)[0])
        fit.update(slope=slope, within_15_percent=abs(slope - 1.0) <= 0.15)
    if out_path is not None:
        cols = ["n", "T", "predicted_evals", "measured_evals", "wall_time"] + (["pmkv_evals"] if baseline else [])
        chash = config_hash(RunConfig(eta=eta, T=0, n=0, sigma=functional.sigma, dim=functional.dim,
                                      batch_size=batch_size, master_seed=seed), functional)
        _write_csv(out_path, "bench", chash, cols, [[r[c] for c in cols] for r in rows],
                   f" loglog_slope={fmt(fit['slope'])}")
    return rows, fit
