"""Run configuration, particle clouds and the stored witness path."""

from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, DivergenceError, WitnessMismatchError

DIVERGENCE_BOUND = 1e12

WITNESS_MAGIC = b"VPWITNS\x00"
WITNESS_FORMAT_VERSION = 1


@dataclass(frozen=True)
class RunConfig:
    """Scalar hyperparameters of one run.

    ``init_mean`` and ``init_scale`` parameterise the isotropic Gaussian
    initial law ``N(init_mean, init_scale**2 I)``.
    """

    eta: float
    T: int
    n: int
    sigma: float
    dim: int = 1
    batch_size: int = 1
    master_seed: int = 0
    init_mean: tuple = None
    init_scale: float = 1.0
    deterministic_flow: bool = False

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        if int(self.dim) != self.dim or self.dim < 1:
            raise ConfigError(f"dim must be a positive integer, got {self.dim}")
        set_("dim", int(self.dim))
        for name in ("T", "n"):
            value = getattr(self, name)
            if int(value) != value or value < 0:
                raise ConfigError(f"{name} must be a nonnegative integer, got {value}")
            set_(name, int(value))
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        set_("batch_size", int(self.batch_size))
        if not 0 <= int(self.master_seed) < 2**64:
            raise ConfigError("master_seed must fit in an unsigned 64-bit integer")
        set_("master_seed", int(self.master_seed))
        if not np.isfinite(self.eta) or self.eta < 0:
            raise ConfigError(f"eta must be finite and >= 0, got {self.eta}")
        if not np.isfinite(self.sigma) or self.sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")
        if self.sigma == 0 and not self.deterministic_flow:
            raise ConfigError("sigma = 0 requires deterministic_flow=True")
        if not np.isfinite(self.init_scale) or self.init_scale < 0:
            raise ConfigError(f"init_scale must be >= 0, got {self.init_scale}")
        set_("eta", float(self.eta))
        set_("sigma", float(self.sigma))
        set_("init_scale", float(self.init_scale))
        if self.init_mean is None:
            mean = (0.0,) * self.dim
        else:
            mean = tuple(float(v) for v in np.atleast_1d(np.asarray(self.init_mean, dtype=float)))
        if len(mean) != self.dim:
            raise ConfigError(f"init_mean has length {len(mean)}, expected dim={self.dim}")
        set_("init_mean", mean)

    def validate_for_run(self):
        if self.T > 0 and self.eta <= 0:
            raise ConfigError("eta must be > 0 when T > 0")

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self) | {"init_mean": list(self.init_mean)}


def config_hash(config: RunConfig, functional) -> str:
    """SHA-256 digest binding a run configuration to a functional."""
    payload = {"run": config.to_dict(), "functional": functional.descriptor()}
    text = json.dumps(payload, sort_keys=True, default=_json_default, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return [float.hex(float(v)) for v in obj.ravel()] + [list(obj.shape)]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot hash {type(obj).__name__}")


def check_finite(positions: np.ndarray, step=None, bound: float = DIVERGENCE_BOUND):
    if positions.size and not (np.isfinite(positions).all() and np.abs(positions).max() <= bound):
        raise DivergenceError(
            f"particle positions diverged (non-finite or |x| > {bound:g})"
            + ("" if step is None else f" at step {step}"),
            step=step,
        )


@dataclass
class ParticleCloud:
    """A set of ``d``-dimensional particle positions."""

    positions: np.ndarray
    step_index: int = 0
    kind: str = "real"
    eval_count: int | None = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim == 1:
            pos = pos[:, None]
        if pos.ndim != 2:
            raise ConfigError("positions must be a (n, d) array")
        if self.kind not in ("real", "virtual"):
            raise ConfigError(f"unknown cloud kind {self.kind!r}")
        check_finite(pos, self.step_index)
        self.positions = pos

    def __len__(self):
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def mean(self) -> np.ndarray:
        return self.positions.mean(axis=0)

    def covariance(self) -> np.ndarray:
        return np.atleast_2d(np.cov(self.positions, rowvar=False, ddof=1))


@dataclass
class WitnessPath:
    """Diagonal trajectory ``Y_k^(k)`` and estimator randomness of a run.

    ``diagonal`` has shape ``(T + 1, batch_size, d)``; ``xi_draws`` has
    shape ``(T, width)`` where ``width`` is ``batch_size`` for functionals
    that draw auxiliary randomness and 0 otherwise.
    """

    diagonal: np.ndarray
    xi_draws: np.ndarray
    master_seed: int
    config_hash: str

    def __post_init__(self):
        self.diagonal = np.ascontiguousarray(self.diagonal, dtype=np.float64)
        if self.diagonal.ndim != 3:
            raise ConfigError("diagonal must have shape (T + 1, batch_size, d)")
        xi = np.ascontiguousarray(self.xi_draws, dtype=np.int64)
        if xi.ndim != 2:
            xi = xi.reshape(self.T, -1) if xi.size else xi.reshape(self.T, 0)
        if xi.shape[0] != self.T:
            raise ConfigError(f"xi_draws has {xi.shape[0]} rows, expected T={self.T}")
        self.xi_draws = xi

    @property
    def T(self) -> int:
        return self.diagonal.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.diagonal.shape[2]

    @property
    def batch_size(self) -> int:
        return self.diagonal.shape[1]

    def check_matches(self, config: RunConfig, functional):
        expected = config_hash(config, functional)
        if expected != self.config_hash:
            raise WitnessMismatchError(
                f"witness was generated under config {self.config_hash[:12]}, "
                f"not {expected[:12]}"
            )

    def to_bytes(self) -> bytes:
        header = {
            "format_version": WITNESS_FORMAT_VERSION,
            "d": self.dim,
            "T": self.T,
            "batch_size": self.batch_size,
            "xi_width": self.xi_draws.shape[1],
            "config_hash": self.config_hash,
            "master_seed": int(self.master_seed),
            "dtype": "<f8",
        }
        head = json.dumps(header, sort_keys=True).encode()
        buf = io.BytesIO()
        buf.write(WITNESS_MAGIC)
        buf.write(struct.pack("<I", len(head)))
        buf.write(head)
        buf.write(self.diagonal.astype("<f8").tobytes(order="C"))
        buf.write(self.xi_draws.astype("<i8").tobytes(order="C"))
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "WitnessPath":
        if data[:8] != WITNESS_MAGIC:
            raise ValueError("not a witness path file")
        (hlen,) = struct.unpack("<I", data[8:12])
        header = json.loads(data[12 : 12 + hlen])
        if header["format_version"] != WITNESS_FORMAT_VERSION:
            raise ValueError(f"unsupported witness format {header['format_version']}")
        T, B, d, width = header["T"], header["batch_size"], header["d"], header["xi_width"]
        off = 12 + hlen
        ndiag = (T + 1) * B * d * 8
        diagonal = np.frombuffer(data, dtype="<f8", count=(T + 1) * B * d, offset=off)
        xi = np.frombuffer(data, dtype="<i8", count=T * width, offset=off + ndiag)
        if off + ndiag + T * width * 8 != len(data):
            raise ValueError("witness file is truncated or has trailing bytes")
        return cls(
            diagonal=diagonal.reshape(T + 1, B, d).astype(np.float64),
            xi_draws=xi.reshape(T, width).astype(np.int64),
            master_seed=header["master_seed"],
            config_hash=header["config_hash"],
        )

    def save(self, path):
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "WitnessPath":
        return cls.from_bytes(Path(path).read_bytes())


@dataclass
class StepRecord:
    step: int
    elapsed_wall_time: float
    eval_count_cumulative: int
    empirical_mean_norm: float
    empirical_cov_trace: float
    energy: dict = field(default_factory=dict)
    oracle_kl: float | None = None
    oracle_w2: float | None = None
    fit_kl: float | None = None


@dataclass
class DiagnosticsTrace:
    """Per-step diagnostics of a run.

    ``eval_count`` is the total number of estimator invocations (VPSA) or
    interaction-gradient evaluations (particle baseline).
    """

    records: list = field(default_factory=list)
    eval_count: int = 0
    method: str = "vpsa"

    def __len__(self):
        return len(self.records)

    @property
    def steps(self) -> np.ndarray:
        return np.array([r.step for r in self.records], dtype=int)

    def column(self, name) -> np.ndarray:
        if name in ("oracle_kl", "oracle_w2", "fit_kl"):
            return np.array([np.nan if getattr(r, name) is None else getattr(r, name) for r in self.records])
        if hasattr(StepRecord, name) or name in StepRecord.__dataclass_fields__:
            return np.array([getattr(r, name) for r in self.records])
        return np.array([r.energy.get(name, np.nan) for r in self.records])
