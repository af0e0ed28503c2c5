import numpy as np
import pytest

from virtual_particles import (
    ConfigError,
    DiagnosticsTrace,
    DivergenceError,
    ParticleCloud,
    RunConfig,
    WitnessMismatchError,
    WitnessPath,
    config_hash,
    vpsa_run,
)


def test_config_defaults_and_coercion():
    c = RunConfig(eta=0.1, T=3, n=2, sigma=1.0, dim=2)
    assert c.init_mean == (0.0, 0.0)
    assert c.batch_size == 1 and c.master_seed == 0
    assert RunConfig(eta=0.1, T=3.0, n=2, sigma=1).T == 3


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(eta=-0.1),
        dict(eta=float("nan")),
        dict(T=-1),
        dict(T=1.5),
        dict(n=-2),
        dict(sigma=-1.0),
        dict(sigma=0.0),
        dict(batch_size=0),
        dict(dim=0),
        dict(master_seed=-1),
        dict(master_seed=2**64),
        dict(init_mean=[1.0, 2.0]),
        dict(init_scale=-1.0),
    ],
)
def test_config_rejects(kwargs):
    base = dict(eta=0.1, T=3, n=2, sigma=1.0)
    with pytest.raises(ConfigError):
        RunConfig(**(base | kwargs))


def test_deterministic_flow_flag():
    c = RunConfig(eta=0.1, T=3, n=2, sigma=0.0, deterministic_flow=True)
    assert c.sigma == 0.0


def test_eta_zero_needs_T_zero_at_run_time(quad):
    RunConfig(eta=0.0, T=0, n=1, sigma=1.0).validate_for_run()
    with pytest.raises(ConfigError):
        vpsa_run(RunConfig(eta=0.0, T=2, n=1, sigma=1.0), quad)


def test_config_hash_sensitivity(quad):
    c = RunConfig(eta=0.1, T=3, n=2, sigma=1.0)
    h = config_hash(c, quad)
    assert h == config_hash(RunConfig(eta=0.1, T=3, n=2, sigma=1.0), quad)
    assert h != config_hash(c.replace(master_seed=1), quad)
    assert h != config_hash(c.replace(eta=0.1 + 1e-16), quad)
    from virtual_particles import PairwiseSpec

    assert h != config_hash(c, PairwiseSpec.quadratic(1.0, 0.5000001, 1.0))


def test_particle_cloud_checks():
    cloud = ParticleCloud([1.0, 2.0, 3.0])
    assert cloud.positions.shape == (3, 1) and len(cloud) == 3 and cloud.dim == 1
    assert cloud.mean()[0] == 2.0
    with pytest.raises(DivergenceError):
        ParticleCloud([[np.nan]])
    with pytest.raises(DivergenceError):
        ParticleCloud([[2e12]])
    with pytest.raises(ConfigError):
        ParticleCloud([[1.0]], kind="ghost")


def _witness(T=4, B=2, d=3, width=2):
    rng = np.random.default_rng(0)
    return WitnessPath(rng.normal(size=(T + 1, B, d)), rng.integers(0, 9, size=(T, width)), 2**63 + 5, "ab" * 32)


def test_witness_round_trip_bit_exact(tmp_path):
    w = _witness()
    back = WitnessPath.from_bytes(w.to_bytes())
    assert back.diagonal.tobytes() == w.diagonal.tobytes()
    assert np.array_equal(back.xi_draws, w.xi_draws)
    assert back.master_seed == w.master_seed and back.config_hash == w.config_hash
    w.save(tmp_path / "w.vpw")
    assert WitnessPath.load(tmp_path / "w.vpw").to_bytes() == w.to_bytes()


def test_witness_header_layout():
    data = _witness(T=2, B=1, d=1, width=0).to_bytes()
    assert data[:8] == b"VPWITNS\x00"
    import json
    import struct

    (hlen,) = struct.unpack("<I", data[8:12])
    header = json.loads(data[12 : 12 + hlen])
    assert header["format_version"] == 1 and header["T"] == 2 and header["d"] == 1
    assert len(data) == 12 + hlen + 3 * 8


def test_witness_rejects_bad_bytes():
    data = _witness().to_bytes()
    with pytest.raises(ValueError):
        WitnessPath.from_bytes(b"garbage!" + data[8:])
    with pytest.raises(ValueError):
        WitnessPath.from_bytes(data[:-3])
    with pytest.raises(ValueError):
        WitnessPath.from_bytes(data + b"\x00")


def test_witness_shape_validation():
    with pytest.raises(ConfigError):
        WitnessPath(np.zeros((3, 1)), np.zeros((2, 0)), 0, "x")
    with pytest.raises(ConfigError):
        WitnessPath(np.zeros((3, 1, 1)), np.zeros((5, 1)), 0, "x")
    w = WitnessPath(np.zeros((1, 1, 2)), np.zeros(0), 0, "x")
    assert w.T == 0 and w.xi_draws.shape == (0, 0)


def test_witness_check_matches(quad):
    c = RunConfig(eta=0.1, T=2, n=1, sigma=1.0)
    _, w, _ = vpsa_run(c, quad)
    w.check_matches(c, quad)
    with pytest.raises(WitnessMismatchError):
        w.check_matches(c.replace(master_seed=3), quad)


def test_trace_columns(quad):
    _, _, trace = vpsa_run(RunConfig(eta=0.1, T=4, n=5, sigma=1.0), quad, trace_every=2)
    assert isinstance(trace, DiagnosticsTrace)
    assert list(trace.steps) == [0, 2, 4]
    assert np.all(np.diff(trace.column("eval_count_cumulative")) >= 0)
    assert trace.column("v_part").shape == (3,)
    assert np.all(np.isnan(trace.column("oracle_kl")))
