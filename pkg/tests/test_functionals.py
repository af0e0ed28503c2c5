import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from virtual_particles import (
    ConfigError,
    DatasetError,
    EmptyCloudError,
    MfnnSpec,
    PairwiseSpec,
    QuadraticPotential,
    SmoothPotential,
    batched_estimate,
    check_assumptions,
    load_mfnn_dataset,
    mfnn_energy,
    mfnn_estimate,
    mfnn_exact_gradient,
    mfnn_lipschitz_constant,
    pairwise_energy,
    pairwise_estimate,
    pairwise_exact_gradient,
)


def zero_spec(dim=2):
    zero = SmoothPotential(lambda x: np.zeros_like(x), 1.0, lambda x: np.zeros(np.shape(x)[:-1]))
    return PairwiseSpec(zero, zero, 1.0, dim)


# ---- pairwise estimator ------------------------------------------------------


def test_pairwise_estimate_at_coincident_points():
    spec = PairwiseSpec.quadratic(1.0, 1.0, 1.0, dim=2)
    x = np.array([0.3, -1.2])
    assert np.allclose(pairwise_estimate(x, x, spec), -x)


def test_pairwise_estimate_hand_value():
    spec = PairwiseSpec.quadratic(2.0, 0.5, 1.0)
    assert pairwise_estimate([1.0], [-1.0], spec)[0] == pytest.approx(-3.0, abs=0)


def test_pairwise_estimate_zero_potentials():
    assert np.array_equal(pairwise_estimate([1.0, 2.0], [3.0, 4.0], zero_spec()), [0.0, 0.0])


def test_pairwise_estimate_rows():
    spec = PairwiseSpec.quadratic(2.0, 0.5, 1.0)
    out = spec.estimate(np.array([[1.0], [0.0]]), [-1.0])
    assert out.shape == (2, 1)
    assert out[:, 0].tolist() == [-3.0, -0.5]


def test_exact_gradient_singleton():
    spec = PairwiseSpec.quadratic(2.0, 3.0, 1.0)
    assert pairwise_exact_gradient([0.7], [[0.7]], spec)[0] == pytest.approx(1.4)


def test_exact_gradient_symmetric_cloud():
    spec = PairwiseSpec.quadratic(0.0, 1.0, 1.0)
    assert pairwise_exact_gradient([0.0], [[-1.0], [1.0]], spec)[0] == 0.0


def test_exact_gradient_empty_cloud():
    spec = PairwiseSpec.quadratic(1.0, 1.0, 1.0)
    with pytest.raises(EmptyCloudError):
        pairwise_exact_gradient([0.0], np.empty((0, 1)), spec)


def test_general_interaction_matches_quadratic():
    quad = PairwiseSpec.quadratic(1.3, 0.7, 1.0, dim=2)
    general = PairwiseSpec(
        SmoothPotential(lambda x: 1.3 * x, 1.3), SmoothPotential(lambda v: 0.7 * v, 0.7), 1.0, dim=2
    )
    rng = np.random.default_rng(1)
    x, cloud = rng.normal(size=2), rng.normal(size=(9, 2))
    assert np.allclose(general.exact_gradient(x, cloud), quad.exact_gradient(x, cloud), rtol=1e-13)
    assert np.allclose(general.estimate(x, cloud[0]), quad.estimate(x, cloud[0]), rtol=1e-13)


def test_non_odd_interaction_rejected():
    with pytest.raises(ConfigError):
        PairwiseSpec(QuadraticPotential(1.0), SmoothPotential(lambda v: v * v + 1.0, 1.0), 1.0)


def test_smoothness_must_be_positive():
    with pytest.raises(ConfigError):
        SmoothPotential(lambda x: x, 0.0)


@pytest.mark.parametrize("make", ["pairwise", "mfnn"])
def test_unbiasedness_identity(make, small_mfnn):
    rng = np.random.default_rng(5)
    spec = PairwiseSpec.quadratic(0.8, 1.7, 1.0, dim=2) if make == "pairwise" else small_mfnn
    cloud = rng.normal(size=(30, 2))
    for _ in range(10):
        x = rng.normal(scale=2, size=2)
        target = -spec.exact_gradient(x, cloud)
        if make == "pairwise":
            terms = spec.estimate_many(x, cloud)
        else:
            terms = np.array([[spec.estimate(x, y, i) for i in range(spec.m)] for y in cloud]).reshape(-1, 2)
        scale = max(1.0, np.abs(terms).max())
        assert np.max(np.abs(terms.mean(axis=0) - target)) <= 1e-12 * scale


def test_pairwise_lipschitz_equality_in_1d():
    spec = PairwiseSpec.quadratic(1.2, 0.4, 1.0)
    rng = np.random.default_rng(2)
    x1, x2, y = rng.normal(size=(3, 100, 1))
    for a, b, w in zip(x1, x2, y):
        lhs = abs(spec.estimate(a, w) - spec.estimate(b, w))[0]
        assert lhs == pytest.approx(1.6 * abs(a - b)[0], rel=1e-12)


# ---- energies ---------------------------------------------------------------


def test_pairwise_energy_examples():
    spec = PairwiseSpec.quadratic(2.0, 2.0, 1.0)
    e = pairwise_energy(np.zeros((4, 1)), spec)
    assert e.v_part == 0 and e.w_part == 0 and math.isnan(e.neg_entropy)
    e = pairwise_energy([[-1.0], [1.0]], spec)
    assert e.v_part == pytest.approx(1.0) and e.w_part == pytest.approx(1.0)
    e = pairwise_energy(0.0 * np.array([[-1.0], [1.0]]), spec)
    assert e.v_part == 0 and e.w_part == 0


def test_general_w_part_includes_diagonal():
    spec = PairwiseSpec(
        QuadraticPotential(0.0),
        SmoothPotential(lambda v: 2.0 * v, 2.0, lambda v: np.sum(v * v, axis=-1)),
        1.0,
    )
    e = pairwise_energy([[-1.0], [1.0]], spec)
    assert e.w_part == pytest.approx(1.0)


def test_energy_permutation_invariance(small_mfnn):
    rng = np.random.default_rng(4)
    cloud = rng.normal(size=(25, 2))
    perm = rng.permutation(25)
    spec = PairwiseSpec.quadratic(1.0, 0.3, 1.0, dim=2)
    assert np.allclose(pairwise_energy(cloud, spec), pairwise_energy(cloud[perm], spec), rtol=1e-12)
    assert np.allclose(mfnn_energy(cloud, small_mfnn), mfnn_energy(cloud[perm], small_mfnn), rtol=1e-12)


def test_neg_entropy_of_gaussian_fit():
    rng = np.random.default_rng(0)
    cloud = rng.normal(scale=2.0, size=(200_000, 1))
    expected = -0.5 * math.log(2 * math.pi * math.e * 4.0)
    assert pairwise_energy(cloud, PairwiseSpec.quadratic(1, 1, 1)).neg_entropy == pytest.approx(expected, abs=0.01)


# ---- network ----------------------------------------------------------------


def one_point(w1, lam=0.0):
    return MfnnSpec(np.array([[1.0]]), np.array([w1]), amplitude=1.0, lam=lam, sigma=1.0, radius=1.0)


def test_mfnn_estimate_hand_values():
    assert mfnn_estimate([0.0], [0.0], 0, one_point(0.0))[0] == 0.0
    assert mfnn_estimate([0.0], [0.0], 0, one_point(0.5))[0] == pytest.approx(1.0, abs=1e-15)


def test_mfnn_perfect_fit_gives_ridge_drift():
    # teacher y with h(z, y) = w for every z
    z = np.array([[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]])
    y = np.array([0.2, -0.4])
    w = np.tanh(z @ y)
    x = np.array([0.3, 0.9])
    spec0 = MfnnSpec(z, w, lam=0.0, sigma=1.0)
    spec = MfnnSpec(z, w, lam=0.25, sigma=1.0)
    for i in range(3):
        assert np.allclose(mfnn_estimate(x, y, i, spec0), 0.0, atol=1e-16)
        assert np.allclose(mfnn_estimate(x, y, i, spec), -0.25 * x, atol=1e-16)
    # a cloud predicting exactly
    assert np.allclose(mfnn_exact_gradient(x, [y], spec0), 0.0, atol=1e-16)
    assert mfnn_energy([y], spec0)[:2] == (0.0, 0.0)


def test_mfnn_index_range():
    with pytest.raises(IndexError):
        mfnn_estimate([0.0], [0.0], 1, one_point(0.1))
    with pytest.raises(IndexError):
        mfnn_estimate([0.0], [0.0], -1, one_point(0.1))


def test_mfnn_double_counted_cloud(small_mfnn):
    rng = np.random.default_rng(8)
    cloud, x = rng.normal(size=(7, 2)), rng.normal(size=2)
    twice = np.concatenate([cloud, cloud])
    assert np.allclose(mfnn_exact_gradient(x, twice, small_mfnn), mfnn_exact_gradient(x, cloud, small_mfnn),
                       rtol=1e-13, atol=1e-15)


def test_mfnn_loss_hand_value():
    u = math.atanh(0.3)
    spec = MfnnSpec(np.array([[1.0]]), np.array([0.5]), sigma=1.0, radius=1.0)
    loss, ridge, _ = mfnn_energy([[u]], spec)
    assert loss == pytest.approx(0.04) and ridge == 0.0


def test_mfnn_empty_dataset_rejected():
    with pytest.raises(ConfigError):
        MfnnSpec(np.empty((0, 2)), np.empty(0))


def test_mfnn_radius_violation_lists_rows():
    with pytest.raises(DatasetError) as err:
        MfnnSpec(np.array([[0.1], [3.0], [0.2]]), np.array([0.0, 0.0, 2.0]), radius=1.0)
    assert err.value.rows == [1, 2]


def test_mfnn_constants():
    spec = MfnnSpec(np.array([[3.0, 4.0]]), np.array([1.0]), amplitude=2.0, lam=0.1)
    assert spec.R == 5.0 and spec.B == 2.0 and spec.M == 2.0
    assert spec.L == pytest.approx(2.0 * 4 / (3 * math.sqrt(3)) * 5.0)
    assert spec.lipschitz_u == pytest.approx((2 + 5) * spec.L * 5 + 0.1 + 4 * 25)
    assert mfnn_lipschitz_constant(1, 2, 3, 0.5, 4) == (1 + 2) * 3 * 2 + 0.5 + 16 * 4


def test_mfnn_estimator_bound(small_mfnn):
    spec = small_mfnn
    rng = np.random.default_rng(9)
    bound = 2 * (spec.B + spec.R) * spec.M * spec.R
    for _ in range(200):
        x, y = rng.normal(scale=3, size=(2, 2))
        i = int(rng.integers(spec.m))
        g = spec.estimate(x, y, i) + spec.lam * x
        assert np.linalg.norm(g) <= bound


def test_mfnn_estimator_lipschitz(small_mfnn):
    spec = small_mfnn
    rng = np.random.default_rng(10)
    for _ in range(200):
        x1, x2, y = rng.normal(scale=2, size=(3, 2))
        i = int(rng.integers(spec.m))
        lhs = np.linalg.norm(spec.estimate(x1, y, i) - spec.estimate(x2, y, i))
        assert lhs <= spec.lipschitz_u * np.linalg.norm(x1 - x2) * (1 + 1e-12)


def test_batched_estimate_averages(small_mfnn):
    rng = np.random.default_rng(11)
    x, ys = rng.normal(size=2), rng.normal(size=(4, 2))
    xis = [0, 3, 3, 5]
    manual = np.mean([small_mfnn.estimate(x, ys[b], xis[b]) for b in range(4)], axis=0)
    assert np.allclose(batched_estimate(small_mfnn, x, ys, xis), manual, rtol=1e-14)
    assert np.array_equal(batched_estimate(small_mfnn, x, ys[:1], xis[:1]), small_mfnn.estimate(x, ys[0], 0))


def test_mfnn_predict_matches_mean_activation(small_mfnn):
    rng = np.random.default_rng(12)
    cloud = rng.normal(size=(5, 2))
    z = small_mfnn.features[2]
    assert small_mfnn.predict(cloud)[2] == pytest.approx(np.mean(np.tanh(cloud @ z)))


# ---- assumptions ------------------------------------------------------------


def test_weak_interaction_pass_example():
    report = check_assumptions(PairwiseSpec.quadratic(1.0, 0.1, 1.0))
    check = report["weak_interaction"]
    assert check.passed and check.threshold == pytest.approx(0.55)
    assert report.constants["C_LSI"] == pytest.approx(1 / 2.2)
    assert report.passed


def test_weak_interaction_fail_reports_margin():
    report = check_assumptions(PairwiseSpec.quadratic(0.1, 5.0, 1.0), C_LSI=1.0)
    check = report["weak_interaction"]
    assert check.passed is False and check.margin == pytest.approx(0.25 - 5.0)
    assert not report.passed
    assert '"passed": false' in report.to_json()


def test_weak_interaction_skipped_without_constant():
    spec = PairwiseSpec(SmoothPotential(lambda x: x, 1.0), QuadraticPotential(0.2), 1.0)
    assert check_assumptions(spec)["weak_interaction"].passed is None


def test_mfnn_assumptions_boundary_pass():
    spec = MfnnSpec(np.array([[0.6, 0.8], [0.1, 0.0]]), np.array([1.0, -0.3]), sigma=1.0, radius=1.0)
    report = check_assumptions(spec)
    assert report["feature_norm_bound"].passed and report["label_bound"].passed
    assert report["activation_bound"].passed and report["activation_gradient_bound"].passed
    assert report["activation_gradient_lipschitz"].passed
    assert report.passed


# ---- dataset ingestion -------------------------------------------------------


def test_load_dataset(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("z1,z2,w\n0.1,0.2,0.5\n0.3,-0.4,0.1\n")
    z, w = load_mfnn_dataset(p)
    assert z.shape == (2, 2) and w.tolist() == [0.5, 0.1]


def test_load_dataset_requires_header(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("0.1,0.2,0.5\n")
    with pytest.raises(DatasetError):
        load_mfnn_dataset(p)


def test_load_dataset_rejects_rows(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("z,w\n0.5,0.5\n2.0,0.1\n0.1,-3\n1.0,1.0\n")
    with pytest.raises(DatasetError) as err:
        load_mfnn_dataset(p, radius=1.0)
    assert err.value.rows == [2, 3]
    assert "[2, 3]" in str(err.value)


def test_load_dataset_non_numeric(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("z,w\n0.5,abc\n")
    with pytest.raises(DatasetError):
        load_mfnn_dataset(p)


# ---- properties ---------------------------------------------------------------

finite = st.floats(-5, 5, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=12), st.tuples(finite, finite),
       st.floats(0, 3), st.floats(0, 3))
def test_pairwise_unbiasedness_property(cloud, x, lam_v, alpha):
    spec = PairwiseSpec.quadratic(lam_v, alpha, 1.0, dim=2)
    cloud, x = np.array(cloud), np.array(x)
    terms = spec.estimate_many(x, cloud)
    scale = max(1.0, np.abs(terms).max())
    assert np.max(np.abs(terms.mean(axis=0) + spec.exact_gradient(x, cloud))) <= 1e-12 * scale
