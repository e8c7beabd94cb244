import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import identity_model, make_model
from corrsel.errors import (
    BudgetError,
    IllConditionedError,
    InvalidGeometryError,
    NotPositiveDefiniteError,
    PreconditionError,
)
from corrsel.model import (
    MeasurementModel,
    SensorGeometry,
    as_selection,
    decompose_covariance,
    exp_covariance,
    fisher_closed_form,
    fisher_truncated,
    fisher_uncorrelated,
    objective_trace_inverse,
    rel_fro,
    selection_from_indices,
)


class TestExpCovariance:
    def test_unit_diagonal(self):
        geom = SensorGeometry(np.array([[0.0, 0.0], [3.0, 4.0], [1.0, 1.0]]), 1.0, 0.1)
        np.testing.assert_array_equal(np.diag(exp_covariance(geom)), 1.0)

    def test_distance_ten_at_rate_point_one(self):
        geom = SensorGeometry(np.array([[0.0, 0.0], [10.0, 0.0]]), 1.0, 0.1)
        assert exp_covariance(geom)[0, 1] == pytest.approx(np.exp(-1.0), abs=1e-12)

    def test_fast_decay_is_nearly_identity(self, rng):
        geom = SensorGeometry.random(10, rng, side=50, corr_param=1e3)
        R = exp_covariance(geom)
        assert np.abs(R - np.eye(10)).max() < 1e-6

    def test_scaled_by_noise_variance(self):
        geom = SensorGeometry(np.array([[0.0, 0.0], [1.0, 0.0]]), 2.5, 0.3)
        R = exp_covariance(geom)
        assert R[0, 0] == 2.5 and R[0, 1] == pytest.approx(2.5 * np.exp(-0.3))
        np.testing.assert_array_equal(R, R.T)

    def test_nonfinite_positions_rejected(self):
        with pytest.raises(InvalidGeometryError):
            SensorGeometry(np.array([[0.0, np.nan], [1.0, 1.0]]))

    def test_lattice_positions_distinct(self, rng):
        geom = SensorGeometry.random(40, rng, side=10, lattice=True)
        assert len({tuple(p) for p in geom.positions}) == 40
        assert np.all(geom.positions == np.round(geom.positions))


class TestDecomposition:
    def test_identity_split(self):
        d = decompose_covariance(np.eye(3))
        assert d.a == pytest.approx(0.5)
        np.testing.assert_allclose(d.s_matrix, 0.5 * np.eye(3), atol=1e-15)

    def test_exp_covariance_split_eigenvalue(self, rng):
        geom = SensorGeometry.random(4, rng, side=10, corr_param=0.1)
        R = exp_covariance(geom)
        d = decompose_covariance(R)
        lam_r = np.linalg.eigvalsh(R)[0]
        assert np.linalg.eigvalsh(d.s_matrix)[0] == pytest.approx(lam_r / 2, rel=1e-10)
        assert rel_fro(d.reconstruct(), R) <= 1e-12

    def test_split_invariance(self):
        model = make_model(3, m=7, n=3)
        d1 = decompose_covariance(model.noise_cov)
        d2 = decompose_covariance(model.noise_cov, a=d1.a / 2)
        for w in ([1, 0, 1, 1, 0, 0, 1], [0] * 7, [1] * 7):
            np.testing.assert_allclose(fisher_closed_form(model, d1, w), fisher_closed_form(model, d2, w),
                                       atol=1e-10, rtol=0)

    def test_indefinite_rejected(self):
        with pytest.raises(NotPositiveDefiniteError):
            decompose_covariance(np.array([[1.0, 2.0], [2.0, 1.0]]))


class TestFisher:
    def test_empty_selection_is_prior(self):
        model = identity_model()
        np.testing.assert_array_equal(fisher_truncated(model, [0, 0]), np.eye(2))

    def test_identity_two_sensors(self):
        J = fisher_truncated(identity_model(), [1, 1])
        np.testing.assert_allclose(J, 2 * np.eye(2))
        assert objective_trace_inverse(J) == pytest.approx(1.0)

    def test_truncated_matches_closed_form_small(self):
        model = make_model(5, m=5, n=2)
        d = decompose_covariance(model.noise_cov)
        for bits in range(32):
            w = [(bits >> k) & 1 for k in range(5)]
            assert rel_fro(fisher_closed_form(model, d, w), fisher_truncated(model, w)) <= 1e-10

    def test_closed_form_full_selection(self):
        model = make_model(8, m=6, n=3)
        d = decompose_covariance(model.noise_cov)
        H = model.obs_matrix
        expected = model.prior_info + H.T @ np.linalg.inv(model.noise_cov) @ H
        assert rel_fro(fisher_closed_form(model, d, np.ones(6)), expected) <= 1e-10

    def test_closed_form_empty_selection(self):
        model = make_model(9, m=6, n=3)
        d = decompose_covariance(model.noise_cov)
        np.testing.assert_allclose(fisher_closed_form(model, d, np.zeros(6)), model.prior_info, atol=1e-10)

    def test_ill_conditioned_block(self):
        R = np.array([[1.0, 1 - 1e-14], [1 - 1e-14, 1.0]]) + 1e-15 * np.eye(2)
        model = MeasurementModel(np.zeros(1), np.eye(1), np.ones((2, 1)), R + np.diag([1e-13, 0]))
        with pytest.raises((IllConditionedError, NotPositiveDefiniteError)):
            fisher_truncated(model, [1, 1])


class TestTraceInverse:
    def test_identity(self):
        assert objective_trace_inverse(np.eye(2)) == pytest.approx(2.0)

    def test_diagonal(self):
        assert objective_trace_inverse(np.diag([2.0, 1.0])) == pytest.approx(1.5)

    def test_matches_eigenvalues(self, rng):
        A = rng.normal(size=(4, 4))
        J = A @ A.T + 0.5 * np.eye(4)
        assert objective_trace_inverse(J) == pytest.approx(np.sum(1 / np.linalg.eigvalsh(J)), abs=1e-10)


class TestUncorrelated:
    def test_single_sensor(self):
        model = MeasurementModel(np.zeros(2), np.eye(2), np.array([[1.0, 2.0], [0.5, 0.0]]), np.eye(2))
        h = model.obs_matrix[0]
        np.testing.assert_allclose(fisher_uncorrelated(model, [1, 0]), np.eye(2) + np.outer(h, h))

    def test_diagonal_noise(self):
        model = identity_model(noise=np.diag([1.0, 4.0]))
        np.testing.assert_allclose(fisher_uncorrelated(model, [1, 1]), np.diag([2.0, 1.25]))

    def test_matches_truncated(self, rng):
        H = rng.normal(size=(8, 3))
        model = MeasurementModel(np.zeros(3), np.eye(3), H, np.diag(rng.uniform(0.5, 2.0, 8)))
        w = rng.integers(0, 2, 8)
        np.testing.assert_allclose(fisher_uncorrelated(model, w), fisher_truncated(model, w), atol=1e-12)

    def test_rejects_correlated(self):
        with pytest.raises(PreconditionError):
            fisher_uncorrelated(make_model(1), np.ones(6))


class TestSelection:
    def test_budget(self):
        with pytest.raises(BudgetError):
            as_selection([1, 1, 1], 3, budget=2)

    def test_non_boolean(self):
        with pytest.raises(ValueError):
            as_selection([0.5, 1, 0], 3)

    def test_from_indices(self):
        np.testing.assert_array_equal(selection_from_indices([0, 3], 4), [1, 0, 0, 1])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 12), n=st.integers(1, 4),
       rho=st.floats(0.02, 2.0))
def test_fisher_properties(seed, m, n, rho):
    model = make_model(seed, m=m, n=n, corr_param=rho)
    rng = np.random.default_rng(seed)
    w = rng.integers(0, 2, m)
    J = fisher_truncated(model, w)
    # closed form agrees and the data term is PSD
    assert rel_fro(fisher_closed_form(model, decompose_covariance(model.noise_cov), w), J) <= 1e-8
    assert np.linalg.eigvalsh(J - model.prior_info)[0] >= -1e-10
    np.testing.assert_allclose(J, J.T, atol=1e-12)
    # one more sensor never hurts
    off = np.flatnonzero(w == 0)
    if off.size:
        w2 = w.copy()
        w2[off[0]] = 1
        assert objective_trace_inverse(fisher_truncated(model, w2)) <= objective_trace_inverse(J) + 1e-12
