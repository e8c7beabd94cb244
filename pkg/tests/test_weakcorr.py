import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_model
from corrsel.errors import NotPositiveDefiniteError
from corrsel.model import MeasurementModel, fisher_truncated
from corrsel.oracle import exhaustive_search
from corrsel.weakcorr import (
    TraceMaxProblem,
    bilinear_solve,
    build_trace_max,
    fisher_weak,
    omega_kronecker,
    trace_bound,
    trace_bound_check,
    weak_decomposition,
    weak_error_order,
)


def test_empty_selection():
    model = make_model(0)
    np.testing.assert_array_equal(fisher_weak(model, np.zeros(6)), model.prior_info)


def test_diagonal_noise_is_exact():
    rng = np.random.default_rng(1)
    model = MeasurementModel(np.zeros(2), np.eye(2), rng.normal(size=(5, 2)), np.diag(rng.uniform(1, 3, 5)))
    w = [1, 0, 1, 1, 0]
    np.testing.assert_allclose(fisher_weak(model, w), fisher_truncated(model, w), atol=1e-12)


def test_full_selection_is_exact():
    model = make_model(2, m=6, n=3, corr_param=0.05)
    np.testing.assert_allclose(fisher_weak(model, np.ones(6)), fisher_truncated(model, np.ones(6)), atol=1e-10)


def test_hadamard_equals_diagonal_sandwich():
    model = make_model(3, m=7)
    w = np.array([1, 1, 0, 0, 1, 0, 1])
    Rinv = model.noise_info
    np.testing.assert_array_equal(np.outer(w, w) * Rinv, np.diag(w) @ Rinv @ np.diag(w))


def test_decomposition_reconstructs():
    model = make_model(4, m=6, corr_param=0.3)
    d = weak_decomposition(model.noise_cov)
    np.testing.assert_allclose(d.covariance(), model.noise_cov, atol=1e-12)
    np.testing.assert_array_equal(np.diag(d.upsilon), 0.0)
    assert d.epsilon == pytest.approx(np.abs(model.noise_cov - np.diag(np.diag(model.noise_cov))).max())


def test_zero_epsilon_error_vanishes():
    model = make_model(5, m=6)
    d = weak_decomposition(model.noise_cov)
    assert weak_error_order(model, d, [1, 0, 1, 0, 1, 0], [0.0]) == [0.0]


def test_single_sensor_error_is_second_order():
    model = make_model(6, m=4)
    d = weak_decomposition(model.noise_cov)
    eps = [1e-2, 5e-3, 2.5e-3, 1.25e-3]
    e = np.array(weak_error_order(model, d, [0, 1, 0, 0], eps))
    assert np.all(e > 0)
    scaled = e / np.square(eps)
    assert scaled.max() / scaled.min() < 1.1


def test_error_ratio_quadratic():
    model = make_model(7, m=6)
    d = weak_decomposition(model.noise_cov)
    e = weak_error_order(model, d, [1, 1, 0, 1, 0, 0], [1e-2, 5e-3, 2.5e-3])
    for a, b in zip(e, e[1:]):
        assert 3.5 <= a / b <= 4.5


def test_indefinite_epsilon_rejected():
    model = make_model(8, m=5, corr_param=0.01)
    d = weak_decomposition(model.noise_cov)
    with pytest.raises(NotPositiveDefiniteError):
        weak_error_order(model, d, np.ones(5), [50 * d.epsilon])


def test_identity_noise_omega():
    rng = np.random.default_rng(9)
    H = rng.normal(size=(5, 3))
    model = MeasurementModel(np.zeros(3), np.eye(3), H, np.eye(5))
    np.testing.assert_allclose(build_trace_max(model, 2).omega, np.diag(np.sum(H**2, axis=1)), atol=1e-12)


def test_omega_kronecker_form():
    model = make_model(10, m=8, n=3, corr_param=0.2)
    np.testing.assert_allclose(omega_kronecker(model), build_trace_max(model, 3, verify=False).omega, atol=1e-12)


def test_diagonal_omega_picks_largest():
    prob = TraceMaxProblem(np.diag([3.0, 1.0, 5.0, 2.0, 4.0]), 2, 0.0)
    w, val = bilinear_solve(prob, starts=5, seed=0)
    np.testing.assert_array_equal(w, [0, 0, 1, 0, 1])
    assert val == pytest.approx(9.0)


def test_bilinear_vs_exhaustive():
    exact = 0
    for k in range(50):
        model = make_model(100 + k, m=10, n=2, corr_param=0.5)
        s = 2 + k % 4
        prob = build_trace_max(model, s)
        w, val = bilinear_solve(prob, starts=10, seed=k)
        best = exhaustive_search(model, s, objective="quadratic_omega").best_value
        assert set(np.unique(w)) <= {0, 1} and w.sum() <= s
        assert val <= best + 1e-9
        exact += val >= best - 1e-9
    assert exact >= 25


def test_bilinear_fixed_point():
    model = make_model(11, m=10, corr_param=0.5)
    prob = build_trace_max(model, 3)
    w, val = bilinear_solve(prob, starts=10, seed=0)
    w2, val2 = bilinear_solve(prob, starts=0, init=w)
    assert val2 == pytest.approx(val, abs=1e-12)


def test_trace_bound_examples():
    assert trace_bound(np.eye(2)) == pytest.approx((2.0, 2.0))
    lhs, rhs = trace_bound(np.diag([2.0, 1.0]))
    assert lhs == pytest.approx(1.5) and rhs == pytest.approx(4 / 3)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(2, 10), n=st.integers(1, 4))
def test_trace_fisher_properties(seed, m, n):
    model = make_model(seed, m=m, n=n, corr_param=0.3)
    prob = build_trace_max(model, min(3, m))
    assert np.linalg.eigvalsh(prob.omega)[0] >= -1e-9
    w = np.random.default_rng(seed).integers(0, 2, m)
    assert prob.value(w) + prob.prior_trace == pytest.approx(np.trace(fisher_weak(model, w)), abs=1e-10)
    lhs, rhs = trace_bound_check(model, w)
    assert lhs >= rhs - 1e-10
