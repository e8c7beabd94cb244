import numpy as np
import pytest

from corrsel.errors import IllConditionedError
from corrsel.model import MeasurementModel, fisher_truncated, objective_trace_inverse
from corrsel.oracle import finite_difference_jacobian
from corrsel.schedule import DynamicalSystem
from corrsel.tracksim import (
    PowerSensor,
    TrackConfig,
    Wna4State,
    ekf_step,
    empirical_mse,
    monte_carlo_mse,
    power_jacobian,
    power_measure,
)


def test_wna_matrices():
    wna = Wna4State(dt=2.0, q=0.5)
    np.testing.assert_array_equal(wna.F, [[1, 0, 2, 0], [0, 1, 0, 2], [0, 0, 1, 0], [0, 0, 0, 1]])
    a, b = 8 / 3, 2.0
    np.testing.assert_allclose(wna.Q, 0.5 * np.array([[a, 0, b, 0], [0, a, 0, b], [b, 0, 2, 0], [0, b, 0, 2]]))


def test_measure_at_sensor():
    assert PowerSensor((3.0, 4.0), 1e4).measure([3.0, 4.0, 0, 0]) == pytest.approx(100.0)


def test_measure_unit():
    assert PowerSensor((0.0, 0.0), 4.0).measure([1.0, np.sqrt(2.0), 0, 0]) == pytest.approx(1.0)


def test_measure_decreasing():
    d = np.linspace(0, 30, 50)
    vals = [PowerSensor((0.0, 0.0)).measure([x, 0, 0, 0]) for x in d]
    assert np.all(np.diff(vals) < 0)


def test_jacobian_at_sensor_is_zero():
    np.testing.assert_array_equal(PowerSensor((2.0, 2.0)).jacobian([2.0, 2.0, 1.0, 1.0]), 0.0)


def test_jacobian_finite_differences():
    rng = np.random.default_rng(0)
    pos = rng.uniform(0, 50, size=(6, 2))
    for _ in range(10):
        x = np.concatenate([rng.uniform(0, 50, 2), rng.normal(size=2)])
        fd = finite_difference_jacobian(lambda z: power_measure(pos, 1e4, z), x)
        an = power_jacobian(pos, 1e4, x)
        np.testing.assert_array_equal(an[:, 2:], 0.0)
        np.testing.assert_allclose(an, fd, rtol=1e-5, atol=1e-9)


def _linear_sys(H, R, P0=None, Q=None):
    n = H.shape[1]
    return DynamicalSystem(np.eye(n), np.zeros((n, n)) if Q is None else Q, R, np.zeros(n),
                           np.eye(n) if P0 is None else P0, obs_matrix=H)


def test_ekf_prediction_only():
    wna = Wna4State()
    sys = DynamicalSystem(wna.F, wna.Q, np.eye(2), np.zeros(4), np.eye(4), jacobian=lambda x: np.zeros((2, 4)),
                          measure=lambda x: np.zeros(2))
    P = np.diag([1.0, 2.0, 0.1, 0.3])
    x, P1 = ekf_step(sys, np.ones(4), P, [0, 0], np.zeros(0))
    np.testing.assert_allclose(P1, wna.F @ P @ wna.F.T + wna.Q)
    np.testing.assert_allclose(x, wna.F @ np.ones(4))


def test_ekf_scalar_kalman():
    sys = _linear_sys(np.array([[2.0], [1.0]]), np.diag([0.5, 1.0]), Q=np.array([[0.1]]))
    x, P = ekf_step(sys, np.array([1.0]), np.array([[2.0]]), [1, 0], np.array([3.0]))
    p = 2.0 + 0.1
    k = p * 2.0 / (4.0 * p + 0.5)
    assert x[0] == pytest.approx(1.0 + k * (3.0 - 2.0), abs=1e-10)
    assert P[0, 0] == pytest.approx((1 - 2.0 * k) * p, abs=1e-10)


def test_ekf_uses_truncated_block():
    R = np.array([[1.0, 0.6, 0.3], [0.6, 1.0, 0.5], [0.3, 0.5, 1.0]])
    H = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    sys = _linear_sys(H, R)
    _, P = ekf_step(sys, np.zeros(2), np.eye(2), [1, 0, 1], np.zeros(2))
    model = MeasurementModel(np.zeros(2), np.eye(2), H, R)
    np.testing.assert_allclose(np.linalg.inv(P), fisher_truncated(model, [1, 0, 1]), atol=1e-10)


def test_ekf_information_never_lost():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(3, 3))
    R = A @ A.T + np.eye(3)
    sys = _linear_sys(rng.normal(size=(3, 2)), R, Q=0.1 * np.eye(2))
    P0 = np.array([[1.0, 0.2], [0.2, 0.5]])
    _, P = ekf_step(sys, np.zeros(2), P0, [1, 1, 0], rng.normal(size=2))
    pred = P0 + 0.1 * np.eye(2)
    assert np.linalg.eigvalsh(pred - P)[0] >= -1e-12
    np.testing.assert_allclose(P, P.T)


def test_ekf_singular_innovation():
    sys = _linear_sys(np.zeros((2, 1)), np.array([[1.0, 1.0], [1.0, 1.0]]), P0=np.eye(1))
    with pytest.raises(IllConditionedError):
        ekf_step(sys, np.zeros(1), np.eye(1), [1, 1], np.zeros(2))


def test_ekf_measurement_count_checked():
    sys = _linear_sys(np.eye(2), np.eye(2))
    with pytest.raises(ValueError):
        ekf_step(sys, np.zeros(2), np.eye(2), [1, 1], np.zeros(1))


def test_noiseless_tracking_converges():
    # no process noise and (numerically) exact measurements the filter knows to trust
    cfg = TrackConfig(m=6, q=0.0, noise_var=1e-6, measurement_noise=False, steps=30, sensor_budget=6, tau=5)
    mse = monte_carlo_mse(cfg, "all-on", trials=5, seed=3).per_step_mse
    assert np.all(np.diff(mse[2:]) < 0)
    assert mse[-1] < 1e-4 * mse[0]


def test_monte_carlo_deterministic_and_paired():
    cfg = TrackConfig(m=8, steps=6, tau=3, sensor_budget=1)
    a = monte_carlo_mse(cfg, "random", 3, seed=11, keep_first=True)
    b = monte_carlo_mse(cfg, "random", 3, seed=11)
    np.testing.assert_array_equal(a.per_step_mse, b.per_step_mse)
    g = monte_carlo_mse(cfg, "greedy", 3, seed=11, keep_first=True)
    # same truth trajectory regardless of scheduler
    np.testing.assert_array_equal(a.first_run.truth, g.first_run.truth)
    for run in (a.first_run, g.first_run):
        for P in run.covariances:
            np.testing.assert_allclose(P, P.T, atol=1e-12)
            assert np.linalg.eigvalsh(P)[0] >= -1e-12
        for sched in run.schedules:
            assert sched.feasible()


def test_monte_carlo_rejects_zero_trials():
    with pytest.raises(ValueError):
        monte_carlo_mse(TrackConfig(), "greedy", 0, seed=0)


def test_empirical_mse_matches_theory():
    rng = np.random.default_rng(2)
    H = rng.normal(0, 2**-0.25, size=(5, 2))
    A = rng.normal(size=(5, 5))
    model = MeasurementModel(np.full(2, 10.0), np.eye(2), H, A @ A.T / 5 + np.eye(5))
    w = [1, 1, 0, 1, 0]
    theory = objective_trace_inverse(fisher_truncated(model, w))
    assert empirical_mse(model, w, trials=40000, seed=1) == pytest.approx(theory, rel=0.03)
    assert empirical_mse(model, np.zeros(5), trials=40000, seed=1) == pytest.approx(2.0, rel=0.03)
