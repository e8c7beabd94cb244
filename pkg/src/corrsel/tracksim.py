"""Target-tracking testbed and Monte Carlo error evaluation.

A target follows a white-noise-acceleration model and is observed by
power-attenuation sensors h_i(x) = sqrt(P0 / (1 + ‖(x1, x2) − β_i‖²)) whose
noise is spatially correlated through the exponential kernel. Every τ steps
a scheduler picks the sensor activations for the next window, and an
extended Kalman filter processes the active measurements with the truncated
noise block R_w.

The static counterpart, :func:`empirical_mse`, draws x ~ N(μ, Σ) and applies
the linear MMSE estimator to the selected measurements.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from corrsel.errors import IllConditionedError
from corrsel.model import COND_LIMIT, MeasurementModel, SensorGeometry, as_selection, exp_covariance, sym
from corrsel.schedule import DynamicalSystem, Schedule, greedy_schedule, random_schedule

SCHEDULERS = ("greedy", "random", "all-on")


@dataclass(frozen=True)
class Wna4State:
    """White-noise-acceleration dynamics for the state (x1, x2, v1, v2)."""

    dt: float = 1.0
    q: float = 0.01

    @property
    def F(self) -> np.ndarray:
        d = self.dt
        return np.array([[1, 0, d, 0], [0, 1, 0, d], [0, 0, 1, 0], [0, 0, 0, 1]], dtype=float)

    @property
    def Q(self) -> np.ndarray:
        d = self.dt
        a, b = d**3 / 3, d**2 / 2
        return self.q * np.array([[a, 0, b, 0], [0, a, 0, b], [b, 0, d, 0], [0, b, 0, d]], dtype=float)


@dataclass(frozen=True)
class PowerSensor:
    position: tuple[float, float]
    power: float = 1e4

    def measure(self, state) -> float:
        return float(power_measure(np.atleast_2d(self.position), self.power, state)[0])

    def jacobian(self, state) -> np.ndarray:
        return power_jacobian(np.atleast_2d(self.position), self.power, state)[0]


def power_measure(positions: np.ndarray, power: float, state) -> np.ndarray:
    d2 = np.sum((np.asarray(state)[:2] - positions) ** 2, axis=1)
    return np.sqrt(power / (1.0 + d2))


def power_jacobian(positions: np.ndarray, power: float, state) -> np.ndarray:
    """m×4 Jacobian; velocity columns are identically zero."""
    diff = np.asarray(state)[:2] - positions
    d2 = np.sum(diff**2, axis=1)
    jac = np.zeros((positions.shape[0], 4))
    jac[:, :2] = -np.sqrt(power) * diff * (1.0 + d2)[:, None] ** -1.5
    return jac


def ekf_step(sys: DynamicalSystem, estimate, cov, active, measurements, t: int = 0):
    """One EKF predict/update cycle using only the ``active`` sensors.

    The update uses the truncated block R_w of the correlated noise covariance
    and Jacobians at the predicted state; the covariance update is Joseph form.
    """
    F, Q, R = sys.F(t), sys.process_cov, sys.noise_cov
    x = F @ np.asarray(estimate, dtype=float)
    P = sym(F @ cov @ F.T + Q)
    idx = np.flatnonzero(np.asarray(active))
    z = np.asarray(measurements, dtype=float)
    if z.shape != (idx.size,):
        raise ValueError(f"expected {idx.size} measurements, got shape {z.shape}")
    if idx.size == 0:
        return x, P
    if sys.jacobian is not None:
        Hk = sys.jacobian(x)[idx]
        pred = sys.measure(x)[idx]
    else:
        H = sys.obs_matrix(t + 1) if callable(sys.obs_matrix) else sys.obs_matrix
        Hk = H[idx]
        pred = Hk @ x
    Rw = R[np.ix_(idx, idx)]
    S = sym(Hk @ P @ Hk.T + Rw)
    if np.linalg.cond(S) > COND_LIMIT:
        raise IllConditionedError("innovation covariance is numerically singular")
    K = np.linalg.solve(S, Hk @ P).T
    x = x + K @ (z - pred)
    A = np.eye(len(x)) - K @ Hk
    P = sym(A @ P @ A.T + K @ Rw @ K.T)
    return x, P


@dataclass(frozen=True)
class TrackConfig:
    m: int = 30
    side: float = 50.0
    lattice: bool = False
    corr_param: float = 0.035
    noise_var: float = 1.0
    dt: float = 1.0
    q: float = 0.01
    power: float = 1e4
    initial_mean: tuple = (1.0, 1.0, 0.5, 0.5)
    initial_cov: tuple = (1.0, 1.0, 0.1, 0.1)  # diagonal
    tau: int = 6
    steps: int = 30
    sensor_budget: int = 2
    budget: int | None = None  # cumulative per window; None = m · sensor_budget
    measurement_noise: bool = True


@dataclass
class TrackRun:
    truth: np.ndarray  # (steps+1, 4)
    estimates: np.ndarray
    covariances: np.ndarray
    schedules: list[Schedule]
    squared_errors: np.ndarray  # (steps,)


@dataclass
class TrackResult:
    per_step_mse: np.ndarray
    mean_mse: float
    trials: int
    positions: np.ndarray
    first_run: TrackRun | None = field(default=None, repr=False)


def _psd_sqrt(cov: np.ndarray) -> np.ndarray:
    lam, vec = np.linalg.eigh(sym(cov))
    return vec * np.sqrt(np.clip(lam, 0.0, None))


def tracking_geometry(config: TrackConfig, seed) -> SensorGeometry:
    rng = np.random.default_rng(seed)
    return SensorGeometry.random(config.m, rng, side=config.side, lattice=config.lattice,
                                 noise_var=config.noise_var, corr_param=config.corr_param)


def _window_schedule(kind, sys, tau, config, rng) -> Schedule:
    m = sys.m
    s_i = np.full(m, config.sensor_budget)
    s = config.budget if config.budget is not None else int(s_i.sum())
    if kind == "greedy":
        return greedy_schedule(sys, tau, s, s_i)
    if kind == "random":
        return random_schedule(m, tau, s, s_i, rng)
    if kind == "all-on":
        return Schedule(np.ones((tau, m), dtype=np.int64))
    raise ValueError(f"unknown scheduler {kind!r}; choose from {SCHEDULERS}")


def simulate_track(config: TrackConfig, scheduler: str, positions: np.ndarray, R: np.ndarray,
                   seed) -> TrackRun:
    """One trial. Trajectory and noise depend only on ``seed``, not on the scheduler."""
    wna = Wna4State(config.dt, config.q)
    F, Q = wna.F, wna.Q
    ss = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    world_seq, sched_seq = ss.spawn(2)
    world = np.random.default_rng(world_seq)
    sched_rng = np.random.default_rng(sched_seq)

    x0 = np.asarray(config.initial_mean, dtype=float)
    P0 = np.diag(config.initial_cov).astype(float)
    truth = [x0 + _psd_sqrt(P0) @ world.standard_normal(4)]
    q_sqrt, r_sqrt = _psd_sqrt(Q), _psd_sqrt(R)
    process = world.standard_normal((config.steps, 4)) @ q_sqrt.T
    noise = world.standard_normal((config.steps, config.m)) @ r_sqrt.T
    if not config.measurement_noise:
        noise[:] = 0.0
    for k in range(config.steps):
        truth.append(F @ truth[-1] + process[k])

    measure = lambda x: power_measure(positions, config.power, x)  # noqa: E731
    jacobian = lambda x: power_jacobian(positions, config.power, x)  # noqa: E731
    est, cov = x0.copy(), P0.copy()
    estimates, covs, schedules = [est], [cov], []
    errors = np.empty(config.steps)
    k = 0
    while k < config.steps:
        tau = min(config.tau, config.steps - k)
        sys = DynamicalSystem(F, Q, R, est, cov, jacobian=jacobian, measure=measure)
        sched = _window_schedule(scheduler, sys, tau, config, sched_rng)
        schedules.append(sched)
        for t in range(tau):
            active = sched.w_matrix[t]
            idx = np.flatnonzero(active)
            z = measure(truth[k + 1])[idx] + noise[k, idx]
            est, cov = ekf_step(sys, est, cov, active, z)
            estimates.append(est)
            covs.append(cov)
            errors[k] = float(np.sum((est - truth[k + 1]) ** 2))
            k += 1
    return TrackRun(np.array(truth), np.array(estimates), np.array(covs), schedules, errors)


def monte_carlo_mse(config: TrackConfig, scheduler: str, trials: int, seed: int,
                    keep_first: bool = False) -> TrackResult:
    """Mean squared state error per step over ``trials`` runs.

    Sensor positions come from the first child of the master seed; trial ``k``
    uses child ``k + 1`` so different schedulers see identical trajectories.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    root = np.random.SeedSequence(seed)
    geo_seq, *trial_seqs = root.spawn(trials + 1)
    geom = tracking_geometry(config, geo_seq)
    R = exp_covariance(geom)
    total = np.zeros(config.steps)
    first = None
    for n, tseq in enumerate(trial_seqs):
        run = simulate_track(config, scheduler, geom.positions, R, tseq)
        total += run.squared_errors
        if keep_first and n == 0:
            first = run
    per_step = total / trials
    return TrackResult(per_step, float(per_step.mean()), trials, geom.positions, first)


def mmse_gain(model: MeasurementModel, w) -> np.ndarray:
    """Gain K with x̂ = μ + K (y_w − H_w μ)."""
    idx = np.flatnonzero(as_selection(w, model.m))
    Hw = model.obs_matrix[idx]
    S = Hw @ model.prior_cov @ Hw.T + model.noise_cov[np.ix_(idx, idx)]
    return np.linalg.solve(S, Hw @ model.prior_cov).T


def empirical_mse(model: MeasurementModel, w, trials: int = 1000, seed: int = 0) -> float:
    """Monte Carlo MSE of the linear MMSE estimator using the selected sensors."""
    rng = np.random.default_rng(seed)
    w = as_selection(w, model.m)
    idx = np.flatnonzero(w)
    x = model.prior_mean + rng.standard_normal((trials, model.n)) @ _psd_sqrt(model.prior_cov).T
    v = rng.standard_normal((trials, model.m)) @ _psd_sqrt(model.noise_cov).T
    if idx.size == 0:
        est = np.broadcast_to(model.prior_mean, x.shape)
    else:
        y = x @ model.obs_matrix[idx].T + v[:, idx]
        K = mmse_gain(model, w)
        est = model.prior_mean + (y - model.obs_matrix[idx] @ model.prior_mean) @ K.T
    return float(np.mean(np.sum((est - x) ** 2, axis=1)))

