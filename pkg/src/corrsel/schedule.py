"""Non-myopic sensor scheduling over a horizon of τ steps.

The Fisher information follows the tracking recursion

    J_t = (Q + F_{t−1} J_{t−1}⁻¹ F_{t−1}ᵀ)⁻¹ + G_t,
    G_t = H_tᵀ Φ_tᵀ (Φ_t R Φ_tᵀ)⁻¹ Φ_t H_t,

with J_0 = P̂₀⁻¹. Nonlinear measurements use their Jacobian at the
open-loop prediction x̂_t = F_{t−1}⋯F_0 x̂_0. Because the J_t are coupled there
is no closed-form greedy gain, so the scheduler scores each candidate slot by
the full horizon objective (1/τ) Σ_t tr(J_t⁻¹).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from corrsel.errors import BudgetError
from corrsel.model import _spd_inverse, sym

SCHUR_FLOOR = 1e-12


@dataclass(frozen=True)
class DynamicalSystem:
    """x_{t+1} = F_t x_t + u_t, y_t = H_t x_t + v_t (or h(x_t) + v_t).

    ``transition`` is an n×n matrix or a callable ``t -> F_t``. The measurement
    is given by exactly one of ``obs_matrix`` (m×n matrix or ``t -> H_t``) and
    ``jacobian`` (``x -> ∂h/∂x``, m×n); ``measure`` is the matching h(x), only
    needed for simulation.
    """

    transition: np.ndarray | Callable[[int], np.ndarray]
    process_cov: np.ndarray
    noise_cov: np.ndarray
    initial_mean: np.ndarray
    initial_cov: np.ndarray
    obs_matrix: np.ndarray | Callable[[int], np.ndarray] | None = None
    jacobian: Callable[[np.ndarray], np.ndarray] | None = None
    measure: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if (self.obs_matrix is None) == (self.jacobian is None):
            raise ValueError("give exactly one of obs_matrix and jacobian")

    @property
    def n(self) -> int:
        return len(self.initial_mean)

    @property
    def m(self) -> int:
        return self.noise_cov.shape[0]

    def F(self, t: int) -> np.ndarray:
        return self.transition(t) if callable(self.transition) else self.transition

    def measurement_matrices(self, tau: int) -> list[np.ndarray]:
        """H_1..H_τ; Jacobians at prediction states for nonlinear sensing."""
        if self.jacobian is None:
            if callable(self.obs_matrix):
                return [np.asarray(self.obs_matrix(t), dtype=float) for t in range(1, tau + 1)]
            return [np.asarray(self.obs_matrix, dtype=float)] * tau
        x = np.asarray(self.initial_mean, dtype=float)
        mats = []
        for t in range(1, tau + 1):
            x = self.F(t - 1) @ x
            mats.append(np.asarray(self.jacobian(x), dtype=float))
        return mats


@dataclass(frozen=True)
class Schedule:
    """τ×m activation matrix with its cumulative and per-sensor budgets."""

    w_matrix: np.ndarray
    budget: int | None = None
    sensor_budgets: np.ndarray | None = None
    order: tuple[tuple[int, int], ...] = ()  # (t, i) in activation order, t 0-based
    history: tuple[float, ...] = field(default=(), repr=False)

    @property
    def tau(self) -> int:
        return self.w_matrix.shape[0]

    @property
    def m(self) -> int:
        return self.w_matrix.shape[1]

    def feasible(self) -> bool:
        w = self.w_matrix
        if not np.all((w == 0) | (w == 1)):
            return False
        if self.budget is not None and w.sum() > self.budget:
            return False
        if self.sensor_budgets is not None and np.any(w.sum(axis=0) > self.sensor_budgets):
            return False
        return True


@dataclass(frozen=True)
class RecursiveFim:
    j_sequence: list[np.ndarray]  # J_0..J_τ


def _resolve_budgets(m, tau, s, s_i):
    s_i = np.full(m, tau, dtype=np.int64) if s_i is None else np.broadcast_to(np.asarray(s_i, dtype=np.int64), (m,)).copy()
    if np.any(s_i < 0):
        raise BudgetError("individual budgets must be nonnegative")
    if s is None:
        s = int(np.minimum(s_i, tau).sum())
    if s < 0:
        raise BudgetError("cumulative budget must be nonnegative")
    return int(s), s_i


def measurement_information(H: np.ndarray, R: np.ndarray, w_t) -> np.ndarray:
    """G = H_wᵀ R_w⁻¹ H_w for one time step (zero when nothing is active)."""
    idx = np.flatnonzero(w_t)
    if idx.size == 0:
        return np.zeros((H.shape[1], H.shape[1]))
    Hw = H[idx]
    return sym(Hw.T @ _spd_inverse(R[np.ix_(idx, idx)], "R_w") @ Hw)


def predict_information(J_prev: np.ndarray, F: np.ndarray, Q: np.ndarray) -> np.ndarray:
    return sym(np.linalg.inv(Q + F @ np.linalg.solve(J_prev, F.T)))


def fim_recursion(sys: DynamicalSystem, sched: Schedule, H_list=None) -> RecursiveFim:
    tau = sched.tau
    if sched.m != sys.m:
        raise ValueError(f"schedule has {sched.m} sensors, system has {sys.m}")
    H_list = sys.measurement_matrices(tau) if H_list is None else H_list
    J = [_spd_inverse(np.asarray(sys.initial_cov, dtype=float), "P0")]
    for t in range(1, tau + 1):
        pred = predict_information(J[-1], sys.F(t - 1), sys.process_cov)
        J.append(sym(pred + measurement_information(H_list[t - 1], sys.noise_cov, sched.w_matrix[t - 1])))
    return RecursiveFim(J)


def schedule_objective(fim: RecursiveFim) -> float:
    """(1/τ) Σ_{t=1}^{τ} tr(J_t⁻¹)."""
    seq = fim.j_sequence[1:]
    return float(np.mean([np.trace(np.linalg.inv(J)) for J in seq]))


class _HorizonEvaluator:
    """Scores all single-slot additions to a schedule in batch.

    Adding sensor i at step t perturbs only G_t, by the rank-one term of the
    static greedy update; J_1..J_{t−1} are reused and J_t..J_τ re-propagated.
    """

    def __init__(self, sys: DynamicalSystem, tau: int):
        self.sys = sys
        self.tau = tau
        self.H = sys.measurement_matrices(tau)
        self.R = np.asarray(sys.noise_cov, dtype=float)
        self.Q = np.asarray(sys.process_cov, dtype=float)
        self.F = [np.asarray(sys.F(t), dtype=float) for t in range(tau)]
        self.w = np.zeros((tau, sys.m), dtype=np.int64)
        self.G = [np.zeros((sys.n, sys.n)) for _ in range(tau)]
        self.rw_inv = [np.zeros((0, 0)) for _ in range(tau)]
        self.J0 = _spd_inverse(np.asarray(sys.initial_cov, dtype=float), "P0")
        self._propagate(0)

    def _propagate(self, start: int):
        if start == 0:
            self.J = [self.J0]
            self.pred = []
            self.tr = []
        else:
            self.J = self.J[: start + 1]
            self.pred = self.pred[:start]
            self.tr = self.tr[:start]
        for t in range(start, self.tau):
            p = predict_information(self.J[t], self.F[t], self.Q)
            Jt = sym(p + self.G[t])
            self.pred.append(p)
            self.J.append(Jt)
            self.tr.append(float(np.trace(np.linalg.inv(Jt))))

    @property
    def objective(self) -> float:
        return float(np.mean(self.tr))

    def candidate_objectives(self, t: int, sensors: np.ndarray) -> np.ndarray:
        """Horizon objective after activating each of ``sensors`` at step t (0-based)."""
        H, R = self.H[t], self.R
        act = np.flatnonzero(self.w[t])
        if act.size == 0:
            c = 1.0 / R[sensors, sensors]
            alpha = H[sensors].T
        else:
            r = R[np.ix_(act, sensors)]
            u = self.rw_inv[t] @ r
            schur = R[sensors, sensors] - np.sum(r * u, axis=0)
            with np.errstate(divide="ignore"):
                c = np.where(schur > SCHUR_FLOOR, 1.0 / np.maximum(schur, SCHUR_FLOOR), 0.0)
            alpha = H[act].T @ u - H[sensors].T
        Jt = self.J[t + 1][None] + c[:, None, None] * np.einsum("ik,jk->kij", alpha, alpha)
        total = sum(self.tr[:t])
        Jc = Jt
        for k in range(t, self.tau):
            if k > t:
                Pk = self.F[k] @ np.linalg.inv(Jc) @ self.F[k].T + self.Q
                Jc = np.linalg.inv(Pk) + self.G[k][None]
            total = total + np.trace(np.linalg.inv(Jc), axis1=1, axis2=2)
        out = total / self.tau
        if act.size:
            out = np.where(c > 0, out, np.inf)
        return out

    def activate(self, t: int, i: int):
        self.w[t, i] = 1
        idx = np.flatnonzero(self.w[t])
        self.rw_inv[t] = _spd_inverse(self.R[np.ix_(idx, idx)], "R_w")
        Hw = self.H[t][idx]
        self.G[t] = sym(Hw.T @ self.rw_inv[t] @ Hw)
        self._propagate(t)


def greedy_schedule(sys: DynamicalSystem, tau: int, s: int | None = None, s_i=None) -> Schedule:
    """Activate one (sensor, step) slot at a time, each minimizing the horizon MSE.

    Runs min(s, Σ s_i) iterations. A sensor whose usage reached its individual
    budget drops all remaining slots; ties go to the smallest flat index t·m + i.
    """
    if tau < 1:
        raise ValueError("horizon must be at least 1")
    m = sys.m
    s, s_i = _resolve_budgets(m, tau, s, s_i)
    ev = _HorizonEvaluator(sys, tau)
    inactive = [set(range(tau)) for _ in range(m)]
    order, history = [], [ev.objective]
    for _ in range(min(s, int(s_i.sum()))):
        for i in range(m):
            if tau - len(inactive[i]) >= s_i[i]:
                inactive[i] = set()
        best = (np.inf, None)
        for t in range(tau):
            sensors = np.array([i for i in range(m) if t in inactive[i]], dtype=np.int64)
            if sensors.size == 0:
                continue
            vals = ev.candidate_objectives(t, sensors)
            k = int(np.argmin(vals))  # first minimum = smallest sensor index at this t
            if vals[k] < best[0]:
                best = (float(vals[k]), (t, int(sensors[k])))
        if best[1] is None:
            break
        t, i = best[1]
        ev.activate(t, i)
        inactive[i].discard(t)
        order.append((t, i))
        history.append(ev.objective)
    return Schedule(ev.w.copy(), s, s_i, tuple(order), tuple(history))


def random_schedule(m: int, tau: int, s: int | None, s_i, rng) -> Schedule:
    """Uniformly random slot order, filled greedily up to the budgets."""
    s, s_i = _resolve_budgets(m, tau, s, s_i)
    target = min(s, int(np.minimum(s_i, tau).sum()))
    w = np.zeros((tau, m), dtype=np.int64)
    used = np.zeros(m, dtype=np.int64)
    order = []
    for flat in rng.permutation(tau * m):
        if len(order) == target:
            break
        t, i = divmod(int(flat), m)
        if used[i] < s_i[i]:
            w[t, i] = 1
            used[i] += 1
            order.append((t, i))
    return Schedule(w, s, s_i, tuple(order))
