"""Greedy sensor selection driven by rank-one Fisher information updates.

Activating sensor ``j`` on top of the active set ``w`` changes the Fisher
information by a rank-one term ``c_j α_j α_jᵀ`` with

    c_j = (R_jj − r_jᵀ R_w⁻¹ r_j)⁻¹,   α_j = H_wᵀ R_w⁻¹ r_j − h_j

(``c_j = 1/R_jj``, ``α_j = h_j`` when nothing is active yet), so the MSE drop
is available in closed form and both ``J⁻¹`` and ``R_w⁻¹`` can be refreshed
without re-inverting.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from corrsel.errors import BudgetError, IllConditionedError, PreconditionError
from corrsel.model import MeasurementModel, sym

log = logging.getLogger(__name__)

SCHUR_FLOOR = 1e-12


@dataclass(frozen=True)
class GreedyUpdate:
    sensor_index: int
    gain: float  # c_j
    direction: np.ndarray  # α_j
    delta_trace: float
    # block-inverse bookkeeping for R_w⁻¹
    rw_inv_r: np.ndarray


@dataclass(frozen=True)
class GreedyState:
    w: np.ndarray
    fisher: np.ndarray
    fisher_inv: np.ndarray
    active: tuple[int, ...]  # activation order; indexes rows/cols of rw_inv
    rw_inv: np.ndarray
    inactive: frozenset[int]

    @property
    def objective(self) -> float:
        return float(np.trace(self.fisher_inv))


def initial_state(model: MeasurementModel) -> GreedyState:
    return GreedyState(
        w=np.zeros(model.m, dtype=np.int64),
        fisher=model.prior_info.copy(),
        fisher_inv=model.prior_cov.copy(),
        active=(),
        rw_inv=np.zeros((0, 0)),
        inactive=frozenset(range(model.m)),
    )


def evaluate_candidate(state: GreedyState, model: MeasurementModel, j: int) -> GreedyUpdate:
    if j not in state.inactive:
        raise PreconditionError(f"sensor {j} is already active")
    R = model.noise_cov
    h_j = model.obs_matrix[j]
    if not state.active:
        c = 1.0 / R[j, j]
        alpha = h_j.copy()
        u = np.zeros(0)
    else:
        act = list(state.active)
        r = R[act, j]
        u = state.rw_inv @ r
        schur = R[j, j] - r @ u
        if schur <= SCHUR_FLOOR:
            raise IllConditionedError(
                f"sensor {j} is nearly a linear combination of the active set (Schur complement {schur:.3e})"
            )
        c = 1.0 / schur
        alpha = model.obs_matrix[act].T @ u - h_j
    Pa = state.fisher_inv @ alpha
    delta = c * (Pa @ Pa) / (1.0 + c * (alpha @ Pa))
    return GreedyUpdate(int(j), float(c), alpha, float(delta), u)


def apply_update(state: GreedyState, update: GreedyUpdate) -> GreedyState:
    j = update.sensor_index
    if j not in state.inactive:
        raise PreconditionError(f"sensor {j} is already active")
    c, alpha = update.gain, update.direction
    fisher = sym(state.fisher + c * np.outer(alpha, alpha))
    Pa = state.fisher_inv @ alpha
    fisher_inv = sym(state.fisher_inv - c * np.outer(Pa, Pa) / (1.0 + c * (alpha @ Pa)))

    u = update.rw_inv_r
    k = len(state.active)
    rw_inv = np.empty((k + 1, k + 1))
    rw_inv[:k, :k] = state.rw_inv + c * np.outer(u, u)
    rw_inv[:k, k] = rw_inv[k, :k] = -c * u
    rw_inv[k, k] = c

    w = state.w.copy()
    w[j] = 1
    return GreedyState(w, fisher, fisher_inv, state.active + (j,), rw_inv, state.inactive - {j})


class GreedyResult(NamedTuple):
    w: np.ndarray
    objective: float
    trace_per_step: list[float]  # objective before the first and after every activation
    evaluations: int
    order: tuple[int, ...]


def greedy_select(model: MeasurementModel, s: int) -> GreedyResult:
    """Activate ``s`` sensors one at a time, each maximizing the MSE drop.

    Ties go to the lowest sensor index.
    """
    if s < 0 or s > model.m:
        raise BudgetError(f"budget {s} outside [0, {model.m}]")
    state = initial_state(model)
    trace = [state.objective]
    evaluations = 0
    for _ in range(s):
        best = None
        for j in sorted(state.inactive):
            evaluations += 1
            try:
                upd = evaluate_candidate(state, model, j)
            except IllConditionedError as exc:
                log.warning("skipping candidate: %s", exc)
                continue
            if best is None or upd.delta_trace > best.delta_trace:
                best = upd
        if best is None:
            log.warning("no admissible candidate left; stopping with %d active", len(state.active))
            break
        state = apply_update(state, best)
        trace.append(state.objective)
    return GreedyResult(state.w, state.objective, trace, evaluations, state.active)
