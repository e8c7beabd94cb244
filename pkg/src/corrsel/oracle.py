"""Brute-force references used to certify the solvers.

Everything here recomputes from the truncated definitions (truncate R, then
invert) with no incremental bookkeeping, so a bug in a solver cannot leak in.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from corrsel.errors import TooLargeError
from corrsel.model import MeasurementModel, fisher_truncated

SEARCH_LIMIT = 10**7
SCHEDULE_LIMIT = 10**6

# objective name -> sense (+1 minimize, -1 maximize)
OBJECTIVES = {
    "trace_inverse": 1,
    "trace_inverse_weak": 1,
    "trace_fisher_weak": -1,
    "quadratic_omega": -1,
}


@dataclass(frozen=True)
class ExhaustiveResult:
    best_w: np.ndarray
    best_value: float
    evaluated_count: int
    table: dict | None = None  # subset tuple -> value


def subset_count(m: int, s: int) -> int:
    return sum(math.comb(m, k) for k in range(min(s, m) + 1))


def _objective_fn(model: MeasurementModel, name: str):
    H, Rinv = model.obs_matrix, model.noise_info
    if name == "trace_inverse":
        return lambda idx: float(np.trace(np.linalg.inv(fisher_truncated(model, _indicator(idx, model.m)))))

    def weak_fisher(idx):
        # invert R first, then keep the active block
        Hs = H[list(idx)]
        return model.prior_info + Hs.T @ Rinv[np.ix_(idx, idx)] @ Hs

    if name == "trace_inverse_weak":
        return lambda idx: float(np.trace(np.linalg.inv(weak_fisher(idx))))
    if name == "trace_fisher_weak":
        return lambda idx: float(np.trace(weak_fisher(idx)))
    if name == "quadratic_omega":
        def quad(idx):
            Hs = H[list(idx)]
            return float(np.sum(Rinv[np.ix_(idx, idx)] * (Hs @ Hs.T)))
        return quad
    raise ValueError(f"unknown objective {name!r}; choose from {sorted(OBJECTIVES)}")


def _indicator(idx, m):
    w = np.zeros(m, dtype=np.int64)
    w[list(idx)] = 1
    return w


def exhaustive_search(model: MeasurementModel, s: int, objective: str = "trace_inverse",
                      keep_table: bool = False, limit: int = SEARCH_LIMIT) -> ExhaustiveResult:
    """Global optimum over every selection with at most ``s`` active sensors.

    Subsets are visited by size, then lexicographically; the first optimum
    found wins ties, so smaller and lower-indexed subsets are preferred.
    """
    m = model.m
    count = subset_count(m, s)
    if count > limit:
        raise TooLargeError(f"{count} subsets of {m} sensors with budget {s} exceed the limit {limit}")
    sense = OBJECTIVES.get(objective)
    fn = _objective_fn(model, objective)
    best_idx, best_val, evaluated = (), np.inf, 0
    table = {} if keep_table else None
    for k in range(min(s, m) + 1):
        for idx in itertools.combinations(range(m), k):
            if k == 0 and objective == "quadratic_omega":
                val = 0.0
            elif k == 0:
                val = _empty_value(model, objective)
            else:
                val = fn(idx)
            evaluated += 1
            if table is not None:
                table[idx] = val
            if sense * val < best_val:
                best_idx, best_val = idx, sense * val
    return ExhaustiveResult(_indicator(best_idx, m), float(sense * best_val), evaluated, table)


def _empty_value(model: MeasurementModel, objective: str) -> float:
    if objective == "trace_fisher_weak":
        return float(np.trace(model.prior_info))
    return float(np.trace(model.prior_cov))


def random_subsets_best(model: MeasurementModel, s: int, N: int = 100, seed: int = 0) -> tuple[np.ndarray, float]:
    """Best tr(J⁻¹) among ``N`` uniformly random subsets of exactly ``s`` sensors."""
    rng = np.random.default_rng(seed)
    fn = _objective_fn(model, "trace_inverse")
    best_idx, best_val = None, np.inf
    for _ in range(N):
        idx = tuple(sorted(rng.choice(model.m, size=s, replace=False).tolist()))
        val = fn(idx) if s else _empty_value(model, "trace_inverse")
        if val < best_val:
            best_idx, best_val = idx, val
    return _indicator(best_idx, model.m), float(best_val)


def schedule_value(sys, w_matrix: np.ndarray, H_list) -> float:
    """(1/τ) Σ tr(J_t⁻¹) by direct recursion with truncated noise blocks."""
    R, Q = np.asarray(sys.noise_cov), np.asarray(sys.process_cov)
    J = np.linalg.inv(np.asarray(sys.initial_cov, dtype=float))
    total = 0.0
    for t, row in enumerate(w_matrix):
        F = sys.F(t)
        J = np.linalg.inv(Q + F @ np.linalg.inv(J) @ F.T)
        idx = np.flatnonzero(row)
        if idx.size:
            Hw = H_list[t][idx]
            J = J + Hw.T @ np.linalg.inv(R[np.ix_(idx, idx)]) @ Hw
        total += np.trace(np.linalg.inv(J))
    return float(total / len(w_matrix))


def exhaustive_schedule(sys, tau: int, s: int | None = None, s_i=None,
                        limit: int = SCHEDULE_LIMIT) -> ExhaustiveResult:
    """Global optimum of the horizon objective over all budget-feasible schedules."""
    m = sys.m
    slots = tau * m
    if 2**slots > limit:
        raise TooLargeError(f"2^{slots} schedules exceed the limit {limit}")
    s_i = np.full(m, tau) if s_i is None else np.broadcast_to(np.asarray(s_i), (m,))
    s = slots if s is None else s
    H_list = sys.measurement_matrices(tau)
    best_w, best_val, evaluated = None, np.inf, 0
    for bits in range(2**slots):
        # bit (t·m + i) activates sensor i at step t
        w = np.array([(bits >> j) & 1 for j in range(slots)], dtype=np.int64).reshape(tau, m)
        if w.sum() > s or np.any(w.sum(axis=0) > s_i):
            continue
        val = schedule_value(sys, w, H_list)
        evaluated += 1
        if val < best_val:
            best_w, best_val = w, val
    return ExhaustiveResult(best_w, float(best_val), evaluated)


def finite_difference_jacobian(f, x, step: float = 1e-5) -> np.ndarray:
    """Central differences of a vector-valued ``f`` at ``x``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = step
        cols.append((np.atleast_1d(f(x + e)) - np.atleast_1d(f(x - e))) / (2 * step))
    return np.column_stack(cols)
