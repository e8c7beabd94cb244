"""Semidefinite relaxations of the selection problem and randomized rounding.

Two problem kinds share one solution layout:

``general``
    minimize tr(Z) s.t. [[C − V, I], [I, Z]] ⪰ 0,
    [[V, Bᵀ], [B, S⁻¹ + a⁻¹ diag(w)]] ⪰ 0, tr(W) ≤ s, diag(W) = w,
    [[W, w], [wᵀ, 1]] ⪰ 0, with C = Σ⁻¹ + HᵀS⁻¹H and B = S⁻¹H.
``weak``
    minimize tr(Z) s.t. [[Σ⁻¹ + Hᵀ(W ∘ R⁻¹)H, I], [I, Z]] ⪰ 0 plus the same
    W/w constraints.

Any conic backend reachable through cvxpy can be used as long as the
returned point meets the feasibility and duality-gap tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass

import cvxpy as cp
import numpy as np

from corrsel.errors import BudgetError
from corrsel.model import (
    CovDecomposition,
    MeasurementModel,
    fisher_closed_form,
    objective_trace_inverse,
    sym,
)
from corrsel.weakcorr import fisher_weak

DEFAULT_SOLVER = "CLARABEL"
DEFAULT_SAMPLES = 100


@dataclass(frozen=True)
class SdpProblem:
    kind: str  # "general" | "weak"
    budget: int
    prior_info: np.ndarray
    obs_matrix: np.ndarray
    C: np.ndarray | None = None
    B: np.ndarray | None = None
    s_inv: np.ndarray | None = None
    a: float | None = None
    noise_info: np.ndarray | None = None  # R⁻¹, weak kind

    @property
    def m(self) -> int:
        return self.obs_matrix.shape[0]

    @property
    def n(self) -> int:
        return self.obs_matrix.shape[1]

    def lmi_blocks(self, w, W, Z, V=None, *, bmat=np.block, diag=np.diag, hadamard=np.multiply):
        """Return the PSD-constrained block matrices at a point.

        Works on numpy arrays by default; :func:`solve_sdp` passes cvxpy atoms
        to build the same constraints symbolically.
        """
        n, m = self.n, self.m
        I = np.eye(n)
        w_col = w.reshape((m, 1)) if isinstance(w, np.ndarray) else cp.reshape(w, (m, 1), order="F")
        blocks = {}
        if self.kind == "general":
            blocks["epigraph"] = bmat([[self.C - V, I], [I, Z]])
            blocks["schur"] = bmat([[V, self.B.T], [self.B, self.s_inv + diag(w) / self.a]])
        else:
            info = self.prior_info + self.obs_matrix.T @ hadamard(W, self.noise_info) @ self.obs_matrix
            blocks["epigraph"] = bmat([[info, I], [I, Z]])
        blocks["lifting"] = bmat([[W, w_col], [w_col.T, np.ones((1, 1))]])
        return blocks


def build_sdp_general(model: MeasurementModel, decomp: CovDecomposition, s: int) -> SdpProblem:
    if s < 0:
        raise BudgetError("budget must be nonnegative")
    H = model.obs_matrix
    s_inv = decomp.s_inv
    B = s_inv @ H
    C = sym(model.prior_info + H.T @ B)
    return SdpProblem("general", int(s), model.prior_info, H, C=C, B=B, s_inv=s_inv, a=decomp.a)


def build_sdp_weak(model: MeasurementModel, s: int) -> SdpProblem:
    if s < 0:
        raise BudgetError("budget must be nonnegative")
    return SdpProblem("weak", int(s), model.prior_info, model.obs_matrix, noise_info=model.noise_info)


@dataclass(frozen=True)
class SdpSolution:
    kind: str
    w_relaxed: np.ndarray
    W: np.ndarray
    Z: np.ndarray
    V: np.ndarray | None
    objective: float
    solver_status: str
    duality_gap: float
    max_violation: float


def constraint_violation(problem: SdpProblem, w, W, Z, V=None) -> float:
    """Largest violation of any constraint at a numeric point (0 when feasible)."""
    viol = [abs(np.diag(W) - w).max(initial=0.0), max(0.0, np.trace(W) - problem.budget)]
    for mat in problem.lmi_blocks(w, W, Z, V).values():
        viol.append(max(0.0, -np.linalg.eigvalsh(sym(mat))[0]))
    return float(max(viol))


def solve_sdp(problem: SdpProblem, tol: float = 1e-6, solver: str = DEFAULT_SOLVER) -> SdpSolution:
    m, n = problem.m, problem.n
    w = cp.Variable(m)
    W = cp.Variable((m, m), symmetric=True)
    Z = cp.Variable((n, n), symmetric=True)
    V = cp.Variable((n, n), symmetric=True) if problem.kind == "general" else None

    blocks = problem.lmi_blocks(w, W, Z, V, bmat=cp.bmat, diag=cp.diag, hadamard=cp.multiply)
    psd = [blk >> 0 for blk in blocks.values()]
    budget = cp.trace(W) <= problem.budget
    cons = psd + [budget, cp.diag(W) == w]
    prob = cp.Problem(cp.Minimize(cp.trace(Z)), cons)
    try:
        prob.solve(solver=solver)
    except cp.error.SolverError as exc:
        nan_m, nan_n = np.full(m, np.nan), np.full((n, n), np.nan)
        return SdpSolution(problem.kind, nan_m, np.full((m, m), np.nan), nan_n, None,
                           float("nan"), f"failed: {exc}", float("inf"), float("inf"))
    if w.value is None:
        nan_n = np.full((n, n), np.nan)
        return SdpSolution(problem.kind, np.full(m, np.nan), np.full((m, m), np.nan), nan_n, None,
                           float("nan"), f"failed: {prob.status}", float("inf"), float("inf"))

    wv, Wv, Zv = np.asarray(w.value), sym(W.value), sym(Z.value)
    Vv = sym(V.value) if V is not None else None
    # complementary slackness Σ⟨dual, slack⟩ is the primal-dual gap at a stationary point
    gap = sum(float(np.sum(c.dual_value * blk.value)) for c, blk in zip(psd, blocks.values()))
    gap += float(budget.dual_value) * (problem.budget - float(np.trace(Wv)))
    viol = constraint_violation(problem, wv, Wv, Zv, Vv)
    status = prob.status
    if status == cp.OPTIMAL and (abs(gap) > tol or viol > tol):
        status = "inaccurate"
    return SdpSolution(problem.kind, wv, Wv, Zv, Vv, float(np.trace(Zv)), status, abs(gap), viol)


@dataclass(frozen=True)
class RoundingResult:
    w_boolean: np.ndarray
    objective: float
    sample_count: int
    distinct_patterns: int


def top_s(values, s: int) -> np.ndarray:
    """Boolean vector marking the ``s`` largest entries; ties favour lower indices."""
    values = np.asarray(values, dtype=float)
    out = np.zeros(values.shape[0], dtype=np.int64)
    out[np.argsort(-values, kind="stable")[:s]] = 1
    return out


def top_s_round(sol: SdpSolution, s: int) -> np.ndarray:
    """Cheap rounding: keep the ``s`` largest entries of the relaxed ``w``."""
    return top_s(sol.w_relaxed, s)


def _sample_factor(sol: SdpSolution) -> np.ndarray:
    w = sol.w_relaxed
    lam, vec = np.linalg.eigh(sym(sol.W - np.outer(w, w)))
    return vec * np.sqrt(np.clip(lam, 0.0, None))


def randomize_round(sol: SdpSolution, model: MeasurementModel, decomp: CovDecomposition | None,
                    s: int, N: int = DEFAULT_SAMPLES, seed: int = 0,
                    objective: str = "exact") -> RoundingResult:
    """Gaussian randomization: ξ ~ N(w, W − wwᵀ), each sample mapped to its top-``s`` pattern.

    ``objective="exact"`` scores candidates by tr(J_w⁻¹) using the closed form
    (requires ``decomp``); ``"weak"`` scores them with the weak-correlation
    approximation instead.
    """
    if N <= 0:
        raise ValueError("number of randomization samples must be positive")
    if objective == "exact":
        if decomp is None:
            raise ValueError("exact objective needs a covariance decomposition")
        score = lambda w: objective_trace_inverse(fisher_closed_form(model, decomp, w))  # noqa: E731
    elif objective == "weak":
        score = lambda w: objective_trace_inverse(fisher_weak(model, w))  # noqa: E731
    else:
        raise ValueError(f"unknown objective {objective!r}")

    rng = np.random.default_rng(seed)
    L = _sample_factor(sol)
    xi = sol.w_relaxed + rng.standard_normal((N, L.shape[1])) @ L.T
    cache: dict[bytes, float] = {}
    best_w, best_val = None, np.inf
    for row in xi:
        cand = top_s(row, s)
        key = cand.tobytes()
        if key not in cache:
            cache[key] = score(cand)
        if cache[key] < best_val:
            best_w, best_val = cand, cache[key]
    return RoundingResult(best_w, float(best_val), N, len(cache))
