"""Weak-correlation approximation and trace-of-Fisher (T-optimal) selection.

The approximation Ĵ_w = Σ⁻¹ + Hᵀ(wwᵀ ∘ R⁻¹)H inverts R before truncating it.
It agrees with the exact J_w only up to O(ε²) when R = Λ + εΥ with diagonal
Λ and hollow Υ.

Maximizing tr(Ĵ_w) reduces to maximizing wᵀΩw over the polytope
{u : 1ᵀu ≤ s, 0 ≤ u ≤ 1}, with Ω_ij = (R⁻¹)_ij h_iᵀh_j ⪰ 0. Its optimum
sits at a 0/1 vertex, which bilinear (alternating LP) ascent targets.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from corrsel.errors import BudgetError, NotPositiveDefiniteError
from corrsel.model import MeasurementModel, as_selection, fisher_truncated, sym


def fisher_weak(model: MeasurementModel, w) -> np.ndarray:
    w = as_selection(w, model.m).astype(float)
    H = model.obs_matrix
    return sym(model.prior_info + H.T @ (np.outer(w, w) * model.noise_info) @ H)


@dataclass(frozen=True)
class WeakDecomposition:
    """R = Λ + εΥ with Λ diagonal and Υ symmetric and hollow."""

    lambda_diag: np.ndarray
    upsilon: np.ndarray
    epsilon: float

    def covariance(self, epsilon: float | None = None) -> np.ndarray:
        eps = self.epsilon if epsilon is None else epsilon
        return np.diag(self.lambda_diag) + eps * self.upsilon


def weak_decomposition(R) -> WeakDecomposition:
    """Λ = diag(R); ε = max |off-diagonal|, Υ = off-diagonal part / ε."""
    R = np.asarray(R, dtype=float)
    lam = np.diag(R).copy()
    off = R - np.diag(lam)
    eps = float(np.abs(off).max(initial=0.0))
    upsilon = off / eps if eps > 0 else np.zeros_like(off)
    return WeakDecomposition(lam, upsilon, eps)


def weak_error_order(model: MeasurementModel, decomp: WeakDecomposition, w, epsilons) -> list[float]:
    """‖J_w − Ĵ_w‖_F with the noise covariance set to Λ + εΥ for each ε."""
    errors = []
    for eps in epsilons:
        R = decomp.covariance(eps)
        if np.linalg.eigvalsh(R)[0] <= 0:
            raise NotPositiveDefiniteError(f"Λ + εΥ is indefinite at ε = {eps:g}")
        mod = model.with_noise_cov(R)
        errors.append(float(np.linalg.norm(fisher_truncated(mod, w) - fisher_weak(mod, w))))
    return errors


@dataclass(frozen=True)
class TraceMaxProblem:
    omega: np.ndarray
    budget: int
    prior_trace: float  # tr(Σ⁻¹)

    @property
    def m(self) -> int:
        return self.omega.shape[0]

    def value(self, w) -> float:
        w = np.asarray(w, dtype=float)
        return float(w @ self.omega @ w)


def omega_kronecker(model: MeasurementModel) -> np.ndarray:
    """Ω = A (R⁻¹ ⊗ Iₙ) Aᵀ with A block-diagonal in the rows of H."""
    A = linalg.block_diag(*model.obs_matrix)
    return A @ np.kron(model.noise_info, np.eye(model.n)) @ A.T


def build_trace_max(model: MeasurementModel, s: int, verify: bool = True) -> TraceMaxProblem:
    if s < 0 or s > model.m:
        raise BudgetError(f"budget {s} outside [0, {model.m}]")
    H = model.obs_matrix
    omega = sym(model.noise_info * (H @ H.T))
    if verify:
        kron = omega_kronecker(model)
        scale = max(1.0, np.abs(omega).max())
        err = np.abs(kron - omega).max()
        if err > 1e-12 * scale:
            raise AssertionError(f"Kronecker form of Ω disagrees by {err:.3e}")
    return TraceMaxProblem(omega, int(s), float(np.trace(model.prior_info)))


def _best_response(c: np.ndarray, s: int) -> np.ndarray:
    """argmax of cᵀu over the cardinality box: the ``s`` largest positive entries."""
    u = np.zeros(c.shape[0], dtype=np.int64)
    order = np.argsort(-c, kind="stable")[:s]
    u[order[c[order] > 0]] = 1
    return u


def _ascend(omega, s, v, tol, max_iter):
    """Alternate the two LPs of the bilinear form uᵀΩv until the value stalls."""
    u = _best_response(omega @ v, s)
    val = float(u @ omega @ v)
    for _ in range(max_iter):
        v = _best_response(omega @ u, s)
        u_next = _best_response(omega @ v, s)
        new = float(u_next @ omega @ v)
        u = u_next
        if new - val < tol:
            val = new
            break
        val = new
    # uᵀΩu + vᵀΩv ≥ 2uᵀΩv since Ω ⪰ 0, so the better endpoint is at least as good
    w = u if u @ omega @ u >= v @ omega @ v else v
    best = float(w @ omega @ w)
    # polish to a point that is its own best response
    for _ in range(max_iter):
        nxt = _best_response(omega @ w, s)
        nv = float(nxt @ omega @ nxt)
        if nv - best < tol:
            break
        w, best = nxt, nv
    return w, best


def bilinear_solve(prob: TraceMaxProblem, starts: int = 10, seed: int = 0, init=None,
                   tol: float = 1e-9, max_iter: int = 1000):
    """Multi-start bilinear programming for max wᵀΩw, 1ᵀw ≤ s, w ∈ [0,1]^m.

    Returns ``(w, value)`` where ``w`` is a 0/1 vertex with at most ``s`` ones.
    ``init`` adds an explicit starting point ahead of the random ones.
    """
    m, s = prob.m, prob.budget
    rng = np.random.default_rng(seed)
    inits = [] if init is None else [np.asarray(init, dtype=float)]
    for _ in range(starts):
        v = rng.uniform(size=m)
        if v.sum() > s:
            v *= s / v.sum()
        inits.append(v)
    best_w, best_val = np.zeros(m, dtype=np.int64), 0.0
    for v in inits:
        w, val = _ascend(prob.omega, s, v, tol, max_iter)
        if val > best_val:
            best_w, best_val = w, val
    return best_w, best_val


def trace_bound(J: np.ndarray) -> tuple[float, float]:
    """(tr(J⁻¹), n²/tr(J)); the first never falls below the second."""
    J = sym(np.asarray(J, dtype=float))
    n = J.shape[0]
    return float(np.trace(np.linalg.inv(J))), float(n * n / np.trace(J))


def trace_bound_check(model: MeasurementModel, w) -> tuple[float, float]:
    return trace_bound(fisher_truncated(model, w))
