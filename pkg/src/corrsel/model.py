"""Linear-Gaussian measurement model and Fisher information under correlated noise.

The Bayesian Fisher information of the active sensors ``w`` is

    J_w = Σ⁻¹ + H_wᵀ R_w⁻¹ H_w

where ``H_w`` / ``R_w`` keep the rows (and columns) of the active sensors.
Splitting ``R = a I + S`` turns this into an explicit function of ``w``:

    J_w = Σ⁻¹ + Hᵀ S⁻¹ H − Hᵀ S⁻¹ (S⁻¹ + a⁻¹ diag(w))⁻¹ S⁻¹ H

Selection vectors are plain 0/1 integer arrays; Fisher matrices are plain
symmetric ``ndarray`` s.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg

from corrsel.errors import (
    BudgetError,
    IllConditionedError,
    InvalidGeometryError,
    NotPositiveDefiniteError,
    PreconditionError,
)

COND_LIMIT = 1e12


def sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def rel_fro(a: np.ndarray, b: np.ndarray) -> float:
    """Relative Frobenius deviation of ``a`` from reference ``b``."""
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), np.finfo(float).tiny))


def _check_spd(mat: np.ndarray, name: str) -> None:
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be square, got shape {mat.shape}")
    if not np.allclose(mat, mat.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(mat).max())):
        raise NotPositiveDefiniteError(f"{name} is not symmetric")
    lam_min = np.linalg.eigvalsh(sym(mat))[0]
    if not lam_min > 0:
        raise NotPositiveDefiniteError(f"{name} is not positive definite (min eigenvalue {lam_min:.3e})")


def _spd_inverse(mat: np.ndarray, name: str = "matrix") -> np.ndarray:
    cond = np.linalg.cond(mat)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditionedError(f"{name} condition number {cond:.3e} exceeds {COND_LIMIT:.0e}")
    c, low = linalg.cho_factor(mat)
    return sym(linalg.cho_solve((c, low), np.eye(mat.shape[0])))


@dataclass(frozen=True)
class SensorGeometry:
    """Sensor positions (2-D, lattice units) and exponential-kernel parameters."""

    positions: np.ndarray
    noise_var: float = 1.0
    corr_param: float = 0.1

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise InvalidGeometryError(f"positions must be (m, 2), got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise InvalidGeometryError("sensor positions must be finite")
        if not self.corr_param > 0:
            raise InvalidGeometryError("corr_param must be positive")
        if self.noise_var < 0:
            raise InvalidGeometryError("noise_var must be nonnegative")
        object.__setattr__(self, "positions", pos)

    @property
    def m(self) -> int:
        return self.positions.shape[0]

    @classmethod
    def random(cls, m, rng, *, side=50.0, lattice=True, noise_var=1.0, corr_param=0.1):
        """Random deployment over a ``side × side`` square.

        With ``lattice=True`` sensors occupy distinct integer lattice points
        (sampling without replacement), otherwise positions are continuous
        uniform.
        """
        if lattice:
            k = int(side)
            if m > k * k:
                raise InvalidGeometryError(f"cannot place {m} sensors on a {k}x{k} lattice")
            flat = rng.choice(k * k, size=m, replace=False)
            pos = np.column_stack([flat // k, flat % k]).astype(float)
        else:
            pos = rng.uniform(0.0, side, size=(m, 2))
        return cls(pos, noise_var=noise_var, corr_param=corr_param)


def exp_covariance(geom: SensorGeometry) -> np.ndarray:
    """R_ij = σ_v² exp(−ρ ‖β_i − β_j‖₂)."""
    diff = geom.positions[:, None, :] - geom.positions[None, :, :]
    dist = np.sqrt(np.sum(diff**2, axis=-1))
    return geom.noise_var * np.exp(-geom.corr_param * dist)


@dataclass(frozen=True)
class MeasurementModel:
    """y = H x + v with x ~ N(μ, Σ) and v ~ N(0, R)."""

    prior_mean: np.ndarray
    prior_cov: np.ndarray
    obs_matrix: np.ndarray
    noise_cov: np.ndarray

    def __post_init__(self):
        for name in ("prior_mean", "prior_cov", "obs_matrix", "noise_cov"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float))
        n = self.prior_mean.shape[0]
        if self.prior_cov.shape != (n, n):
            raise ValueError(f"prior_cov must be {n}x{n}")
        if self.obs_matrix.ndim != 2 or self.obs_matrix.shape[1] != n:
            raise ValueError(f"obs_matrix must have {n} columns")
        m = self.obs_matrix.shape[0]
        if self.noise_cov.shape != (m, m):
            raise ValueError(f"noise_cov must be {m}x{m}")
        _check_spd(self.prior_cov, "prior_cov")
        _check_spd(self.noise_cov, "noise_cov")

    @property
    def m(self) -> int:
        return self.obs_matrix.shape[0]

    @property
    def n(self) -> int:
        return self.prior_mean.shape[0]

    @cached_property
    def prior_info(self) -> np.ndarray:
        return _spd_inverse(self.prior_cov, "prior_cov")

    @cached_property
    def noise_info(self) -> np.ndarray:
        """R⁻¹ (full, untruncated)."""
        return _spd_inverse(self.noise_cov, "noise_cov")

    def with_noise_cov(self, noise_cov) -> MeasurementModel:
        return MeasurementModel(self.prior_mean, self.prior_cov, self.obs_matrix, noise_cov)


def random_model(m, n, rng, *, corr_param=0.1, noise_var=1.0, side=50.0, lattice=True,
                 prior_mean=None, prior_cov=None):
    """Random instance in the style of the numerical studies.

    Rows of H are drawn from N(0, I/√n), R follows the exponential kernel over a
    random deployment. Returns ``(model, geometry)``.
    """
    geom = SensorGeometry.random(m, rng, side=side, lattice=lattice,
                                 noise_var=noise_var, corr_param=corr_param)
    H = rng.normal(0.0, n ** -0.25, size=(m, n))
    mu = np.full(n, 10.0) if prior_mean is None else prior_mean
    sigma = np.eye(n) if prior_cov is None else prior_cov
    return MeasurementModel(mu, sigma, H, exp_covariance(geom)), geom


def as_selection(w, m: int, budget: int | None = None) -> np.ndarray:
    """Validate a Boolean selection vector and return it as an int array."""
    arr = np.asarray(w)
    if arr.shape != (m,):
        raise ValueError(f"selection vector must have length {m}, got shape {arr.shape}")
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError("selection vector entries must be 0 or 1")
    arr = arr.astype(np.int64)
    if budget is not None:
        if budget < 0:
            raise BudgetError("budget must be nonnegative")
        if arr.sum() > budget:
            raise BudgetError(f"{int(arr.sum())} active sensors exceed budget {budget}")
    return arr


def selection_from_indices(indices, m: int) -> np.ndarray:
    w = np.zeros(m, dtype=np.int64)
    w[list(indices)] = 1
    return w


@dataclass(frozen=True)
class CovDecomposition:
    """R = a I + S with a > 0 and S ≻ 0."""

    a: float
    s_matrix: np.ndarray = field(repr=False)

    @cached_property
    def s_inv(self) -> np.ndarray:
        return _spd_inverse(self.s_matrix, "S")

    def reconstruct(self) -> np.ndarray:
        return self.a * np.eye(self.s_matrix.shape[0]) + self.s_matrix


def decompose_covariance(R, a: float | None = None) -> CovDecomposition:
    """Split R = a I + S; the default ``a`` is half the smallest eigenvalue of R."""
    R = np.asarray(R, dtype=float)
    lam_min = np.linalg.eigvalsh(sym(R))[0]
    if not lam_min > 0:
        raise NotPositiveDefiniteError(f"R is not positive definite (min eigenvalue {lam_min:.3e})")
    if a is None:
        a = lam_min / 2.0
    elif not 0 < a < lam_min:
        raise ValueError(f"a must lie in (0, λ_min(R) = {lam_min:.3e})")
    return CovDecomposition(float(a), sym(R - a * np.eye(R.shape[0])))


def fisher_truncated(model: MeasurementModel, w) -> np.ndarray:
    """J_w = Σ⁻¹ + H_wᵀ R_w⁻¹ H_w (truncate R first, then invert)."""
    w = as_selection(w, model.m)
    idx = np.flatnonzero(w)
    if idx.size == 0:
        return model.prior_info.copy()
    Hw = model.obs_matrix[idx]
    Rw_inv = _spd_inverse(model.noise_cov[np.ix_(idx, idx)], "R_w")
    return sym(model.prior_info + Hw.T @ Rw_inv @ Hw)


def selected_information(H: np.ndarray, decomp: CovDecomposition, w) -> np.ndarray:
    """Hᵀ S⁻¹ H − Hᵀ S⁻¹ (S⁻¹ + a⁻¹ diag(w))⁻¹ S⁻¹ H, the data term of J_w."""
    w = np.asarray(w, dtype=float)
    s_inv = decomp.s_inv
    B = s_inv @ H
    inner = s_inv + np.diag(w / decomp.a)
    cond = np.linalg.cond(inner)
    assert cond < COND_LIMIT, f"inner matrix ill-conditioned ({cond:.3e}) for a valid split"
    return sym(H.T @ B - B.T @ np.linalg.solve(inner, B))


def fisher_closed_form(model: MeasurementModel, decomp: CovDecomposition, w) -> np.ndarray:
    """J_w written as an explicit function of ``w`` via R = a I + S."""
    w = as_selection(w, model.m)
    return sym(model.prior_info + selected_information(model.obs_matrix, decomp, w))


def objective_trace_inverse(J: np.ndarray) -> float:
    """tr(J⁻¹), the MMSE of the Bayesian estimator."""
    J = sym(np.asarray(J, dtype=float))
    try:
        c, low = linalg.cho_factor(J)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("Fisher matrix is not positive definite") from exc
    return float(np.trace(linalg.cho_solve((c, low), np.eye(J.shape[0]))))


def fisher_uncorrelated(model: MeasurementModel, w) -> np.ndarray:
    """Σ⁻¹ + Σ_i w_i R_ii⁻¹ h_i h_iᵀ, valid only for diagonal R."""
    R = model.noise_cov
    off = R - np.diag(np.diag(R))
    if np.abs(off).max(initial=0.0) > 1e-14:
        raise PreconditionError("noise covariance is not diagonal")
    w = as_selection(w, model.m)
    H = model.obs_matrix
    weights = w / np.diag(R)
    return sym(model.prior_info + (H.T * weights) @ H)
