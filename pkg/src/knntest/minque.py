"""MINQUE and iterated MINQUE over a four-matrix component basis.

For a working covariance ``H = sum a_i V_i`` and covariate design ``Z``
the covariate-adjusted inverse is

    R = H^-1 - H^-1 Z (Z^T H^-1 Z)^-1 Z^T H^-1

and the MINQUE solves ``S theta = q`` with

    S_ij = tr(R V_i R V_j),    q_i = y^T R V_i R y.

Iterated MINQUE feeds each estimate back in as the next ``a``; negative
components are floored at zero for ``H`` only, never in the reported
estimate.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .kernels import ComponentBasis

logger = logging.getLogger(__name__)

SINGULAR_CONDITION = 1e10


class SingularCovarianceError(np.linalg.LinAlgError):
    """The working covariance could not be made positive definite."""

    def __init__(self, message, iteration=None):
        super().__init__(message if iteration is None else f"{message} (iteration {iteration})")
        self.iteration = iteration


@dataclass(frozen=True)
class MinqueConfig:
    initial_weights: tuple = (1.0, 1.0, 1.0, 1.0)
    max_iterations: int = 50
    tolerance: float = 1e-6
    ridge: float = 1e-8

    def __post_init__(self):
        if len(self.initial_weights) != 4:
            raise ValueError("initial_weights must have four entries")
        if not any(float(a) != 0.0 for a in self.initial_weights):
            raise ValueError("initial_weights must not be all zero")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.ridge < 0:
            raise ValueError("ridge must be non-negative")


@dataclass
class ThetaEstimate:
    theta: np.ndarray
    iterations: int
    converged: bool
    working_covariance: np.ndarray
    trace: list = field(default_factory=list)
    weakly_identified: tuple = ()


def _check_problem(y, basis: ComponentBasis) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != basis.n:
        raise ValueError(f"response has length {y.shape[0]}, basis is {basis.n} x {basis.n}")
    if not np.all(np.isfinite(y)):
        raise ValueError("response contains non-finite values")
    return y


def _cholesky_with_ridge(h: np.ndarray, ridge: float):
    """Cholesky factor of ``h``, retrying once with a relative ridge."""
    try:
        return linalg.cho_factor(h, lower=True, check_finite=False)
    except linalg.LinAlgError:
        pass
    scale = np.abs(np.diag(h)).mean()
    if not (ridge > 0 and scale > 0):
        raise SingularCovarianceError("working covariance singular")
    try:
        return linalg.cho_factor(h + ridge * scale * np.eye(h.shape[0]), lower=True, check_finite=False)
    except linalg.LinAlgError:
        raise SingularCovarianceError("working covariance singular") from None


def projection_inverse(basis: ComponentBasis, a, ridge: float = 1e-8) -> np.ndarray:
    """Covariate-adjusted inverse ``R`` of ``H = sum a_i V_i``; ``R Z = 0``."""
    a = np.asarray(a, dtype=float)
    if a.shape != (4,):
        raise ValueError("need four working-covariance weights")
    h = basis.combine(a)
    cf = _cholesky_with_ridge(h, ridge)
    hinv = linalg.cho_solve(cf, np.eye(basis.n), check_finite=False)
    Z = basis.Z
    if Z.shape[1]:
        hz = hinv @ Z
        r = hinv - hz @ np.linalg.solve(Z.T @ hz, hz.T)
    else:
        r = hinv
    return 0.5 * (r + r.T)


def _r_times_basis(r: np.ndarray, basis: ComponentBasis) -> list:
    """``[R V_i]`` using the structure of J and I where possible."""
    out = []
    for v, name in zip(basis.V, ("J", "K", "K2", "I")):
        if name == "J" and np.all(v == 1.0):
            out.append(np.outer(r.sum(axis=1), np.ones(basis.n)))
        elif name == "I" and np.array_equal(v, np.eye(basis.n)):
            out.append(r)
        else:
            out.append(r @ v)
    return out


def minque_system(y, basis: ComponentBasis, r: np.ndarray):
    """The 4x4 MINQUE matrix ``S`` and right-hand side ``q`` for a given ``R``."""
    y = _check_problem(y, basis)
    rv = _r_times_basis(r, basis)
    s = np.empty((4, 4))
    for i in range(4):
        for j in range(i, 4):
            # tr(A B) = sum(A * B^T)
            s[i, j] = s[j, i] = np.einsum("ij,ji->", rv[i], rv[j])
    ry = r @ y
    q = np.array([ry @ v @ ry for v in basis.V])
    return s, q


def solve_minque(s: np.ndarray, q: np.ndarray, ridge: float = 1e-8) -> np.ndarray:
    """Solve ``S theta = q``; an ill-conditioned ``S`` gets a relative ridge.

    The ridge is ``ridge * mean(|diag S|)`` so that the solution scales
    correctly with the response.
    """
    s = np.asarray(s, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.linalg.cond(s) > SINGULAR_CONDITION:
        scale = np.abs(np.diag(s)).mean()
        if not scale > 0:
            raise np.linalg.LinAlgError("MINQUE system is identically zero")
        s = s + ridge * scale * np.eye(s.shape[0])
    try:
        theta = np.linalg.solve(s, q)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("MINQUE system unsolvable even with ridge") from None
    if not np.all(np.isfinite(theta)):
        raise np.linalg.LinAlgError("MINQUE system unsolvable even with ridge")
    return theta


def weak_components(s: np.ndarray, rel_tol: float = 1e-10) -> tuple:
    """Indices of components annihilated by the covariate projection."""
    d = np.abs(np.diag(s))
    return tuple(int(i) for i in np.flatnonzero(d <= rel_tol * d.max()))


def minque_once(y, basis: ComponentBasis, a, ridge: float = 1e-8) -> np.ndarray:
    r = projection_inverse(basis, a, ridge)
    s, q = minque_system(y, basis, r)
    return solve_minque(s, q, ridge)


def iterate_minque(y, basis: ComponentBasis, config: MinqueConfig = MinqueConfig()) -> ThetaEstimate:
    """Iterated MINQUE starting from ``config.initial_weights``.

    Stops when the relative L2 change of theta falls below
    ``config.tolerance`` or after ``config.max_iterations`` passes. A run
    that hits the iteration cap is returned with ``converged=False``.
    """
    y = _check_problem(y, basis)
    a = np.asarray(config.initial_weights, dtype=float)
    trace = []
    theta = None
    converged = False
    s = None
    for it in range(1, config.max_iterations + 1):
        try:
            r = projection_inverse(basis, a, config.ridge)
        except SingularCovarianceError as exc:
            raise SingularCovarianceError("working covariance singular", iteration=it) from exc
        s, q = minque_system(y, basis, r)
        new = solve_minque(s, q, config.ridge)
        trace.append(new.copy())
        if theta is not None:
            change = np.linalg.norm(new - theta) / max(np.linalg.norm(theta), np.finfo(float).tiny)
            if change < config.tolerance:
                theta = new
                converged = True
                break
        theta = new
        a = np.maximum(theta, 0.0)
        if not np.any(a > 0):
            raise SingularCovarianceError("all variance components estimated non-positive", iteration=it)

    if not converged:
        logger.debug("iterated MINQUE stopped after %d iterations without converging", len(trace))
    h = basis.combine(np.maximum(theta, 0.0))
    return ThetaEstimate(
        theta=theta,
        iterations=len(trace),
        converged=converged,
        working_covariance=0.5 * (h + h.T),
        trace=trace,
        weakly_identified=weak_components(s),
    )
