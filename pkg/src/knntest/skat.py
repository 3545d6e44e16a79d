"""Continuous-trait SKAT used as the comparison baseline.

Under the null linear model the score statistic ``Q = r^T K r`` (``r`` the
least-squares residuals) is distributed as ``sum_j lambda_j chi2_1`` with
``lambda_j`` the eigenvalues of ``sigma0^2 P0 K P0``. Tail probabilities
come from Davies' characteristic-function inversion, falling back to the
Liu et al. four-cumulant approximation when it faults.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import qf as _qf
from .genotype import GenotypeMatrix, WeightScheme, compute_weights
from .inference import StageError, prepare_genotypes
from .kernels import intercept_design, product_kernel

logger = logging.getLogger(__name__)

P_FLOOR = 1e-12
EIG_DROP = 1e-10
NEG_EIG_TOL = 1e-8


class DaviesError(ArithmeticError):
    """Davies' method did not reach the requested accuracy."""


@dataclass
class NullModel:
    residuals: np.ndarray
    sigma0_sq: float
    projection: np.ndarray


@dataclass
class SkatResult:
    q_stat: float
    lambdas: np.ndarray
    p_value: float
    method_used: str

    def to_dict(self) -> dict:
        return {"q_stat": float(self.q_stat), "p_value": float(self.p_value), "method_used": self.method_used}


def fit_null_model(y, z=None) -> NullModel:
    """OLS fit of ``y`` on ``Z`` (intercept added when absent)."""
    y = np.asarray(y, dtype=float).ravel()
    n = y.shape[0]
    Z = intercept_design(n, z)
    if np.linalg.matrix_rank(Z) < Z.shape[1]:
        raise ValueError("covariate design is rank deficient")
    q, _ = np.linalg.qr(Z)
    p0 = np.eye(n) - q @ q.T
    p0 = 0.5 * (p0 + p0.T)
    resid = y - q @ (q.T @ y)
    dof = n - Z.shape[1]
    if dof < 1:
        raise ValueError("no residual degrees of freedom")
    return NullModel(residuals=resid, sigma0_sq=float(resid @ resid) / dof, projection=p0)


def skat_statistic(nm: NullModel, k) -> float:
    k = np.asarray(k, dtype=float)
    r = nm.residuals
    if k.shape != (r.size, r.size):
        raise ValueError("kernel and residual dimensions differ")
    return float(r @ k @ r)


def eigen_lambdas(nm: NullModel, k) -> np.ndarray:
    """Eigenvalues of ``sigma0^2 P0 K P0``, descending, tiny negatives clamped to 0."""
    p0 = nm.projection
    k = np.asarray(k, dtype=float)
    m = p0 @ k @ p0
    lam = np.linalg.eigvalsh(0.5 * (m + m.T))[::-1]
    top = max(lam[0], 0.0)
    if lam[-1] < -NEG_EIG_TOL * max(top, 1.0):
        raise np.linalg.LinAlgError(f"kernel is not positive semi-definite (eigenvalue {lam[-1]:.3g})")
    # eigenvalues that are rounding noise relative to the kernel itself
    scale = float(np.abs(np.diag(k)).max()) if np.size(k) else 0.0
    lam[lam < EIG_DROP * scale] = 0.0
    return lam * nm.sigma0_sq


def _positive(lambdas) -> np.ndarray:
    lam = np.asarray(lambdas, dtype=float)
    lam = lam[lam > 0]
    if lam.size == 0:
        raise ValueError("need at least one positive eigenvalue")
    return lam[lam >= EIG_DROP * lam.max()]


def davies_pvalue(q: float, lambdas, acc: float = 1e-6, lim: int = 100_000) -> float:
    """``P(sum lambda_j chi2_1 > q)`` by characteristic-function inversion.

    Raises :class:`DaviesError` when the algorithm faults or returns a value
    outside (0, 1]. A non-positive tail is below the attainable accuracy and
    is treated as a failure so the caller can use an approximation instead.
    """
    lam = _positive(lambdas)
    qfval, ifault, _ = _qf.qf(lam, np.zeros(lam.size), np.ones(lam.size, dtype=np.int64), 0.0, float(q), lim, acc)
    p = 1.0 - qfval
    if ifault not in (0, 2) or not 0.0 < p <= 1.0 + acc:
        raise DaviesError(f"Davies' method failed (ifault={ifault}, p={p:.3g})")
    return float(min(max(p, P_FLOOR), 1.0))


def liu_pvalue(q: float, lambdas) -> float:
    """Four-cumulant (Liu, Tang & Zhang 2009) approximation to the same tail."""
    lam = _positive(lambdas)
    c1, c2, c3, c4 = (np.sum(lam ** k) for k in (1, 2, 3, 4))
    s1 = c3 / c2 ** 1.5
    s2 = c4 / c2 ** 2
    mu_q, sigma_q = c1, math.sqrt(2.0 * c2)
    if s1 * s1 > s2:
        a = 1.0 / (s1 - math.sqrt(s1 * s1 - s2))
        delta = s1 * a ** 3 - a * a
        dof = a * a - 2.0 * delta
    else:
        a = 1.0 / s1
        delta = 0.0
        dof = 1.0 / (s1 * s1)
    mu_x = dof + delta
    sigma_x = math.sqrt(2.0) * a
    x = (q - mu_q) / sigma_q * sigma_x + mu_x
    if delta > 0:
        return float(stats.ncx2.sf(x, dof, delta))
    return float(stats.chi2.sf(x, dof))


def skat_pvalue(q: float, lambdas):
    """Davies p-value with Liu fallback; returns ``(p, method)``."""
    try:
        return davies_pvalue(q, lambdas), "davies"
    except DaviesError as exc:
        logger.debug("%s; using Liu approximation", exc)
        return float(min(max(liu_pvalue(q, lambdas), P_FLOOR), 1.0)), "liu"


def skat_kernel(g: GenotypeMatrix, scheme: WeightScheme = WeightScheme()) -> np.ndarray:
    if g.maf is None or g.missing.any():
        g = prepare_genotypes(g)
    return product_kernel(g, compute_weights(g.maf, scheme), center=False)


def skat_test(y, g: GenotypeMatrix, z=None, scheme: WeightScheme = WeightScheme()) -> SkatResult:
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != g.n:
        raise ValueError(f"response has {y.shape[0]} samples, genotypes have {g.n}")
    try:
        nm = fit_null_model(y, z)
    except ValueError as exc:
        raise StageError("null-model", exc) from exc
    # relative check: an exact fit leaves only rounding noise in the residuals
    if not nm.sigma0_sq > 1e-12 * max(float(np.mean(y * y)), np.finfo(float).tiny):
        raise StageError("null-model", ValueError("residual variance is zero"))
    try:
        k = skat_kernel(g, scheme)
    except ValueError as exc:
        raise StageError("weights", exc) from exc
    qstat = skat_statistic(nm, k)
    try:
        lam = eigen_lambdas(nm, k)
        p, method = skat_pvalue(qstat, lam)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise StageError("pvalue", exc) from exc
    return SkatResult(q_stat=qstat, lambdas=lam, p_value=p, method_used=method)
