"""Wald-type tests on iterated-MINQUE variance components.

The large-sample covariance of the estimate is the inverse of the
information matrix ``F_ij = 1/2 tr(R V_i R V_j)`` evaluated at the fitted
covariance. Three tests are built from it:

* ``z1 = theta2 / se2`` and ``z2 = theta3 / se3``, one-sided upper tail;
* ``chi2 = t^T C^-1 t`` with ``t = (theta2, theta3)`` and ``C`` their 2x2
  covariance block, combined with the Follmann one-sided rule: reject at
  level alpha when ``chi2`` exceeds the 2-df critical value for ``2 alpha``
  and the standardised components sum to a positive number. The reported
  ``p_overall`` is ``exp(-chi2/2) / 2`` in that case and 1 otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .genotype import (
    GenotypeMatrix,
    WeightScheme,
    compute_maf,
    compute_weights,
    filter_variants,
    impute_missing,
)
from .kernels import ComponentBasis, build_basis
from .minque import MinqueConfig, iterate_minque, minque_system, projection_inverse, weak_components

INFO_CONDITION_LIMIT = 1e12
LINEAR, NONLINEAR = 1, 2


class InformationSingularError(np.linalg.LinAlgError):
    def __init__(self, message, condition_number=math.inf):
        super().__init__(f"{message} (condition number {condition_number:.3g})")
        self.condition_number = condition_number


class StageError(RuntimeError):
    """Failure inside one stage of the end-to-end test."""

    def __init__(self, stage, exc):
        super().__init__(f"[{stage}] {exc}")
        self.stage = stage


@dataclass
class AsymptoticCovariance:
    """4x4 covariance of theta-hat.

    Rows/columns of components that carry no information (``J`` once an
    intercept is projected out) are ``NaN`` and listed in ``dropped``.
    """

    cov: np.ndarray
    condition_number: float
    information: np.ndarray
    dropped: tuple = ()


@dataclass
class KnnTestReport:
    theta: np.ndarray
    cov: np.ndarray
    z1: float
    z2: float
    p_linear: float
    p_nonlinear: float
    chi2: float
    p_unadjusted: float
    p_overall: float
    converged: bool
    iterations: int
    flags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def num(x):
            x = float(x)
            return x if math.isfinite(x) else None

        return {
            "theta": [num(x) for x in self.theta],
            "cov": [num(x) for x in np.ravel(self.cov)],
            "z1": num(self.z1),
            "z2": num(self.z2),
            "p_linear": num(self.p_linear),
            "p_nonlinear": num(self.p_nonlinear),
            "chi2": num(self.chi2),
            "p_overall": num(self.p_overall),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
        }

    def summary(self) -> str:
        return (
            f"overall p={self.p_overall:.6g}, linear p={self.p_linear:.6g}, "
            f"nonlinear p={self.p_nonlinear:.6g}"
        )


def information_matrix(basis: ComponentBasis, sigma_weights, ridge: float = 1e-8) -> np.ndarray:
    r = projection_inverse(basis, sigma_weights, ridge)
    s, _ = minque_system(np.zeros(basis.n), basis, r)
    return 0.5 * s


def plug_in_weights(basis: ComponentBasis, theta_hat) -> np.ndarray:
    """Component weights for ``Sigma-hat``.

    The estimates are used as they are when ``sum theta_i V_i`` is positive
    definite; otherwise negative components are floored at zero. Flooring
    unconditionally biases ``Sigma-hat`` upwards under the null (the noise
    component absorbs what the floored ones gave up) and makes the Wald
    tests conservative.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    try:
        np.linalg.cholesky(basis.combine(theta_hat))
        return theta_hat
    except np.linalg.LinAlgError:
        return np.maximum(theta_hat, 0.0)


def asymptotic_covariance(basis: ComponentBasis, theta_hat, ridge: float = 1e-8) -> AsymptoticCovariance:
    """Inverse information evaluated at the fitted covariance."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    info = information_matrix(basis, plug_in_weights(basis, theta_hat), ridge)
    dropped = weak_components(info)
    keep = [i for i in range(4) if i not in dropped]
    block = info[np.ix_(keep, keep)]
    cond = float(np.linalg.cond(block))
    if not math.isfinite(cond) or cond > INFO_CONDITION_LIMIT:
        raise InformationSingularError("information matrix singular", cond)
    cov = np.full((4, 4), np.nan)
    inv = np.linalg.inv(block)
    cov[np.ix_(keep, keep)] = 0.5 * (inv + inv.T)
    return AsymptoticCovariance(cov=cov, condition_number=cond, information=info, dropped=dropped)


def wald_z_tests(theta_hat, cov):
    """One-sided z tests for the linear and non-linear components.

    Returns ``(z1, p_linear, z2, p_nonlinear)``.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    cov = np.asarray(cov, dtype=float)
    out = []
    for i in (LINEAR, NONLINEAR):
        var = cov[i, i]
        if not var > 0:
            raise ValueError(f"non-positive variance {var} for component {i + 1}")
        z = theta_hat[i] / math.sqrt(var)
        out += [z, float(stats.norm.sf(z))]
    return tuple(out)


def chi_square_overall(theta_hat, cov):
    """2-df Wald statistic for ``(theta2, theta3)`` and its upper-tail p-value."""
    t = np.asarray(theta_hat, dtype=float)[[LINEAR, NONLINEAR]]
    block = np.asarray(cov, dtype=float)[np.ix_([LINEAR, NONLINEAR], [LINEAR, NONLINEAR])]
    if not np.all(np.isfinite(block)) or np.linalg.cond(block) > INFO_CONDITION_LIMIT:
        raise np.linalg.LinAlgError("covariance block of (theta2, theta3) is singular")
    chi2 = float(t @ np.linalg.solve(block, t))
    chi2 = max(chi2, 0.0)
    return chi2, math.exp(-chi2 / 2.0)


def follmann_adjust(chi2: float, theta_hat, cov) -> float:
    theta_hat = np.asarray(theta_hat, dtype=float)
    cov = np.asarray(cov, dtype=float)
    std = [theta_hat[i] / math.sqrt(cov[i, i]) for i in (LINEAR, NONLINEAR)]
    if std[0] + std[1] > 0:
        return 0.5 * math.exp(-chi2 / 2.0)
    return 1.0


def follmann_reject(chi2: float, theta_hat, cov, alpha: float) -> bool:
    """The Follmann decision written directly as the rejection rule."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    cov = np.asarray(cov, dtype=float)
    std_sum = sum(theta_hat[i] / math.sqrt(cov[i, i]) for i in (LINEAR, NONLINEAR))
    return bool(chi2 > stats.chi2.isf(2 * alpha, 2) and std_sum > 0)


def knn_test_basis(y, basis: ComponentBasis, config: MinqueConfig = MinqueConfig()) -> KnnTestReport:
    """Run estimation and all three tests on a prepared basis."""
    y = np.asarray(y, dtype=float).ravel()
    try:
        est = iterate_minque(y, basis, config)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise StageError("minque", exc) from exc
    try:
        ac = asymptotic_covariance(basis, est.theta, config.ridge)
        z1, p1, z2, p2 = wald_z_tests(est.theta, ac.cov)
        chi2, p_un = chi_square_overall(est.theta, ac.cov)
        p_all = follmann_adjust(chi2, est.theta, ac.cov)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise StageError("inference", exc) from exc
    flags = {
        "converged": est.converged,
        "weakly_identified": [i + 1 for i in est.weakly_identified],
        "information_condition": ac.condition_number,
    }
    return KnnTestReport(
        theta=est.theta,
        cov=ac.cov,
        z1=z1,
        z2=z2,
        p_linear=p1,
        p_nonlinear=p2,
        chi2=chi2,
        p_unadjusted=p_un,
        p_overall=p_all,
        converged=est.converged,
        iterations=est.iterations,
        flags=flags,
    )


def prepare_genotypes(g: GenotypeMatrix, min_maf: float = 0.0) -> GenotypeMatrix:
    """Impute, compute MAF and drop monomorphic/rare variants."""
    g = impute_missing(g)
    g = compute_maf(g)
    return filter_variants(g, min_maf=min_maf)


def knn_test(
    y,
    g: GenotypeMatrix,
    z=None,
    scheme: WeightScheme = WeightScheme(),
    config: MinqueConfig = MinqueConfig(),
    center: bool = True,
    normalize: bool = False,
) -> KnnTestReport:
    """End-to-end kernel neural network test for one variant set."""
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != g.n:
        raise ValueError(f"response has {y.shape[0]} samples, genotypes have {g.n}")
    try:
        if g.maf is None or g.missing.any():
            g = prepare_genotypes(g)
        w = compute_weights(g.maf, scheme)
    except ValueError as exc:
        raise StageError("weights", exc) from exc
    try:
        basis = build_basis(g, w, z, center=center, normalize=normalize)
    except ValueError as exc:
        raise StageError("basis", exc) from exc
    return knn_test_basis(y, basis, config)
