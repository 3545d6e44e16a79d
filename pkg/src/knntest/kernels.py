"""Variance-component basis for the kernel neural network model.

The marginal covariance of the response is modelled as

    Var[y] = theta1 J + theta2 K + theta3 (K o K) + theta4 I

with ``K = X_w X_w^T / p`` the (weighted) product kernel and ``o`` the
element-wise product. :func:`build_basis` assembles the four matrices in
that order together with the fixed-effect design.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .genotype import GenotypeMatrix

COMPONENT_NAMES = ("J", "K", "K2", "I")


@dataclass(frozen=True)
class ComponentBasis:
    """Ordered basis ``[J, K, K o K, I]`` plus the covariate design ``Z``.

    ``Z`` may have zero columns, in which case no fixed effects are
    projected out.
    """

    V: tuple
    Z: np.ndarray

    def __post_init__(self):
        if len(self.V) != 4:
            raise ValueError("basis needs exactly four component matrices")
        n = self.V[0].shape[0]
        for v in self.V:
            if v.shape != (n, n):
                raise ValueError("basis matrices must all be n x n")
        Z = np.asarray(self.Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        if Z.shape[0] != n:
            raise ValueError(f"covariate design has {Z.shape[0]} rows, basis has {n}")
        if Z.shape[1] and np.linalg.matrix_rank(Z) < Z.shape[1]:
            raise ValueError("covariate design is not of full column rank")
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "V", tuple(np.asarray(v, dtype=float) for v in self.V))

    @property
    def n(self) -> int:
        return self.V[0].shape[0]

    def combine(self, a) -> np.ndarray:
        """Return ``sum_i a_i V_i``."""
        out = np.zeros((self.n, self.n))
        for ai, v in zip(a, self.V):
            if ai != 0.0:
                out += ai * v
        return out


def _symmetrize(k: np.ndarray) -> np.ndarray:
    return 0.5 * (k + k.T)


def product_kernel(g, w, center: bool = True) -> np.ndarray:
    """Weighted linear kernel ``(1/p) X_w X_w^T``, ``X_w = X diag(w)``.

    ``g`` may be a :class:`GenotypeMatrix` or a plain array without missing
    values. Columns are mean-centred first when ``center`` is set.
    """
    x = g.values if isinstance(g, GenotypeMatrix) else np.asarray(g, dtype=float)
    if x.ndim != 2 or x.shape[1] < 1:
        raise ValueError("genotype matrix must be n x p with p >= 1")
    if np.isnan(x).any():
        raise ValueError("genotype matrix has missing values; impute first")
    w = np.asarray(w, dtype=float)
    if w.shape != (x.shape[1],):
        raise ValueError(f"{w.size} weights for {x.shape[1]} variants")
    if not np.all(np.isfinite(w)) or np.any(w < 0) or not np.any(w > 0):
        raise ValueError("weights must be finite, non-negative and not all zero")
    if center:
        x = x - x.mean(axis=0)
    xw = x * w
    return _symmetrize(xw @ xw.T) / x.shape[1]


def hadamard_square(k: np.ndarray) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    return k * k


def normalize_kernel(k: np.ndarray) -> np.ndarray:
    """Rescale so that ``trace(K) = n``."""
    k = np.asarray(k, dtype=float)
    tr = np.trace(k)
    if not tr > 0.0:
        raise ValueError(f"cannot normalise kernel with trace {tr}")
    return k * (k.shape[0] / tr)


def intercept_design(n: int, z=None) -> np.ndarray:
    """Covariate design with a leading intercept column.

    Columns of ``z`` that are constant (an intercept the caller already
    supplied) are dropped so the design stays full rank.
    """
    ones = np.ones((n, 1))
    if z is None:
        return ones
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if z.shape[0] != n:
        raise ValueError(f"covariates have {z.shape[0]} rows, expected {n}")
    if not np.all(np.isfinite(z)):
        raise ValueError("covariates contain missing or non-finite values")
    keep = [j for j in range(z.shape[1]) if np.ptp(z[:, j]) > 0.0]
    return np.hstack([ones, z[:, keep]])


def build_basis(g, w, z=None, center: bool = True, normalize: bool = False) -> ComponentBasis:
    """Assemble ``[J, K, K o K, I]`` and the covariate design.

    The element-wise square is always taken from the unnormalised kernel;
    with ``normalize`` both ``K`` and ``K o K`` are then trace-normalised
    independently.
    """
    k = product_kernel(g, w, center=center)
    n = k.shape[0]
    k2 = hadamard_square(k)
    if normalize:
        k, k2 = normalize_kernel(k), normalize_kernel(k2)
    return ComponentBasis((np.ones((n, n)), k, k2, np.eye(n)), intercept_design(n, z))
