"""Property-based checks of the invariants of each module."""
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from knntest import qf
from knntest.genotype import GenotypeMatrix, WeightScheme, compute_maf, compute_weights, filter_variants, impute_missing
from knntest.inference import chi_square_overall, follmann_adjust, follmann_reject, knn_test_basis
from knntest.kernels import build_basis, product_kernel
from knntest.minque import minque_once
from knntest.skat import DaviesError, davies_pvalue, fit_null_model, liu_pvalue, skat_statistic

SETTINGS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@st.composite
def genotype_arrays(draw, min_n=4, max_n=25, min_p=1, max_p=8):
    n = draw(st.integers(min_n, max_n))
    p = draw(st.integers(min_p, max_p))
    x = draw(arrays(np.float64, (n, p), elements=st.sampled_from([0.0, 1.0, 2.0])))
    return x


@st.composite
def polymorphic_arrays(draw, **kw):
    x = draw(genotype_arrays(**kw))
    x[0, :] = 0.0
    x[1, :] = 1.0
    return x


# genotype-data ------------------------------------------------------------------

@SETTINGS
@given(genotype_arrays(), st.randoms(use_true_random=False))
def test_maf_permutation_invariant(x, rnd):
    perm = list(range(x.shape[0]))
    rnd.shuffle(perm)
    a = compute_maf(GenotypeMatrix.from_array(x)).maf
    b = compute_maf(GenotypeMatrix.from_array(x[perm])).maf
    np.testing.assert_allclose(a, b, atol=1e-15)
    assert np.all((a >= 0) & (a <= 0.5))


@SETTINGS
@given(polymorphic_arrays(), st.data())
def test_impute_preserves_maf(x, data):
    mask = data.draw(arrays(bool, x.shape, elements=st.booleans()))
    mask[0, :] = False
    y = np.where(mask, np.nan, x)
    g = GenotypeMatrix.from_array(y)
    np.testing.assert_allclose(compute_maf(impute_missing(g)).maf, compute_maf(g).maf, atol=1e-12)


@SETTINGS
@given(arrays(np.float64, st.integers(1, 20), elements=st.floats(1e-4, 0.4999)), st.sampled_from(["UW", "BETA", "WSS", "LOG"]))
def test_weights_positive_and_deterministic(maf, tag):
    w = compute_weights(maf, WeightScheme(tag))
    assert np.all(np.isfinite(w)) and np.all(w > 0)
    np.testing.assert_array_equal(w, compute_weights(maf.copy(), WeightScheme(tag)))


@SETTINGS
@given(genotype_arrays(), st.floats(0.0, 0.5))
def test_filter_idempotent(x, min_maf):
    g = compute_maf(GenotypeMatrix.from_array(x))
    try:
        once = filter_variants(g, min_maf=min_maf)
    except ValueError:
        return
    twice = filter_variants(once, min_maf=min_maf)
    assert twice.variant_ids == once.variant_ids
    np.testing.assert_array_equal(twice.values, once.values)


# kernels ------------------------------------------------------------------------

@SETTINGS
@given(polymorphic_arrays(), st.booleans())
def test_basis_structure(x, center):
    b = build_basis(x, np.ones(x.shape[1]), center=center)
    np.testing.assert_allclose(b.V[2], b.V[1] * b.V[1], rtol=1e-12, atol=1e-15)
    for v in b.V:
        np.testing.assert_array_equal(v, v.T)
        lam = np.linalg.eigvalsh(v)
        assert lam[0] >= -1e-8 * max(lam[-1], 1.0)
    assert np.linalg.matrix_rank(b.V[0]) == 1
    np.testing.assert_array_equal(b.V[3], np.eye(x.shape[0]))
    again = build_basis(x.copy(), np.ones(x.shape[1]), center=center)
    for u, v in zip(b.V, again.V):
        np.testing.assert_array_equal(u, v)


@SETTINGS
@given(polymorphic_arrays(), st.booleans())
def test_kernel_invariant_to_column_duplication(x, center):
    k = product_kernel(x, np.ones(x.shape[1]), center=center)
    k2 = product_kernel(np.hstack([x, x]), np.ones(2 * x.shape[1]), center=center)
    np.testing.assert_allclose(k, k2, rtol=1e-12, atol=1e-14)


# minque -------------------------------------------------------------------------

@st.composite
def problems(draw):
    seed = draw(st.integers(0, 2 ** 31 - 1))
    rng = np.random.default_rng(seed)
    n = draw(st.integers(12, 30))
    p = draw(st.integers(3, 10))
    x = rng.integers(0, 3, (n, p)).astype(float)
    x[0], x[1] = 0.0, 1.0
    z = rng.normal(size=(n, draw(st.integers(0, 2))))
    b = build_basis(x, np.ones(p), z)
    y = rng.normal(size=n) * draw(st.floats(0.5, 3.0))
    return b, y, rng


@SETTINGS
@given(problems(), st.floats(0.1, 10.0))
def test_minque_scale_equivariance(prob, c):
    b, y, _ = prob
    a = minque_once(y, b, np.ones(4))
    s = minque_once(c * y, b, np.ones(4))
    np.testing.assert_allclose(s[1:], c * c * a[1:], rtol=1e-6, atol=1e-9 * c * c * np.abs(a).max())


@SETTINGS
@given(problems(), arrays(np.float64, 3, elements=st.floats(-5, 5)))
def test_minque_translation_invariance(prob, coef):
    b, y, _ = prob
    shift = b.Z @ coef[: b.Z.shape[1]]
    a = minque_once(y, b, np.ones(4))
    s = minque_once(y + shift, b, np.ones(4))
    np.testing.assert_allclose(s[1:], a[1:], rtol=1e-6, atol=1e-8 * np.abs(a).max())


# inference ----------------------------------------------------------------------

@st.composite
def estimates(draw):
    t2 = draw(st.floats(-3, 3))
    t3 = draw(st.floats(-3, 3))
    v2 = draw(st.floats(0.05, 4))
    v3 = draw(st.floats(0.05, 4))
    rho = draw(st.floats(-0.9, 0.9))
    cov = np.full((4, 4), np.nan)
    cov[1:3, 1:3] = [[v2, rho * math.sqrt(v2 * v3)], [rho * math.sqrt(v2 * v3), v3]]
    cov[3, 3] = 1.0
    return np.array([0.0, t2, t3, 1.0]), cov


@SETTINGS
@given(estimates())
def test_chi_square_invariant_to_reordering(est):
    theta, cov = est
    chi2, _ = chi_square_overall(theta, cov)
    perm = [0, 2, 1, 3]
    chi2p, _ = chi_square_overall(theta[perm], cov[np.ix_(perm, perm)])
    assert chi2p == pytest.approx(chi2, rel=1e-10, abs=1e-12)
    assert chi2 >= 0


@SETTINGS
@given(estimates(), st.sampled_from([0.01, 0.05, 0.1]))
def test_follmann_values_and_rule(est, alpha):
    theta, cov = est
    chi2, p_un = chi_square_overall(theta, cov)
    p = follmann_adjust(chi2, theta, cov)
    assert p == 1.0 or p == pytest.approx(p_un / 2)
    assert (p <= alpha) == follmann_reject(chi2, theta, cov, alpha)


@settings(max_examples=15, deadline=None)
@given(problems(), st.floats(0.2, 5.0))
def test_tests_invariant_to_response_scale(prob, c):
    b, y, rng = prob
    y = y + b.V[1] @ rng.normal(size=len(y)) * 0.3
    a, s = knn_test_basis(y, b), knn_test_basis(c * y, b)
    for k in ("z1", "z2", "chi2", "p_linear", "p_nonlinear"):
        assert getattr(s, k) == pytest.approx(getattr(a, k), rel=1e-4, abs=1e-8)


# skat ---------------------------------------------------------------------------

lambda_lists = arrays(np.float64, st.integers(1, 20), elements=st.floats(0.01, 10.0))


@SETTINGS
@given(problems(), arrays(np.float64, 3, elements=st.floats(-5, 5)))
def test_skat_statistic_invariant_to_covariate_shift(prob, coef):
    b, y, _ = prob
    z = b.Z[:, 1:]
    shift = b.Z @ coef[: b.Z.shape[1]]
    k = b.V[1] + np.eye(len(y))
    a = skat_statistic(fit_null_model(y, z if z.shape[1] else None), k)
    s = skat_statistic(fit_null_model(y + shift, z if z.shape[1] else None), k)
    assert s == pytest.approx(a, rel=1e-8, abs=1e-10)


@SETTINGS
@given(lambda_lists, st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_davies_monotone_in_q(lam, a, b):
    scale = lam.sum()
    q1, q2 = sorted((a * scale, b * scale))
    try:
        p1, p2 = davies_pvalue(q1, lam), davies_pvalue(q2, lam)
    except DaviesError:
        # faults near the density singularity at 0 and beyond the attainable accuracy
        assume(False)
    # each value carries the 1e-6 absolute accuracy of the inversion
    assert p2 <= p1 + 2e-6


@pytest.mark.xfail(
    strict=True,
    reason="four-cumulant approximation is off by up to ~0.1 below the median for short, uneven lists",
)
@settings(max_examples=200, deadline=None, derandomize=True)
@given(lambda_lists, st.floats(0.01, 0.99), st.integers(0, 2 ** 31 - 1))
def test_davies_and_liu_agree(lam, u, seed):
    draws = np.random.default_rng(seed).chisquare(1, (20_000, lam.size)) @ lam
    q = float(np.quantile(draws, u))
    assert abs(davies_pvalue(q, lam) - liu_pvalue(q, lam)) <= 5e-3


@pytest.mark.skipif(qf.qf_compiled is None, reason="compiled backend not built")
@SETTINGS
@given(lambda_lists, st.floats(0.05, 3.0))
def test_backends_identical(lam, frac):
    c = float(frac * lam.sum())
    args = (lam, np.zeros(lam.size), np.ones(lam.size, dtype=np.int64), 0.0, c, 100_000, 1e-6)
    a, b = qf.qf_python(*args), qf.qf_compiled(*args)
    assert a[1] == b[1]
    assert a[0] == pytest.approx(b[0], abs=1e-12)
