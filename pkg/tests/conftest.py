import numpy as np
import pytest

from knntest.genotype import GenotypeMatrix, compute_maf


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_genotypes(rng, n, p, maf_lo=0.05, maf_hi=0.5):
    maf = rng.uniform(maf_lo, maf_hi, p)
    x = rng.binomial(2, maf, size=(n, p)).astype(float)
    # keep every column polymorphic
    for j in range(p):
        if np.ptp(x[:, j]) == 0:
            x[0, j] = 1.0 if x[0, j] != 1.0 else 0.0
    return compute_maf(GenotypeMatrix.from_array(x))
