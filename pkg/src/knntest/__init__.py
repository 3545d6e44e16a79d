"""Kernel neural network (KNN) variance-component association tests.

The phenotype covariance is modelled as
``theta1 J + theta2 K + theta3 K*K + theta4 I`` with ``K`` a weighted
product kernel over a variant set. Components are estimated by iterated
MINQUE and tested with Wald statistics; SKAT is provided as a baseline
together with a Monte Carlo harness for type-I error and power.
"""
from .genotype import (
    GenotypeFormatError,
    GenotypeMatrix,
    WeightScheme,
    compute_maf,
    compute_weights,
    filter_variants,
    impute_missing,
    load_genotypes,
)
from .inference import KnnTestReport, StageError, asymptotic_covariance, knn_test, knn_test_basis, prepare_genotypes
from .kernels import ComponentBasis, build_basis, hadamard_square, normalize_kernel, product_kernel
from .minque import MinqueConfig, ThetaEstimate, iterate_minque, minque_once
from .qf import BACKEND as QF_BACKEND
from .skat import SkatResult, davies_pvalue, liu_pvalue, skat_test
from .simulation import (
    GenotypeGenConfig,
    MafLaw,
    MonteCarloResult,
    SimulationScenario,
    run_scenario,
    simulate_genotypes,
    simulate_phenotype,
)

__version__ = "0.1.0"


def toy_data_paths() -> dict:
    """Paths of the bundled example data set (50 samples, 20 variants)."""
    from importlib.resources import files

    root = files(__name__) / "data"
    return {k: str(root / f"toy_{k}.csv") for k in ("genotypes", "phenotype", "covariates")}
