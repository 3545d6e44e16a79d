"""Regenerate the bundled toy data set in src/knntest/data/.

50 samples, 20 variants, a linear genetic signal on 10 causal variants and
two covariates. Run with ``--check N`` to estimate, over N fresh data sets
drawn the same way, how often the linear test rejects at 0.05.
"""
import argparse
import csv
from pathlib import Path

import numpy as np

from knntest import knn_test
from knntest.genotype import compute_maf
from knntest.simulation import GenotypeGenConfig, SimulationScenario, replicate_rng, simulate_genotypes, simulate_phenotype

N, P, SEED = 50, 20, 20240601
SCENARIO = SimulationScenario(
    model="linear", sigma_g_sq=3.0, sigma_0_sq=1.0, causal_prop=0.5, effect_scale="center",
    geno=GenotypeGenConfig(n=N, p=P, maf_law="uniform(0.1,0.5)", seed=SEED),
)


def draw(index):
    rng = replicate_rng(SEED, index)
    g = simulate_genotypes(SCENARIO.geno, rng)
    y = simulate_phenotype(SCENARIO, g, rng)
    z = np.column_stack([np.round(rng.normal(60, 8, N)), rng.integers(0, 2, N)])
    y = y + 0.02 * (z[:, 0] - 60) + 0.3 * z[:, 1]
    return g, y, z


def p_linear(g, y, z):
    return knn_test(y, compute_maf(g), z, normalize=True).p_linear


def write(out: Path, g, y, z):
    ids = [f"s{i + 1:03d}" for i in range(N)]
    with (out / "toy_genotypes.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id"] + [f"v{j + 1:02d}" for j in range(P)])
        for i in range(N):
            w.writerow([ids[i]] + [str(int(x)) for x in g.values[i]])
    with (out / "toy_phenotype.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "trait"])
        for i in range(N):
            w.writerow([ids[i], "%.6f" % y[i]])
    with (out / "toy_covariates.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "age", "sex"])
        for i in range(N):
            w.writerow([ids[i], "%d" % z[i, 0], "%d" % z[i, 1]])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "src" / "knntest" / "data"))
    ap.add_argument("--check", type=int, default=0)
    ns = ap.parse_args()
    if ns.check:
        ps = np.array([p_linear(*draw(i)) for i in range(1, ns.check + 1)])
        print(f"linear test rejects at 0.05 in {np.mean(ps < 0.05):.3f} of {ns.check} draws")
    g, y, z = draw(0)
    write(Path(ns.out), g, y, z)
    print(f"wrote toy data, p_linear = {p_linear(g, y, z):.3g}")


if __name__ == "__main__":
    main()
