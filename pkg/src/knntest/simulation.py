"""Synthetic genotypes/phenotypes and the Monte Carlo size/power harness.

Phenotype models
----------------
Random-effect models draw ``a ~ N(0, sigma_g^2 G G^T / p_causal)`` from the
causal genotype columns (standardized by default, see ``effect_scale``) and
apply ``f`` element-wise:

    linear     f(a) = a
    quadratic  f(a) = a^2
    cosh       f(a) = cosh(a)
    ricker     f(a) = beta * r(a^2) * exp(-r(a^2)),   r(x) = log(1 + e^x)

Interaction models act on the causal columns directly:

    mult2/mult3      sum over all 2-/3-subsets of causal columns of their
                     element-wise product
    thresh2/thresh3  the same sum where positive, zero elsewhere

With ``standardize`` (the default) ``f`` is centred, scaled to unit sample
variance and multiplied by ``sqrt(sigma_g^2)``, so ``sigma_g^2`` is the
signal variance for every model. The response is ``y = f + eps`` with
``eps ~ N(0, sigma_0^2 I)``.
"""
from __future__ import annotations

import logging
import math
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special, stats

from .genotype import GenotypeMatrix, WeightScheme, compute_maf, compute_weights, filter_variants
from .inference import knn_test_basis
from .kernels import build_basis
from .minque import MinqueConfig
from .skat import skat_test

logger = logging.getLogger(__name__)

RANDOM_EFFECT_MODELS = ("linear", "quadratic", "cosh", "ricker")
INTERACTION_MODELS = {"mult2": 2, "mult3": 3, "thresh2": 2, "thresh3": 3}
MODELS = ("null",) + RANDOM_EFFECT_MODELS + tuple(INTERACTION_MODELS)
EFFECT_SCALES = ("raw", "center", "standardize")
TESTS = ("overall", "linear", "nonlinear", "skat")
MAX_FAILURE_RATE = 0.01


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class MafLaw:
    """Distribution of per-variant MAFs.

    ``uniform``: ``params = (lo, hi)``.
    ``rare-mixture``: ``params = (common_frac, common_lo, common_hi, rare_lo, rare_hi)``.
    """

    kind: str = "uniform"
    params: tuple = (0.05, 0.5)

    def __post_init__(self):
        params = tuple(float(x) for x in self.params)
        object.__setattr__(self, "params", params)
        if self.kind == "uniform":
            ranges = [params] if len(params) == 2 else None
        elif self.kind == "rare-mixture":
            if len(params) != 5 or not 0.0 <= params[0] <= 1.0:
                raise ValueError("rare-mixture needs (common_frac, common_lo, common_hi, rare_lo, rare_hi)")
            ranges = [params[1:3], params[3:5]]
        else:
            raise ValueError(f"unknown maf law {self.kind!r}")
        if ranges is None:
            raise ValueError("uniform maf law needs (lo, hi)")
        for lo, hi in ranges:
            if not 0.0 < lo <= hi <= 0.5:
                raise ValueError(f"maf range ({lo}, {hi}) must satisfy 0 < lo <= hi <= 0.5")

    @classmethod
    def parse(cls, text: str) -> "MafLaw":
        m = re.fullmatch(r"\s*([a-z\-]+)\s*\(([^)]*)\)\s*", text)
        if not m:
            raise ValueError(f"cannot parse maf law {text!r}; expected e.g. uniform(0.05,0.5)")
        return cls(m.group(1), tuple(float(x) for x in m.group(2).split(",")))

    def __str__(self):
        return f"{self.kind}({','.join(repr(x) for x in self.params)})"

    def draw(self, p: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "uniform":
            lo, hi = self.params
            return rng.uniform(lo, hi, p)
        frac, clo, chi, rlo, rhi = self.params
        common = rng.random(p) < frac
        return np.where(common, rng.uniform(clo, chi, p), rng.uniform(rlo, rhi, p))


@dataclass(frozen=True)
class GenotypeGenConfig:
    n: int = 200
    p: int = 100
    maf_law: MafLaw = MafLaw()
    ld_rho: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 2 or self.p < 1:
            raise ValueError("need n >= 2 and p >= 1")
        if not 0.0 <= self.ld_rho < 1.0:
            raise ValueError("ld_rho must lie in [0, 1)")
        if isinstance(self.maf_law, str):
            object.__setattr__(self, "maf_law", MafLaw.parse(self.maf_law))


@dataclass(frozen=True)
class SimulationScenario:
    model: str = "null"
    sigma_g_sq: float = 0.0
    sigma_0_sq: float = 1.0
    beta: float = 1.0
    causal_prop: float = 0.2
    geno: GenotypeGenConfig = GenotypeGenConfig()
    weight_scheme: WeightScheme = WeightScheme()
    replicates: int = 500
    alpha: float = 0.05
    standardize: bool = True
    center: bool = True
    effect_scale: str = "standardize"
    name: str = ""

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; expected one of {MODELS}")
        for attr in ("sigma_g_sq", "sigma_0_sq", "beta"):
            if getattr(self, attr) < 0:
                raise ValueError(f"{attr} must be non-negative")
        if not 0.0 < self.causal_prop <= 1.0:
            raise ValueError("causal_prop must lie in (0, 1]")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not 0.0 < self.alpha < 0.5:
            raise ValueError("alpha must lie in (0, 0.5)")
        if self.effect_scale not in EFFECT_SCALES:
            raise ValueError(f"unknown effect_scale {self.effect_scale!r}; expected one of {EFFECT_SCALES}")

    @property
    def label(self) -> str:
        return self.name or f"{self.model}-n{self.geno.n}-p{self.geno.p}-{self.weight_scheme.tag}"

    @property
    def seed(self) -> int:
        return self.geno.seed


@dataclass
class MonteCarloResult:
    scenario: SimulationScenario
    replicates: int
    failures: int
    counts: dict
    rates: dict
    ci: dict
    records: list = field(default_factory=list)
    elapsed: float = 0.0


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    """Independent counter-based stream for replicate ``index``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def simulate_genotypes(cfg: GenotypeGenConfig, rng: np.random.Generator | None = None) -> GenotypeMatrix:
    """HWE genotypes, optionally in AR(1) linkage disequilibrium.

    Each of the two haplotypes thresholds a latent Gaussian row whose
    columns follow an AR(1) process with correlation ``ld_rho``, so every
    genotype is marginally Binomial(2, maf).
    """
    if rng is None:
        rng = np.random.Generator(np.random.Philox(key=int(cfg.seed)))
    maf = cfg.maf_law.draw(cfg.p, rng)
    cut = special.ndtri(maf)
    latent = rng.standard_normal((2, cfg.n, cfg.p))
    rho = cfg.ld_rho
    if rho > 0.0:
        scale = math.sqrt(1.0 - rho * rho)
        for j in range(1, cfg.p):
            latent[:, :, j] = rho * latent[:, :, j - 1] + scale * latent[:, :, j]
    values = (latent < cut).sum(axis=0).astype(float)
    return GenotypeMatrix.from_array(values)


def sample_random_effect(g_causal, sigma_g_sq: float, rng: np.random.Generator) -> np.ndarray:
    """Draw ``a = G u`` with ``u ~ N(0, sigma_g^2 / p_causal I)``.

    Equivalent in law to ``N(0, sigma_g^2 G G^T / p_causal)`` without forming
    the n x n covariance.
    """
    g_causal = np.asarray(g_causal, dtype=float)
    p_causal = g_causal.shape[1]
    if p_causal < 1:
        raise ValueError("need at least one causal variant")
    u = rng.standard_normal(p_causal) * math.sqrt(sigma_g_sq / p_causal)
    return g_causal @ u


def _elementary_symmetric(x: np.ndarray, k: int) -> np.ndarray:
    """Row-wise sum over all k-subsets of columns of their product (Newton's identities)."""
    p1 = x.sum(axis=1)
    p2 = (x ** 2).sum(axis=1)
    if k == 2:
        return (p1 ** 2 - p2) / 2.0
    p3 = (x ** 3).sum(axis=1)
    return (p1 ** 3 - 3.0 * p1 * p2 + 2.0 * p3) / 6.0


def _softplus(x):
    return np.logaddexp(0.0, x)


def apply_model(model: str, x, beta: float = 1.0, sigma_g_sq: float = 1.0, standardize: bool = True) -> np.ndarray:
    """Mean vector ``f`` for a phenotype model.

    ``x`` is the random effect ``a`` for the random-effect models and the
    n x p_causal causal genotype matrix for the interaction models.
    """
    x = np.asarray(x, dtype=float)
    if model == "null":
        return np.zeros(x.shape[0])
    if model in RANDOM_EFFECT_MODELS:
        if x.ndim != 1:
            raise ValueError(f"{model} model expects a random-effect vector")
        if model == "linear":
            f = x.copy()
        elif model == "quadratic":
            f = x ** 2
        elif model == "cosh":
            f = np.cosh(x)
        else:
            r = _softplus(x ** 2)
            f = beta * r * np.exp(-r)
    elif model in INTERACTION_MODELS:
        k = INTERACTION_MODELS[model]
        if x.ndim != 2:
            raise ValueError(f"{model} model expects the causal genotype matrix")
        if x.shape[1] < k:
            raise ValueError(f"{model} needs at least {k} causal variants, got {x.shape[1]}")
        f = _elementary_symmetric(x, k)
        if model.startswith("thresh"):
            f = np.where(f > 0.0, f, 0.0)
    else:
        raise ValueError(f"unknown model {model!r}")

    if not standardize:
        return f
    f = f - f.mean()
    sd = f.std()
    if sd > 0.0:
        f = f / sd * math.sqrt(sigma_g_sq)
    return f


def causal_columns(p: int, causal_prop: float, rng: np.random.Generator) -> np.ndarray:
    count = min(p, max(1, int(round(causal_prop * p))))
    return np.sort(rng.choice(p, size=count, replace=False))


def scale_effect_genotypes(g_causal, how: str = "standardize") -> np.ndarray:
    """Causal genotypes as used in the random effect.

    ``raw`` keeps allele counts, ``center`` removes column means and
    ``standardize`` also scales each column to unit sample variance, so a
    rare variant contributes as much to ``Var(a)`` as a common one.
    """
    g_causal = np.asarray(g_causal, dtype=float)
    if how == "raw":
        return g_causal
    out = g_causal - g_causal.mean(axis=0)
    if how == "center":
        return out
    if how != "standardize":
        raise ValueError(f"unknown effect_scale {how!r}; expected one of {EFFECT_SCALES}")
    sd = out.std(axis=0)
    return out / np.where(sd > 0, sd, 1.0)


def simulate_phenotype(scenario: SimulationScenario, g: GenotypeMatrix, rng: np.random.Generator) -> np.ndarray:
    """``y = f + eps``; the null model gives ``y = eps``."""
    n = g.n
    if scenario.model == "null":
        f = np.zeros(n)
    else:
        cols = causal_columns(g.p, scenario.causal_prop, rng)
        g_causal = g.values[:, cols]
        if scenario.model in RANDOM_EFFECT_MODELS:
            g_causal = scale_effect_genotypes(g_causal, scenario.effect_scale)
            x = sample_random_effect(g_causal, scenario.sigma_g_sq, rng)
        else:
            x = g_causal
        f = apply_model(scenario.model, x, scenario.beta, scenario.sigma_g_sq, scenario.standardize)
    return f + rng.standard_normal(n) * math.sqrt(scenario.sigma_0_sq)


def _prepare(g: GenotypeMatrix) -> GenotypeMatrix:
    # rare variants may be monomorphic in a small sample; they carry no information
    return filter_variants(compute_maf(g), min_maf=0.0)


def run_replicate(scenario: SimulationScenario, index: int, config: MinqueConfig = MinqueConfig()) -> dict:
    """Simulate one data set and run both tests; never raises on numeric failure."""
    rng = replicate_rng(scenario.seed, index)
    record = {"replicate": index, "error": ""}
    try:
        g = simulate_genotypes(scenario.geno, rng)
        y = simulate_phenotype(scenario, g, rng)
        g = _prepare(g)
        w = compute_weights(g.maf, scenario.weight_scheme)
        basis = build_basis(g, w, None, center=scenario.center, normalize=False)
        rep = knn_test_basis(y, basis, config)
        sk = skat_test(y, g, None, scenario.weight_scheme)
    except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        record.update({t: math.nan for t in TESTS}, error=f"{type(exc).__name__}: {exc}")
        return record
    record.update(
        overall=rep.p_overall,
        linear=rep.p_linear,
        nonlinear=rep.p_nonlinear,
        skat=sk.p_value,
        converged=rep.converged,
        iterations=rep.iterations,
        skat_method=sk.method_used,
    )
    return record


def _run_chunk(args):
    scenario, indices, config = args
    return [run_replicate(scenario, i, config) for i in indices]


def binomial_ci(k: int, n: int, level: float = 0.95):
    if n == 0:
        return (0.0, 1.0)
    ci = stats.binomtest(k, n).proportion_ci(confidence_level=level, method="exact")
    return (float(ci.low), float(ci.high))


def aggregate(scenario: SimulationScenario, records: list, elapsed: float = 0.0) -> MonteCarloResult:
    records = sorted(records, key=lambda r: r["replicate"])
    ok = [r for r in records if not r["error"]]
    failures = len(records) - len(ok)
    if failures and failures >= MAX_FAILURE_RATE * len(records):
        first = next(r["error"] for r in records if r["error"])
        raise SimulationError(
            f"{failures} of {len(records)} replicates failed in scenario {scenario.label}; first error: {first}"
        )
    counts = {t: int(sum(r[t] <= scenario.alpha for r in ok)) for t in TESTS}
    m = len(ok)
    rates = {t: counts[t] / m if m else math.nan for t in TESTS}
    ci = {t: binomial_ci(counts[t], m) for t in TESTS}
    return MonteCarloResult(scenario, m, failures, counts, rates, ci, records, elapsed)


def run_scenario(
    scenario: SimulationScenario,
    n_jobs: int = 1,
    config: MinqueConfig = MinqueConfig(),
    progress=None,
) -> MonteCarloResult:
    """Monte Carlo rejection rates for KNN (overall/linear/nonlinear) and SKAT.

    Replicate ``i`` uses its own generator spawned from ``(seed, i)``, so the
    result does not depend on ``n_jobs`` or scheduling order.
    """
    start = time.perf_counter()
    indices = list(range(scenario.replicates))
    if n_jobs <= 1:
        records = []
        for i in indices:
            records.append(run_replicate(scenario, i, config))
            if progress is not None:
                progress(i + 1, scenario.replicates)
    else:
        chunks = [indices[k::n_jobs] for k in range(n_jobs)]
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            records = [r for chunk in pool.map(_run_chunk, [(scenario, c, config) for c in chunks]) for r in chunk]
    return aggregate(scenario, records, time.perf_counter() - start)


def power_summary(results, group_keys=("model", "n", "p", "causal_prop", "weights")) -> list:
    """Long-format table: one row per scenario and test."""
    rows = []
    for res in results:
        desc = scenario_fields(res.scenario)
        for t in TESTS:
            row = {"scenario": res.scenario.label}
            row.update({k: desc[k] for k in group_keys})
            row.update(
                test=t,
                rate=res.rates[t],
                ci_lo=res.ci[t][0],
                ci_hi=res.ci[t][1],
                replicates=res.replicates,
                alpha=res.scenario.alpha,
            )
            rows.append(row)
    return rows


# flat key/value representation -------------------------------------------------

SCENARIO_KEYS = (
    "name", "model", "sigma_g_sq", "sigma_0_sq", "beta", "causal_prop", "n", "p", "maf_law",
    "ld_rho", "seed", "weights", "beta_params", "replicates", "alpha", "standardize", "center",
    "effect_scale",
)


def scenario_fields(s: SimulationScenario) -> dict:
    """Flatten a scenario into the key/value form used by config files."""
    return {
        "name": s.name,
        "model": s.model,
        "sigma_g_sq": s.sigma_g_sq,
        "sigma_0_sq": s.sigma_0_sq,
        "beta": s.beta,
        "causal_prop": s.causal_prop,
        "n": s.geno.n,
        "p": s.geno.p,
        "maf_law": str(s.geno.maf_law),
        "ld_rho": s.geno.ld_rho,
        "seed": s.geno.seed,
        "weights": s.weight_scheme.tag,
        "beta_params": ",".join(repr(x) for x in s.weight_scheme.params),
        "replicates": s.replicates,
        "alpha": s.alpha,
        "standardize": s.standardize,
        "center": s.center,
        "effect_scale": s.effect_scale,
    }


def _as_bool(key, value):
    if isinstance(value, bool):
        return value
    v = str(value).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{key}: expected a boolean, got {value!r}")


def scenario_from_fields(d: dict) -> SimulationScenario:
    """Build a scenario from a flat mapping; unknown keys are rejected."""
    unknown = set(d) - set(SCENARIO_KEYS)
    if unknown:
        raise ValueError(f"unknown scenario field(s): {', '.join(sorted(unknown))}")
    base = scenario_fields(SimulationScenario())
    base.update(d)

    def conv(key, fn):
        try:
            return fn(base[key])
        except (TypeError, ValueError) as exc:
            raise ValueError(f"invalid value for {key}: {base[key]!r} ({exc})") from None

    def as_int(v):
        f = float(v)
        if f != int(f):
            raise ValueError("not an integer")
        return int(f)

    try:
        geno = GenotypeGenConfig(
            n=conv("n", as_int),
            p=conv("p", as_int),
            maf_law=conv("maf_law", lambda v: v if isinstance(v, MafLaw) else MafLaw.parse(str(v))),
            ld_rho=conv("ld_rho", float),
            seed=conv("seed", as_int),
        )
    except ValueError as exc:
        raise ValueError(f"invalid genotype settings: {exc}") from None
    bp = base["beta_params"]
    if isinstance(bp, str):
        bp = conv("beta_params", lambda v: tuple(float(x) for x in v.split(",")))
    return SimulationScenario(
        model=str(base["model"]).strip().lower(),
        sigma_g_sq=conv("sigma_g_sq", float),
        sigma_0_sq=conv("sigma_0_sq", float),
        beta=conv("beta", float),
        causal_prop=conv("causal_prop", float),
        geno=geno,
        weight_scheme=conv("weights", lambda v: WeightScheme(str(v), tuple(bp))),
        replicates=conv("replicates", as_int),
        alpha=conv("alpha", float),
        standardize=_as_bool("standardize", base["standardize"]),
        center=_as_bool("center", base["center"]),
        effect_scale=str(base["effect_scale"]).strip().lower(),
        name=str(base["name"]),
    )


# Full-scale settings: n = 1000 with 500, 2000 or 4000 variants, 20% causal.
# The 2000-SNP Ricker row is read as (sigma_g^2 = 1, sigma_0^2 = 2, beta = 70).
FULL_SCALE_SETTINGS = {
    "linear": {500: (0.5, 2.0, None), 2000: (0.9, 2.0, None), 4000: (1.2, 2.0, None)},
    "quadratic": {500: (1.5, 2.0, None), 2000: (5.0, 2.0, None), 4000: (7.0, 2.0, None)},
    "cosh": {500: (2.0, 2.0, None), 2000: (3.0, 2.0, None), 4000: (3.0, 2.0, None)},
    "ricker": {500: (0.5, 2.0, 30.0), 2000: (1.0, 2.0, 70.0), 4000: (1.0, 2.0, 150.0)},
    "mult2": {500: (8.0, 2.0, None), 2000: (10.0, 2.0, None), 4000: (20.0, 2.0, None)},
    "mult3": {500: (10.0, 2.0, None), 2000: (20.0, 2.0, None), 4000: (20.0, 2.0, None)},
    "thresh2": {500: (8.0, 2.0, None), 2000: (10.0, 2.0, None), 4000: (50.0, 2.0, None)},
    "thresh3": {500: (5.0, 2.0, None), 2000: (20.0, 2.0, None), 4000: (20.0, 2.0, None)},
}


def full_scale_scenario(model: str, snps: int, replicates: int = 1000, seed: int = 0, **overrides) -> SimulationScenario:
    """Scenario for one row of the full-scale settings (n = 1000, 20% causal)."""
    if model == "null":
        sg, s0, beta = 0.0, 2.0, None
    else:
        sg, s0, beta = FULL_SCALE_SETTINGS[model][snps]
    s = SimulationScenario(
        model=model,
        sigma_g_sq=sg,
        sigma_0_sq=s0,
        beta=1.0 if beta is None else beta,
        causal_prop=0.2,
        geno=GenotypeGenConfig(n=1000, p=snps, seed=seed),
        replicates=replicates,
    )
    return replace(s, **overrides) if overrides else s
