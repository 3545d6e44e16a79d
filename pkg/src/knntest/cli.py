"""Command-line interface.

Subcommands::

    knntest test      --genotypes G.csv --phenotype y.csv [--covariates Z.csv] [--out DIR]
    knntest skat      --genotypes G.csv --phenotype y.csv [--covariates Z.csv] [--out DIR]
    knntest simulate  [--config scenario.cfg] [--reps N] [--seed S] --out DIR
    knntest compare   --config a.cfg b.cfg ... --out DIR
    knntest replay    DIR/manifest.json [--out DIR2]

Exit status is 0 on success, 1 for input errors and 2 for numeric failures.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .genotype import load_genotypes, parse_weight_scheme
from .inference import StageError, knn_test, prepare_genotypes
from .simulation import SimulationError, power_summary, run_scenario, scenario_fields, scenario_from_fields
from .skat import skat_test

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2
WEIGHT_CHOICES = ("uw", "beta", "wss", "log")


class NumericFailure(RuntimeError):
    pass


# commands ----------------------------------------------------------------------

def _load_inputs(args):
    try:
        g = load_genotypes(args["genotypes"], args["format"])
    except (OSError, ValueError) as exc:
        raise StageError("genotypes", exc) from exc
    try:
        y = io.load_phenotype(args["phenotype"], g.sample_ids)
        z = io.load_covariates(args["covariates"], g.sample_ids) if args["covariates"] else None
    except (OSError, ValueError) as exc:
        raise StageError("inputs", exc) from exc
    try:
        g = prepare_genotypes(g)
        scheme = parse_weight_scheme(args["weights"], args["beta_params"])
    except ValueError as exc:
        raise StageError("weights", exc) from exc
    return g, y, z, scheme


def run_test(args: dict, out: Path | None):
    g, y, z, scheme = _load_inputs(args)
    rep = knn_test(y, g, z, scheme, center=args["center"], normalize=args["normalize"])
    doc = rep.to_dict()
    doc.update(n_samples=g.n, n_variants=g.p, summary=rep.summary())
    print(rep.summary())
    if out is None:
        return []
    path = out / "report.json"
    io.write_json(path, doc)
    return [path]


def run_skat(args: dict, out: Path | None):
    g, y, z, scheme = _load_inputs(args)
    res = skat_test(y, g, z, scheme)
    doc = res.to_dict()
    doc.update(n_samples=g.n, n_variants=g.p)
    print(f"skat p={res.p_value:.6g} ({res.method_used})")
    if out is None:
        return []
    path = out / "skat.json"
    io.write_json(path, doc)
    return [path]


def _scenarios(args: dict):
    try:
        return [scenario_from_fields(f) for f in args["scenarios"]]
    except ValueError as exc:
        raise StageError("config", exc) from exc


def _run_all(scenarios, jobs: int):
    results = []
    for s in scenarios:
        try:
            results.append(run_scenario(s, n_jobs=jobs))
        except SimulationError as exc:
            raise NumericFailure(str(exc)) from exc
        r = results[-1]
        rates = ", ".join(f"{t}={r.rates[t]:.3f}" for t in r.rates)
        print(f"{s.label}: {r.replicates} replicates, {r.failures} failed; {rates}")
    return results


def run_simulate(args: dict, out: Path, jobs: int = 1):
    results = _run_all(_scenarios(args), jobs)
    reps, summary = out / "replicates.csv", out / "summary.csv"
    io.write_replicates(reps, results)
    io.write_summary(summary, power_summary(results))
    return [reps, summary]


def run_compare(args: dict, out: Path, jobs: int = 1):
    scenarios = _scenarios(args)
    if not scenarios:
        raise StageError("config", ValueError("no scenarios to compare"))
    alphas = sorted({s.alpha for s in scenarios})
    if len(alphas) > 1:
        raise StageError("config", ValueError(f"scenarios use different alpha levels: {alphas}"))
    results = _run_all(scenarios, jobs)
    path = out / "power.csv"
    io.write_summary(path, power_summary(results))
    return [path]


RUNNERS = {"test": run_test, "skat": run_skat, "simulate": run_simulate, "compare": run_compare}


def execute(command: str, args: dict, out: Path | None, jobs: int = 1):
    """Run a command from its recorded arguments and write the manifest."""
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    runner = RUNNERS[command]
    outputs = runner(args, out, jobs) if command in ("simulate", "compare") else runner(args, out)
    if out is not None:
        io.write_manifest(out, command, args, outputs)
    return outputs


# argument handling -------------------------------------------------------------

def _data_args(ns) -> dict:
    return {
        "genotypes": str(Path(ns.genotypes).resolve()),
        "phenotype": str(Path(ns.phenotype).resolve()),
        "covariates": str(Path(ns.covariates).resolve()) if ns.covariates else None,
        "format": ns.format,
        "weights": ns.weights,
        "beta_params": list(ns.beta_params),
        "center": ns.center,
        "normalize": ns.normalize,
    }


def _scenario_args(ns, configs) -> dict:
    overrides = {}
    if ns.reps is not None:
        overrides["replicates"] = ns.reps
    if ns.seed is not None:
        overrides["seed"] = ns.seed
    if ns.alpha is not None:
        overrides["alpha"] = ns.alpha
    if ns.weights is not None:
        overrides["weights"] = ns.weights
    if ns.beta_params is not None:
        overrides["beta_params"] = ",".join(repr(x) for x in ns.beta_params)
    fields = []
    for cfg in configs:
        try:
            d = io.read_key_value(cfg) if cfg is not None else {}
        except (OSError, ValueError) as exc:
            raise StageError("config", exc) from exc
        d.update(overrides)
        try:
            fields.append(scenario_fields(scenario_from_fields(d)))
        except ValueError as exc:
            raise StageError("config", f"{cfg}: {exc}" if cfg else exc) from exc
    return {"scenarios": fields}


def _beta_params(text: str):
    try:
        a, b = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'a,b', got {text!r}") from None
    return (a, b)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="knntest", description="Kernel neural network variance-component association tests")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (("test", "KNN test on one variant set"), ("skat", "SKAT on one variant set")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--genotypes", required=True)
        p.add_argument("--phenotype", required=True)
        p.add_argument("--covariates")
        p.add_argument("--format", choices=("csv-matrix", "dosage-tsv"), default="csv-matrix")
        p.add_argument("--weights", choices=WEIGHT_CHOICES, default="uw")
        p.add_argument("--beta-params", type=_beta_params, default=(1.0, 25.0))
        p.add_argument("--center", action=argparse.BooleanOptionalAction, default=True)
        p.add_argument("--normalize", action=argparse.BooleanOptionalAction, default=(name == "test"))
        p.add_argument("--out")

    for name, help_text in (("simulate", "Monte Carlo rejection rates for one scenario"),
                            ("compare", "power table across several scenarios")):
        p = sub.add_parser(name, help=help_text)
        if name == "simulate":
            p.add_argument("--config")
        else:
            p.add_argument("--config", nargs="*", default=[])
        p.add_argument("--reps", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--weights", choices=WEIGHT_CHOICES)
        p.add_argument("--beta-params", type=_beta_params)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--out", required=True)

    p = sub.add_parser("replay", help="rerun a command from its manifest and compare outputs")
    p.add_argument("manifest")
    p.add_argument("--out", help="output directory (default: the manifest's own directory)")
    p.add_argument("--jobs", type=int, default=1)
    return parser


def _replay(ns) -> int:
    m = io.read_manifest(ns.manifest)
    src = Path(ns.manifest)
    src_dir = src if src.is_dir() else src.parent
    out = Path(ns.out) if ns.out else src_dir
    execute(m["command"], m["args"], out, ns.jobs)
    new = io.read_manifest(out)
    if io.stable_manifest(new) != io.stable_manifest(m):
        bad = sorted(k for k in set(m["outputs"]) | set(new["outputs"]) if m["outputs"].get(k) != new["outputs"].get(k))
        print(f"replay differs from manifest: {', '.join(bad) or 'arguments'}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"replay reproduced {len(new['outputs'])} output file(s)")
    return EXIT_OK


def _is_numeric(exc) -> bool:
    cause = exc.__cause__ if isinstance(exc, StageError) else exc
    return isinstance(cause, (ArithmeticError, np.linalg.LinAlgError, NumericFailure))


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if ns.command == "replay":
            return _replay(ns)
        if ns.command in ("test", "skat"):
            args = _data_args(ns)
        else:
            configs = [ns.config] if ns.command == "simulate" else ns.config
            args = _scenario_args(ns, configs)
        execute(ns.command, args, Path(ns.out) if ns.out else None, getattr(ns, "jobs", 1))
    except (StageError, NumericFailure, io.InputError, OSError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC if _is_numeric(exc) else EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
