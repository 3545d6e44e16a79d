"""File formats: sample tables, flat key/value configs, CSV/JSON results and run manifests.

Floats are written with 17 significant digits so every number read back is
bit-identical to the one written. A manifest records everything needed to
rerun a command; its ``created`` field is the only part that varies between
otherwise identical runs.
"""
from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import math
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
VOLATILE_MANIFEST_KEYS = ("created",)


class InputError(ValueError):
    """Malformed or inconsistent user input."""


def fmt_float(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    return "%.17g" % x


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    return str(v)


# sample tables -----------------------------------------------------------------

def read_sample_table(path, what: str = "table"):
    """Read ``sample_id,<col>...`` CSV into ``(ids, columns, values)``.

    Missing or non-numeric cells are errors that name the line and column.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{what} file not found: {path}")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise InputError(f"{path}: {what} needs a header and at least one row")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2:
        raise InputError(f"{path}: {what} header must name at least one column after sample_id")
    ids, values = [], np.empty((len(rows) - 1, len(header) - 1))
    for i, row in enumerate(rows[1:]):
        lineno = i + 2
        if len(row) != len(header):
            raise InputError(f"{path}: line {lineno} has {len(row)} fields, expected {len(header)}")
        ids.append(row[0].strip())
        for j, cell in enumerate(row[1:]):
            try:
                x = float(cell)
            except ValueError:
                raise InputError(f"{path}: line {lineno}, column {header[j + 1]!r}: non-numeric value {cell.strip()!r}") from None
            if not math.isfinite(x):
                raise InputError(f"{path}: line {lineno}, column {header[j + 1]!r}: missing value")
            values[i, j] = x
    if len(set(ids)) != len(ids):
        raise InputError(f"{path}: duplicate sample ids")
    return tuple(ids), tuple(header[1:]), values


def align_samples(ids, table_ids, values, what: str):
    """Reorder table rows to follow ``ids``; every sample must be present."""
    index = {s: k for k, s in enumerate(table_ids)}
    missing = [s for s in ids if s not in index]
    if missing:
        shown = ", ".join(missing[:5]) + (" ..." if len(missing) > 5 else "")
        raise InputError(f"{what} has no rows for {len(missing)} genotyped sample(s): {shown}")
    return values[[index[s] for s in ids]]


def load_phenotype(path, sample_ids) -> np.ndarray:
    ids, cols, values = read_sample_table(path, "phenotype")
    if len(cols) != 1:
        raise InputError(f"{path}: phenotype file must have exactly one value column, found {len(cols)}")
    return align_samples(sample_ids, ids, values, "phenotype")[:, 0]


def load_covariates(path, sample_ids) -> np.ndarray:
    ids, _, values = read_sample_table(path, "covariates")
    return align_samples(sample_ids, ids, values, "covariates")


# flat key/value configs --------------------------------------------------------

def parse_key_value(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise InputError(f"{source}: line {lineno}: expected 'key = value', got {raw.strip()!r}")
        if key in out:
            raise InputError(f"{source}: line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def read_key_value(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    return parse_key_value(path.read_text(), str(path))


def format_key_value(d: dict) -> str:
    return "".join(f"{k} = {_cell(v)}\n" for k, v in d.items())


def write_key_value(path, d: dict) -> None:
    Path(path).write_text(format_key_value(d))


# result files ------------------------------------------------------------------

def write_csv(path, header, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(row[k]) for k in header])


REPLICATE_COLUMNS = ("scenario", "replicate", "test", "p_value", "reject", "iterations", "converged", "skat_method", "error")


def replicate_rows(result):
    """One row per replicate per test."""
    from .simulation import TESTS

    alpha = result.scenario.alpha
    for rec in result.records:
        for t in TESTS:
            p = rec[t]
            yield {
                "scenario": result.scenario.label,
                "replicate": rec["replicate"],
                "test": t,
                "p_value": p,
                "reject": (not rec["error"]) and p <= alpha,
                "iterations": rec.get("iterations", ""),
                "converged": rec.get("converged", ""),
                "skat_method": rec.get("skat_method", ""),
                "error": rec["error"],
            }


def write_replicates(path, results) -> None:
    rows = [r for res in results for r in replicate_rows(res)]
    write_csv(path, REPLICATE_COLUMNS, rows)


def write_summary(path, rows) -> None:
    if not rows:
        raise ValueError("nothing to write")
    write_csv(path, list(rows[0]), rows)


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


# manifests ---------------------------------------------------------------------

def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir, command: str, args: dict, outputs) -> Path:
    """Record the command, its effective arguments and output digests."""
    out_dir = Path(out_dir)
    manifest = {
        "format_version": FORMAT_VERSION,
        "command": command,
        "args": args,
        "outputs": {Path(p).name: sha256(p) for p in outputs},
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    path = out_dir / MANIFEST_NAME
    write_json(path, manifest)
    return path


def read_manifest(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    try:
        m = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not a manifest ({exc})") from None
    for key in ("format_version", "command", "args", "outputs"):
        if key not in m:
            raise InputError(f"{path}: manifest lacks {key!r}")
    if m["format_version"] != FORMAT_VERSION:
        raise InputError(f"{path}: unsupported manifest version {m['format_version']}")
    return m


def stable_manifest(m: dict) -> dict:
    """Manifest content without the fields that legitimately vary."""
    return {k: v for k, v in m.items() if k not in VOLATILE_MANIFEST_KEYS}
