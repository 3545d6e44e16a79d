"""Genotype matrices: loading, QC, imputation and MAF-based variant weights.

Conventions
-----------
- Dosages are stored as float64 with ``NaN`` marking a missing call.
- MAF is the folded frequency ``min(m, 1 - m)`` with ``m = colsum / (2n)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import stats

MISSING_TOKENS = frozenset({"", "NA", "na", "NaN", "nan", "."})
WEIGHT_TAGS = ("UW", "BETA", "WSS", "LOG")


class GenotypeFormatError(ValueError):
    """Raised when a genotype file cannot be parsed."""


@dataclass(frozen=True)
class GenotypeMatrix:
    """n x p dosage matrix with sample/variant identifiers.

    ``maf`` is ``None`` until :func:`compute_maf` has been applied.
    """

    values: np.ndarray
    sample_ids: tuple
    variant_ids: tuple
    maf: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("genotype values must be a 2-d matrix")
        n, p = values.shape
        if n == 0 or p == 0:
            raise ValueError("empty genotype matrix")
        if len(self.sample_ids) != n:
            raise ValueError(f"{len(self.sample_ids)} sample ids for {n} rows")
        if len(self.variant_ids) != p:
            raise ValueError(f"{len(self.variant_ids)} variant ids for {p} columns")
        obs = values[~np.isnan(values)]
        if obs.size and (obs.min() < 0.0 or obs.max() > 2.0):
            raise ValueError("dosages must lie in [0, 2]")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        object.__setattr__(self, "variant_ids", tuple(self.variant_ids))
        if self.maf is not None:
            object.__setattr__(self, "maf", np.asarray(self.maf, dtype=float))

    @classmethod
    def from_array(cls, values, sample_ids=None, variant_ids=None) -> "GenotypeMatrix":
        values = np.asarray(values, dtype=float)
        n, p = values.shape
        if sample_ids is None:
            sample_ids = [f"s{i + 1}" for i in range(n)]
        if variant_ids is None:
            variant_ids = [f"v{j + 1}" for j in range(p)]
        return cls(values, tuple(sample_ids), tuple(variant_ids))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    def subset_variants(self, keep) -> "GenotypeMatrix":
        keep = np.asarray(keep)
        if keep.dtype == bool:
            keep = np.flatnonzero(keep)
        maf = None if self.maf is None else self.maf[keep]
        return GenotypeMatrix(
            self.values[:, keep],
            self.sample_ids,
            tuple(self.variant_ids[j] for j in keep),
            maf,
        )


@dataclass(frozen=True)
class WeightScheme:
    """Variant weighting as a function of MAF.

    ``params`` is only read by ``BETA`` (the two shape parameters).
    """

    tag: str = "UW"
    params: tuple = field(default=(1.0, 25.0))

    def __post_init__(self):
        tag = self.tag.upper()
        if tag not in WEIGHT_TAGS:
            raise ValueError(f"unknown weight scheme {self.tag!r}; expected one of {WEIGHT_TAGS}")
        object.__setattr__(self, "tag", tag)
        object.__setattr__(self, "params", tuple(float(x) for x in self.params))


def load_genotypes(path, format: str = "csv-matrix") -> GenotypeMatrix:
    """Read a sample-by-variant dosage matrix.

    Both formats share one layout: a header ``sample_id,<variant_id>...``
    followed by one row per sample. ``csv-matrix`` is comma separated,
    ``dosage-tsv`` is tab separated. Empty fields and ``NA`` are missing.
    """
    delimiters = {"csv-matrix": ",", "dosage-tsv": "\t"}
    if format not in delimiters:
        raise ValueError(f"unknown genotype format {format!r}")
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"genotype file not found: {path}")

    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiters[format])
        rows = [row for row in reader if row and any(c.strip() for c in row)]
    if not rows:
        raise GenotypeFormatError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    if len(header) < 2:
        raise GenotypeFormatError(f"{path}: header must name at least one variant")
    if not body:
        raise GenotypeFormatError(f"{path}: no sample rows")

    width = len(header)
    samples, values = [], np.empty((len(body), width - 1))
    for i, row in enumerate(body):
        lineno = i + 2
        if len(row) != width:
            raise GenotypeFormatError(
                f"{path}: line {lineno} has {len(row)} fields, expected {width}"
            )
        samples.append(row[0].strip())
        for j, cell in enumerate(row[1:]):
            cell = cell.strip()
            if cell in MISSING_TOKENS:
                values[i, j] = np.nan
                continue
            try:
                x = float(cell)
            except ValueError:
                raise GenotypeFormatError(
                    f"{path}: line {lineno}, column {header[j + 1]!r}: non-numeric dosage {cell!r}"
                ) from None
            if not 0.0 <= x <= 2.0:
                raise GenotypeFormatError(
                    f"{path}: line {lineno}, column {header[j + 1]!r}: dosage {x} outside [0, 2]"
                )
            values[i, j] = x
    return GenotypeMatrix(values, tuple(samples), tuple(h.strip() for h in header[1:]))


def compute_maf(g: GenotypeMatrix) -> GenotypeMatrix:
    """Attach folded minor-allele frequencies, computed over observed calls."""
    obs = ~g.missing
    counts = obs.sum(axis=0)
    sums = np.where(obs, g.values, 0.0).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        m = sums / (2.0 * counts)
    m = np.where(counts > 0, m, 0.0)
    return replace(g, maf=np.minimum(m, 1.0 - m))


def filter_variants(g: GenotypeMatrix, min_maf: float = 0.01, max_missing_rate: float = 1.0):
    """Keep variants with ``maf >= min_maf`` and missing rate ``<= max_missing_rate``.

    Monomorphic variants (maf 0) never survive, even with ``min_maf=0``.
    """
    if g.maf is None:
        g = compute_maf(g)
    miss_rate = g.missing.mean(axis=0)
    keep = (g.maf >= min_maf) & (g.maf > 0.0) & (miss_rate <= max_missing_rate)
    if not keep.any():
        raise ValueError("no variants remain after filtering")
    if keep.all():
        return g
    return g.subset_variants(keep)


def impute_missing(g: GenotypeMatrix) -> GenotypeMatrix:
    """Replace missing dosages with the column mean of observed calls."""
    miss = g.missing
    if not miss.any():
        return g
    empty = miss.all(axis=0)
    if empty.any():
        bad = [g.variant_ids[j] for j in np.flatnonzero(empty)]
        raise ValueError(f"cannot impute fully missing variant(s): {', '.join(bad)}")
    means = np.nanmean(g.values, axis=0)
    values = np.where(miss, means[None, :], g.values)
    return replace(g, values=values)


def compute_weights(maf, scheme: WeightScheme = WeightScheme()) -> np.ndarray:
    """Per-variant weights from folded MAFs.

    UW    w = 1
    BETA  w = Beta(maf; a, b) density, default (1, 25)
    WSS   w = 1 / sqrt(maf (1 - maf))
    LOG   w = -log10(maf)
    """
    maf = np.asarray(maf, dtype=float)
    if maf.ndim != 1 or maf.size == 0:
        raise ValueError("maf must be a non-empty vector")
    if np.any(~np.isfinite(maf)) or np.any(maf <= 0.0) or np.any(maf > 0.5):
        raise ValueError("weights need every maf in (0, 0.5]")

    if scheme.tag == "UW":
        w = np.ones_like(maf)
    elif scheme.tag == "BETA":
        a, b = scheme.params
        w = stats.beta.pdf(maf, a, b)
    elif scheme.tag == "WSS":
        w = 1.0 / np.sqrt(maf * (1.0 - maf))
    else:
        w = -np.log10(maf)

    if not np.all(np.isfinite(w)) or np.any(w < 0.0) or not np.any(w > 0.0):
        raise ValueError(f"degenerate {scheme.tag} weights")
    return w


def parse_weight_scheme(tag: str, beta_params: Sequence[float] | str | None = None) -> WeightScheme:
    if beta_params is None:
        return WeightScheme(tag)
    if isinstance(beta_params, str):
        beta_params = [float(x) for x in beta_params.split(",")]
    if len(beta_params) != 2 or not all(math.isfinite(x) and x > 0 for x in beta_params):
        raise ValueError("beta parameters must be two positive numbers 'a,b'")
    return WeightScheme(tag, tuple(beta_params))
