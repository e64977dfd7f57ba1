"""Trial data containers, CSV ingestion, and deterministic sample splitting."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

__all__ = [
    "TrialDataset",
    "SplitPair",
    "CsvSchema",
    "load_csv",
    "write_csv",
    "random_split",
    "split_indices",
    "center_columns",
    "aggregate_columns",
]


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    out = np.array(values, dtype=dtype, order="C")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class TrialDataset:
    """One randomized-trial sample: binary treatments, outcomes, optional covariates.

    Arrays are copied on construction and marked read-only, so instances can
    be shared freely. ``outcomes`` is ``(n, p)``, ``covariates`` is ``(n, m)``
    when present, and ``column_labels`` (optional) names the ``p`` outcome
    columns.
    """

    treatments: np.ndarray
    outcomes: np.ndarray
    covariates: np.ndarray | None = None
    column_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        t = np.asarray(self.treatments)
        if t.ndim != 1:
            raise DataError(f"treatments must be 1-d, got shape {t.shape}")
        t_float = t.astype(np.float64)
        if not np.all(np.isin(t_float, (0.0, 1.0))):
            bad = np.flatnonzero(~np.isin(t_float, (0.0, 1.0)))[0]
            raise DataError(
                f"treatment values must be 0 or 1; found {t[bad]!r} at row {bad}"
            )
        y = np.asarray(self.outcomes, dtype=np.float64)
        if y.ndim != 2:
            raise DataError(f"outcomes must be 2-d, got shape {y.shape}")
        n = t.shape[0]
        if n < 2:
            raise DataError(f"dataset needs n >= 2 rows, got n={n}")
        if y.shape[0] != n:
            raise DataError(
                f"outcomes have {y.shape[0]} rows but treatments have {n}"
            )
        if not np.all(np.isfinite(y)):
            raise DataError("outcomes contain non-finite values")
        object.__setattr__(self, "treatments", _frozen_array(t_float, np.int64))
        object.__setattr__(self, "outcomes", _frozen_array(y))
        if self.covariates is not None:
            x = np.asarray(self.covariates, dtype=np.float64)
            if x.ndim != 2 or x.shape[0] != n:
                raise DataError(
                    f"covariates must be (n, m) with n={n}, got shape {x.shape}"
                )
            if not np.all(np.isfinite(x)):
                raise DataError("covariates contain non-finite values")
            object.__setattr__(self, "covariates", _frozen_array(x))
        if self.column_labels is not None:
            labels = tuple(str(c) for c in self.column_labels)
            if len(labels) != y.shape[1]:
                raise DataError(
                    f"{len(labels)} column labels for {y.shape[1]} outcome columns"
                )
            object.__setattr__(self, "column_labels", labels)

    @property
    def n(self) -> int:
        return self.treatments.shape[0]

    @property
    def p(self) -> int:
        return self.outcomes.shape[1]

    @property
    def m(self) -> int:
        return 0 if self.covariates is None else self.covariates.shape[1]

    @property
    def n_treated(self) -> int:
        return int(self.treatments.sum())

    @property
    def n_control(self) -> int:
        return self.n - self.n_treated

    def take_rows(self, indices) -> "TrialDataset":
        """Return the row subset ``indices`` as a new dataset."""
        idx = np.asarray(indices, dtype=np.intp)
        return TrialDataset(
            self.treatments[idx],
            self.outcomes[idx],
            None if self.covariates is None else self.covariates[idx],
            self.column_labels,
        )

    def restrict_outcomes(self, indices) -> "TrialDataset":
        """Return a dataset keeping only the outcome columns ``indices``."""
        idx = np.asarray(indices, dtype=np.intp)
        labels = None
        if self.column_labels is not None:
            labels = tuple(self.column_labels[j] for j in idx)
        return TrialDataset(self.treatments, self.outcomes[:, idx], self.covariates, labels)

    def replace_outcomes(self, outcomes, column_labels=None) -> "TrialDataset":
        """Return a dataset with ``outcomes`` swapped in (same rows, treatments, covariates)."""
        return TrialDataset(self.treatments, outcomes, self.covariates, column_labels)


@dataclass(frozen=True)
class SplitPair:
    """Two disjoint row subsets of a parent dataset plus the seed that made them."""

    first: TrialDataset
    second: TrialDataset
    split_seed: int


@dataclass(frozen=True)
class CsvSchema:
    """Column roles for CSV ingestion: one treatment column, outcome columns,
    optional covariate columns."""

    treatment: str
    outcomes: tuple[str, ...]
    covariates: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "outcomes", tuple(self.outcomes))
        object.__setattr__(self, "covariates", tuple(self.covariates))
        if not self.outcomes:
            raise DataError("schema needs at least one outcome column")
        names = [self.treatment, *self.outcomes, *self.covariates]
        seen = set()
        for name in names:
            if name in seen:
                raise DataError(f"column {name!r} appears twice in the schema")
            seen.add(name)


def _parse_cell(raw: str, row: int, column: str) -> float:
    text = raw.strip()
    if text == "":
        raise DataError(f"missing value in column {column!r} at data row {row}")
    try:
        value = float(text)
    except ValueError:
        raise DataError(
            f"non-numeric value {raw!r} in column {column!r} at data row {row}"
        ) from None
    if not np.isfinite(value):
        raise DataError(
            f"non-finite value {raw!r} in column {column!r} at data row {row}"
        )
    return value


def load_csv(path, schema: CsvSchema) -> TrialDataset:
    """Read a trial dataset from a CSV file with a header row.

    Rows are reported 1-based (excluding the header) in error messages.
    Missing values are rejected, never imputed.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        positions = {}
        for name in (schema.treatment, *schema.outcomes, *schema.covariates):
            matches = [k for k, h in enumerate(header) if h.strip() == name]
            if not matches:
                raise DataError(f"column {name!r} not found in header of {path}")
            if len(matches) > 1:
                raise DataError(f"column {name!r} is duplicated in header of {path}")
            positions[name] = matches[0]
        width = len(header)
        treatments, outcome_rows, covariate_rows = [], [], []
        for row_num, row in enumerate(reader, start=1):
            if len(row) != width:
                raise DataError(
                    f"data row {row_num} has {len(row)} cells, expected {width}"
                )
            t_val = _parse_cell(row[positions[schema.treatment]], row_num, schema.treatment)
            if t_val not in (0.0, 1.0):
                raise DataError(
                    f"treatment value must be 0 or 1; found {t_val!r} "
                    f"in column {schema.treatment!r} at data row {row_num}"
                )
            treatments.append(t_val)
            outcome_rows.append(
                [_parse_cell(row[positions[c]], row_num, c) for c in schema.outcomes]
            )
            if schema.covariates:
                covariate_rows.append(
                    [_parse_cell(row[positions[c]], row_num, c) for c in schema.covariates]
                )
    if len(treatments) < 2:
        raise DataError(f"{path} has {len(treatments)} data rows; n >= 2 required")
    covariates = np.array(covariate_rows) if schema.covariates else None
    return TrialDataset(
        np.array(treatments),
        np.array(outcome_rows),
        covariates,
        column_labels=schema.outcomes,
    )


def write_csv(ds: TrialDataset, path) -> CsvSchema:
    """Write ``ds`` to CSV with a header and return the schema that reads it back.

    Floats are written in shortest round-trip form, so a load/write/load
    cycle reproduces values bit for bit.
    """
    outcome_names = ds.column_labels or tuple(f"y{j}" for j in range(ds.p))
    covariate_names = tuple(f"x{k}" for k in range(ds.m))
    schema = CsvSchema("treatment", outcome_names, covariate_names)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["treatment", *outcome_names, *covariate_names])
        for i in range(ds.n):
            row = [str(int(ds.treatments[i]))]
            row.extend(repr(float(v)) for v in ds.outcomes[i])
            if ds.covariates is not None:
                row.extend(repr(float(v)) for v in ds.covariates[i])
            writer.writerow(row)
    return schema


def split_indices(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Row indices (each sorted ascending) for a two-way random split."""
    if not 0.0 < fraction < 1.0:
        raise DataError(f"split fraction must be in (0, 1), got {fraction}")
    n_first = int(np.floor(fraction * n + 0.5))
    if n_first < 2 or n - n_first < 2:
        raise DataError(
            f"split of n={n} at fraction={fraction} leaves a part with fewer than 2 rows"
        )
    rng = np.random.default_rng(seed)
    chosen = rng.choice(n, size=n_first, replace=False)
    mask = np.zeros(n, dtype=bool)
    mask[chosen] = True
    return np.flatnonzero(mask), np.flatnonzero(~mask)


def random_split(ds: TrialDataset, fraction: float, seed: int) -> SplitPair:
    """Split ``ds`` into two disjoint row subsets, deterministically in ``seed``.

    Rows keep their original relative order within each part, so concatenating
    the parts and sorting by parent row index recovers the parent dataset.
    """
    first_idx, second_idx = split_indices(ds.n, fraction, seed)
    return SplitPair(ds.take_rows(first_idx), ds.take_rows(second_idx), int(seed))


def aggregate_columns(ds: TrialDataset, grouping) -> TrialDataset:
    """Average outcome (and covariate) columns over index groups.

    ``grouping`` is a sequence of index lists into the outcome columns; group
    ``g`` of the result is the row-wise mean of the listed columns. When
    covariates are present the same grouping is applied to them, so both
    sides must share the base column layout. Groups are expected to cover
    windows of equal width, which makes the plain mean the right aggregate.
    """
    groups = [np.asarray(g, dtype=np.intp) for g in grouping]
    if not groups:
        raise DataError("grouping needs at least one group")
    for k, g in enumerate(groups):
        if g.size == 0:
            raise DataError(f"group {k} is empty")
        if g.min() < 0 or g.max() >= ds.p:
            raise DataError(f"group {k} has column indices out of range for p={ds.p}")
    outcomes = np.column_stack([ds.outcomes[:, g].mean(axis=1) for g in groups])
    covariates = None
    if ds.covariates is not None:
        if ds.covariates.shape[1] != ds.p:
            raise DataError(
                "column grouping needs covariates with the same base layout "
                f"as outcomes (m={ds.m}, p={ds.p})"
            )
        covariates = np.column_stack([ds.covariates[:, g].mean(axis=1) for g in groups])
    return TrialDataset(ds.treatments, outcomes, covariates)


def center_columns(matrix, weights=None) -> tuple[np.ndarray, np.ndarray]:
    """Subtract (weighted) column means; returns ``(centered, means)``.

    With ``weights`` the mean is ``sum(w_i * M_ik) / sum(w_i)``. The input is
    never modified.
    """
    arr = np.asarray(matrix, dtype=np.float64)
    squeeze = arr.ndim == 1
    if squeeze:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DataError(f"expected a vector or matrix, got shape {arr.shape}")
    if weights is None:
        means = arr.mean(axis=0)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (arr.shape[0],):
            raise DataError(
                f"weights shape {w.shape} does not match {arr.shape[0]} rows"
            )
        if np.any(w < 0):
            raise DataError("weights must be nonnegative")
        total = w.sum()
        if total <= 0:
            raise DataError("weights sum to zero")
        means = w @ arr / total
    centered = arr - means
    if squeeze:
        return centered[:, 0], means[0]
    return centered, means
