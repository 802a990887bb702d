"""Survey data model, CSV ingestion, validation and weighted centering."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, NamedTuple, Sequence

import numpy as np
import pandas as pd


class DatasetError(ValueError):
    """Malformed input: bad schema, unparseable rows or violated invariants."""

    def __init__(self, message: str, rows: Sequence[int] = ()):
        super().__init__(message)
        self.rows = list(rows)


class SchemaError(DatasetError):
    pass


class RowError(DatasetError):
    pass


@dataclass(frozen=True)
class CsvSchema:
    """Maps dataset roles to CSV column names."""

    y: str = "y"
    g: str = "g"
    w: str = "w"
    cluster: str = "cluster"
    covariates: tuple[str, ...] = ()
    stratum: str | None = None

    def columns(self) -> list[str]:
        cols = [self.y, self.g, self.w, self.cluster, *self.covariates]
        if self.stratum is not None:
            cols.append(self.stratum)
        return cols


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SurveyDataset:
    """Columnar survey sample.

    ``x`` always carries the intercept as its first column; pass ``x=None``
    for an intercept-only design. Cluster and stratum identifiers are opaque
    and are re-indexed to dense integers in order of first appearance.

    Construction only coerces types. Use :func:`validate` (or
    :meth:`check`) to enforce the data invariants.
    """

    y: np.ndarray
    g: np.ndarray
    w: np.ndarray
    cluster: np.ndarray
    x: np.ndarray | None = None
    stratum: np.ndarray | None = None
    covariate_names: tuple[str, ...] = ()
    cluster_codes: np.ndarray = field(init=False, repr=False)
    cluster_labels: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        y = np.array(self.y, dtype=float)
        n = y.shape[0]
        x = np.ones((n, 1)) if self.x is None else np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        g = np.asarray(self.g)
        if g.dtype.kind == "f" and np.all(np.isin(g, (0.0, 1.0))):
            g = g.astype(np.int64)
        elif g.dtype.kind in "biu":
            g = g.astype(np.int64)
        else:
            g = np.array(g, copy=True)
        cluster = np.array(self.cluster, dtype=object)
        codes, uniques = pd.factorize(pd.Series(cluster, dtype=object), sort=False)
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "g", _frozen(g))
        object.__setattr__(self, "w", _frozen(np.array(self.w, dtype=float)))
        object.__setattr__(self, "cluster", _frozen(cluster))
        object.__setattr__(self, "cluster_codes", _frozen(codes.astype(np.int64)))
        object.__setattr__(self, "cluster_labels", _frozen(np.asarray(uniques, dtype=object)))
        if self.stratum is not None:
            object.__setattr__(self, "stratum", _frozen(np.array(self.stratum, dtype=object)))
        if not self.covariate_names and x.shape[1] > 1:
            names = tuple(f"x{k}" for k in range(1, x.shape[1]))
            object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def n_clusters(self) -> int:
        return len(self.cluster_labels)

    @property
    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.cluster_codes, minlength=self.n_clusters)

    def with_y(self, y) -> "SurveyDataset":
        return replace(self, y=np.asarray(y, dtype=float), x=self.x)

    def check(self) -> "SurveyDataset":
        """Raise :class:`DatasetError` if any invariant is violated."""
        report = validate(self)
        if not report.ok:
            first = report.issues[0]
            message = "; ".join(issue.message for issue in report.issues)
            raise DatasetError(message, rows=first.rows)
        return self

    def to_frame(self, schema: CsvSchema | None = None) -> pd.DataFrame:
        schema = schema or CsvSchema(covariates=self.covariate_names)
        cols: dict[str, Any] = {
            schema.y: self.y,
            schema.g: self.g,
            schema.w: self.w,
            schema.cluster: self.cluster,
        }
        for k, name in enumerate(schema.covariates, start=1):
            cols[name] = self.x[:, k]
        if schema.stratum is not None and self.stratum is not None:
            cols[schema.stratum] = self.stratum
        return pd.DataFrame(cols)


class Issue(NamedTuple):
    code: str
    message: str
    rows: tuple[int, ...] = ()


@dataclass
class ValidationReport:
    """Findings of :func:`validate`. ``ok`` is true iff there are no issues;
    warnings never affect it. Row indices are 0-based."""

    issues: list[Issue] = field(default_factory=list)
    warnings: list[Issue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def codes(self) -> set[str]:
        return {i.code for i in self.issues}

    def warning_codes(self) -> set[str]:
        return {i.code for i in self.warnings}


def _rows(mask) -> tuple[int, ...]:
    return tuple(int(i) for i in np.flatnonzero(mask))


def validate(d: SurveyDataset) -> ValidationReport:
    """Report every invariant violation of ``d``, plus non-fatal warnings for
    singleton clusters and clusters that contain a single label value."""
    report = ValidationReport()
    add = report.issues.append
    n = d.n
    lengths = {
        "y": n,
        "g": len(d.g),
        "w": len(d.w),
        "cluster": len(d.cluster),
        "x": d.x.shape[0],
    }
    if d.stratum is not None:
        lengths["stratum"] = len(d.stratum)
    if len(set(lengths.values())) > 1:
        add(Issue("length_mismatch", f"column lengths differ: {lengths}"))
        return report
    if n < 2:
        add(Issue("too_few_rows", f"need at least 2 observations, got {n}"))

    bad_y = ~np.isfinite(d.y)
    if bad_y.any():
        add(Issue("nonfinite_y", "response is not finite", _rows(bad_y)))
    bad_w = ~np.isfinite(d.w) | ~(d.w > 0)
    if bad_w.any():
        add(Issue("nonpositive_weight", "weights must be positive and finite", _rows(bad_w)))
    if d.x.shape[1] == 0 or np.any(d.x[:, 0] != 1.0):
        rows = _rows(d.x[:, 0] != 1.0) if d.x.shape[1] else ()
        add(Issue("no_intercept", "first covariate column must be identically 1", rows))
    elif d.x.shape[1] > 1:
        bad_x = ~np.all(np.isfinite(d.x), axis=1)
        if bad_x.any():
            add(Issue("nonfinite_x", "covariates are not finite", _rows(bad_x)))

    if d.g.dtype.kind in "iu":
        is0, is1 = d.g == 0, d.g == 1
    else:
        is0 = np.array([_is_label(v, 0) for v in d.g], dtype=bool)
        is1 = np.array([_is_label(v, 1) for v in d.g], dtype=bool)
    bad_g = ~(is0 | is1)
    if bad_g.any():
        add(Issue("bad_label", "group labels must be 0 or 1", _rows(bad_g)))
    elif n and (not is0.any() or not is1.any()):
        add(Issue("degenerate_group", "degenerate group: only one label value occurs"))

    if n:
        sizes = d.cluster_sizes
        singles = np.flatnonzero(sizes == 1)
        if singles.size:
            rows = _rows(np.isin(d.cluster_codes, singles))
            report.warnings.append(
                Issue("singleton_cluster", f"singleton cluster(s): {singles.size}", rows)
            )
        if not bad_g.any():
            ones = np.bincount(d.cluster_codes, weights=is1, minlength=d.n_clusters)
            mono = np.flatnonzero((sizes > 1) & ((ones == 0) | (ones == sizes)))
            if mono.size:
                report.warnings.append(
                    Issue(
                        "single_label_cluster",
                        f"cluster(s) with a single label value: {mono.size}",
                        _rows(np.isin(d.cluster_codes, mono)),
                    )
                )
    return report


def _is_label(v, target: int) -> bool:
    try:
        return float(v) == target
    except (TypeError, ValueError):
        return False


def center_weighted(d: SurveyDataset) -> SurveyDataset:
    """Copy of ``d`` with the weighted mean ``sum(w*y)/sum(w)`` subtracted from y."""
    mean = np.sum(d.w * d.y) / np.sum(d.w)
    return d.with_y(d.y - mean)


def _to_floats(values: pd.Series) -> np.ndarray:
    # float() rounds correctly, so written values read back bit-for-bit
    out = np.empty(len(values))
    for i, v in enumerate(values):
        try:
            out[i] = float(v)
        except ValueError:
            out[i] = np.nan
    return out


def _parse_float(values: pd.Series, name: str, positive: bool = False) -> np.ndarray:
    parsed = _to_floats(values)
    bad = ~np.isfinite(parsed)
    if positive:
        bad |= ~(parsed > 0)
    if bad.any():
        rows = np.flatnonzero(bad)
        what = "positive finite numbers" if positive else "finite numbers"
        raise RowError(
            f"column {name!r} must contain {what}; offending data rows "
            f"{_row_list(rows)}",
            rows=rows.tolist(),
        )
    return parsed


def _row_list(rows: np.ndarray, limit: int = 20) -> str:
    # 1-based data rows (the header is not counted)
    shown = ", ".join(str(r + 1) for r in rows[:limit])
    return shown + (f", ... ({len(rows)} total)" if len(rows) > limit else "")


def load_csv(path: str | Path, schema: CsvSchema | None = None) -> SurveyDataset:
    """Read a comma-separated, UTF-8 file with a header row.

    Raises :class:`SchemaError` when a mapped column is missing and
    :class:`RowError` listing the offending rows (1-based, header excluded) for
    empty cells, non-numeric values, non-positive weights or labels outside
    {0, 1}.
    """
    schema = schema or CsvSchema()
    frame = pd.read_csv(
        path, dtype=str, keep_default_na=False, encoding="utf-8", skipinitialspace=True
    )
    missing = [c for c in schema.columns() if c not in frame.columns]
    if missing:
        raise SchemaError(f"missing column(s) {missing}; file has {list(frame.columns)}")
    if len(frame) < 2:
        raise SchemaError(f"need at least 2 data rows, got {len(frame)}")

    for col in schema.columns():
        empty = frame[col].str.strip() == ""
        if empty.any():
            rows = np.flatnonzero(empty.to_numpy())
            raise RowError(
                f"empty cell in column {col!r} at data rows {_row_list(rows)}",
                rows=rows.tolist(),
            )

    y = _parse_float(frame[schema.y], schema.y)
    w = _parse_float(frame[schema.w], schema.w, positive=True)
    g_raw = _to_floats(frame[schema.g])
    bad_g = ~np.isin(g_raw, (0.0, 1.0))
    if bad_g.any():
        rows = np.flatnonzero(bad_g)
        raise RowError(
            f"column {schema.g!r} must be 0 or 1; offending data rows {_row_list(rows)}",
            rows=rows.tolist(),
        )
    x = np.ones((len(frame), 1 + len(schema.covariates)))
    for k, name in enumerate(schema.covariates, start=1):
        x[:, k] = _parse_float(frame[name], name)
    stratum = None
    if schema.stratum is not None:
        stratum = frame[schema.stratum].str.strip().to_numpy(dtype=object)
    d = SurveyDataset(
        y=y,
        g=g_raw.astype(np.int64),
        w=w,
        cluster=frame[schema.cluster].str.strip().to_numpy(dtype=object),
        x=x,
        stratum=stratum,
        covariate_names=tuple(schema.covariates),
    )
    return d.check()


def write_csv(d: SurveyDataset, path: str | Path, schema: CsvSchema | None = None) -> Path:
    """Write ``d`` so that :func:`load_csv` with the same schema reads it back
    exactly (floats use the shortest round-tripping repr)."""
    schema = schema or CsvSchema(
        covariates=d.covariate_names, stratum="stratum" if d.stratum is not None else None
    )
    path = Path(path)
    cols = schema.columns()
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for i in range(d.n):
            row = [repr(float(d.y[i])), str(int(d.g[i])), repr(float(d.w[i])), str(d.cluster[i])]
            row += [repr(float(d.x[i, k])) for k in range(1, 1 + len(schema.covariates))]
            if schema.stratum is not None:
                row.append(str(d.stratum[i]) if d.stratum is not None else "")
            writer.writerow(row)
    return path
