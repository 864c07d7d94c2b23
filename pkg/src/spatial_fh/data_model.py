"""Area-level survey data, functional covariates, and their CSV formats.

Area order is always the row order of the survey file; covariate and
adjacency files are reindexed to it on load.
"""
from __future__ import annotations

import csv
import math
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SurveyDataset:
    """Direct estimates ``y`` with known sampling variances ``sigma2``."""

    area_ids: tuple
    y: np.ndarray
    sigma2: np.ndarray
    scalar_covariates: np.ndarray | None = None
    covariate_names: tuple = ()

    def __post_init__(self):
        ids = tuple(str(a) for a in self.area_ids)
        object.__setattr__(self, "area_ids", ids)
        n = len(ids)
        if n < 2:
            raise InputError(f"need at least 2 areas, got {n}")
        dupes = sorted({a for a in ids if ids.count(a) > 1})
        if dupes:
            raise InputError(f"duplicate area ids: {', '.join(dupes)}")
        y = _frozen(self.y)
        s2 = _frozen(self.sigma2)
        if y.shape != (n,) or s2.shape != (n,):
            raise InputError(f"y and sigma2 must have length {n}")
        if not np.all(np.isfinite(y)):
            raise InputError("y contains non-finite values")
        bad = [ids[i] for i in np.flatnonzero(~(np.isfinite(s2) & (s2 > 0)))]
        if bad:
            raise InputError(f"sigma2 must be positive and finite (areas {', '.join(bad)})")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "sigma2", s2)
        x = self.scalar_covariates
        if x is not None:
            x = _frozen(x)
            if x.ndim == 1:
                x = _frozen(x[:, None])
            if x.shape[0] != n:
                raise InputError(f"scalar covariates have {x.shape[0]} rows, expected {n}")
            if not np.all(np.isfinite(x)):
                raise InputError("scalar covariates contain non-finite values")
            if x.shape[1] == 0:
                x = None
        object.__setattr__(self, "scalar_covariates", x)
        q = 0 if x is None else x.shape[1]
        names = tuple(self.covariate_names) or tuple(f"x{j + 1}" for j in range(q))
        if len(names) != q:
            raise InputError(f"{len(names)} covariate names for {q} covariates")
        object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return len(self.area_ids)

    @property
    def q(self) -> int:
        return 0 if self.scalar_covariates is None else self.scalar_covariates.shape[1]

    def with_y(self, y) -> "SurveyDataset":
        return SurveyDataset(self.area_ids, y, self.sigma2, self.scalar_covariates,
                             self.covariate_names)


@dataclass(frozen=True)
class RawOutcomePair:
    value_start: float
    value_end: float
    area_id: str = ""


def relative_change(p: RawOutcomePair) -> float:
    """(end - start) / start for a pair of percentages."""
    if not p.value_start > 0:
        where = f" for area {p.area_id}" if p.area_id else ""
        raise InputError(f"value_start must be > 0{where}, got {p.value_start}")
    return (p.value_end - p.value_start) / p.value_start


@dataclass(frozen=True)
class FunctionalCovariateSet:
    """J functional covariates, each stored as a T x n matrix (column = area)."""

    names: tuple
    series: tuple
    time_points: np.ndarray
    area_ids: tuple

    def __post_init__(self):
        names = tuple(self.names)
        series = tuple(_frozen(s) for s in self.series)
        ids = tuple(str(a) for a in self.area_ids)
        t = _frozen(self.time_points)
        if len(names) != len(series):
            raise InputError("one name per covariate series required")
        for name, s in zip(names, series):
            if s.ndim != 2 or s.shape != (t.size, len(ids)):
                raise InputError(
                    f"covariate {name!r} has shape {s.shape}, expected {(t.size, len(ids))}")
            if not np.all(np.isfinite(s)):
                raise InputError(f"covariate {name!r} contains non-finite values")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "series", series)
        object.__setattr__(self, "time_points", t)
        object.__setattr__(self, "area_ids", ids)

    @property
    def J(self) -> int:
        return len(self.names)

    @property
    def T(self) -> int:
        return self.time_points.size

    def __getitem__(self, name) -> np.ndarray:
        return self.series[self.names.index(name)]

    def select(self, names: Sequence[str]) -> "FunctionalCovariateSet":
        missing = [m for m in names if m not in self.names]
        if missing:
            raise InputError(f"unknown covariates: {', '.join(missing)}")
        return FunctionalCovariateSet(tuple(names), tuple(self[m] for m in names),
                                      self.time_points, self.area_ids)


def standardize_curves(f: FunctionalCovariateSet) -> FunctionalCovariateSet:
    """Give every curve (column) mean 0 and sample sd 1 over time."""
    out = []
    for name, s in zip(f.names, f.series):
        sd = s.std(axis=0, ddof=1)
        flat = np.flatnonzero(~(sd > 0))
        if flat.size:
            areas = ", ".join(f.area_ids[i] for i in flat)
            raise InputError(f"covariate {name!r} is constant over time for areas: {areas}")
        out.append((s - s.mean(axis=0)) / sd)
    return FunctionalCovariateSet(f.names, tuple(out), f.time_points, f.area_ids)


# --- CSV ingestion -----------------------------------------------------------

def _read_rows(path):
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise InputError(f"{path}: file is empty")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise InputError(f"{path}: no data rows")
    for k, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise InputError(f"{path}:{k}: expected {len(header)} fields, got {len(r)}")
    return header, body


def _number(cell, path, line, col):
    try:
        v = float(cell)
    except ValueError:
        raise InputError(f"{path}:{line}: non-numeric value {cell!r} in column {col!r}") from None
    if math.isnan(v):
        raise InputError(f"{path}:{line}: missing value in column {col!r}")
    return v


def _check_unique(ids, path):
    seen = set()
    for a in ids:
        if a in seen:
            raise InputError(f"{path}: duplicate area id {a!r}")
        seen.add(a)


def load_survey_csv(path) -> SurveyDataset:
    header, body = _read_rows(path)
    if header[:3] != ["area_id", "y", "sigma2"]:
        raise InputError(f"{path}: header must start with area_id,y,sigma2")
    ids = [r[0].strip() for r in body]
    _check_unique(ids, path)
    vals = np.array([[_number(c, path, k, header[j + 1]) for j, c in enumerate(r[1:])]
                     for k, r in enumerate(body, start=2)])
    x = vals[:, 2:] if len(header) > 3 else None
    return SurveyDataset(tuple(ids), vals[:, 0], vals[:, 1], x, tuple(header[3:]))


def load_raw_outcome_csv(path) -> list[RawOutcomePair]:
    header, body = _read_rows(path)
    if header != ["area_id", "value_start", "value_end"]:
        raise InputError(f"{path}: header must be area_id,value_start,value_end")
    _check_unique([r[0].strip() for r in body], path)
    return [RawOutcomePair(_number(r[1], path, k, "value_start"),
                           _number(r[2], path, k, "value_end"), r[0].strip())
            for k, r in enumerate(body, start=2)]


def covariate_name_from_path(path) -> str:
    m = re.fullmatch(r"covariate_(.+)\.csv", Path(path).name)
    if not m:
        raise InputError(f"{path}: covariate files must be named covariate_<name>.csv")
    return m.group(1)


def load_functional_csv(paths: Iterable, area_ids: Sequence[str]) -> FunctionalCovariateSet:
    """Read ``covariate_<name>.csv`` files and reorder columns to ``area_ids``."""
    area_ids = tuple(area_ids)
    names, series, grid = [], [], None
    for p in paths:
        name = covariate_name_from_path(p)
        if name in names:
            raise InputError(f"covariate {name!r} given twice")
        header, body = _read_rows(p)
        if header[0] != "t":
            raise InputError(f"{p}: first column must be 't'")
        cols = header[1:]
        _check_unique(cols, p)
        missing = [a for a in area_ids if a not in cols]
        if missing:
            raise InputError(f"{p}: missing areas {', '.join(missing)}")
        extra = [c for c in cols if c not in area_ids]
        if extra:
            raise InputError(f"{p}: areas not in survey file: {', '.join(extra)}")
        vals = np.array([[_number(c, p, k, header[j]) for j, c in enumerate(r)]
                         for k, r in enumerate(body, start=2)])
        t = vals[:, 0]
        if grid is None:
            grid = t
        elif t.shape != grid.shape or not np.array_equal(t, grid):
            raise InputError(f"{p}: time grid differs from the first covariate file")
        order = [cols.index(a) + 1 for a in area_ids]
        names.append(name)
        series.append(vals[:, order])
    if not names:
        raise InputError("no covariate files given")
    return FunctionalCovariateSet(tuple(names), tuple(series), grid, area_ids)


def _fmt(v) -> str:
    return repr(float(v))


def atomic_write_rows(path, header, rows):
    """Write a CSV via temp file + rename so readers never see partial output."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    with tmp.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(c) if isinstance(c, (float, np.floating)) else c for c in r])
    os.replace(tmp, path)


def save_survey_csv(ds: SurveyDataset, path):
    header = ["area_id", "y", "sigma2", *ds.covariate_names]
    rows = []
    for i, a in enumerate(ds.area_ids):
        x = [] if ds.scalar_covariates is None else list(ds.scalar_covariates[i])
        rows.append([a, float(ds.y[i]), float(ds.sigma2[i]), *map(float, x)])
    atomic_write_rows(path, header, rows)


def save_functional_csv(f: FunctionalCovariateSet, directory) -> list[Path]:
    directory = Path(directory)
    paths = []
    for name, s in zip(f.names, f.series):
        p = directory / f"covariate_{name}.csv"
        rows = [[float(t), *map(float, s[k])] for k, t in enumerate(f.time_points)]
        atomic_write_rows(p, ["t", *f.area_ids], rows)
        paths.append(p)
    return paths
