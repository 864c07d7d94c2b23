"""Empirical Karhunen-Loeve (functional PCA) decomposition of covariate curves."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data_model import FunctionalCovariateSet, standardize_curves
from .errors import InputError, NumericalError

PER_TIME = "per-time"
GRAND_MEAN = "grand-mean"

SYMMETRY_TOL = 1e-10
NEG_EIG_TOL = 1e-10


@dataclass(frozen=True)
class KLBasis:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns are eigenvectors
    mean_curve: np.ndarray
    covariate_name: str = ""

    @property
    def T(self) -> int:
        return self.eigenvalues.size

    @property
    def variance_fractions(self) -> np.ndarray:
        total = self.eigenvalues.sum()
        if not total > 0:
            return np.zeros_like(self.eigenvalues)
        return self.eigenvalues / total

    @property
    def cumulative_fractions(self) -> np.ndarray:
        return np.cumsum(self.variance_fractions)


@dataclass(frozen=True)
class KLScores:
    """Projection coefficients of each area's curve, raw and standardized."""

    scores: np.ndarray
    raw_scores: np.ndarray
    k_selected: int
    variance_fraction_achieved: float
    covariate_name: str = ""

    @property
    def labels(self) -> list[str]:
        return [f"{self.covariate_name}:{k + 1}" for k in range(self.k_selected)]


@dataclass(frozen=True)
class Fixed:
    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise InputError(f"fixed truncation needs an integer K >= 1, got {self.k}")


@dataclass(frozen=True)
class VarianceFraction:
    p: float = 0.95

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise InputError(f"variance fraction must lie in (0, 1], got {self.p}")


def empirical_covariance(z, centering: str = PER_TIME):
    """Return ``(C, mean_curve)`` for a T x n matrix whose columns are areas.

    ``C = (n - 1)^-1 sum_i (z_i - mu)(z_i - mu)'`` with ``mu`` either the
    across-area mean at each time (per-time) or the grand mean times a vector
    of ones (grand-mean).
    """
    z = np.asarray(z, dtype=float)
    if z.ndim != 2:
        raise InputError("curves must be a T x n matrix")
    n = z.shape[1]
    if n < 2:
        raise InputError(f"need n >= 2 curves, got {n}")
    if centering == PER_TIME:
        mu = z.mean(axis=1)
    elif centering == GRAND_MEAN:
        mu = np.full(z.shape[0], z.mean())
    else:
        raise InputError(f"unknown centering {centering!r}")
    d = z - mu[:, None]
    c = d @ d.T / (n - 1)
    c = (c + c.T) / 2
    return c, mu


def spectral_decompose(c, covariate_name: str = "", mean_curve=None) -> KLBasis:
    """Symmetric eigendecomposition with a deterministic order and sign.

    Eigenpairs are sorted by decreasing eigenvalue (stable, so ties keep the
    solver's order) and each eigenvector is flipped so its largest-magnitude
    entry is positive.
    """
    c = np.asarray(c, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise InputError("covariance must be square")
    asym = np.max(np.abs(c - c.T)) if c.size else 0.0
    if asym > SYMMETRY_TOL:
        raise InputError(f"covariance not symmetric (max asymmetry {asym:.3g})")
    vals, vecs = np.linalg.eigh(c)
    order = np.argsort(-vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    tol = NEG_EIG_TOL * max(1.0, float(np.max(np.abs(vals), initial=0.0)))
    if vals.size and vals[-1] < -tol:
        raise NumericalError(f"covariance has negative eigenvalue {vals[-1]:.3g}")
    vals = np.where(vals < 0, 0.0, vals)
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    vecs = vecs * signs
    mu = np.zeros(c.shape[0]) if mean_curve is None else np.asarray(mean_curve, dtype=float)
    return KLBasis(vals, vecs, mu, covariate_name)


def truncate(basis: KLBasis, rule) -> int:
    if isinstance(rule, Fixed):
        if rule.k > basis.T:
            raise InputError(f"K={rule.k} exceeds basis size {basis.T}")
        return int(rule.k)
    if isinstance(rule, VarianceFraction):
        lam = basis.eigenvalues
        total = lam.sum()
        if not total > 0:
            raise InputError(f"covariate {basis.covariate_name!r}: all eigenvalues are zero")
        frac = np.cumsum(lam) / total
        # guard against p == 1 never being reached through round-off
        hit = np.flatnonzero(frac >= rule.p - 1e-12)
        return int(hit[0]) + 1 if hit.size else basis.T
    raise InputError(f"unknown truncation rule {rule!r}")


def project_scores(z, basis: KLBasis, k: int) -> KLScores:
    """Project centered curves on the leading ``k`` eigenvectors, then standardize."""
    z = np.asarray(z, dtype=float)
    n = z.shape[1]
    if k > basis.T:
        raise InputError(f"K={k} exceeds basis size {basis.T}")
    if k > n - 1:
        raise InputError(f"K={k} exceeds the covariance rank bound n-1={n - 1}")
    if k < 1:
        raise InputError("K must be >= 1")
    raw = (z - basis.mean_curve[:, None]).T @ basis.eigenvectors[:, :k]
    sd = raw.std(axis=0, ddof=1)
    scale = max(1.0, float(np.max(np.abs(raw), initial=0.0)))
    flat = np.flatnonzero(~(sd > 1e-12 * scale))
    if flat.size:
        comps = ", ".join(str(f + 1) for f in flat)
        raise InputError(
            f"covariate {basis.covariate_name!r}: score components {comps} have zero variance")
    std = (raw - raw.mean(axis=0)) / sd
    achieved = float(basis.cumulative_fractions[k - 1]) if basis.eigenvalues.sum() > 0 else 0.0
    return KLScores(std, raw, int(k), achieved, basis.covariate_name)


def decompose(z, rule=VarianceFraction(0.95), centering: str = PER_TIME, name: str = ""):
    c, mu = empirical_covariance(z, centering)
    basis = spectral_decompose(c, name, mu)
    k = truncate(basis, rule)
    return basis, project_scores(z, basis, k)


def decompose_covariates(fset: FunctionalCovariateSet, rule=VarianceFraction(0.95),
                         centering: str = PER_TIME, standardize: bool = True):
    """Standardize every curve, decompose each covariate, return bases and scores."""
    if standardize:
        fset = standardize_curves(fset)
    bases, scores = [], []
    for name, z in zip(fset.names, fset.series):
        b, s = decompose(z, rule, centering, name)
        bases.append(b)
        scores.append(s)
    return bases, scores


def design_matrix(scores: Sequence[KLScores]):
    """Column-bind standardized scores into the n x K matrix used by the sampler."""
    if not scores:
        return np.zeros((0, 0)), []
    mat = np.hstack([s.scores for s in scores])
    labels = [lab for s in scores for lab in s.labels]
    return mat, labels
