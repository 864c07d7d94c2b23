"""Calibrated simulation study, leave-one-out evaluation, and the c/tau grid."""
from __future__ import annotations

import hashlib
import json
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data_model import FunctionalCovariateSet, SurveyDataset
from .errors import InputError, SamplerError
from .gibbs import ModelSpec, Variant, run_chain
from .kl_basis import PER_TIME, empirical_covariance, project_scores, spectral_decompose
from .spatial_graph import AreaGraph

ALL_VARIANTS = (Variant.SFFH, Variant.FFH, Variant.SPATIAL_ONLY)
DEFAULT_TAU_GRID = (1e-3, 1e-4, 1e-5)
DEFAULT_C_GRID = (10.0, 100.0)


def task_seed(seed, *key) -> np.random.SeedSequence:
    """Independent stream per task, keyed by position rather than execution order."""
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))


def content_key(y) -> tuple:
    """Two 32-bit words hashed from the data, so a replicate's stream ignores its position."""
    h = hashlib.sha256(np.ascontiguousarray(y, dtype=float).tobytes()).digest()
    return tuple(int(w) for w in np.frombuffer(h[:8], dtype=np.uint32))


def pmap(fn, tasks, jobs: int = 1):
    tasks = list(tasks)
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


# --- calibration and simulation ----------------------------------------------

def simulation_design(z, k: int = 13):
    """Detrend by the location-averaged curve, decompose ``Z* Z*'/(n-1)``, project.

    Returns ``(basis, scores)`` where ``scores.scores`` is the standardized
    n x k design used both to generate and to fit the synthetic data.
    """
    c, mu = empirical_covariance(z, PER_TIME)
    basis = spectral_decompose(c, mean_curve=mu)
    return basis, project_scores(z, basis, k)


@dataclass(frozen=True)
class CalibrationParams:
    beta0_hat: float
    b_hat: np.ndarray
    u_hat: np.ndarray
    sigma2: np.ndarray
    sigma_u2_hat: float = float("nan")
    area_ids: tuple = ()

    def to_json(self, path):
        d = {"beta0_hat": self.beta0_hat, "b_hat": list(map(float, self.b_hat)),
             "u_hat": list(map(float, self.u_hat)), "sigma2": list(map(float, self.sigma2)),
             "sigma_u2_hat": self.sigma_u2_hat, "area_ids": list(self.area_ids)}
        tmp = Path(path).with_name(Path(path).name + ".tmp")
        tmp.write_text(json.dumps(d, indent=1) + "\n")
        tmp.replace(path)

    @classmethod
    def from_json(cls, path) -> "CalibrationParams":
        try:
            d = json.loads(Path(path).read_text())
            return cls(float(d["beta0_hat"]), np.array(d["b_hat"], float),
                       np.array(d["u_hat"], float), np.array(d["sigma2"], float),
                       float(d.get("sigma_u2_hat", "nan")), tuple(d.get("area_ids", ())))
        except (KeyError, ValueError, TypeError) as e:
            raise InputError(f"{path}: malformed calibration file ({e})") from None


def calibrate(data: SurveyDataset, design, graph: AreaGraph, spec: ModelSpec) -> CalibrationParams:
    """Fit SFFH and keep posterior means of beta0, b, sigma_u2 and u."""
    d = run_chain(data, design, graph, spec.with_(variant=Variant.SFFH))
    return CalibrationParams(float(d.beta0.mean()), d.b.mean(axis=0), d.u.mean(axis=0),
                             np.array(data.sigma2), float(d.sigma_u2.mean()), data.area_ids)


@dataclass(frozen=True)
class SimulationConfig:
    params: CalibrationParams
    n_datasets: int = 250
    seed: int = 1
    noise_scale: float = 1.0

    def __post_init__(self):
        if self.n_datasets < 1:
            raise InputError("n_datasets must be >= 1")
        if not np.all(self.params.sigma2 > 0):
            raise InputError("generator sigma2 must be positive")


@dataclass(frozen=True)
class SimulatedStudy:
    area_ids: tuple
    truth: np.ndarray          # theta-hat used to generate every replicate
    y: np.ndarray              # n_datasets x n
    sigma2: np.ndarray

    def datasets(self) -> list[SurveyDataset]:
        return [SurveyDataset(self.area_ids, row, self.sigma2) for row in self.y]


def simulate_datasets(cfg: SimulationConfig, design) -> SimulatedStudy:
    """``Y* = beta0 + Xi b + u + eps`` with fresh ``eps ~ N(0, diag(sigma2))`` per replicate."""
    p = cfg.params
    design = np.asarray(design, dtype=float)
    n = p.u_hat.size
    if design.shape != (n, p.b_hat.size):
        raise InputError(f"design has shape {design.shape}, expected {(n, p.b_hat.size)}")
    if p.sigma2.shape != (n,):
        raise InputError("sigma2 length does not match u_hat")
    truth = p.beta0_hat + design @ p.b_hat + p.u_hat
    rng = np.random.default_rng(task_seed(cfg.seed, 0))
    eps = rng.standard_normal((cfg.n_datasets, n)) * np.sqrt(p.sigma2) * cfg.noise_scale
    ids = p.area_ids or tuple(str(i) for i in range(n))
    return SimulatedStudy(tuple(ids), truth, truth + eps, p.sigma2.copy())


# --- model comparison ----------------------------------------------------------

@dataclass(frozen=True)
class ComparisonReport:
    area_ids: tuple
    variants: tuple
    per_area_mse: np.ndarray   # n x V, mean over datasets of (truth - estimate)^2
    n_datasets: int
    excluded: tuple = ()

    @property
    def overall_mse(self) -> np.ndarray:
        return self.per_area_mse.mean(axis=0)

    @property
    def winners(self) -> list[str]:
        return [self.variants[j].value for j in np.argmin(self.per_area_mse, axis=1)]

    @property
    def win_counts(self) -> dict:
        w = self.winners
        return {v.value: w.count(v.value) for v in self.variants}


def _fit_theta_mean(task):
    data, design, graph, spec, seed = task
    try:
        return run_chain(data, design, graph, spec, seed=seed).theta_mean
    except SamplerError as e:
        return e


def run_comparison(study: SimulatedStudy, design, graph: AreaGraph, spec: ModelSpec,
                   variants=ALL_VARIANTS, jobs: int = 1, seed=None) -> ComparisonReport:
    """Fit every variant to every replicate and tabulate per-area MSE against the truth."""
    seed = spec.mcmc.seed if seed is None else seed
    variants = tuple(Variant.parse(v) for v in variants)
    datasets = study.datasets()
    vkey = {v: list(Variant).index(v) for v in variants}
    tasks = [(ds, design, graph, spec.with_(variant=v),
              task_seed(seed, vkey[v], *content_key(ds.y)))
             for ds in datasets for v in variants]
    out = pmap(_fit_theta_mean, tasks, jobs)
    V = len(variants)
    est = np.empty((len(datasets), study.truth.size, V))
    failed = set()
    for t, res in enumerate(out):
        d, j = divmod(t, V)
        if isinstance(res, Exception):
            failed.add(d)
        else:
            est[d, :, j] = res
    if failed:
        if len(failed) >= 0.01 * len(datasets):
            raise SamplerError(-1, f"{len(failed)} of {len(datasets)} datasets failed to fit")
        warnings.warn(f"excluding {len(failed)} dataset(s) with failed chains: {sorted(failed)}")
    keep = [d for d in range(len(datasets)) if d not in failed]
    err = est[keep] - study.truth[None, :, None]
    return ComparisonReport(study.area_ids, variants, (err ** 2).mean(axis=0), len(keep),
                            tuple(sorted(failed)))


# --- leave-one-out -------------------------------------------------------------

@dataclass(frozen=True)
class LooResult:
    variant: Variant
    area_ids: tuple
    y: np.ndarray
    predictions: np.ndarray

    @property
    def squared_deviations(self) -> np.ndarray:
        return (self.y - self.predictions) ** 2

    @property
    def mspe(self) -> float:
        return float(self.squared_deviations.mean())


def loo_fold(data: SurveyDataset, design, graph, spec: ModelSpec, i: int, seed=None,
             reinsert: bool = False):
    """Posterior draws with area ``i``'s likelihood removed (or kept, if ``reinsert``)."""
    seed = task_seed(spec.mcmc.seed if seed is None else seed, i)
    return run_chain(data, design, graph, spec, holdout=None if reinsert else [i], seed=seed)


def _loo_task(task):
    data, design, graph, spec, i = task
    return float(loo_fold(data, design, graph, spec, i).theta_mean[i])


def leave_one_out(data: SurveyDataset, design, graph, spec: ModelSpec, variant=None,
                  jobs: int = 1, order=None) -> LooResult:
    """Predict each Y_i by the posterior mean of theta_i with Y_i held out."""
    if data.n < 3:
        raise InputError("leave-one-out needs at least 3 areas")
    variant = spec.variant if variant is None else Variant.parse(variant)
    spec = spec.with_(variant=variant)
    order = list(range(data.n)) if order is None else list(order)
    if sorted(order) != list(range(data.n)):
        raise InputError("fold order must be a permutation of the areas")
    preds = pmap(_loo_task, [(data, design, graph, spec, i) for i in order], jobs)
    out = np.empty(data.n)
    out[order] = preds
    return LooResult(variant, data.area_ids, np.array(data.y), out)


def deviation_ratio(a, b):
    """Larger over smaller of two squared deviations, elementwise."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    hi, lo = np.maximum(a, b), np.minimum(a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(lo > 0, hi / lo, np.where(hi > 0, np.inf, 1.0))


@dataclass(frozen=True)
class LooReport:
    results: tuple  # LooResult per variant

    @property
    def mspe(self) -> dict:
        return {r.variant.value: r.mspe for r in self.results}

    def pairwise(self, first=Variant.SFFH, second=Variant.SPATIAL_ONLY) -> dict:
        by = {r.variant: r for r in self.results}
        a = by[Variant.parse(first)].squared_deviations
        b = by[Variant.parse(second)].squared_deviations
        better = np.where(a < b, Variant.parse(first).value, Variant.parse(second).value)
        ratio = deviation_ratio(a, b)
        fa = a < b
        return {"ratio": ratio, "better": list(better),
                "mean_ratio_first_better": float(ratio[fa].mean()) if fa.any() else float("nan"),
                "mean_ratio_second_better": float(ratio[~fa].mean()) if (~fa).any() else float("nan")}


# --- sensitivity grid ----------------------------------------------------------

@dataclass(frozen=True)
class GridCell:
    c: float
    tau: float
    mse: float            # mean posterior variance of theta
    residual_mse: float   # mean (Y - theta_hat)^2
    selected: bool = False


def _grid_task(task):
    data, design, graph, spec, seed = task
    d = run_chain(data, design, graph, spec, seed=seed)
    return float(d.theta_var.mean()), float(((data.y - d.theta_mean) ** 2).mean())


def sensitivity_grid(data: SurveyDataset, design, graph, spec: ModelSpec,
                     tau_grid=DEFAULT_TAU_GRID, c_grid=DEFAULT_C_GRID, jobs: int = 1
                     ) -> list[GridCell]:
    """Fit every (c, tau) pair; flag the one with the smallest in-sample MSE."""
    if not len(tau_grid) or not len(c_grid):
        raise InputError("tau and c grids must be nonempty")
    seed = spec.mcmc.seed
    cells = [(c, t) for c in c_grid for t in tau_grid]
    tasks = [(data, design, graph, spec.with_(c=float(c), tau=float(t)), task_seed(seed, k))
             for k, (c, t) in enumerate(cells)]
    res = pmap(_grid_task, tasks, jobs)
    best = int(np.argmin([r[0] for r in res]))
    return [GridCell(float(c), float(t), m, r, k == best)
            for k, ((c, t), (m, r)) in enumerate(zip(cells, res))]


# --- synthetic stand-in inputs -------------------------------------------------

@dataclass(frozen=True)
class StandInDesign:
    """Parameters of the synthetic stand-in for the unavailable survey and trend data."""

    n_weeks: int = 104
    names: tuple = ("y", "yo", "el")
    spatial_sd: float = 0.065
    signal: tuple = (0.02,) * 6   # effect of each latent curve loading
    beta0: float = 0.08
    sigma2_range: tuple = (5e-4, 3e-3)
    seed: int = 20081231


def make_standin(graph: AreaGraph, design: StandInDesign = StandInDesign()):
    """Synthetic curves and direct estimates with ICAR spatial structure.

    Each area's weekly curve is a smooth mixture of a few temporal patterns
    with area-specific loadings plus noise; the outcome depends on the
    loadings of the first curve set, on an ICAR field, and on sampling error.
    Returns ``(SurveyDataset, FunctionalCovariateSet, truth)``.
    """
    from .diagnostics import sample_icar_prior
    rng = np.random.default_rng(design.seed)
    n, T = graph.n, design.n_weeks
    t = np.arange(T) / 52.0
    patterns = np.stack([np.sin(2 * np.pi * t), np.cos(2 * np.pi * t), t - t.mean(),
                         np.sin(4 * np.pi * t), np.cos(6 * np.pi * t),
                         np.exp(-0.5 * ((t - 1.0) / 0.15) ** 2)], axis=0)
    loadings = rng.standard_normal((len(design.names), n, patterns.shape[0]))
    series = []
    for j in range(len(design.names)):
        base = 50 + 10 * rng.standard_normal(n)
        curves = base[None, :] + 8 * patterns.T @ loadings[j].T
        curves += 3 * rng.standard_normal((T, n))
        series.append(np.clip(curves, 0.5, None))
    u = sample_icar_prior(graph, design.spatial_sd ** 2, rng)
    sig = np.array(design.signal)
    lo = loadings[0][:, : sig.size]
    effect = (lo - lo.mean(axis=0)) / lo.std(axis=0, ddof=1) @ sig
    theta = design.beta0 + effect + u
    sigma2 = rng.uniform(*design.sigma2_range, n)
    y = theta + np.sqrt(sigma2) * rng.standard_normal(n)
    ids = graph.area_ids
    return (SurveyDataset(ids, y, sigma2),
            FunctionalCovariateSet(design.names, tuple(series), np.arange(1, T + 1, dtype=float), ids),
            theta)
