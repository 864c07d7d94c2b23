"""Gibbs sampler for the spatial Fay-Herriot model with functional covariates.

Model, for areas i = 1..n::

    Y_i     = theta_i + eps_i,            eps_i ~ N(0, sigma2_i)   (sigma2_i known)
    theta_i = beta0 + X_i' b + u_i

``X`` stacks standardized K-L scores and any scalar covariates; every column
of ``b`` gets a spike-and-slab prior ``b_k | gamma_k ~ N(0, c tau)`` if
``gamma_k = 1`` else ``N(0, tau)``, ``gamma_k ~ Bern(pi)``. ``u`` is ICAR with
a sum-to-zero constraint (SFFH, SpatialOnly) or iid ``N(0, sigma_u2)`` (FFH).
``beta0 ~ N(0, sigma_beta0_2)``; both variances get ``IG(a1, a2)`` priors in
the shape/scale parameterization (density ~ x^(-a-1) exp(-b/x)).

Sweep order is fixed: b, u, gamma, sigma_u2, beta0, sigma_beta0_2.
"""
from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack
from scipy.special import expit

from .data_model import SurveyDataset
from .errors import InputError, NumericalError, SamplerError
from .spatial_graph import AreaGraph, PencilFactor, _edge_index, sample_constrained_gmrf

UPDATE_ORDER = ("b", "u", "gamma", "sigma_u2", "beta0", "sigma_beta0_2")


class Variant(str, enum.Enum):
    SFFH = "SFFH"
    FFH = "FFH"
    SPATIAL_ONLY = "SpatialOnly"

    @classmethod
    def parse(cls, v) -> "Variant":
        if isinstance(v, cls):
            return v
        for m in cls:
            if str(v).lower() in (m.value.lower(), m.name.lower()):
                return m
        raise InputError(f"unknown model variant {v!r}")

    @property
    def spatial(self) -> bool:
        return self is not Variant.FFH

    @property
    def functional(self) -> bool:
        return self is not Variant.SPATIAL_ONLY


@dataclass(frozen=True)
class SSVSPrior:
    pi: float = 0.5
    c: float = 10.0
    tau: float = 1e-5


@dataclass(frozen=True)
class InverseGammaPrior:
    a1: float = 0.001
    a2: float = 0.001


@dataclass(frozen=True)
class MCMCOptions:
    iterations: int = 50_000
    burn_in: int = 2_000
    thin: int = 1
    seed: int = 0

    @property
    def n_retained(self) -> int:
        return -(-(self.iterations - self.burn_in) // self.thin)


@dataclass(frozen=True)
class ModelSpec:
    variant: Variant = Variant.SFFH
    ssvs: SSVSPrior = field(default_factory=SSVSPrior)
    ig_prior: InverseGammaPrior = field(default_factory=InverseGammaPrior)
    mcmc: MCMCOptions = field(default_factory=MCMCOptions)
    # shape a1 + (n-1)/2 for sigma_u2 instead of a1 + n/2
    icar_rank_adjusted: bool = False

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        s, g, m = self.ssvs, self.ig_prior, self.mcmc
        if not 0 < s.pi < 1:
            raise InputError(f"pi must lie in (0, 1), got {s.pi}")
        if not s.c > 1:
            raise InputError(f"c must exceed 1, got {s.c}")
        if not s.tau > 0:
            raise InputError(f"tau must be positive, got {s.tau}")
        if not (g.a1 > 0 and g.a2 > 0):
            raise InputError("inverse-gamma hyperparameters must be positive")
        if m.iterations < 1 or m.thin < 1 or not 0 <= m.burn_in < m.iterations:
            raise InputError("need iterations >= 1, thin >= 1 and 0 <= burn_in < iterations")

    def with_(self, **changes) -> "ModelSpec":
        """Copy with nested overrides, e.g. ``spec.with_(tau=1e-3, seed=4)``."""
        groups = {"ssvs": SSVSPrior, "ig_prior": InverseGammaPrior, "mcmc": MCMCOptions}
        top, nested = {}, {k: {} for k in groups}
        for k, v in changes.items():
            for g, cls in groups.items():
                if k in {f.name for f in dataclasses.fields(cls)}:
                    nested[g][k] = v
                    break
            else:
                top[k] = v
        for g in groups:
            if nested[g]:
                top[g] = dataclasses.replace(getattr(self, g), **nested[g])
        return dataclasses.replace(self, **top)


@dataclass
class SamplerState:
    coef: np.ndarray          # functional coefficients b, then scalar beta_x
    gamma: np.ndarray         # inclusion indicators, same layout as coef
    beta0: float
    u: np.ndarray
    sigma_u2: float
    sigma_beta0_2: float
    n_functional: int = 0

    @property
    def b(self) -> np.ndarray:
        return self.coef[: self.n_functional]

    @property
    def beta_x(self) -> np.ndarray:
        return self.coef[self.n_functional:]

    def copy(self) -> "SamplerState":
        return dataclasses.replace(self, coef=self.coef.copy(), gamma=self.gamma.copy(),
                                   u=self.u.copy())


class FitInputs:
    """Quantities fixed for the whole chain, precomputed once.

    ``weights`` are the data precisions ``1/sigma2``; a held-out area gets
    weight 0, which removes its likelihood term while keeping it in the graph.
    """

    def __init__(self, y, sigma2, X=None, graph: AreaGraph | None = None,
                 holdout=None, spatial: bool = True):
        self.y = np.array(y, dtype=float)
        self.n = self.y.size
        w = 1.0 / np.asarray(sigma2, dtype=float)
        if holdout is not None:
            w = w.copy()
            w[np.asarray(holdout)] = 0.0
            self.y = self.y.copy()
            self.y[np.asarray(holdout)] = 0.0
        if not np.any(w > 0):
            raise InputError("every area is held out")
        self.w = w
        X = np.zeros((self.n, 0)) if X is None else np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] != self.n:
            raise InputError(f"design matrix must have {self.n} rows")
        self.X = np.ascontiguousarray(X)
        self.p = X.shape[1]
        self.XtW = np.ascontiguousarray(X.T * w)
        self.G = self.XtW @ X
        self.w_sum = float(w.sum())
        self.graph = graph
        self.spatial = spatial
        if spatial:
            if graph is None:
                raise InputError("a spatial variant needs an area graph")
            if graph.n != self.n:
                raise InputError(f"graph has {graph.n} nodes, data has {self.n} areas")
            self.structure = graph.structure.astype(float)
            self.pencil = PencilFactor(w, self.structure)
            self.edge_i, self.edge_j = _edge_index(graph) if graph.edges else ((), ())


def _inv_gamma(rng, shape, scale):
    return scale / rng.gamma(shape)


def b_conditional(state: SamplerState, fit: FitInputs, ssvs: SSVSPrior):
    """Mean and lower Cholesky factor of the precision of the coefficient block.

    ``Sigma_b = (X' W X + Upsilon^-1)^-1``, ``mu_b = Sigma_b X' W (Y - beta0 - u)``,
    ``Upsilon = diag(c tau gamma + tau (1 - gamma))``.
    """
    if not ssvs.tau > 0:
        raise NumericalError(f"tau must be positive, got {ssvs.tau}")
    ups = np.where(state.gamma == 1, ssvs.c * ssvs.tau, ssvs.tau)
    prec = fit.G.copy()
    prec.flat[:: fit.p + 1] += 1.0 / ups
    chol, info = lapack.dpotrf(prec, lower=1)
    if info != 0:
        raise NumericalError("posterior precision of b is not positive definite")
    rhs = fit.XtW @ (fit.y - state.beta0 - state.u)
    mu, _ = lapack.dpotrs(chol, rhs, lower=1)
    return mu, chol


def update_b(state: SamplerState, fit: FitInputs, ssvs: SSVSPrior, rng) -> np.ndarray:
    """Draw ``coef ~ N(mu_b, Sigma_b)`` (see ``b_conditional``)."""
    if fit.p == 0:
        return state.coef
    mu, chol = b_conditional(state, fit, ssvs)
    noise, _ = lapack.dtrtrs(chol, rng.standard_normal(fit.p), lower=1, trans=1)
    return mu + noise


def update_u(state: SamplerState, fit: FitInputs, rng) -> np.ndarray:
    """ICAR effects: ``N(mu_u, Omega_u)`` restricted to ``sum(u) = 0``.

    ``Omega_u = (W + sigma_u^-2 (D_w - W_adj))^-1``, ``mu_u = Omega_u W (Y - beta0 - X b)``.
    """
    factor = fit.pencil.at(1.0 / state.sigma_u2)
    b = fit.w * (fit.y - state.beta0 - fit.X @ state.coef)
    return sample_constrained_gmrf(factor, b, rng)


def update_u_independent(state: SamplerState, fit: FitInputs, rng) -> np.ndarray:
    """Non-spatial effects: independent normals with precision ``w_i + 1/sigma_u2``."""
    prec = fit.w + 1.0 / state.sigma_u2
    r = fit.y - state.beta0 - fit.X @ state.coef
    return fit.w * r / prec + rng.standard_normal(fit.n) / np.sqrt(prec)


def inclusion_probability(b, ssvs: SSVSPrior, pi=None):
    """``P(gamma = 1 | b)`` from the slab/spike prior densities weighted by ``pi``."""
    pi = ssvs.pi if pi is None else pi
    b = np.asarray(b, dtype=float)
    ct = ssvs.c * ssvs.tau
    log_ratio = -0.5 * math.log(ssvs.c) + 0.5 * b * b * (1.0 / ssvs.tau - 1.0 / ct)
    if 0 < pi < 1:
        logit_pi = math.log(pi) - math.log1p(-pi)
    else:
        logit_pi = math.inf if pi >= 1 else -math.inf
    return expit(logit_pi + log_ratio)


def update_gamma(state: SamplerState, ssvs: SSVSPrior, rng, pi=None) -> np.ndarray:
    if state.coef.size == 0:
        return state.gamma
    p = inclusion_probability(state.coef, ssvs, pi)
    return (rng.random(state.coef.size) < p).astype(np.int8)


def icar_shape(n: int, a1: float, rank_adjusted: bool) -> float:
    return a1 + (n - 1) / 2 if rank_adjusted else a1 + n / 2


def update_sigma_u2(state: SamplerState, fit: FitInputs, prior: InverseGammaPrior, rng,
                    rank_adjusted: bool = False) -> float:
    """``IG(a1 + n/2, a2 + Q(u)/2)``; Q is the ICAR quadratic form (spatial) or ``u'u``."""
    u = state.u
    if fit.spatial:
        d = u[fit.edge_i] - u[fit.edge_j]
        quad = float(d @ d)
        shape = icar_shape(fit.n, prior.a1, rank_adjusted)
    else:
        quad = float(u @ u)
        shape = prior.a1 + fit.n / 2
    if quad < 0:
        raise NumericalError("negative quadratic form")
    return _inv_gamma(rng, shape, prior.a2 + quad / 2)


def beta0_conditional(state: SamplerState, fit: FitInputs):
    """Mean and variance of the intercept's full conditional."""
    var = 1.0 / (fit.w_sum + 1.0 / state.sigma_beta0_2)
    r = fit.y - fit.X @ state.coef - state.u
    return var * float(fit.w @ r), var


def update_beta0(state: SamplerState, fit: FitInputs, rng) -> float:
    mean, var = beta0_conditional(state, fit)
    return mean + math.sqrt(var) * rng.standard_normal()


def update_sigma_beta0_2(state: SamplerState, prior: InverseGammaPrior, rng) -> float:
    return _inv_gamma(rng, prior.a1 + 0.5, prior.a2 + state.beta0 ** 2 / 2)


def sweep(state: SamplerState, fit: FitInputs, spec: ModelSpec, rng) -> SamplerState:
    """One full Gibbs scan in place, in ``UPDATE_ORDER``."""
    state.coef = update_b(state, fit, spec.ssvs, rng)
    if fit.spatial:
        state.u = update_u(state, fit, rng)
    else:
        state.u = update_u_independent(state, fit, rng)
    state.gamma = update_gamma(state, spec.ssvs, rng)
    state.sigma_u2 = update_sigma_u2(state, fit, spec.ig_prior, rng, spec.icar_rank_adjusted)
    state.beta0 = update_beta0(state, fit, rng)
    state.sigma_beta0_2 = update_sigma_beta0_2(state, spec.ig_prior, rng)
    return state


def initial_state(fit: FitInputs, n_functional: int) -> SamplerState:
    mask = fit.w > 0
    y = fit.y[mask]
    beta0 = float(fit.w[mask] @ y / fit.w_sum)
    v = float(y.var()) if y.size > 1 else 0.0
    return SamplerState(
        coef=np.zeros(fit.p), gamma=np.ones(fit.p, dtype=np.int8), beta0=beta0,
        u=np.zeros(fit.n), sigma_u2=v if v > 0 else 1.0, sigma_beta0_2=1.0,
        n_functional=n_functional)


@dataclass(frozen=True)
class PosteriorDraws:
    area_ids: tuple
    coef_labels: tuple
    n_functional: int
    coef: np.ndarray
    gamma: np.ndarray
    beta0: np.ndarray
    u: np.ndarray
    sigma_u2: np.ndarray
    sigma_beta0_2: np.ndarray
    theta: np.ndarray
    max_abs_u_sum: float
    spec: ModelSpec

    @property
    def n_draws(self) -> int:
        return self.beta0.size

    @property
    def b(self):
        return self.coef[:, : self.n_functional]

    @property
    def beta_x(self):
        return self.coef[:, self.n_functional:]

    @property
    def theta_mean(self):
        return self.theta.mean(axis=0)

    @property
    def theta_var(self):
        return self.theta.var(axis=0, ddof=1)

    @property
    def inclusion_probs(self):
        return self.gamma.mean(axis=0)

    def summary(self, quantiles=(0.025, 0.5, 0.975)) -> dict:
        q = np.quantile(self.theta, quantiles, axis=0)
        out = {"area_id": list(self.area_ids), "theta_mean": self.theta_mean,
               "theta_var": self.theta_var}
        for p, row in zip(quantiles, q):
            out[f"q{100 * p:g}"] = row
        out["u_mean"] = self.u.mean(axis=0)
        return out

    def effective_sample_sizes(self) -> dict:
        from .diagnostics import effective_sample_size
        out = {"beta0": effective_sample_size(self.beta0),
               "sigma_u2": effective_sample_size(self.sigma_u2),
               "sigma_beta0_2": effective_sample_size(self.sigma_beta0_2)}
        for k, lab in enumerate(self.coef_labels):
            out[f"coef[{lab}]"] = effective_sample_size(self.coef[:, k])
        return out


def build_design(data: SurveyDataset, scores, variant: Variant, labels=None):
    """Column-bind functional scores (unless SpatialOnly) and scalar covariates."""
    blocks, labs = [], []
    n_functional = 0
    if variant.functional and scores is not None:
        if isinstance(scores, (list, tuple)):
            from .kl_basis import design_matrix
            mat, slabs = design_matrix(scores)
        else:
            mat = np.asarray(scores, dtype=float)
            if mat.ndim == 1:
                mat = mat[:, None]
            slabs = list(labels) if labels is not None else [f"xi:{k + 1}" for k in range(mat.shape[1])]
        if mat.size:
            if mat.shape[0] != data.n:
                raise InputError(f"score matrix has {mat.shape[0]} rows, expected {data.n}")
            if len(slabs) != mat.shape[1]:
                raise InputError("one label per score column required")
            blocks.append(mat)
            labs += slabs
            n_functional = mat.shape[1]
    if data.scalar_covariates is not None:
        blocks.append(data.scalar_covariates)
        labs += list(data.covariate_names)
    X = np.hstack(blocks) if blocks else np.zeros((data.n, 0))
    return X, labs, n_functional


def run_chain(data: SurveyDataset, scores, graph: AreaGraph | None, spec: ModelSpec, *,
              labels=None, holdout=None, seed=None, init: SamplerState | None = None
              ) -> PosteriorDraws:
    """Run one chain; deterministic given ``spec.mcmc.seed`` (or ``seed``).

    ``scores`` is an n x K matrix (or a list of ``KLScores``); it is ignored for
    the SpatialOnly variant. ``holdout`` lists area indices whose likelihood
    term is dropped (leave-one-out).
    """
    variant = spec.variant
    X, labs, n_functional = build_design(data, scores, variant, labels)
    fit = FitInputs(data.y, data.sigma2, X, graph if variant.spatial else None,
                    holdout=holdout, spatial=variant.spatial)
    rng = np.random.default_rng(spec.mcmc.seed if seed is None else seed)
    state = init.copy() if init is not None else initial_state(fit, n_functional)
    m = spec.mcmc
    R = m.n_retained
    n, p = fit.n, fit.p
    coef = np.empty((R, p))
    gamma = np.empty((R, p), dtype=np.int8)
    beta0 = np.empty(R)
    us = np.empty((R, n))
    su2 = np.empty(R)
    sb2 = np.empty(R)
    theta = np.empty((R, n))
    max_sum = 0.0
    row = 0
    for t in range(m.iterations):
        try:
            sweep(state, fit, spec, rng)
        except NumericalError as e:
            raise SamplerError(t, e) from e
        if fit.spatial:
            s = abs(state.u.sum())
            if s > max_sum:
                max_sum = s
        if t >= m.burn_in and (t - m.burn_in) % m.thin == 0:
            coef[row] = state.coef
            gamma[row] = state.gamma
            beta0[row] = state.beta0
            us[row] = state.u
            su2[row] = state.sigma_u2
            sb2[row] = state.sigma_beta0_2
            theta[row] = state.beta0 + X @ state.coef + state.u
            row += 1
    return PosteriorDraws(data.area_ids, tuple(labs), n_functional, coef, gamma, beta0, us,
                          su2, sb2, theta, max_sum, spec)
