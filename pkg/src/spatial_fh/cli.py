"""Command-line front end: ``sae {fit,kl,simulate,compare,loo,sensitivity}``.

Settings come from an INI file (``--config``) with sections ``data``, ``model``,
``mcmc``, ``kl``, ``experiment`` and ``output``; command-line flags override
file values and ``SAE_SEED`` overrides the file's seed. Every run writes the
effective configuration to ``config.ini`` in the output directory. Output
columns are documented in FORMATS.md.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import configparser
import os
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .data_model import (atomic_write_rows, load_functional_csv, load_survey_csv,
                         save_survey_csv, standardize_curves)
from .errors import InputError, NumericalError
from .gibbs import InverseGammaPrior, MCMCOptions, ModelSpec, SSVSPrior, Variant, run_chain
from .kl_basis import GRAND_MEAN, PER_TIME, Fixed, VarianceFraction, decompose_covariates
from .spatial_graph import load_adjacency_csv, shipped_data_path

EXIT_INPUT, EXIT_NUMERICAL, EXIT_IO = 2, 3, 4

DEFAULTS = {
    "data": {"survey": "", "adjacency": "", "covariates": "", "datasets": "", "calibration": ""},
    "model": {"variant": "SFFH", "pi": "0.5", "c": "10", "tau": "1e-5", "a1": "0.001",
              "a2": "0.001", "icar_rank_adjusted": "false"},
    "mcmc": {"iterations": "50000", "burn_in": "2000", "thin": "1", "seed": ""},
    "kl": {"rule": "variance-fraction", "k": "13", "fraction": "0.95", "centering": PER_TIME,
           "standardize": "true"},
    "experiment": {"covariate": "y", "components": "13", "n_datasets": "250",
                   "noise_scale": "1.0", "variants": "SFFH,FFH,SpatialOnly",
                   "tau_grid": "1e-3,1e-4,1e-5", "c_grid": "10,100"},
    "output": {"dir": "", "draws": "false", "draws_thin": "10"},
}
PATH_KEYS = {("data", "survey"), ("data", "adjacency"), ("data", "covariates"),
             ("data", "datasets"), ("data", "calibration"), ("output", "dir")}
EXAMPLE_CONFIG = "example"


class Config:
    """Flat view over the merged settings with typed accessors."""

    def __init__(self, values: dict):
        self.values = values

    def get(self, section, key) -> str:
        return self.values[section][key]

    def num(self, section, key, kind=float):
        v = self.get(section, key)
        try:
            return kind(v)
        except ValueError:
            raise InputError(f"[{section}] {key}: expected a number, got {v!r}") from None

    def flag(self, section, key) -> bool:
        v = self.get(section, key).strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise InputError(f"[{section}] {key}: expected true/false, got {v!r}")

    def items(self, section, key) -> list[str]:
        return [x for x in self.get(section, key).replace(",", " ").split() if x]

    def path(self, section, key, required=True, must_exist=True) -> Path | None:
        v = self.get(section, key)
        if not v:
            if required:
                raise InputError(f"[{section}] {key} is required")
            return None
        p = Path(v)
        if must_exist and not p.exists():
            raise InputError(f"[{section}] {key}: file not found: {p}")
        return p

    @property
    def seed(self) -> int:
        v = self.get("mcmc", "seed")
        if v == "":
            raise InputError("a seed is required: set [mcmc] seed, --seed, or SAE_SEED")
        try:
            return int(v)
        except ValueError:
            raise InputError(f"seed must be an integer, got {v!r}") from None

    def model_spec(self) -> ModelSpec:
        n = self.num
        return ModelSpec(
            variant=self.get("model", "variant"),
            ssvs=SSVSPrior(n("model", "pi"), n("model", "c"), n("model", "tau")),
            ig_prior=InverseGammaPrior(n("model", "a1"), n("model", "a2")),
            mcmc=MCMCOptions(n("mcmc", "iterations", int), n("mcmc", "burn_in", int),
                             n("mcmc", "thin", int), self.seed),
            icar_rank_adjusted=self.flag("model", "icar_rank_adjusted"))

    def kl_rule(self):
        rule = self.get("kl", "rule")
        if rule == "fixed":
            return Fixed(self.num("kl", "k", int))
        if rule == "variance-fraction":
            return VarianceFraction(self.num("kl", "fraction"))
        raise InputError(f"[kl] rule must be 'fixed' or 'variance-fraction', got {rule!r}")

    def centering(self) -> str:
        c = self.get("kl", "centering")
        if c not in (PER_TIME, GRAND_MEAN):
            raise InputError(f"[kl] centering must be {PER_TIME!r} or {GRAND_MEAN!r}")
        return c

    def echo(self, path: Path):
        cp = configparser.ConfigParser(interpolation=None)
        for s, kv in self.values.items():
            cp[s] = {k: v for k, v in kv.items() if (s, k) != ("output", "dir")}
        tmp = path.with_name(f".{path.name}.tmp")
        with tmp.open("w") as fh:
            cp.write(fh)
        os.replace(tmp, path)


def _resolve(value: str, base: Path, many=False) -> str:
    parts = value.replace(",", " ").split() if many else ([value] if value else [])
    out = [str(p if Path(p).is_absolute() else (base / p).resolve()) for p in parts]
    return " ".join(out) if many else (out[0] if out else "")


def load_config(args) -> Config:
    values = {s: dict(kv) for s, kv in DEFAULTS.items()}
    if args.config:
        path = Path(args.config)
        if args.config == EXAMPLE_CONFIG and not path.exists():
            path = shipped_data_path("eastern_us") / "example.ini"
        if not path.is_file():
            raise InputError(f"config file not found: {path}")
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read(path)
        except configparser.Error as e:
            raise InputError(f"{path}: {e}") from None
        base = path.resolve().parent
        for s in cp.sections():
            if s not in values:
                raise InputError(f"{path}: unknown section [{s}]")
            for k, v in cp[s].items():
                if k not in values[s]:
                    raise InputError(f"{path}: unknown key {k!r} in [{s}]")
                if (s, k) in PATH_KEYS:
                    v = _resolve(v, base, many=(k == "covariates"))
                values[s][k] = v.strip()
    env = os.environ.get("SAE_SEED")
    if env:
        values["mcmc"]["seed"] = env.strip()
    cwd = Path.cwd()
    for dest, (s, k) in FLAG_KEYS.items():
        v = getattr(args, dest, None)
        if v is None:
            continue
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, list):
            v = " ".join(map(str, v))
        else:
            v = str(v)
        if (s, k) in PATH_KEYS:
            v = _resolve(v, cwd, many=(k == "covariates"))
        values[s][k] = v
    return Config(values)


# --- input assembly ------------------------------------------------------------

def _survey_and_graph(cfg: Config):
    data = load_survey_csv(cfg.path("data", "survey"))
    graph = load_adjacency_csv(cfg.path("data", "adjacency"), data.area_ids)
    return data, graph


def _curves(cfg: Config, area_ids, required=True):
    paths = cfg.items("data", "covariates")
    if not paths:
        if required:
            raise InputError("[data] covariates is required for this variant")
        return None
    for p in paths:
        if not Path(p).exists():
            raise InputError(f"[data] covariates: file not found: {p}")
    return load_functional_csv(paths, area_ids)


def _kl(cfg: Config, curves):
    return decompose_covariates(curves, cfg.kl_rule(), cfg.centering(),
                                standardize=cfg.flag("kl", "standardize"))


def _design(cfg: Config, data, spec: ModelSpec, required=None):
    required = spec.variant.functional if required is None else required
    curves = _curves(cfg, data.area_ids, required)
    if curves is None:
        return None, [], []
    bases, scores = _kl(cfg, curves)
    return scores, bases, [lab for s in scores for lab in s.labels]


def _simulation_design(cfg: Config, area_ids):
    """Standardized per-time-centred scores of the one covariate the simulation uses."""
    curves = _curves(cfg, area_ids)
    name = cfg.get("experiment", "covariate")
    if name not in curves.names:
        raise InputError(f"[experiment] covariate {name!r} not among loaded covariates "
                         f"{', '.join(curves.names)}")
    z = standardize_curves(curves.select([name]))[name]
    _, scores = ex.simulation_design(z, cfg.num("experiment", "components", int))
    return scores


def _variants(cfg: Config):
    return tuple(Variant.parse(v) for v in cfg.items("experiment", "variants"))


def _grid(cfg: Config, key):
    try:
        vals = tuple(float(v) for v in cfg.items("experiment", key))
    except ValueError:
        raise InputError(f"[experiment] {key}: expected numbers") from None
    if not vals:
        raise InputError(f"[experiment] {key} must be nonempty")
    return vals


def _out_dir(cfg: Config) -> Path:
    v = cfg.get("output", "dir")
    if not v:
        raise InputError("an output directory is required: set [output] dir or --out")
    return Path(v)


def _prepare_out(cfg: Config) -> Path:
    out = _out_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read_table(path: Path, first: str):
    """Small CSV reader for the files this CLI wrote itself."""
    from .data_model import _read_rows
    header, body = _read_rows(path)
    if header[0] != first:
        raise InputError(f"{path}: first column must be {first!r}")
    ids = tuple(r[0] for r in body)
    try:
        vals = np.array([[float(c) for c in r[1:]] for r in body])
    except ValueError:
        raise InputError(f"{path}: non-numeric values") from None
    return header, ids, vals


# --- commands ------------------------------------------------------------------

def cmd_fit(cfg: Config, args):
    spec = cfg.model_spec()
    data, graph = _survey_and_graph(cfg)
    scores, _, labels = _design(cfg, data, spec)
    draws_thin = cfg.num("output", "draws_thin", int)
    if draws_thin < 1:
        raise InputError("[output] draws_thin must be >= 1")
    out = _out_dir(cfg)
    if args.dry_run:
        return f"fit: {data.n} areas, {len(labels)} score columns, variant {spec.variant.value}"
    d = run_chain(data, scores, graph, spec)
    out = _prepare_out(cfg)
    s = d.summary()
    cols = list(s)
    atomic_write_rows(out / "summary.csv", cols,
                      [[s[c][i] if c == "area_id" else float(s[c][i]) for c in cols]
                       for i in range(data.n)])
    rows = []
    for lab, p in zip(d.coef_labels, d.inclusion_probs):
        name, _, k = lab.rpartition(":")
        rows.append([name, k, float(p)] if name else [lab, "", float(p)])
    atomic_write_rows(out / "inclusion.csv", ["covariate", "component_k", "inclusion_prob"], rows)
    if cfg.flag("output", "draws"):
        _write_draws(out / "draws.csv", d, draws_thin)
    cfg.echo(out / "config.ini")
    return f"fit: wrote {out / 'summary.csv'}"


def _write_draws(path, d, thin):
    header = ["draw", "beta0", "sigma_u2", "sigma_beta0_2"]
    header += [f"coef[{lab}]" for lab in d.coef_labels]
    header += [f"gamma[{lab}]" for lab in d.coef_labels]
    header += [f"u[{a}]" for a in d.area_ids] + [f"theta[{a}]" for a in d.area_ids]
    rows = []
    for r in range(0, d.n_draws, thin):
        rows.append([r, float(d.beta0[r]), float(d.sigma_u2[r]), float(d.sigma_beta0_2[r]),
                     *map(float, d.coef[r]), *map(int, d.gamma[r]),
                     *map(float, d.u[r]), *map(float, d.theta[r])])
    atomic_write_rows(path, header, rows)


def cmd_kl(cfg: Config, args):
    data = load_survey_csv(cfg.path("data", "survey"))
    curves = _curves(cfg, data.area_ids)
    bases, scores = _kl(cfg, curves)
    out = _out_dir(cfg)
    if args.dry_run:
        return "kl: " + ", ".join(f"{s.covariate_name} K={s.k_selected}" for s in scores)
    out = _prepare_out(cfg)
    rows = []
    for b, s in zip(bases, scores):
        frac, cum = b.variance_fractions, b.cumulative_fractions
        for k in range(b.T):
            rows.append([b.covariate_name, k + 1, float(b.eigenvalues[k]), float(frac[k]),
                         float(cum[k]), int(k < s.k_selected)])
    atomic_write_rows(out / "basis.csv", ["covariate", "component_k", "eigenvalue",
                                          "variance_fraction", "cumulative_fraction",
                                          "selected"], rows)
    rows = []
    for s in scores:
        for i, a in enumerate(data.area_ids):
            for k in range(s.k_selected):
                rows.append([a, s.covariate_name, k + 1, float(s.scores[i, k]),
                             float(s.raw_scores[i, k])])
    atomic_write_rows(out / "scores.csv", ["area_id", "covariate", "component_k", "score",
                                           "raw_score"], rows)
    cfg.echo(out / "config.ini")
    return f"kl: wrote {out / 'basis.csv'}"


def cmd_simulate(cfg: Config, args):
    seed = cfg.seed
    n_datasets = cfg.num("experiment", "n_datasets", int)
    data, graph = _survey_and_graph(cfg)
    scores = _simulation_design(cfg, data.area_ids)
    cal_path = cfg.path("data", "calibration", required=False)
    out = _out_dir(cfg)
    if args.dry_run:
        return f"simulate: {n_datasets} datasets, K={scores.k_selected}"
    if cal_path is not None:
        params = ex.CalibrationParams.from_json(cal_path)
        if params.u_hat.size != data.n:
            raise InputError(f"{cal_path}: calibration has {params.u_hat.size} areas")
    else:
        params = ex.calibrate(data, scores.scores, graph, cfg.model_spec())
    study = ex.simulate_datasets(
        ex.SimulationConfig(params, n_datasets, seed, cfg.num("experiment", "noise_scale")),
        scores.scores)
    out = _prepare_out(cfg)
    params.to_json(out / "calibration.json")
    atomic_write_rows(out / "truth.csv", ["area_id", "theta"],
                      [[a, float(t)] for a, t in zip(study.area_ids, study.truth)])
    atomic_write_rows(out / "design.csv", ["area_id", *scores.labels],
                      [[a, *map(float, row)] for a, row in zip(study.area_ids, scores.scores)])
    width = max(4, len(str(n_datasets)))
    for k, ds in enumerate(study.datasets(), start=1):
        save_survey_csv(ds, out / f"dataset_{k:0{width}d}.csv")
    cfg.echo(out / "config.ini")
    return f"simulate: wrote {n_datasets} datasets to {out}"


def _load_study(directory: Path):
    if not directory.is_dir():
        raise InputError(f"[data] datasets: not a directory: {directory}")
    _, ids, truth = _read_table(directory / "truth.csv", "area_id")
    header, ids_d, design = _read_table(directory / "design.csv", "area_id")
    if ids_d != ids:
        raise InputError(f"{directory}: design.csv and truth.csv list different areas")
    files = sorted(directory.glob("dataset_*.csv"))
    if not files:
        raise InputError(f"{directory}: no dataset_*.csv files")
    ys, sigma2 = [], None
    for f in files:
        ds = load_survey_csv(f)
        if ds.area_ids != ids:
            raise InputError(f"{f}: area ids differ from truth.csv")
        if sigma2 is None:
            sigma2 = np.array(ds.sigma2)
        ys.append(np.array(ds.y))
    study = ex.SimulatedStudy(ids, truth[:, 0], np.array(ys), sigma2)
    return study, design, header[1:]


def cmd_compare(cfg: Config, args):
    spec = cfg.model_spec()
    study, design, labels = _load_study(cfg.path("data", "datasets"))
    graph = load_adjacency_csv(cfg.path("data", "adjacency"), study.area_ids)
    variants = _variants(cfg)
    out = _out_dir(cfg)
    if args.dry_run:
        return (f"compare: {study.y.shape[0]} datasets x {len(variants)} variants, "
                f"{spec.mcmc.iterations} iterations each")
    rep = ex.run_comparison(study, design, graph, spec, variants, jobs=args.jobs)
    out = _prepare_out(cfg)
    names = [v.value for v in rep.variants]
    winners = rep.winners
    atomic_write_rows(out / "comparison.csv",
                      ["area_id", *(f"mse_{v}" for v in names), "winner"],
                      [[a, *map(float, rep.per_area_mse[i]), winners[i]]
                       for i, a in enumerate(rep.area_ids)])
    wins = rep.win_counts
    atomic_write_rows(out / "overall.csv",
                      ["variant", "overall_mse", "overall_mse_x1000", "areas_won", "n_datasets"],
                      [[v, float(m), float(1000 * m), wins[v], rep.n_datasets]
                       for v, m in zip(names, rep.overall_mse)])
    cfg.echo(out / "config.ini")
    return "compare: " + ", ".join(f"{v}={1000 * m:.3f}" for v, m in zip(names, rep.overall_mse))


def cmd_loo(cfg: Config, args):
    spec = cfg.model_spec()
    variants = _variants(cfg)
    data, graph = _survey_and_graph(cfg)
    scores, _, _ = _design(cfg, data, spec, required=any(v.functional for v in variants))
    out = _out_dir(cfg)
    if args.dry_run:
        return f"loo: {data.n} folds x {len(variants)} variants"
    results = [ex.leave_one_out(data, scores, graph, spec, v, jobs=args.jobs) for v in variants]
    rep = ex.LooReport(tuple(results))
    out = _prepare_out(cfg)
    header = ["area_id", "y"]
    for r in results:
        header += [f"pred_{r.variant.value}", f"sqdev_{r.variant.value}"]
    pair = None
    vs = {r.variant for r in results}
    if {Variant.SFFH, Variant.SPATIAL_ONLY} <= vs:
        pair = rep.pairwise(Variant.SFFH, Variant.SPATIAL_ONLY)
        header += ["ratio_SFFH_SpatialOnly", "better_SFFH_SpatialOnly"]
    rows = []
    for i, a in enumerate(data.area_ids):
        row = [a, float(data.y[i])]
        for r in results:
            row += [float(r.predictions[i]), float(r.squared_deviations[i])]
        if pair is not None:
            row += [float(pair["ratio"][i]), pair["better"][i]]
        rows.append(row)
    atomic_write_rows(out / "loo.csv", header, rows)
    atomic_write_rows(out / "mspe.csv", ["variant", "mspe"],
                      [[v, float(m)] for v, m in rep.mspe.items()])
    cfg.echo(out / "config.ini")
    return "loo: " + ", ".join(f"{v}={m:.6g}" for v, m in rep.mspe.items())


def cmd_sensitivity(cfg: Config, args):
    spec = cfg.model_spec()
    tau_grid, c_grid = _grid(cfg, "tau_grid"), _grid(cfg, "c_grid")
    data, graph = _survey_and_graph(cfg)
    scores, _, _ = _design(cfg, data, spec)
    out = _out_dir(cfg)
    if args.dry_run:
        return f"sensitivity: {len(c_grid) * len(tau_grid)} cells"
    cells = ex.sensitivity_grid(data, scores, graph, spec, tau_grid, c_grid, jobs=args.jobs)
    out = _prepare_out(cfg)
    atomic_write_rows(out / "sensitivity.csv", ["c", "tau", "mse", "residual_mse", "selected"],
                      [[c.c, c.tau, c.mse, c.residual_mse, int(c.selected)] for c in cells])
    cfg.echo(out / "config.ini")
    best = next(c for c in cells if c.selected)
    return f"sensitivity: selected c={best.c:g}, tau={best.tau:g}"


COMMANDS = {"fit": cmd_fit, "kl": cmd_kl, "simulate": cmd_simulate, "compare": cmd_compare,
            "loo": cmd_loo, "sensitivity": cmd_sensitivity}

# argparse dest -> (section, key)
FLAG_KEYS = {
    "survey": ("data", "survey"), "adjacency": ("data", "adjacency"),
    "covariates": ("data", "covariates"), "datasets": ("data", "datasets"),
    "calibration": ("data", "calibration"),
    "variant": ("model", "variant"), "pi": ("model", "pi"), "c": ("model", "c"),
    "tau": ("model", "tau"), "a1": ("model", "a1"), "a2": ("model", "a2"),
    "icar_rank_adjusted": ("model", "icar_rank_adjusted"),
    "iterations": ("mcmc", "iterations"), "burn_in": ("mcmc", "burn_in"),
    "thin": ("mcmc", "thin"), "seed": ("mcmc", "seed"),
    "kl_rule": ("kl", "rule"), "k": ("kl", "k"), "fraction": ("kl", "fraction"),
    "centering": ("kl", "centering"), "standardize": ("kl", "standardize"),
    "covariate": ("experiment", "covariate"), "components": ("experiment", "components"),
    "n_datasets": ("experiment", "n_datasets"), "noise_scale": ("experiment", "noise_scale"),
    "variants": ("experiment", "variants"), "tau_grid": ("experiment", "tau_grid"),
    "c_grid": ("experiment", "c_grid"),
    "out": ("output", "dir"), "draws": ("output", "draws"), "draws_thin": ("output", "draws_thin"),
}

HELP = {
    "fit": "fit one model and write posterior summaries",
    "kl": "run the K-L decomposition and write eigenvalues and scores",
    "simulate": "calibrate on the survey data and generate synthetic datasets",
    "compare": "fit every variant to simulated datasets and tabulate MSE against the truth",
    "loo": "leave-one-out prediction error for each variant",
    "sensitivity": "in-sample MSE over a grid of SSVS c and tau values",
}


def _common(p: argparse.ArgumentParser):
    g = p.add_argument_group("run")
    g.add_argument("--config", metavar="FILE",
                   help=f"INI settings file; {EXAMPLE_CONFIG!r} selects the shipped example")
    g.add_argument("--out", metavar="DIR", help="output directory [output] dir")
    g.add_argument("--seed", type=int, help="random seed [mcmc] seed (required somewhere; "
                   "SAE_SEED overrides the file value)")
    g.add_argument("--dry-run", action="store_true", help="validate inputs, write nothing")
    g.add_argument("--jobs", type=int, default=1, metavar="N",
                   help="worker processes for replicates, folds, or grid cells (default 1)")
    g = p.add_argument_group("data")
    g.add_argument("--survey", metavar="CSV", help="areas.csv with area_id,y,sigma2[,x...]")
    g.add_argument("--adjacency", metavar="CSV", help="adjacency.csv with area_a,area_b")
    g.add_argument("--covariates", nargs="+", metavar="CSV",
                   help="one or more covariate_<name>.csv curve files")
    g = p.add_argument_group("model")
    g.add_argument("--variant", choices=[v.value for v in Variant], help="model variant")
    g.add_argument("--pi", type=float, help="prior inclusion probability (default 0.5)")
    g.add_argument("--c", type=float, help="slab-to-spike variance ratio (default 10)")
    g.add_argument("--tau", type=float, help="spike variance (default 1e-5)")
    g.add_argument("--a1", type=float, help="inverse-gamma shape (default 0.001)")
    g.add_argument("--a2", type=float, help="inverse-gamma scale (default 0.001)")
    g.add_argument("--icar-rank-adjusted", action="store_true", default=None,
                   help="use shape a1 + (n-1)/2 in the sigma_u2 update")
    g = p.add_argument_group("mcmc")
    g.add_argument("--iterations", type=int, help="total sweeps per chain (default 50000)")
    g.add_argument("--burn-in", type=int, help="discarded initial sweeps (default 2000)")
    g.add_argument("--thin", type=int, help="keep every N-th sweep after burn-in (default 1)")
    g = p.add_argument_group("kl")
    g.add_argument("--kl-rule", choices=["fixed", "variance-fraction"],
                   help="truncation rule (default variance-fraction)")
    g.add_argument("--k", type=int, help="components per covariate for the fixed rule")
    g.add_argument("--fraction", type=float, help="variance fraction to retain (default 0.95)")
    g.add_argument("--centering", choices=[PER_TIME, GRAND_MEAN], help="curve centering")
    g.add_argument("--standardize", choices=["true", "false"],
                   help="standardize curves before decomposition (default true)")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sae", description=__doc__.split("\n\n")[0],
                                epilog="Exit codes: 2 invalid input, 3 numerical failure, "
                                       "4 I/O error. Output columns: see FORMATS.md.")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in COMMANDS:
        sp = sub.add_parser(name, help=HELP[name], description=HELP[name])
        _common(sp)
        if name == "fit":
            sp.add_argument("--draws", action="store_true", default=None,
                            help="also write thinned posterior draws to draws.csv")
            sp.add_argument("--draws-thin", type=int, metavar="N",
                            help="keep every N-th retained draw in draws.csv (default 10)")
        if name in ("simulate",):
            sp.add_argument("--calibration", metavar="JSON",
                            help="reuse generator parameters instead of fitting SFFH")
            sp.add_argument("--n-datasets", type=int, help="replicates to generate (default 250)")
            sp.add_argument("--noise-scale", type=float,
                            help="multiplier on the sampling sd (default 1.0)")
        if name == "simulate":
            sp.add_argument("--covariate", help="covariate driving the simulation (default y)")
            sp.add_argument("--components", type=int,
                            help="K-L components in the simulation design (default 13)")
        if name == "compare":
            sp.add_argument("--datasets", metavar="DIR", help="output directory of simulate")
        if name in ("compare", "loo"):
            sp.add_argument("--variants", nargs="+", choices=[v.value for v in Variant],
                            help="variants to run (default all three)")
        if name == "sensitivity":
            sp.add_argument("--tau-grid", nargs="+", type=float, help="tau values (default "
                            "1e-3 1e-4 1e-5)")
            sp.add_argument("--c-grid", nargs="+", type=float, help="c values (default 10 100)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.jobs < 1:
            raise InputError("--jobs must be >= 1")
        cfg = load_config(args)
        msg = COMMANDS[args.command](cfg, args)
    except InputError as e:
        print(f"sae {args.command}: invalid input: {e}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as e:
        print(f"sae {args.command}: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as e:
        print(f"sae {args.command}: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    print(msg)
    return 0


if __name__ == "__main__":
    sys.exit(main())
