"""Experiment orchestration: data pools, references, convergence studies.

Reproduces the convergence protocol at desk scale: build a simulation
pool (one synthetic motion per parameter draw), build replication-based
reference distributions at validation points, then repeatedly subsample
the pool, fit every enabled model, and score the conditional
distribution and fragility estimates.  All randomness derives from a
single master seed so results are byte-identical across thread counts.
"""

from __future__ import annotations

import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from gmfrag import baselines, metrics, spce
from gmfrag.baselines import BaselineFitError
from gmfrag.ground_motion import (
    FitError,
    GroundMotionParams,
    ParamsJointModel,
    SynthesisConfig,
    compute_ims,
    fit_modulating,
    synthesize,
)
from gmfrag.spce import Dataset, FitConfig, SpceFitError, SpceModel, fit_spce
from gmfrag.structure import (
    ShearFrameModel,
    SolverError,
    fundamental_period,
    integrate,
    max_interstory_drift,
)
from gmfrag.transforms import InputTransform

# stream labels for seed derivation
_POOL, _REF_POINTS, _REF_REPS, _SUBSAMPLE, _FIT, _METRIC, _SURFACE = range(1, 8)

SA_DAMPING = 0.02

POOL_COLUMNS = ["ia", "t_mid", "d595", "omega_g", "edp", "pga", "sa", "arias"]


def derive_rng(master_seed: int, *path: int) -> np.random.Generator:
    """Deterministic child stream for a labeled position in the study."""
    return np.random.default_rng(np.random.SeedSequence([master_seed, *path]))


@dataclass(frozen=True)
class StudyConfig:
    """Description of a full convergence experiment."""

    pool_size: int = 10_000
    sample_sizes: tuple = (250, 1000, 4000)
    repetitions: int = 5
    validation_points: int = 100
    replications_per_point: int = 100
    thresholds: tuple = (0.02, 0.07)
    master_seed: int = 20260823
    models: tuple = ("spce", "lm", "probit", "kcde")
    output_dir: str = "study_out"
    threads: int = 1
    n_surrogate: int = 10_000
    n_nuisance: int = 1_000
    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)

    def __post_init__(self):
        if any(n > self.pool_size for n in self.sample_sizes):
            raise ValueError("sample sizes must not exceed the pool size")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")

    @classmethod
    def profile(cls, name: str, **overrides) -> "StudyConfig":
        if name == "desk":
            base = cls()
        elif name == "paper":
            base = cls(
                pool_size=100_000,
                sample_sizes=(250, 500, 1000, 2000, 4000),
                repetitions=20,
                validation_points=400,
                replications_per_point=250,
            )
        else:
            raise ValueError(f"unknown profile {name!r}")
        return replace(base, **overrides) if overrides else base


def load_config(path, profile: str = "desk", **overrides) -> StudyConfig:
    """Read a TOML config file; explicit overrides win over the file."""
    if sys.version_info >= (3, 11):
        import tomllib
    else:
        import tomli as tomllib
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    section = raw.get("study", raw)
    known = {
        "pool_size",
        "sample_sizes",
        "repetitions",
        "validation_points",
        "replications_per_point",
        "thresholds",
        "master_seed",
        "models",
        "output_dir",
        "threads",
        "n_surrogate",
        "n_nuisance",
    }
    unknown = set(section) - known - {"synthesis"}
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for key in known & set(section):
        val = section[key]
        if isinstance(val, list):
            val = tuple(val)
        kwargs[key] = val
    if "synthesis" in section:
        kwargs["synthesis"] = SynthesisConfig(**section["synthesis"])
    kwargs.update(overrides)
    return StudyConfig.profile(profile, **kwargs)


# -- simulation -----------------------------------------------------------


def simulate_edp(
    x: GroundMotionParams,
    rng: np.random.Generator,
    scfg: SynthesisConfig,
    frame: ShearFrameModel,
    period: float,
) -> dict:
    """One full simulator run: synthesize, integrate, extract EDP and IMs."""
    ts = synthesize(x, scfg, rng)
    rec = integrate(frame, ts)
    edp = max_interstory_drift(rec)
    ims = compute_ims(ts, period, SA_DAMPING)
    return {
        "ia": x.ia,
        "t_mid": x.t_mid,
        "d595": x.d595,
        "omega_g": x.omega_g,
        "edp": edp,
        "pga": ims["pga"],
        "sa": ims["sa"],
        "arias": ims["arias_integral"],
    }


def _pool_row(args):
    master_seed, i, xs, dt, n_freq, omega_cut, zeta_hp, period = args
    scfg = SynthesisConfig(
        dt=dt, n_freq=n_freq, omega_cut=omega_cut, zeta_hp=zeta_hp
    )
    frame = ShearFrameModel.default()
    rng = derive_rng(master_seed, _POOL, i)
    try:
        x = GroundMotionParams(*xs)
        return i, simulate_edp(x, rng, scfg, frame, period), None
    except (FitError, SolverError, ValueError) as exc:
        return i, None, f"row {i}: {exc}"


def build_pool(cfg: StudyConfig, out_dir) -> pd.DataFrame:
    """Simulate the data pool and persist it as CSV plus a JSON sidecar."""
    out_dir = _ensure_dir(out_dir)
    joint = ParamsJointModel.catalog_default()
    frame = ShearFrameModel.default()
    period = fundamental_period(frame)
    rng = derive_rng(cfg.master_seed, _POOL)
    u = rng.standard_normal((cfg.pool_size, 4))
    logs = joint.log_means + joint.log_stds * (u @ joint.cholesky.T)
    xs = np.exp(logs)
    s = cfg.synthesis
    jobs = [
        (cfg.master_seed, i, tuple(xs[i]), s.dt, s.n_freq, s.omega_cut, s.zeta_hp, period)
        for i in range(cfg.pool_size)
    ]
    rows = {}
    failures = []
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            for i, row, err in pool.map(_pool_row, jobs, chunksize=64):
                if err is None:
                    rows[i] = row
                else:
                    failures.append(err)
    else:
        for job in jobs:
            i, row, err = _pool_row(job)
            if err is None:
                rows[i] = row
            else:
                failures.append(err)
    df = pd.DataFrame([rows[i] for i in sorted(rows)], columns=POOL_COLUMNS)
    df.to_csv(out_dir / "pool.csv", index=False)
    meta = {
        "master_seed": cfg.master_seed,
        "pool_size": cfg.pool_size,
        "failures": failures,
        "n_failures": len(failures),
        "period": period,
        "sa_damping": SA_DAMPING,
    }
    with open(out_dir / "pool_meta.json", "w") as fh:
        json.dump(meta, fh, indent=2)
    return df


def load_pool(out_dir) -> pd.DataFrame:
    return pd.read_csv(_as_path(out_dir) / "pool.csv")


def build_reference(cfg: StudyConfig, out_dir) -> metrics.ValidationBundle:
    """Simulate replication-based reference distributions at validation points."""
    out_dir = _ensure_dir(out_dir)
    joint = ParamsJointModel.catalog_default()
    rng = derive_rng(cfg.master_seed, _REF_POINTS)
    u = rng.standard_normal((cfg.validation_points, 4))
    logs = joint.log_means + joint.log_stds * (u @ joint.cholesky.T)
    pts = np.exp(logs)
    # drop points whose modulating fit is infeasible, keeping the count
    keep = []
    for i in range(pts.shape[0]):
        try:
            fit_modulating(pts[i, 0], pts[i, 1], pts[i, 2])
            keep.append(i)
        except FitError:
            continue
    pts = pts[keep]
    reps = np.empty((pts.shape[0], cfg.replications_per_point))
    jobs = [
        (j, r)
        for j in range(pts.shape[0])
        for r in range(cfg.replications_per_point)
    ]
    args = [
        (cfg.master_seed, keep[j], tuple(pts[j]), r, cfg.synthesis)
        for j, r in jobs
    ]
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            for (j, r), (edp,) in zip(jobs, pool.map(_ref_rep, args, chunksize=16)):
                reps[j, r] = edp
    else:
        for (j, r), a in zip(jobs, args):
            reps[j, r] = _ref_rep(a)[0]
    pool_df = load_pool(out_dir)
    pool_var = float(np.var(np.log(pool_df["edp"].to_numpy())))
    np.savez(
        _as_path(out_dir) / "reference.npz",
        points=pts,
        replications=reps,
        pool_variance=pool_var,
    )
    return _bundle_from_arrays(pts, reps, pool_var)


def _ref_rep(args):
    master_seed, point_id, xs, r, scfg = args
    frame = ShearFrameModel.default()
    period = fundamental_period(frame)
    rng = derive_rng(master_seed, _REF_REPS, point_id, r)
    x = GroundMotionParams(*xs)
    return (simulate_edp(x, rng, scfg, frame, period)["edp"],)


def load_reference(out_dir) -> metrics.ValidationBundle:
    data = np.load(_as_path(out_dir) / "reference.npz")
    return _bundle_from_arrays(
        data["points"], data["replications"], float(data["pool_variance"])
    )


def _bundle_from_arrays(pts, reps, pool_var) -> metrics.ValidationBundle:
    refs = tuple(
        metrics.EmpiricalDistribution(np.log(reps[j])) for j in range(pts.shape[0])
    )
    return metrics.ValidationBundle(pts, refs, pool_var)


# -- model fitting and scoring --------------------------------------------

DISTRIBUTION_MODELS = ("spce", "lm", "kcde")


def _fit_model(name, data: Dataset, thresholds, seed: int):
    """Fit one model kind; probit returns one classifier per threshold."""
    if name == "spce":
        return fit_spce(data, FitConfig(seed=seed))
    if name == "lm":
        return baselines.lm_fit(data)
    if name == "kcde":
        return baselines.kcde_fit(data, seed=seed)
    if name == "probit":
        fits = {}
        for d0 in thresholds:
            try:
                fits[d0] = baselines.probit_fit(data, d0)
            except BaselineFitError as exc:
                fits[d0] = exc
        return fits
    raise ValueError(f"unknown model {name!r}")


def _sampler(name, model):
    if name == "spce":
        return lambda x, n, rng: spce.sample_conditional(model, x, n, rng)
    if name == "lm":
        return lambda x, n, rng: baselines.lm_sample(model, x, n, rng)
    if name == "kcde":
        return lambda x, n, rng: baselines.kcde_sample(model, x, n, rng)
    raise ValueError(name)


def _fragility_vector(name, model, pts, d0):
    if name == "spce":
        return np.array([spce.fragility(model, x, d0) for x in pts])
    if name == "lm":
        return np.asarray(baselines.lm_fragility(model, pts, d0))
    if name == "kcde":
        return np.array([baselines.kcde_fragility(model, x, d0) for x in pts])
    if name == "probit":
        fit = model[d0]
        if isinstance(fit, BaselineFitError):
            raise fit
        return np.asarray(baselines.probit_fragility(fit, pts))
    raise ValueError(name)


def run_convergence(cfg: StudyConfig, out_dir) -> pd.DataFrame:
    """Subsample the pool, fit the enabled models, and score every cell."""
    out_dir = _ensure_dir(out_dir)
    pool_df = load_pool(out_dir)
    bundle = load_reference(out_dir)
    pool_x = pool_df[["ia", "t_mid", "d595", "omega_g"]].to_numpy()
    pool_y = pool_df["edp"].to_numpy()
    pts = np.atleast_2d(bundle.points)
    refs_edp = [np.exp(r.sorted_values) for r in bundle.references]
    p_ref = {
        d0: np.array([np.mean(r >= d0) for r in refs_edp]) for d0 in cfg.thresholds
    }
    records = []
    failures = []
    for rep in range(cfg.repetitions):
        for n in cfg.sample_sizes:
            idx = derive_rng(cfg.master_seed, _SUBSAMPLE, rep, n).choice(
                len(pool_y), size=n, replace=False
            )
            data = Dataset(pool_x[idx], pool_y[idx])
            fit_seed = int(
                derive_rng(cfg.master_seed, _FIT, rep, n).integers(2**31)
            )
            for name in cfg.models:
                try:
                    model = _fit_model(name, data, cfg.thresholds, fit_seed)
                except (SpceFitError, BaselineFitError) as exc:
                    failures.append(f"{name} N={n} rep={rep}: {exc}")
                    continue
                if name in DISTRIBUTION_MODELS:
                    rng = derive_rng(cfg.master_seed, _METRIC, rep, n)
                    ws = metrics.normalized_ws_error(
                        _sampler(name, model), bundle, cfg.n_surrogate, rng
                    )
                    records.append((name, n, rep, "ws", ws))
                for d0 in cfg.thresholds:
                    try:
                        p_mod = _fragility_vector(name, model, pts, d0)
                    except BaselineFitError as exc:
                        failures.append(
                            f"{name} N={n} rep={rep} d0={d0}: {exc}"
                        )
                        continue
                    try:
                        eps = metrics.fragility_rel_mse(p_ref[d0], p_mod)
                    except ValueError as exc:
                        failures.append(f"d0={d0}: {exc}")
                        continue
                    records.append((name, n, rep, f"eps_p_{d0}", eps))
    df = pd.DataFrame(
        records, columns=["model", "N", "repetition", "metric", "value"]
    )
    df.to_csv(out_dir / "convergence.csv", index=False)
    with open(out_dir / "convergence_meta.json", "w") as fh:
        json.dump(
            {"failures": failures, "master_seed": cfg.master_seed}, fh, indent=2
        )
    return df


# -- post-processing studies ----------------------------------------------


def fit_pool_model(
    cfg: StudyConfig, out_dir, name: str = "spce", n_train: int = 1000
):
    """Fit one model on a deterministic pool subsample (for post-processing)."""
    pool_df = load_pool(out_dir)
    pool_x = pool_df[["ia", "t_mid", "d595", "omega_g"]].to_numpy()
    pool_y = pool_df["edp"].to_numpy()
    idx = derive_rng(cfg.master_seed, _SUBSAMPLE, 0, n_train).choice(
        len(pool_y), size=n_train, replace=False
    )
    data = Dataset(pool_x[idx], pool_y[idx])
    seed = int(derive_rng(cfg.master_seed, _FIT, 0, n_train).integers(2**31))
    return _fit_model(name, data, cfg.thresholds, seed)


def unconditional_sampler(name, model, joint: ParamsJointModel):
    """Sampler of the emulated EDP with X drawn from the joint model."""
    if name == "spce":
        return lambda n, rng: spce.sample_unconditional(model, joint, n, rng)

    def sample(n, rng):
        u = rng.standard_normal((n, 4))
        logs = joint.log_means + joint.log_stds * (u @ joint.cholesky.T)
        x = np.exp(logs)
        if name == "lm":
            mean = model.mean_log(x)
            return np.exp(mean + model.sigma * rng.standard_normal(n))
        if name == "kcde":
            out = np.empty(n)
            for i in range(n):
                out[i] = baselines.kcde_sample(model, x[i], 1, rng)[0]
            return out
        raise ValueError(f"model {name!r} does not support resampling the EDP")

    return sample


def run_ccdf(
    cfg: StudyConfig,
    out_dir,
    model,
    model_name: str = "spce",
    n_draws: int = 100_000,
    grid=None,
) -> pd.DataFrame:
    """Compare the surrogate CCDF of the EDP against the pool CCDF."""
    if model_name not in DISTRIBUTION_MODELS:
        raise ValueError(
            f"model {model_name!r} does not support resampling the EDP"
        )
    out_dir = _ensure_dir(out_dir)
    pool_df = load_pool(out_dir)
    pool_y = pool_df["edp"].to_numpy()
    if grid is None:
        grid = np.geomspace(1e-3, 0.2, 60)
    joint = ParamsJointModel.catalog_default()
    rng = derive_rng(cfg.master_seed, _METRIC, 999)
    draws = unconditional_sampler(model_name, model, joint)(n_draws, rng)
    df = pd.DataFrame(
        {
            "delta": grid,
            "model_ccdf": metrics.empirical_ccdf(draws, grid),
            "pool_ccdf": metrics.empirical_ccdf(pool_y, grid),
        }
    )
    df.to_csv(out_dir / f"ccdf_{model_name}.csv", index=False)
    return df


def _im_transform(im_values: np.ndarray) -> InputTransform:
    """One-dimensional lognormal transform fitted to the IM sample."""
    logs = np.log(im_values)
    return InputTransform(
        np.array([logs.mean()]),
        np.array([logs.std()]),
        np.eye(1),
    )


def run_classical_im(
    cfg: StudyConfig, out_dir, im: str = "sa", n_train: int = 1000
) -> pd.DataFrame:
    """Fragility curves against a scalar IM (SA at T1 with 2% damping, or PGA)."""
    if im not in ("sa", "pga"):
        raise ValueError("im must be 'sa' or 'pga'")
    out_dir = _ensure_dir(out_dir)
    pool_df = load_pool(out_dir)
    im_all = pool_df[im].to_numpy()
    y_all = pool_df["edp"].to_numpy()
    idx = derive_rng(cfg.master_seed, _SUBSAMPLE, 1, n_train).choice(
        len(y_all), size=n_train, replace=False
    )
    data = Dataset(im_all[idx][:, None], y_all[idx])
    seed = int(derive_rng(cfg.master_seed, _FIT, 1, n_train).integers(2**31))
    grid = np.geomspace(
        np.quantile(im_all, 0.01), np.quantile(im_all, 0.995), 50
    )
    ref_model = baselines.kcde_fit(Dataset(im_all[:, None], y_all), seed=seed)
    rows = []
    flagged = []
    for d0 in cfg.thresholds:
        for g in grid:
            rows.append((im, g, d0, "reference", baselines.kcde_fragility(ref_model, [g], d0)))
    # SPCE on the 1-D input
    spce_model = fit_spce(data, FitConfig(seed=seed), transform=_im_transform(im_all[idx]))
    lm_model = baselines.lm_fit(data)
    kcde_model = baselines.kcde_fit(data, seed=seed)
    for d0 in cfg.thresholds:
        for g in grid:
            rows.append((im, g, d0, "spce", spce.fragility(spce_model, [g], d0)))
            rows.append((im, g, d0, "lm", float(baselines.lm_fragility(lm_model, [[g]], d0))))
            rows.append((im, g, d0, "kcde", baselines.kcde_fragility(kcde_model, [g], d0)))
        try:
            probit_model = baselines.probit_fit(data, d0)
        except BaselineFitError as exc:
            flagged.append(f"probit d0={d0}: {exc}")
            continue
        for g in grid:
            rows.append(
                (im, g, d0, "probit", float(baselines.probit_fragility(probit_model, [[g]])))
            )
    df = pd.DataFrame(rows, columns=["im", "im_value", "threshold", "model", "p_f"])
    df.to_csv(out_dir / f"classical_im_{im}.csv", index=False)
    with open(out_dir / f"classical_im_{im}_meta.json", "w") as fh:
        json.dump({"flagged": flagged, "n_train": n_train}, fh, indent=2)
    return df


def run_fragility_surface(
    cfg: StudyConfig,
    out_dir,
    model: SpceModel,
    delta0: float = 0.02,
    ia_grid=None,
    omega_grid=None,
) -> pd.DataFrame:
    """Nuisance-averaged fragility surface over (ia, omega_g)."""
    out_dir = _ensure_dir(out_dir)
    if ia_grid is None:
        ia_grid = np.geomspace(0.002, 0.15, 9)
    if omega_grid is None:
        omega_grid = np.array([2.0, 4.0, 6.0, 8.0, 10.0])
    joint = ParamsJointModel.catalog_default()
    rng = derive_rng(cfg.master_seed, _SURFACE, int(delta0 * 1e6))
    surf = spce.averaged_fragility_surface(
        model, joint, ia_grid, omega_grid, delta0, cfg.n_nuisance, rng
    )
    rows = [
        (float(ia_grid[i]), float(omega_grid[j]), delta0, surf[i, j])
        for i in range(len(ia_grid))
        for j in range(len(omega_grid))
    ]
    df = pd.DataFrame(rows, columns=["ia", "omega_g", "threshold", "p_f"])
    df.to_csv(out_dir / f"fragility_surface_{delta0}.csv", index=False)
    return df


def reference_surface_point(
    cfg: StudyConfig,
    ia: float,
    omega_g: float,
    delta0: float,
    n_reps: int,
) -> float:
    """Replication-based nuisance-averaged fragility at one (ia, omega_g)."""
    joint = ParamsJointModel.catalog_default()
    frame = ShearFrameModel.default()
    period = fundamental_period(frame)
    mean, cov = spce.nuisance_conditional(joint, ia, omega_g)
    L = np.linalg.cholesky(cov)
    rng = derive_rng(
        cfg.master_seed, _SURFACE, int(ia * 1e6), int(omega_g * 1e3)
    )
    count = 0
    done = 0
    while done < n_reps:
        g = mean + L @ rng.standard_normal(2)
        t_mid = math.exp(joint.log_means[1] + joint.log_stds[1] * g[0])
        d595 = math.exp(joint.log_means[2] + joint.log_stds[2] * g[1])
        try:
            x = GroundMotionParams(ia, t_mid, d595, omega_g)
            edp = simulate_edp(x, rng, cfg.synthesis, frame, period)["edp"]
        except (FitError, SolverError):
            continue
        count += edp >= delta0
        done += 1
    return count / n_reps


# -- plotting -------------------------------------------------------------


def render_convergence_plot(out_dir) -> None:
    """Box plots of the convergence CSV, written as SVG next to it."""
    import matplotlib

    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    out_dir = _as_path(out_dir)
    df = pd.read_csv(out_dir / "convergence.csv")
    for metric_name, sub in df.groupby("metric"):
        fig, ax = plt.subplots(figsize=(6, 4))
        sizes = sorted(sub["N"].unique())
        models = sorted(sub["model"].unique())
        width = 0.8 / len(models)
        for mi, name in enumerate(models):
            vals = [
                sub[(sub["model"] == name) & (sub["N"] == n)]["value"].to_numpy()
                for n in sizes
            ]
            pos = np.arange(len(sizes)) + (mi - (len(models) - 1) / 2) * width
            ax.boxplot(
                vals,
                positions=pos,
                widths=width * 0.9,
                tick_labels=[""] * len(sizes),
            )
            med = [np.median(v) if len(v) else np.nan for v in vals]
            ax.plot(pos, med, marker="o", label=name)
        ax.set_xticks(np.arange(len(sizes)))
        ax.set_xticklabels([str(n) for n in sizes])
        ax.set_yscale("log")
        ax.set_xlabel("N")
        ax.set_ylabel(metric_name)
        ax.legend()
        fig.tight_layout()
        fig.savefig(out_dir / f"convergence_{metric_name}.svg")
        plt.close(fig)


# -- helpers --------------------------------------------------------------


def _as_path(p):
    from pathlib import Path

    return Path(p)


def _ensure_dir(p):
    path = _as_path(p)
    path.mkdir(parents=True, exist_ok=True)
    return path
