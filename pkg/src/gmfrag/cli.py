"""Command-line entry points for the fragility experiments."""

from __future__ import annotations

import dataclasses
import json

import click

from gmfrag import study
from gmfrag.spce import SpceModel
from gmfrag.study import StudyConfig, load_config


def _config(config_path, profile, seed, out, threads) -> StudyConfig:
    overrides = {}
    if seed is not None:
        overrides["master_seed"] = seed
    if out is not None:
        overrides["output_dir"] = out
    if threads is not None:
        overrides["threads"] = threads
    if config_path is not None:
        return load_config(config_path, profile=profile, **overrides)
    return StudyConfig.profile(profile, **overrides)


def common_options(fn):
    fn = click.option("--config", "config_path", type=click.Path(exists=True))(fn)
    fn = click.option("--seed", type=int, default=None)(fn)
    fn = click.option(
        "--profile", type=click.Choice(["desk", "paper"]), default="desk"
    )(fn)
    fn = click.option("--out", type=click.Path(), default=None)(fn)
    fn = click.option("--threads", type=int, default=None)(fn)
    return fn


@click.group()
def main():
    """Stochastic ground motion fragility studies."""


@main.command()
@common_options
def pool(config_path, seed, profile, out, threads):
    """Build the simulation data pool."""
    cfg = _config(config_path, profile, seed, out, threads)
    df = study.build_pool(cfg, cfg.output_dir)
    click.echo(f"pool: {len(df)} rows -> {cfg.output_dir}/pool.csv")


@main.command()
@common_options
def reference(config_path, seed, profile, out, threads):
    """Build the replication-based validation references."""
    cfg = _config(config_path, profile, seed, out, threads)
    bundle = study.build_reference(cfg, cfg.output_dir)
    click.echo(
        f"reference: {len(bundle.references)} points -> "
        f"{cfg.output_dir}/reference.npz"
    )


@main.command()
@common_options
@click.option("--plots/--no-plots", default=True)
def converge(config_path, seed, profile, out, threads, plots):
    """Run the convergence study over sample sizes and repetitions."""
    cfg = _config(config_path, profile, seed, out, threads)
    df = study.run_convergence(cfg, cfg.output_dir)
    if plots:
        study.render_convergence_plot(cfg.output_dir)
    click.echo(f"convergence: {len(df)} cells -> {cfg.output_dir}/convergence.csv")


@main.command()
@common_options
@click.option("--model-file", type=click.Path(exists=True), default=None)
@click.option(
    "--model-kind",
    type=click.Choice(["spce", "lm", "kcde", "probit"]),
    default="spce",
)
@click.option("--n-train", type=int, default=1000)
def ccdf(config_path, seed, profile, out, threads, model_file, model_kind, n_train):
    """Unconditional CCDF of the emulated EDP vs the pool."""
    cfg = _config(config_path, profile, seed, out, threads)
    if model_kind == "probit":
        raise click.UsageError("the probit model does not allow resampling the EDP")
    if model_file is not None:
        model = SpceModel.from_json(model_file)
    else:
        model = study.fit_pool_model(cfg, cfg.output_dir, model_kind, n_train)
    df = study.run_ccdf(cfg, cfg.output_dir, model, model_kind)
    click.echo(f"ccdf: {len(df)} grid points -> {cfg.output_dir}/ccdf_{model_kind}.csv")


@main.command("classical-im")
@common_options
@click.option("--im", type=click.Choice(["sa", "pga"]), default="sa")
@click.option("--n-train", type=int, default=1000)
def classical_im(config_path, seed, profile, out, threads, im, n_train):
    """Fragility curves against a classical scalar IM."""
    cfg = _config(config_path, profile, seed, out, threads)
    df = study.run_classical_im(cfg, cfg.output_dir, im, n_train)
    click.echo(
        f"classical-im: {len(df)} rows -> {cfg.output_dir}/classical_im_{im}.csv"
    )


@main.command("fragility-surface")
@common_options
@click.option("--model-file", type=click.Path(exists=True), default=None)
@click.option("--threshold", type=float, default=0.02)
@click.option("--n-train", type=int, default=1000)
def fragility_surface(
    config_path, seed, profile, out, threads, model_file, threshold, n_train
):
    """Nuisance-averaged fragility surface over (ia, omega_g)."""
    cfg = _config(config_path, profile, seed, out, threads)
    if model_file is not None:
        model = SpceModel.from_json(model_file)
    else:
        model = study.fit_pool_model(cfg, cfg.output_dir, "spce", n_train)
    df = study.run_fragility_surface(cfg, cfg.output_dir, model, threshold)
    click.echo(
        f"fragility-surface: {len(df)} grid points -> "
        f"{cfg.output_dir}/fragility_surface_{threshold}.csv"
    )


@main.command("show-config")
@common_options
def show_config(config_path, seed, profile, out, threads):
    """Print the resolved configuration, defaults included."""
    cfg = _config(config_path, profile, seed, out, threads)
    payload = dataclasses.asdict(cfg)
    click.echo(json.dumps(payload, indent=2, default=str))


if __name__ == "__main__":
    main()
