"""Command line entry points over the staged pipeline.

Every command takes the run configuration from --config (TOML or JSON); the
remaining global flags override single fields so sweeps of scripts do not
need one config file per variation.
"""

from __future__ import annotations

from pathlib import Path

import click

from causalaug.config import PipelineConfig, load_config
from causalaug.corpus import load_corpus
from causalaug.errors import CausalAugError
from causalaug.pipeline import (
    STAGES,
    SWEEP_PARAMS,
    RunPaths,
    cross_validate,
    run_pipeline,
    run_stage,
    sweep,
)
from causalaug.synthetic import write_bundle

_STAGE_HELP = {
    "ingest": "Validate the raw inputs and write canonical copies, splits and vocabulary.",
    "extract-pairs": "Collect annotated, lexicon-expanded and connective-mined event pairs.",
    "train-causal-space": "Fit the translation-based causal embedding space.",
    "select-pairs": "Rank pairs by causal distance and relabel the extremes.",
    "pretrain": "Pretrain both generators and the identifier; record baseline metrics.",
    "dual-train": "Alternate generator and identifier reinforcement cycles.",
    "generate": "Complete one candidate sentence per selected pair.",
    "filter": "Score candidates and keep the best fraction.",
    "augment": "Mix generated sentences into the annotated training pairs.",
    "train-final": "Fine-tune the identifier on the augmented mix.",
    "evaluate": "Score the final identifier on the held-out test topics.",
}


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Run configuration file (TOML or JSON).")
@click.option("--seed", type=int, default=None, help="Override the configured seed.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Override the configured output directory.")
@click.option("--dump-rewards", is_flag=True, default=False,
              help="Write per-example reward records during dual training.")
@click.pass_context
def main(ctx, config_path, seed, out_dir, dump_rewards):
    """Knowledge-guided data augmentation for event causality identification."""
    ctx.ensure_object(dict)
    ctx.obj.update(config_path=config_path, seed=seed, out_dir=out_dir,
                   dump_rewards=dump_rewards)


def _effective_config(ctx) -> PipelineConfig:
    path = ctx.obj.get("config_path")
    if path is None:
        raise click.UsageError("--config is required for this command")
    config = load_config(path)
    overrides = {}
    if ctx.obj.get("seed") is not None:
        overrides["seed"] = ctx.obj["seed"]
    if ctx.obj.get("out_dir") is not None:
        overrides["out_dir"] = str(Path(ctx.obj["out_dir"]).resolve())
    if ctx.obj.get("dump_rewards"):
        overrides["dump_rewards"] = True
    return config.replaced(**overrides) if overrides else config


def _guarded(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except CausalAugError as exc:
        raise click.ClickException(str(exc)) from exc


def _register_stage(stage: str) -> None:
    @main.command(stage, help=_STAGE_HELP[stage])
    @click.option("--no-resume", is_flag=True, default=False,
                  help="Rerun even when the stage manifest is up to date.")
    @click.pass_context
    def _cmd(ctx, no_resume):
        config = _effective_config(ctx)
        skipped = _guarded(run_stage, config, stage, resume=not no_resume)
        click.echo(f"{stage}: {'up to date' if skipped else 'done'}")


for _stage in STAGES:
    _register_stage(_stage)


@main.command("run-all")
@click.option("--no-resume", is_flag=True, default=False,
              help="Rerun every stage even when manifests are up to date.")
@click.pass_context
def run_all(ctx, no_resume):
    """Run every stage in order and print the final test metrics."""
    config = _effective_config(ctx)
    outcome = _guarded(run_pipeline, config, resume=not no_resume)
    for stage in STAGES:
        click.echo(f"{stage}: {outcome['stages'][stage]}")
    metrics = outcome["metrics"]
    click.echo(
        f"test: P={metrics['precision']:.4f} R={metrics['recall']:.4f} "
        f"F1={metrics['f1']:.4f} "
        f"(baseline F1={metrics['baseline']['f1']:.4f}, "
        f"improvement={metrics['f1_improvement']:+.4f})")
    click.echo(f"report: {RunPaths(config.out_dir).metrics}")


@main.command("cross-validate")
@click.pass_context
def cross_validate_cmd(ctx):
    """Run the full pipeline over k topic folds times `replicates` seeds."""
    config = _effective_config(ctx)
    corpus = _guarded(load_corpus, config.corpus)
    report = _guarded(cross_validate, corpus, config)
    for fold in report.folds:
        click.echo(f"fold {fold.fold} seed {fold.seed}: P={fold.precision:.4f} "
                   f"R={fold.recall:.4f} F1={fold.f1:.4f}")
    click.echo(f"macro-average: P={report.precision:.4f} R={report.recall:.4f} "
               f"F1={report.f1:.4f}")
    click.echo(f"report: {Path(config.out_dir) / 'cv_metrics.json'}")


def _parse_sweep_values(param: str, raw: str) -> list:
    if not raw:
        return []
    values = []
    for part in raw.split(","):
        part = part.strip()
        if param == "ratio":
            values.append(part)
        elif param == "rounds":
            values.append(int(part))
        else:
            values.append(float(part))
    return values


@main.command("sweep")
@click.argument("param", type=click.Choice(sorted(SWEEP_PARAMS)))
@click.option("--values", "raw_values", required=True,
              help="Comma-separated values; an empty string sweeps nothing.")
@click.pass_context
def sweep_cmd(ctx, param, raw_values):
    """Cross-validate once per value of PARAM and tabulate the results."""
    config = _effective_config(ctx)
    try:
        values = _parse_sweep_values(param, raw_values)
    except ValueError as exc:
        raise click.ClickException(f"bad value for {param}: {exc}") from exc
    report = _guarded(sweep, param, values, config)
    for row in report.rows:
        click.echo(f"{row.param}={row.value}: P={row.precision:.4f} "
                   f"R={row.recall:.4f} F1={row.f1:.4f}")
    click.echo(f"report: {Path(config.out_dir) / 'sweep.csv'}")


@main.command("make-bundle")
@click.argument("directory", type=click.Path(file_okay=False))
@click.pass_context
def make_bundle(ctx, directory):
    """Write a self-contained synthetic bundle: corpus, knowledge files, config."""
    seed = ctx.obj.get("seed")
    paths = _guarded(write_bundle, directory, seed=13 if seed is None else seed)
    click.echo(f"bundle written to {directory}")
    click.echo(f"config: {paths.config}")


if __name__ == "__main__":
    main()
