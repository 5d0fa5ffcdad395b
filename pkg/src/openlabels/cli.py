"""Command-line entry points.

Exit codes: 0 success, 2 configuration problems, 3 gateway/backend failures,
4 data problems (unreadable corpus, bad artifacts), 1 anything else.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import sys
from pathlib import Path

import click

from openlabels import __version__
from openlabels.corpus import ingest
from openlabels.errors import ConfigError, OpenLabelsError
from openlabels.pipeline import (
    RunConfig,
    RunPaths,
    STAGES,
    build_gateway,
    load_corpus,
    make_synthetic_run,
    run_all,
    run_stages,
)

log = logging.getLogger(__name__)


def _fail(exc: Exception) -> "int":
    if isinstance(exc, OpenLabelsError):
        click.echo(f"error: {exc}", err=True)
        return exc.exit_code
    raise exc


def _run(config_path: str, stages: list[str], force: bool) -> int:
    try:
        config = RunConfig.from_file(config_path)
        manifest = run_stages(config, stages, force=force)
    except OpenLabelsError as exc:
        return _fail(exc)
    done = ", ".join(s for s in STAGES if s in manifest.stages)
    click.echo(f"completed stages: {done}")
    return 0


@click.group()
@click.version_option(version=__version__, prog_name="openlabels")
@click.option("-v", "--verbose", is_flag=True, help="Log progress at INFO level.")
def main(verbose: bool) -> None:
    """Open-world multi-label discovery, classification, and review."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command("validate")
@click.argument("data_path", type=click.Path(exists=True, dir_okay=False))
def validate_cmd(data_path: str) -> None:
    """Parse a corpus file and report its shape."""
    try:
        corpus = ingest(data_path)
    except OpenLabelsError as exc:
        sys.exit(_fail(exc))
    labeled = len(corpus.labeled())
    click.echo(f"{len(corpus.docs)} documents ({labeled} with gold labels)")


@main.command("discover")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--force", is_flag=True, help="Recompute even if artifacts are current.")
def discover_cmd(config_path: str, force: bool) -> None:
    """Build the initial label space from a document subset."""
    sys.exit(_run(config_path, ["discover"], force))


@main.command("refine")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--iterations", type=int, default=None,
              help="Override the configured iteration count.")
@click.option("--subset-size", type=int, default=None,
              help="Override the low-confidence subset size.")
@click.option("--force", is_flag=True)
def refine_cmd(config_path: str, iterations: int | None,
               subset_size: int | None, force: bool) -> None:
    """Iteratively expand and prune the label space."""
    try:
        config = RunConfig.from_file(config_path)
        overrides = {}
        if iterations is not None:
            overrides["iterations"] = iterations
        if subset_size is not None:
            overrides["subset_size"] = subset_size
        if overrides:
            config.refine = dataclasses.replace(config.refine, **overrides)
        config.validate()
        run_stages(config, ["refine"], force=force or iterations is not None
                   or subset_size is not None)
    except OpenLabelsError as exc:
        sys.exit(_fail(exc))
    click.echo("refinement complete")


@main.command("classify")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--max-ranks", type=int, default=None,
              help="Override how many labels each document may receive.")
@click.option("--force", is_flag=True)
def classify_cmd(config_path: str, max_ranks: int | None, force: bool) -> None:
    """Assign ranked labels to every document."""
    try:
        config = RunConfig.from_file(config_path)
        if max_ranks is not None:
            config.max_ranks = max_ranks
        config.validate()
        run_stages(config, ["classify"], force=force or max_ranks is not None)
    except OpenLabelsError as exc:
        sys.exit(_fail(exc))
    click.echo("predictions written")


@main.command("evaluate")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--k", "ks", type=int, multiple=True,
              help="Precision cutoffs; repeatable. Defaults to the config.")
@click.option("--force", is_flag=True)
def evaluate_cmd(config_path: str, ks: tuple[int, ...], force: bool) -> None:
    """Score predictions against gold labels."""
    try:
        config = RunConfig.from_file(config_path)
        if ks:
            config.eval_ks = tuple(sorted(set(ks)))
        config.validate()
        run_stages(config, ["evaluate"], force=force or bool(ks))
        report = json.loads(RunPaths(Path(config.workdir)).evaluation.read_text())
    except OpenLabelsError as exc:
        sys.exit(_fail(exc))
    click.echo(f"coverage: {report['coverage']:.4f}")
    for entry in report["precision"]:
        click.echo(f"p@{entry['k']} ({entry['match_mode']}): {entry['value']:.4f}")


@main.command("probe-dominance")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--sample", type=int, default=None, help="Documents to sample.")
def probe_cmd(config_path: str, sample: int | None) -> None:
    """Estimate how often one gold label dominates a document."""
    try:
        config = RunConfig.from_file(config_path)
        if sample is not None:
            config.probe_sample = sample
        config.validate()
        run_stages(config, ["probe"], force=sample is not None)
        report = json.loads(RunPaths(Path(config.workdir)).dominance.read_text())
    except OpenLabelsError as exc:
        sys.exit(_fail(exc))
    click.echo(
        f"dominant in {report['dominant']}/{report['sampled']} sampled documents "
        f"({report['percent_dominant']:.1%})"
    )


@main.command("run")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--force", is_flag=True)
def run_cmd(config_path: str, force: bool) -> None:
    """Full pipeline: discover, refine, classify, evaluate."""
    try:
        config = RunConfig.from_file(config_path)
        run_all(config, force=force)
    except OpenLabelsError as exc:
        sys.exit(_fail(exc))
    click.echo(f"run complete; artifacts in {config.workdir}")


@main.command("synthetic")
@click.option("--workdir", required=True, type=click.Path(file_okay=False))
@click.option("--run/--no-run", "execute", default=True,
              help="Also execute the full pipeline on the generated corpus.")
def synthetic_cmd(workdir: str, execute: bool) -> None:
    """Generate the planted benchmark corpus (and optionally run on it)."""
    try:
        config = make_synthetic_run(workdir)
        config_path = Path(workdir) / "config.json"
        config_path.write_text(
            json.dumps(config.to_dict(), sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )
        if execute:
            run_all(config)
    except OpenLabelsError as exc:
        sys.exit(_fail(exc))
    click.echo(f"synthetic corpus and config in {workdir}")


@main.command("serve")
@click.option("--labelspace", "labelspace_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--bind", default="127.0.0.1:8321", show_default=True,
              help="host:port to listen on.")
@click.option("--ui-dir", type=click.Path(exists=True, file_okay=False), default=None,
              help="Directory of static UI files to serve at /.")
@click.option("--auth-token-env", default="", show_default=True,
              help="Environment variable holding the bearer token; empty disables auth.")
def serve_cmd(labelspace_path: str, bind: str, ui_dir: str | None,
              auth_token_env: str) -> None:
    """Serve the review API (and optionally a static UI) over HTTP."""
    import os

    from openlabels.review import serve

    try:
        host, _, port_text = bind.rpartition(":")
        if not host or not port_text.isdigit():
            raise ConfigError(f"--bind must look like host:port, got {bind!r}")
        token = os.environ.get(auth_token_env, "") if auth_token_env else ""
        serve(labelspace_path, host=host, port=int(port_text),
              ui_dir=ui_dir, auth_token=token or None)
    except OpenLabelsError as exc:
        sys.exit(_fail(exc))


if __name__ == "__main__":
    main()
