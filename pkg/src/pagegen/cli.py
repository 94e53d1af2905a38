"""Command line entrypoints: segment | generate | evaluate | serve."""

from __future__ import annotations

import json
import shlex
import subprocess
import sys
from pathlib import Path

import click
from PIL import Image

from . import metrics as metrics_mod
from .core import ConfigError, RasterError, load_config, load_raster
from .pipeline import RunDir, execute_run, load_prompts
from .provider import HttpProvider, MockProvider
from .segment import build_tree, render_overlay, separation_rate


def _load_config_or_die(config_path, overrides):
    try:
        return load_config(config_path, overrides)
    except (ConfigError, FileNotFoundError) as exc:
        raise click.ClickException(str(exc))


def _config_overrides(window_size, var_thr, diff_thr, portion_thr, max_depth):
    overrides = {}
    for key, value in (("window_size", window_size), ("var_thr", var_thr),
                       ("diff_thr", diff_thr), ("portion_thr", portion_thr),
                       ("max_depth", max_depth)):
        if value is not None:
            overrides[f"separation.{key}"] = value
    return overrides


def _snapshot(sep, model, pipe):
    return {
        "separation": {"window_size": sep.window_size, "var_thr": sep.var_thr,
                       "diff_thr": sep.diff_thr, "portion_thr": sep.portion_thr,
                       "max_depth": sep.max_depth},
        "model": {"endpoint": model.endpoint, "model_name": model.model_name,
                  "temperature": model.temperature,
                  "max_output_tokens": model.max_output_tokens,
                  "concurrency_limit": model.concurrency_limit,
                  "retry_budget": model.retry_budget},
        "pipeline": {"mode": pipe.mode},
    }


@click.group()
def main():
    """Divide-and-conquer screenshot-to-HTML toolkit."""


_sep_options = [
    click.option("--window-size", type=int, default=None),
    click.option("--var-thr", type=float, default=None),
    click.option("--diff-thr", type=float, default=None),
    click.option("--portion-thr", type=float, default=None),
    click.option("--max-depth", type=int, default=None),
    click.option("--config", "config_path", type=click.Path(exists=True),
                 default=None, help="TOML config file"),
]


def sep_options(fn):
    for opt in reversed(_sep_options):
        fn = opt(fn)
    return fn


@main.command()
@click.argument("image", type=click.Path())
@click.option("--out", "out_dir", type=click.Path(), default="runs",
              help="Runs root directory")
@sep_options
def segment(image, out_dir, config_path, window_size, var_thr, diff_thr,
            portion_thr, max_depth):
    """Detect separation lines and write tree.json + overlay.png."""
    if not Path(image).exists():
        raise click.ClickException(f"image file not found: {image}")
    sep, model, pipe = _load_config_or_die(
        config_path, _config_overrides(window_size, var_thr, diff_thr,
                                       portion_thr, max_depth))
    try:
        raster = load_raster(image)
    except RasterError as exc:
        raise click.ClickException(str(exc))
    tree = build_tree(raster, sep)
    run = RunDir.create(out_dir, mode="segment-only",
                        config_snapshot=_snapshot(sep, model, pipe))
    run.write_input(raster)
    run.write_tree(tree)
    overlay = render_overlay(raster, tree)
    Image.fromarray(overlay.rgb).save(run.path / "overlay.png")
    run.update_manifest(status="complete")
    rate = separation_rate(tree)
    click.echo(f"run_id\t{run.run_id}")
    click.echo(f"leaves\t{len(tree.leaves())}")
    click.echo(f"separation_rate\t{rate:.6f}")


@main.command()
@click.argument("image", type=click.Path())
@click.option("--mode", type=click.Choice(["agent", "rule"]), default=None)
@click.option("--mock", "mock_script", type=click.Path(exists=True),
              default=None, help="Mock provider script (JSON); no network")
@click.option("--out", "out_dir", type=click.Path(), default="runs")
@click.option("--prompt-dir", type=click.Path(exists=True), default=None)
@click.option("--debug", is_flag=True, help="Log redacted request bodies")
@sep_options
def generate(image, mode, mock_script, out_dir, prompt_dir, debug,
             config_path, window_size, var_thr, diff_thr, portion_thr,
             max_depth):
    """Run the full divide-generate-assemble pipeline."""
    if not Path(image).exists():
        raise click.ClickException(f"image file not found: {image}")
    sep, model, pipe = _load_config_or_die(
        config_path, _config_overrides(window_size, var_thr, diff_thr,
                                       portion_thr, max_depth))
    mode = mode or pipe.mode
    try:
        raster = load_raster(image)
    except RasterError as exc:
        raise click.ClickException(str(exc))
    if mock_script:
        provider = MockProvider.from_file(mock_script, config=model)
    else:
        provider = HttpProvider(model, debug=debug)
    prompts = load_prompts(prompt_dir or pipe.prompt_dir or None)
    tree = build_tree(raster, sep)
    run = RunDir.create(out_dir, mode=mode,
                        config_snapshot=_snapshot(sep, model, pipe))
    try:
        _, stats = execute_run(run, raster, tree, provider, prompts, mode)
    except Exception as exc:
        click.echo(f"run_id\t{run.run_id}", err=True)
        raise click.ClickException(f"generation failed: {exc}")
    click.echo(f"run_id\t{run.run_id}")
    click.echo(f"total_calls\t{stats.total_calls}")
    click.echo(f"final_html\t{run.path / 'final.html'}")


@main.command()
@click.option("--original-html", type=click.Path(exists=True), default=None)
@click.option("--generated-html", type=click.Path(exists=True), default=None)
@click.option("--original-png", type=click.Path(exists=True), default=None)
@click.option("--generated-png", type=click.Path(), default=None)
@click.option("--ref-blocks", type=click.Path(exists=True), default=None)
@click.option("--gen-blocks", type=click.Path(exists=True), default=None)
@click.option("--gt-boxes", type=click.Path(exists=True), default=None)
@click.option("--tree", "tree_path", type=click.Path(exists=True), default=None)
@click.option("--clip-score", type=float, default=None,
              help="Externally computed embedding similarity")
@click.option("--renderer", default=None,
              help="External renderer command; placeholders {html} {out}")
@click.option("--out", "out_path", type=click.Path(), default="metrics.json")
def evaluate(original_html, generated_html, original_png, generated_png,
             ref_blocks, gen_blocks, gt_boxes, tree_path, clip_score,
             renderer, out_path):
    """Compute every metric whose inputs were supplied; write metrics.json."""
    if renderer and generated_html and generated_png \
            and not Path(generated_png).exists():
        cmd = [part.format(html=generated_html, out=generated_png)
               for part in shlex.split(renderer)]
        subprocess.run(cmd, check=True)

    tree = None
    if tree_path:
        from .core import tree_from_json
        tree = tree_from_json(Path(tree_path).read_text())
    if gt_boxes and not tree:
        raise click.ClickException(
            "mean_iou needs --tree alongside --gt-boxes")
    if (ref_blocks is None) != (gen_blocks is None):
        missing = "--gen-blocks" if gen_blocks is None else "--ref-blocks"
        raise click.ClickException(f"block metrics need {missing} as well")

    report = metrics_mod.build_report(
        original_html=Path(original_html).read_text() if original_html else None,
        generated_html=Path(generated_html).read_text() if generated_html else None,
        ref_blocks=metrics_mod.load_blocks(ref_blocks) if ref_blocks else None,
        gen_blocks=metrics_mod.load_blocks(gen_blocks) if gen_blocks else None,
        gt_boxes=metrics_mod.load_boxes(gt_boxes) if gt_boxes else None,
        tree=tree,
        clip_score=clip_score,
    )
    metrics_mod.write_report(report, out_path)
    for key in sorted(report.to_dict()):
        click.echo(f"{key}\t{report.to_dict()[key]:.6f}")


@main.command()
@click.option("--port", type=int, default=8000)
@click.option("--host", default="127.0.0.1")
@click.option("--runs-root", type=click.Path(), default="runs")
@click.option("--mock", "mock_script", type=click.Path(exists=True),
              default=None, help="Default mock provider script for new runs")
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None)
def serve(port, host, runs_root, mock_script, config_path):
    """Start the HTTP service used by the studio UI."""
    import uvicorn

    from .server import create_app

    app = create_app(runs_root=runs_root, config_path=config_path,
                     mock_script=mock_script)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    sys.exit(main())
