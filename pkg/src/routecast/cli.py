"""Command-line pipeline: ingest -> sample -> build-benchmark -> evaluate
-> compare/report, with provenance manifests at every stage and a verify
walk over the resulting chain.

Exit codes: 0 success, 1 validation failure, 2 usage error. Every command
that produces files writes a stage manifest unless ``--no-manifest``; all
randomized commands require an explicit seed. Flags and file formats are
documented in ``docs/cli.md``.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from routecast import __version__
from routecast.adapters import AdapterId, convert as convert_routes, emit_interchange, parse
from routecast.benchmark import (
    Bucket,
    PRESET_SPECS,
    StrataSpec,
    build_benchmark,
    load_benchmark,
    save_benchmark,
    seed_stability,
    stratified_sample,
)
from routecast.errors import RoutecastError
from routecast.evaluate import (
    compare_reports,
    evaluate_benchmark,
    group_predictions,
    load_report,
    load_timings,
    quick_scores,
    save_report,
)
from routecast.provenance import (
    load_manifest,
    manifest_identity,
    verify_all,
    verify_chain,
    write_manifest,
)
from routecast.report import (
    render_pareto_figure,
    render_stability_figure,
    render_stratified_figure,
    write_leaderboard,
    write_pareto,
    write_stability,
    write_stratified,
)
from routecast.schema import Topology
from routecast.stock import load_stock

_ADAPTER_CHOICES = [a.value for a in AdapterId]


def _fail_on_domain_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except RoutecastError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


def _parse_int_list(text: str, what: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise click.UsageError(f"{what} must be a comma-separated integer list") from None
    if not values:
        raise click.UsageError(f"{what} must name at least one value")
    return values


def _manifest_options(fn):
    fn = click.option(
        "--no-manifest", is_flag=True, help="Skip writing the stage manifest."
    )(fn)
    fn = click.option(
        "--stage", default=None, help="Stage name for the manifest (default: command name)."
    )(fn)
    fn = click.option(
        "--parent",
        type=click.Path(exists=True, dir_okay=False, path_type=Path),
        default=None,
        help="Parent stage manifest to chain from.",
    )(fn)
    fn = click.option(
        "--root",
        type=click.Path(file_okay=False, path_type=Path),
        default=Path("."),
        help="Provenance root; manifests go to <root>/provenance.",
    )(fn)
    return fn


def _record_stage(
    *,
    no_manifest: bool,
    root: Path,
    stage: str | None,
    default_stage: str,
    inputs: list[Path],
    outputs: list[Path],
    parent: Path | None,
) -> None:
    if no_manifest:
        return
    manifest_path, digest = write_manifest(
        root=root,
        stage=stage or default_stage,
        inputs=inputs,
        outputs=outputs,
        parent=parent,
    )
    click.echo(f"manifest: {manifest_path} ({digest[:12]}...)")


def _load_spec(spec_path: Path | None, preset: str | None) -> StrataSpec:
    if (spec_path is None) == (preset is None):
        raise click.UsageError("provide exactly one of --spec or --preset")
    if preset is not None:
        if preset not in PRESET_SPECS:
            raise click.UsageError(
                f"unknown preset {preset!r}; available: {', '.join(sorted(PRESET_SPECS))}"
            )
        return PRESET_SPECS[preset]
    try:
        document = json.loads(spec_path.read_text(encoding="utf-8"))
        buckets = tuple(
            Bucket(
                min_length=b["min_length"],
                max_length=b["max_length"],
                topology=Topology(b["topology"]) if b.get("topology") else None,
                n_samples=b["n_samples"],
            )
            for b in document["buckets"]
        )
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise click.UsageError(f"cannot read strata spec {spec_path}: {exc}") from exc
    return StrataSpec(buckets)


def _echo_warnings(warnings) -> None:
    for warning in warnings:
        click.echo(f"warning: {warning}", err=True)


@click.group()
@click.version_option(version=__version__, prog_name="routecast")
def main() -> None:
    """Route evaluation pipeline for multi-step synthesis planning."""


@main.command()
@click.option("--adapter", type=click.Choice(_ADAPTER_CHOICES), required=True)
@click.option("--in", "in_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False, path_type=Path), required=True)
@_manifest_options
@_fail_on_domain_errors
def ingest(adapter, in_path, out_path, root, parent, stage, no_manifest):
    """Parse a native route file and write it as interchange records."""
    report = parse(AdapterId(adapter), in_path.read_bytes(), source=str(in_path))
    _echo_warnings(report.warnings)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_bytes(emit_interchange(report.routes))
    click.echo(f"ingested {len(report.routes)} route(s) -> {out_path}")
    _record_stage(
        no_manifest=no_manifest,
        root=root,
        stage=stage,
        default_stage="ingest",
        inputs=[in_path],
        outputs=[out_path],
        parent=parent,
    )


@main.command()
@click.option("--from", "from_adapter", type=click.Choice(_ADAPTER_CHOICES), required=True)
@click.option("--to", "to_adapter", type=click.Choice(_ADAPTER_CHOICES), required=True)
@click.option("--in", "in_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False, path_type=Path), required=True)
@_manifest_options
@_fail_on_domain_errors
def convert(from_adapter, to_adapter, in_path, out_path, root, parent, stage, no_manifest):
    """Translate a route file between formats (canonical keys preserved)."""
    payload = convert_routes(
        AdapterId(from_adapter), AdapterId(to_adapter), in_path.read_bytes(), source=str(in_path)
    )
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_bytes(payload)
    click.echo(f"converted {in_path} -> {out_path}")
    _record_stage(
        no_manifest=no_manifest,
        root=root,
        stage=stage,
        default_stage="convert",
        inputs=[in_path],
        outputs=[out_path],
        parent=parent,
    )


@main.command()
@click.option("--pool", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--spec", "spec_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--preset", default=None, help=f"One of: {', '.join(sorted(PRESET_SPECS))}")
@click.option("--seed", type=int, required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False, path_type=Path), required=True)
@_manifest_options
@_fail_on_domain_errors
def sample(pool, spec_path, preset, seed, out_path, root, parent, stage, no_manifest):
    """Stratified sampling of a route pool into a benchmark candidate."""
    spec = _load_spec(spec_path, preset)
    pool_routes = parse(AdapterId.INTERCHANGE, pool.read_bytes(), source=str(pool)).routes
    sampled = stratified_sample(pool_routes, spec, seed)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_bytes(emit_interchange(sampled))
    click.echo(f"sampled {len(sampled)} route(s) with seed {seed} -> {out_path}")
    _record_stage(
        no_manifest=no_manifest,
        root=root,
        stage=stage,
        default_stage="sample",
        inputs=[pool],
        outputs=[out_path],
        parent=parent,
    )


@main.command()
@click.option("--pool", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--spec", "spec_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--preset", default=None)
@click.option("--seeds", required=True, help="Comma-separated candidate seeds (e.g. 15 of them).")
@click.option("--predictions", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True,
              help="Interchange predictions of the reference model over the whole pool.")
@click.option("--stock", "stock_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--canonicalizer", default="identity", show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--no-figures", is_flag=True)
@_manifest_options
@_fail_on_domain_errors
def stability(pool, spec_path, preset, seeds, predictions, stock_path, canonicalizer,
              out_dir, no_figures, root, parent, stage, no_manifest):
    """Score candidate benchmarks across seeds and pick the most typical.

    Writes the per-seed table (and a figure) and prints the chosen seed.
    """
    spec = _load_spec(spec_path, preset)
    seed_list = _parse_int_list(seeds, "--seeds")
    pool_routes = parse(AdapterId.INTERCHANGE, pool.read_bytes(), source=str(pool)).routes
    loaded = load_stock(stock_path, canonicalizer)
    _echo_warnings(loaded.warnings)
    pred_routes = parse(AdapterId.INTERCHANGE, predictions.read_bytes(), source=str(predictions)).routes
    grouped, warnings = group_predictions(pred_routes)
    _echo_warnings(warnings)

    result = seed_stability(
        pool_routes,
        spec,
        seed_list,
        lambda candidate: quick_scores(candidate, grouped, loaded.stock),
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    table = write_stability(result, out_dir / "stability.csv")
    outputs = [table]
    if not no_figures:
        outputs.append(render_stability_figure(result, out_dir / "stability.png"))
    click.echo(f"chosen seed: {result.chosen_seed} (index {result.chosen_index})")
    _record_stage(
        no_manifest=no_manifest,
        root=root,
        stage=stage,
        default_stage="stability",
        inputs=[pool, predictions, stock_path],
        outputs=outputs,
        parent=parent,
    )


@main.command("build-benchmark")
@click.option("--samples", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--stock", "stock_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--canonicalizer", default="identity", show_default=True)
@click.option("--id", "benchmark_id", required=True)
@click.option("--seed", type=int, required=True, help="Sampling seed to record in the definition.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False, path_type=Path), required=True)
@_manifest_options
@_fail_on_domain_errors
def build_benchmark_cmd(samples, stock_path, canonicalizer, benchmark_id, seed, out_path,
                        root, parent, stage, no_manifest):
    """Expand ground truths for sampled references and write the definition."""
    sample_routes = parse(AdapterId.INTERCHANGE, samples.read_bytes(), source=str(samples)).routes
    loaded = load_stock(stock_path, canonicalizer)
    _echo_warnings(loaded.warnings)
    provenance_hash = (
        manifest_identity(load_manifest(parent)) if parent is not None else ""
    )
    definition = build_benchmark(
        sample_routes, loaded.stock, benchmark_id, seed, provenance=provenance_hash
    )
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_benchmark(definition, out_path)
    total_variants = sum(t.n_variants for t in definition.targets)
    click.echo(
        f"benchmark {benchmark_id}: {len(definition.targets)} target(s), "
        f"{total_variants} pruned variant key(s) -> {out_path}"
    )
    _record_stage(
        no_manifest=no_manifest,
        root=root,
        stage=stage,
        default_stage="build-benchmark",
        inputs=[samples, stock_path],
        outputs=[out_path],
        parent=parent,
    )


@main.command()
@click.option("--benchmark", "benchmark_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--predictions", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--stock", "stock_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--canonicalizer", default="identity", show_default=True)
@click.option("--k", default="1,10", show_default=True, help="Comma-separated K values.")
@click.option("--seed", type=int, required=True, help="Statistics seed for bootstrap CIs.")
@click.option("--resamples", type=int, default=10_000, show_default=True)
@click.option("--timing", "timing_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None)
@click.option("--rate", "rate_usd_per_hour", type=float, default=None, help="Cloud rate in USD/hour for the cost summary.")
@click.option("--model", "model_id", default=None, help="Model id for the report (default: predictions metadata).")
@click.option("--no-verify", is_flag=True, help="Skip ground-truth recomputation at load.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False, path_type=Path), required=True)
@_manifest_options
@_fail_on_domain_errors
def evaluate(benchmark_path, predictions, stock_path, canonicalizer, k, seed, resamples,
             timing_path, rate_usd_per_hour, model_id, no_verify, out_path,
             root, parent, stage, no_manifest):
    """Score predictions against a benchmark and write the report."""
    k_values = _parse_int_list(k, "--k")
    loaded = load_stock(stock_path, canonicalizer)
    _echo_warnings(loaded.warnings)
    definition = load_benchmark(benchmark_path, loaded.stock, verify=not no_verify)
    pred_routes = parse(AdapterId.INTERCHANGE, predictions.read_bytes(), source=str(predictions)).routes
    grouped, warnings = group_predictions(pred_routes)
    _echo_warnings(warnings)
    if model_id is None:
        names = {r.metadata.get("model") for r in pred_routes} - {None}
        model_id = names.pop() if len(names) == 1 else "unknown"
    timings = load_timings(timing_path) if timing_path else None
    report, eval_warnings = evaluate_benchmark(
        definition,
        grouped,
        loaded.stock,
        k_values,
        stats_seed=seed,
        resamples=resamples,
        timings=timings,
        rate_usd_per_hour=rate_usd_per_hour,
        model_id=model_id,
    )
    _echo_warnings(eval_warnings)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_report(report, out_path)
    for metric, ci in report.aggregates.items():
        flag = "" if ci.reliable else "  [unreliable]"
        click.echo(f"{metric}: {ci.mean:.4f} [{ci.lo:.4f}, {ci.hi:.4f}]{flag}")
    click.echo(f"report -> {out_path}")
    inputs = [benchmark_path, predictions, stock_path]
    if timing_path:
        inputs.append(timing_path)
    _record_stage(
        no_manifest=no_manifest,
        root=root,
        stage=stage,
        default_stage="evaluate",
        inputs=inputs,
        outputs=[out_path],
        parent=parent,
    )


@main.command()
@click.option("--a", "report_a_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--b", "report_b_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True)
@click.option("--metric", default="top10", show_default=True)
@click.option("--seed", type=int, required=True)
@click.option("--resamples", type=int, default=10_000, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False, path_type=Path), default=None)
@_fail_on_domain_errors
def compare(report_a_path, report_b_path, metric, seed, resamples, out_path):
    """Paired bootstrap difference test between two reports."""
    report_a = load_report(report_a_path)
    report_b = load_report(report_b_path)
    result = compare_reports(report_a, report_b, metric, seed=seed, resamples=resamples)
    verdict = "significant" if result.significant else "not significant"
    click.echo(
        f"{metric}: mean diff (B - A) = {result.mean_diff:+.4f} "
        f"[{result.lo:+.4f}, {result.hi:+.4f}] -> {verdict}"
    )
    if out_path is not None:
        payload = {
            "metric": metric,
            "model_a": report_a.model_id,
            "model_b": report_b.model_id,
            "mean_diff": result.mean_diff,
            "lo": result.lo,
            "hi": result.hi,
            "significant": result.significant,
            "seed": seed,
            "resamples": resamples,
        }
        out_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        click.echo(f"difference -> {out_path}")


@main.command("report")
@click.option("--report", "report_paths", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              multiple=True, required=True, help="Report file(s); repeat for a leaderboard.")
@click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--metric", default="top10", show_default=True, help="Headline metric for Pareto/stratified views.")
@click.option("--no-figures", is_flag=True)
@_manifest_options
@_fail_on_domain_errors
def report_cmd(report_paths, out_dir, metric, no_figures, root, parent, stage, no_manifest):
    """Emit leaderboard/stratified/Pareto tables (and figures) from reports."""
    reports = [load_report(path) for path in report_paths]
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = [write_leaderboard(reports, out_dir / "leaderboard.csv")]
    for rep in reports:
        outputs.append(
            write_stratified(rep, out_dir / f"stratified-{rep.model_id}.csv")
        )
    outputs.append(write_pareto(reports, out_dir / "pareto.csv", metric))
    if not no_figures:
        pareto_fig = render_pareto_figure(reports, out_dir / "pareto.png", metric)
        if pareto_fig is not None:
            outputs.append(pareto_fig)
        strat_fig = render_stratified_figure(reports, out_dir / "stratified.png", metric)
        if strat_fig is not None:
            outputs.append(strat_fig)
    click.echo(f"report artifacts -> {out_dir}")
    _record_stage(
        no_manifest=no_manifest,
        root=root,
        stage=stage,
        default_stage="report",
        inputs=list(report_paths),
        outputs=outputs,
        parent=parent,
    )


@main.command()
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              default=None, help="Leaf manifest to walk.")
@click.option("--all", "verify_everything", is_flag=True, help="Verify every chain under <root>/provenance.")
@click.option("--root", type=click.Path(file_okay=False, path_type=Path), default=Path("."))
@_fail_on_domain_errors
def verify(manifest_path, verify_everything, root):
    """Re-hash every file referenced by a manifest chain."""
    if (manifest_path is None) == (not verify_everything):
        raise click.UsageError("provide exactly one of --manifest or --all")
    reports = (
        verify_all(root) if verify_everything else [verify_chain(manifest_path)]
    )
    failed = False
    for chain_report in reports:
        click.echo(chain_report.summary())
        failed = failed or not chain_report.ok
    sys.exit(1 if failed else 0)


if __name__ == "__main__":
    main()
