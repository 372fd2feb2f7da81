"""``phasegate`` command line: smooth, evaluate, weights, simulate, sweep.

Exit codes: 0 success, 2 input or validation error, 3 internal invariant
violation. A TOML file passed with ``--config`` supplies defaults; each
``[subcommand]`` table uses the flag names as keys, e.g.::

    [smooth]
    k = 0.8
    variant = "e-const"
"""

from __future__ import annotations

import csv
import functools
import sys
from pathlib import Path

import click
import numpy as np

from . import io as pio
from .core import PhaseGateError, decompose_runs
from .egtp import EgtpConfig, smooth
from .metrics import dataset_aggregate
from .sim import NoiseSpec, WorkflowSpec, generate, sweep
from .tec import TecConfig, export_weights, tec_loss, tec_weights

EXIT_INPUT = 2
EXIT_INVARIANT = 3

PathIn = click.Path(exists=True, dir_okay=False, path_type=Path)
PathOut = click.Path(dir_okay=False, writable=True, path_type=Path)


class InvariantViolation(RuntimeError):
    pass


def ensure(cond: bool, msg: str) -> None:
    if not cond:
        raise InvariantViolation(msg)


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (PhaseGateError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_INPUT)
        except InvariantViolation as exc:
            click.echo(f"internal error: {exc}", err=True)
            sys.exit(EXIT_INVARIANT)
    return wrapper


def _load_config(ctx: click.Context, _param, value):
    if value is not None:
        try:
            ctx.default_map = pio.read_config(value)
        except (PhaseGateError, OSError, ValueError) as exc:
            raise click.BadParameter(str(exc)) from exc
    return value


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--config", type=PathIn, callback=_load_config, is_eager=True, expose_value=False,
              help="TOML file with one [subcommand] table of flag defaults.")
def main():
    """Stabilise, evaluate and reweight surgical phase predictions."""


def _egtp_options(fn=None, with_k=True):
    if fn is None:
        return functools.partial(_egtp_options, with_k=with_k)
    k_option = [
        click.option("--k", type=float, default=0.4, show_default=True,
                     help="Transition threshold on normalised evidence (raw evidence for e-const)."),
    ] if with_k else []
    options = k_option + [
        click.option("--variant", type=click.Choice(["normalized", "e-const"]), default="normalized",
                     show_default=True, help="Gate on normalised evidence or on raw accumulated evidence."),
        click.option("--min-count", type=click.IntRange(min=1), default=2, show_default=True,
                     help="Samples a candidate needs since the last reset before it can win."),
        click.option("--prob-floor", type=float, default=1e-12, show_default=True,
                     help="Probabilities are clamped to at least this value before taking logs."),
        click.option("--sigma-floor", type=float, default=1e-6, show_default=True,
                     help="Candidates whose running std is at or below this are not gated."),
        click.option("--stat-source", type=click.Choice(["delta", "evidence"]), default="delta",
                     show_default=True, help="Track running std of per-frame increments or of accumulated evidence."),
    ]
    for opt in reversed(options):
        fn = opt(fn)
    return fn


def _egtp_config(k, variant, min_count, prob_floor, sigma_floor, stat_source) -> EgtpConfig:
    return EgtpConfig(k=k, variant=variant, min_count=min_count, prob_floor=prob_floor,
                      sigma_floor=sigma_floor, stat_source=stat_source)


@main.command("smooth")
@click.option("--input", "input_path", type=PathIn, required=True, help="Probability log (CSV or JSONL).")
@click.option("--output", type=PathOut, required=True, help="Where to write the stabilised label file.")
@click.option("--trace", type=PathOut, default=None, help="Optional evidence-trace CSV.")
@click.option("--logits", is_flag=True, help="Input rows are logits; apply softmax on ingest.")
@click.option("--phases", type=PathIn, default=None, help="Phase-name file (one per line) used to name output labels.")
@_egtp_options
@_guarded
def smooth_cmd(input_path, output, trace, logits, phases, **egtp):
    """Run the evidence-gated smoother over one probability log."""
    stream = pio.read_probs(input_path, logits=logits)
    labels, tr = smooth(stream, _egtp_config(**egtp))
    ensure(len(labels) == len(stream), "output length differs from input length")
    ensure(int(tr.transition.sum()) == len(decompose_runs(labels)) - 1, "trace transitions disagree with output runs")
    table = None
    if phases is not None:
        table = list(pio.read_dictionary(phases))
        if len(table) != stream.n_phases:
            raise PhaseGateError(f"{phases}: {len(table)} names for {stream.n_phases} phases")
    pio.write_labels(labels, output, table)
    if trace is not None:
        pio.write_trace(tr, trace)
    click.echo(f"frames={len(labels)} transitions={int(tr.transition.sum())}")


def _read_pair(pred_path, gt_path, dictionary):
    gt = pio.read_labels(gt_path, dictionary=dictionary, strict=dictionary is not None)
    if dictionary is None and gt.phase_names is not None and not all(n.isdigit() for n in gt.phase_names):
        table = {n: i for i, n in enumerate(gt.phase_names)}
        pred = pio.read_labels(pred_path, dictionary=table, strict=False)
    else:
        pred = pio.read_labels(pred_path, dictionary=dictionary, strict=dictionary is not None)
    if len(pred) != len(gt):
        raise PhaseGateError(f"{pred_path} vs {gt_path}: sequence length mismatch ({len(pred)} != {len(gt)})")
    return pred, gt


@main.command("evaluate")
@click.option("--pred", "pred_path", type=PathIn, default=None, help="Predicted label file (single video).")
@click.option("--gt", "gt_path", type=PathIn, default=None, help="Ground-truth label file (single video).")
@click.option("--manifest", type=PathIn, default=None, help="CSV with pred,gt columns, one video per row.")
@click.option("--out", type=click.Path(path_type=Path), required=True,
              help="Output prefix; writes <out>.csv and <out>.json.")
@click.option("--phases", type=PathIn, default=None, help="Fixed phase-name dictionary (one name per line).")
@click.option("--raw", is_flag=True, help="Report the tfi column as the raw ratio instead of x100.")
@_guarded
def evaluate_cmd(pred_path, gt_path, manifest, out, phases, raw):
    """Compute accuracy, precision, recall, Jaccard, Edit Score and TFI."""
    if manifest is not None and (pred_path or gt_path):
        raise click.UsageError("use either --manifest or --pred/--gt, not both")
    if manifest is None and not (pred_path and gt_path):
        raise click.UsageError("need --pred and --gt, or --manifest")
    dictionary = pio.read_dictionary(phases) if phases else None
    pairs = pio.read_manifest(manifest) if manifest else [(pred_path, gt_path)]
    videos, names = [], []
    for i, (p, g) in enumerate(pairs):
        try:
            videos.append(_read_pair(p, g, dictionary))
        except PhaseGateError as exc:
            raise PhaseGateError(f"video {i}: {exc}") from exc
        names.append(Path(p).stem)
    n = len(dictionary) if dictionary else None
    metrics = dataset_aggregate(videos, n_phases=n)
    ensure(len(metrics.per_video) == len(pairs), "lost a video during evaluation")
    doc = pio.write_metrics(metrics, out.with_suffix(".csv"), out.with_suffix(".json"), names, raw)
    agg = doc["aggregate"]
    click.echo(" ".join(f"{k}={agg[k]:.4f}" if agg[k] is not None else f"{k}=nan" for k in agg))


@main.command("weights")
@click.option("--pred", "pred_path", type=PathIn, required=True, help="Predicted label file.")
@click.option("--gt", "gt_path", type=PathIn, required=True, help="Ground-truth label file.")
@click.option("--probs", "probs_path", type=PathIn, default=None, help="Probability log; prints the loss when given.")
@click.option("--logits", is_flag=True, help="The probability log holds logits.")
@click.option("--alpha", type=click.FloatRange(min=0), default=7.0, show_default=True, help="Onset penalty strength.")
@click.option("--sigma", type=click.FloatRange(min=0, min_open=True), default=1.5, show_default=True,
              help="Gaussian width of the onset decay, in frames.")
@click.option("--m", type=click.IntRange(min=1), default=8, show_default=True, help="Onset window length in frames.")
@click.option("--out", type=PathOut, required=True, help="Weight CSV (t,w); a <out>.json sidecar is written next to it.")
@_guarded
def weights_cmd(pred_path, gt_path, probs_path, logits, alpha, sigma, m, out):
    """Export per-frame error-onset weights for an external trainer."""
    pred, gt = _read_pair(pred_path, gt_path, None)
    config = TecConfig(alpha=alpha, sigma=sigma, m=m)
    schedule = tec_weights(pred, gt, config)
    ensure(bool(np.all(schedule.weights >= 1.0)) and schedule.weights.max() <= 1.0 + alpha + 1e-12,
           "weights outside [1, 1 + alpha]")
    export_weights(schedule, out)
    click.echo(f"frames={len(schedule)} error_runs={len(schedule.runs)}")
    if probs_path is not None:
        stream = pio.read_probs(probs_path, logits=logits)
        loss = tec_loss(stream, gt, pred, config)
        click.echo(f"loss={loss!r}")


def _workflow_options(fn):
    options = [
        click.option("--n-phases", type=click.IntRange(min=1), default=7, show_default=True, help="Number of phases."),
        click.option("--phase-order", type=str, default=None,
                     help="Comma-separated phase IDs (default 0..N-1 in order)."),
        click.option("--min-duration", type=click.IntRange(min=1), default=100, show_default=True,
                     help="Shortest phase duration in frames."),
        click.option("--max-duration", type=click.IntRange(min=1), default=400, show_default=True,
                     help="Longest phase duration in frames."),
        click.option("--revisit-prob", type=click.FloatRange(0, 1), default=0.0, show_default=True,
                     help="Chance of a short return to the previous phase after each phase."),
        click.option("--seed", type=int, default=0, show_default=True, help="PCG64 seed (first seed of an ensemble)."),
        click.option("--base-confidence", type=float, default=0.8, show_default=True,
                     help="Probability mass on the true phase away from boundaries."),
        click.option("--boundary-width", type=click.IntRange(min=0), default=10, show_default=True,
                     help="Frames over which mass cross-fades at each true transition."),
        click.option("--flicker-rate", type=click.FloatRange(0, 1), default=0.01, show_default=True,
                     help="Per-frame probability that a confusion episode starts."),
        click.option("--flicker-strength", type=click.FloatRange(0, 1), default=0.6, show_default=True,
                     help="Mass moved onto the wrong phase during an episode."),
        click.option("--flicker-length", type=click.IntRange(min=1), default=25, show_default=True,
                     help="Maximum episode length in frames (uniform 1..max)."),
        click.option("--concentration", type=float, default=5.0, show_default=True,
                     help="Dirichlet concentration of the residual mass (small = spiky)."),
        click.option("--temperature", type=float, default=1.0, show_default=True,
                     help="Log-probability scale divisor (<1 overconfident, >1 flat)."),
    ]
    for opt in reversed(options):
        fn = opt(fn)
    return fn


def _specs(n_phases, phase_order, min_duration, max_duration, revisit_prob, seed, base_confidence,
           boundary_width, flicker_rate, flicker_strength, flicker_length, concentration, temperature):
    order = None
    if phase_order:
        try:
            order = tuple(int(v) for v in phase_order.split(","))
        except ValueError as exc:
            raise PhaseGateError(f"--phase-order: {exc}") from exc
    spec = WorkflowSpec(n_phases=n_phases, phase_order=order, durations=(min_duration, max_duration),
                        seed=seed, revisit_prob=revisit_prob)
    noise = NoiseSpec(base_confidence=base_confidence, boundary_width=boundary_width,
                      flicker_rate=flicker_rate, flicker_strength=flicker_strength,
                      flicker_length=flicker_length, concentration=concentration, temperature=temperature)
    return spec, noise


@main.command("simulate")
@click.option("--gt-out", type=PathOut, required=True, help="Ground-truth label file to write.")
@click.option("--probs-out", type=PathOut, required=True, help="Probability log to write (.csv or .jsonl).")
@_workflow_options
@_guarded
def simulate_cmd(gt_out, probs_out, **kw):
    """Write one synthetic ground-truth / probability-log pair."""
    spec, noise = _specs(**kw)
    gt, probs = generate(spec, noise)
    ensure(np.allclose(probs.sum(axis=1), 1.0, atol=1e-9), "generated rows do not sum to 1")
    pio.write_labels(gt, gt_out)
    pio.write_probs(probs, probs_out)
    click.echo(f"frames={len(gt)} phases={spec.n_phases} gt_runs={len(decompose_runs(gt))}")


def _parse_grid(text: str) -> list[float]:
    try:
        grid = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise PhaseGateError(f"--k-grid: {exc}") from exc
    if not grid:
        raise PhaseGateError("--k-grid is empty")
    return grid


@main.command("sweep")
@click.option("--k-grid", type=str, default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0,1.1,1.2", show_default=True,
              help="Comma-separated thresholds.")
@click.option("--n-seeds", type=click.IntRange(min=1), default=50, show_default=True,
              help="Ensemble size; seeds run from --seed upward.")
@click.option("--out", type=PathOut, required=True, help="Summary CSV k,acc,tfi,edit.")
@click.option("--detail", type=PathOut, default=None, help="Per-seed CSV seed,k,acc,tfi,edit (k empty = argmax).")
@click.option("--raw", is_flag=True, help="Report tfi raw instead of x100.")
@_egtp_options(with_k=False)
@_workflow_options
@_guarded
def sweep_cmd(k_grid, n_seeds, out, detail, raw, variant, min_count, prob_floor, sigma_floor, stat_source, **kw):
    """Sweep the threshold over a seeded synthetic ensemble."""
    spec, noise = _specs(**kw)
    config = _egtp_config(1.0, variant, min_count, prob_floor, sigma_floor, stat_source)
    result = sweep(spec, noise, _parse_grid(k_grid), config, n_seeds=n_seeds)
    ensure(all(a.k < b.k for a, b in zip(result.rows, result.rows[1:])), "sweep rows not ordered by k")
    scale = 1.0 if raw else 100.0

    def fmt(row):
        return [repr(row.k), repr(100.0 * row.acc), repr(scale * row.tfi), repr(row.edit)]

    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "acc", "tfi", "edit"])
        for row in result.rows:
            writer.writerow(fmt(row))
    if detail is not None:
        with detail.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["seed", "k", "acc", "tfi", "edit"])
            for d in result.details:
                writer.writerow([d["seed"], "" if d["k"] is None else repr(d["k"]),
                                 repr(100.0 * d["acc"]), repr(scale * d["tfi"]), repr(d["edit"])])
    b = result.baseline
    click.echo(f"argmax baseline: acc={100 * b.acc:.2f} tfi={scale * b.tfi:.4f} edit={b.edit:.2f}")
    for row in result.rows:
        click.echo(f"k={row.k:g}: acc={100 * row.acc:.2f} tfi={scale * row.tfi:.4f} edit={row.edit:.2f}")


if __name__ == "__main__":
    main()
