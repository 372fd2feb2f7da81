"""Temporal Error-Cascade weights and loss.

Misclassified frames are grouped into maximal error runs. The first
``min(L, m)`` frames of each run get a Gaussian onset weight
``1 + alpha * exp(-(t - s)^2 / (2 sigma^2))``; all other frames weigh 1.
The loss is the weighted per-frame cross-entropy averaged over ``T``.

Weights depend on the current predictions, so a trainer recomputes them
whenever its predictions change (per batch or per epoch, its choice).
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .core import PhaseGateError, argmax_lowest, check_labels, check_probs, check_same_length

PROB_FLOOR = 1e-12


class ErrorRun(NamedTuple):
    """Maximal run of misclassified frames; ``end`` is inclusive."""

    start: int
    end: int

    @property
    def length(self) -> int:
        return self.end - self.start + 1


@dataclass(frozen=True)
class TecConfig:
    alpha: float = 7.0
    sigma: float = 1.5
    m: int = 8

    def __post_init__(self):
        if not self.alpha >= 0:
            raise PhaseGateError(f"alpha must be >= 0, got {self.alpha}")
        if not self.sigma > 0:
            raise PhaseGateError(f"sigma must be > 0, got {self.sigma}")
        if int(self.m) != self.m or self.m < 1:
            raise PhaseGateError(f"m must be a positive integer, got {self.m}")


@dataclass(frozen=True)
class WeightSchedule:
    weights: np.ndarray
    runs: list[ErrorRun]
    config: TecConfig = field(default_factory=TecConfig)

    def __len__(self) -> int:
        return len(self.weights)


def error_runs(pred, gt) -> list[ErrorRun]:
    """Maximal runs of frames where ``pred != gt``."""
    pred = check_labels(pred)
    gt = check_labels(gt)
    check_same_length(pred, gt)
    wrong = np.concatenate(([False], pred != gt, [False]))
    edges = np.flatnonzero(wrong[1:] != wrong[:-1])
    return [ErrorRun(int(s), int(e) - 1) for s, e in zip(edges[::2], edges[1::2])]


def tec_weights(pred, gt, config: TecConfig | None = None) -> WeightSchedule:
    config = config or TecConfig()
    runs = error_runs(pred, gt)
    w = np.ones(len(check_labels(gt)), dtype=np.float64)
    for run in runs:
        onset = np.arange(min(run.length, config.m))
        w[run.start + onset] = 1.0 + config.alpha * np.exp(-(onset ** 2) / (2.0 * config.sigma ** 2))
    return WeightSchedule(w, runs, config)


def cross_entropy(probs, gt) -> np.ndarray:
    """Per-frame ``-log p_t(gt_t)`` with probabilities floored at 1e-12."""
    probs = check_probs(probs)
    gt = check_labels(gt)
    check_same_length(probs, gt)
    if gt.max() >= probs.shape[1]:
        raise PhaseGateError(f"ground-truth label {int(gt.max())} out of range for N={probs.shape[1]}")
    p = probs[np.arange(len(gt)), gt]
    return -np.log(np.clip(p, PROB_FLOOR, 1.0))


def tec_loss(probs, gt, pred=None, config: TecConfig | None = None) -> float:
    """Weighted cross-entropy; ``pred`` defaults to the per-frame argmax."""
    probs = check_probs(probs)
    if pred is None:
        pred = argmax_lowest(probs)
    ce = cross_entropy(probs, gt)
    schedule = tec_weights(pred, gt, config)
    return float(np.sum(schedule.weights * ce) / len(ce))


def export_weights(schedule: WeightSchedule, path) -> tuple[Path, Path]:
    """Write ``t,w`` CSV plus a JSON sidecar (``<path>.json``) with config and runs."""
    path = Path(path)
    sidecar = path.with_suffix(path.suffix + ".json")
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "w"])
            for t, w in enumerate(schedule.weights):
                writer.writerow([t, repr(float(w))])
        meta = asdict(schedule.config)
        meta["runs"] = [{"s": r.start, "e": r.end} for r in schedule.runs]
        sidecar.write_text(json.dumps(meta, indent=2) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write weights to {path}: {exc}") from exc
    return path, sidecar


def read_weights(path) -> WeightSchedule:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    weights = np.array([float(r["w"]) for r in rows])
    if [int(r["t"]) for r in rows] != list(range(len(rows))):
        raise PhaseGateError(f"{path}: frame index column is not 0..T-1")
    sidecar = path.with_suffix(path.suffix + ".json")
    meta = json.loads(sidecar.read_text())
    runs = [ErrorRun(r["s"], r["e"]) for r in meta.pop("runs")]
    return WeightSchedule(weights, runs, TecConfig(**meta))

