"""Temporal reliability and frame-level metrics for phase predictions.

All functions take array-likes (or :class:`~phasegate.core.LabelSequence`) of
0-based phase IDs. Values are returned on their natural scale (fractions,
Edit Score in ``[0, 100]``); percentage reporting is done by
:meth:`VideoMetrics.as_row`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import PhaseGateError, check_labels, check_same_length, compress_tokens, decompose_runs

FIELDS = ("acc", "pre", "rec", "jac", "edit", "tfi", "tfi_raw")


def _pair(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    pred = check_labels(pred)
    gt = check_labels(gt)
    check_same_length(pred, gt)
    return pred, gt


def tfi(pred, gt) -> float:
    """Temporal Fragmentation Index of one video.

    Sum over the predicted runs of each run's fraction of disagreeing
    frames, divided by the number of ground-truth runs. Lower is better;
    zero exactly when every predicted run is entirely correct.
    """
    pred, gt = _pair(pred, gt)
    wrong = (pred != gt).astype(np.float64)
    total = 0.0
    for run in decompose_runs(pred):
        total += wrong[run.start:run.end].sum() / run.length
    return total / len(decompose_runs(gt))


def levenshtein(a, b) -> int:
    """Unit-cost edit distance between two token sequences."""
    a, b = list(a), list(b)
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def edit_score(pred, gt) -> float:
    """Segmental Edit Score in ``[0, 100]``.

    Levenshtein distance between the compressed token strings, normalised
    by the longer token string.
    """
    p, g = compress_tokens(pred), compress_tokens(gt)
    score = 100.0 * (1.0 - levenshtein(p, g) / max(len(p), len(g)))
    return max(score, 0.0)


@dataclass(frozen=True)
class VideoMetrics:
    """Metrics for one video.

    Per-phase arrays have one entry per phase ID; phases that occur in
    neither prediction nor ground truth hold NaN and are skipped by the
    macro averages.
    """

    accuracy: float
    precision_per_phase: np.ndarray
    recall_per_phase: np.ndarray
    jaccard_per_phase: np.ndarray
    edit_score: float
    tfi: float

    @property
    def precision(self) -> float:
        return _nanmean(self.precision_per_phase)

    @property
    def recall(self) -> float:
        return _nanmean(self.recall_per_phase)

    @property
    def jaccard(self) -> float:
        return _nanmean(self.jaccard_per_phase)

    def as_row(self, raw_tfi: bool = False) -> dict[str, float]:
        return _row(self.accuracy, self.precision, self.recall, self.jaccard,
                    self.edit_score, self.tfi, raw_tfi)


def _nanmean(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    x = x[~np.isnan(x)]
    return float(x.mean()) if x.size else float("nan")


def _row(acc, pre, rec, jac, edit, tfi_raw, raw_tfi) -> dict[str, float]:
    return {
        "acc": 100.0 * acc,
        "pre": 100.0 * pre,
        "rec": 100.0 * rec,
        "jac": 100.0 * jac,
        "edit": edit,
        "tfi": tfi_raw if raw_tfi else 100.0 * tfi_raw,
        "tfi_raw": tfi_raw,
    }


def frame_metrics(pred, gt, n_phases: int | None = None) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Accuracy and per-phase precision, recall and Jaccard.

    Returns ``(accuracy, precision, recall, jaccard)`` where the last three
    are length-``n_phases`` arrays with NaN for phases absent from both
    sequences. A phase present in only one of the two sequences scores 0 on
    the ratio whose denominator would otherwise vanish.
    """
    pred, gt = _pair(pred, gt)
    n = n_phases if n_phases is not None else int(max(pred.max(), gt.max())) + 1
    if max(pred.max(), gt.max()) >= n:
        raise PhaseGateError(f"phase ID out of range for N={n}")
    accuracy = float(np.mean(pred == gt))

    precision = np.full(n, np.nan)
    recall = np.full(n, np.nan)
    jaccard = np.full(n, np.nan)
    for c in range(n):
        in_pred, in_gt = pred == c, gt == c
        if not (in_pred.any() or in_gt.any()):
            continue
        tp = np.sum(in_pred & in_gt)
        fp = np.sum(in_pred & ~in_gt)
        fn = np.sum(~in_pred & in_gt)
        precision[c] = tp / (tp + fp) if tp + fp else 0.0
        recall[c] = tp / (tp + fn) if tp + fn else 0.0
        jaccard[c] = tp / (tp + fp + fn)
    return accuracy, precision, recall, jaccard


def video_metrics(pred, gt, n_phases: int | None = None) -> VideoMetrics:
    acc, pre, rec, jac = frame_metrics(pred, gt, n_phases)
    return VideoMetrics(acc, pre, rec, jac, edit_score(pred, gt), tfi(pred, gt))


@dataclass(frozen=True)
class DatasetMetrics:
    per_video: list[VideoMetrics]

    def _mean(self, attr: str) -> float:
        return float(np.mean([getattr(v, attr) for v in self.per_video]))

    @property
    def accuracy(self) -> float:
        return self._mean("accuracy")

    @property
    def precision(self) -> float:
        return self._mean("precision")

    @property
    def recall(self) -> float:
        return self._mean("recall")

    @property
    def jaccard(self) -> float:
        return self._mean("jaccard")

    @property
    def edit_score(self) -> float:
        return self._mean("edit_score")

    @property
    def tfi(self) -> float:
        return self._mean("tfi")

    def aggregate_row(self, raw_tfi: bool = False) -> dict[str, float]:
        return _row(self.accuracy, self.precision, self.recall, self.jaccard,
                    self.edit_score, self.tfi, raw_tfi)


def dataset_aggregate(videos, n_phases: int | None = None) -> DatasetMetrics:
    """Evaluate ``[(pred, gt), ...]`` and average per-video scores."""
    videos = list(videos)
    if not videos:
        raise PhaseGateError("no videos to evaluate")
    per_video = []
    for i, (pred, gt) in enumerate(videos):
        try:
            per_video.append(video_metrics(pred, gt, n_phases))
        except PhaseGateError as exc:
            raise PhaseGateError(f"video {i}: {exc}") from exc
    return DatasetMetrics(per_video)
