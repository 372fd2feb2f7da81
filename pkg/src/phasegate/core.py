"""Shared domain types and run decomposition.

Phase IDs are dense 0-based integers. Every algorithm is index based; the
frame rate travels along as metadata only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np

PROB_SUM_TOL = 1e-6


class PhaseGateError(ValueError):
    """Raised for invalid inputs (bad shapes, labels, probabilities)."""


class SegmentRun(NamedTuple):
    """A maximal constant run ``[start, end)`` carrying one phase."""

    start: int
    end: int
    phase: int

    @property
    def length(self) -> int:
        return self.end - self.start


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LabelSequence:
    """Per-frame phase IDs for one video.

    ``phase_names`` is the dense label table (index = phase ID) produced at
    ingestion; it is optional for sequences built in memory.
    """

    labels: np.ndarray
    n_phases: int | None = None
    frame_rate_hz: float = 1.0
    phase_names: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        labels = check_labels(self.labels, self.n_phases)
        object.__setattr__(self, "labels", _frozen(labels))
        if self.frame_rate_hz <= 0:
            raise PhaseGateError("frame_rate_hz must be positive")
        if self.n_phases is None:
            n = len(self.phase_names) if self.phase_names else int(labels.max()) + 1
            object.__setattr__(self, "n_phases", n)

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self) -> Iterator[int]:
        return iter(int(v) for v in self.labels)

    def __array__(self, dtype=None, copy=None):
        return self.labels if dtype is None else self.labels.astype(dtype)


@dataclass(frozen=True)
class ProbStream:
    """Per-frame probability vectors, shape ``(T, N)``."""

    probs: np.ndarray
    frame_rate_hz: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "probs", _frozen(check_probs(self.probs)))

    @property
    def n_phases(self) -> int:
        return self.probs.shape[1]

    def __len__(self) -> int:
        return self.probs.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.probs if dtype is None else self.probs.astype(dtype)


def check_labels(labels, n_phases: int | None = None) -> np.ndarray:
    """Validate a label sequence and return it as a 1-D int64 array."""
    if isinstance(labels, LabelSequence):
        labels = labels.labels
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise PhaseGateError(f"labels must be 1-D, got shape {arr.shape}")
    if arr.size == 0:
        raise PhaseGateError("empty sequence")
    if not np.issubdtype(arr.dtype, np.integer):
        if np.issubdtype(arr.dtype, np.floating) and np.all(np.mod(arr, 1) == 0):
            arr = arr.astype(np.int64)
        else:
            raise PhaseGateError(f"labels must be integer phase IDs, got dtype {arr.dtype}")
    arr = arr.astype(np.int64, copy=False)
    if arr.min() < 0:
        raise PhaseGateError("phase IDs must be non-negative")
    if n_phases is not None and arr.max() >= n_phases:
        raise PhaseGateError(f"phase ID {int(arr.max())} out of range for N={n_phases}")
    return arr


def check_probs(probs, tol: float = PROB_SUM_TOL) -> np.ndarray:
    """Validate a ``(T, N)`` probability array; rows must sum to 1 within ``tol``."""
    if isinstance(probs, ProbStream):
        return probs.probs
    arr = np.asarray(probs, dtype=np.float64)
    if arr.ndim != 2:
        raise PhaseGateError(f"probabilities must be 2-D (T, N), got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise PhaseGateError("empty sequence")
    if arr.shape[1] < 1:
        raise PhaseGateError("need at least one phase")
    if np.isnan(arr).any():
        t = int(np.argwhere(np.isnan(arr))[0, 0])
        raise PhaseGateError(f"NaN probability at frame {t}")
    if (arr < 0).any() or (arr > 1).any():
        t = int(np.argwhere((arr < 0) | (arr > 1))[0, 0])
        raise PhaseGateError(f"probability outside [0, 1] at frame {t}")
    dev = np.abs(arr.sum(axis=1) - 1.0)
    if (dev > tol).any():
        t = int(np.argmax(dev > tol))
        raise PhaseGateError(f"probabilities at frame {t} sum to {arr[t].sum():.6g}, not 1")
    return arr


def check_same_length(pred: np.ndarray, gt: np.ndarray) -> None:
    if len(pred) != len(gt):
        raise PhaseGateError(f"sequence length mismatch: {len(pred)} != {len(gt)}")


def decompose_runs(labels) -> list[SegmentRun]:
    """Split a label sequence into maximal constant runs tiling ``[0, T)``.

    >>> decompose_runs([0, 0, 1, 1, 1, 2])
    [SegmentRun(start=0, end=2, phase=0), SegmentRun(start=2, end=5, phase=1), SegmentRun(start=5, end=6, phase=2)]
    """
    arr = check_labels(labels)
    cuts = np.flatnonzero(arr[1:] != arr[:-1]) + 1
    starts = np.concatenate(([0], cuts))
    ends = np.concatenate((cuts, [len(arr)]))
    return [SegmentRun(int(s), int(e), int(arr[s])) for s, e in zip(starts, ends)]


def compress_tokens(labels) -> list[int]:
    """Ordered phase tokens of the maximal runs (no two neighbours equal)."""
    return [run.phase for run in decompose_runs(labels)]


def expand_runs(runs: Sequence[SegmentRun]) -> np.ndarray:
    """Inverse of :func:`decompose_runs`."""
    return np.concatenate([np.full(r.length, r.phase, dtype=np.int64) for r in runs])


def argmax_lowest(probs: np.ndarray) -> np.ndarray:
    """Row-wise argmax; ties resolve to the lowest phase ID (numpy's rule)."""
    return np.argmax(probs, axis=-1)
