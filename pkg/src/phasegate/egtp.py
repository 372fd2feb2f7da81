"""Evidence-gated transition smoothing of per-frame phase probabilities.

The smoother holds a current phase and, for every other candidate phase,
accumulates log-likelihood evidence against the current phase with a
one-sided (clipped at zero) update. Accumulated evidence is normalised by
``sqrt(n) * std`` of the evidence increments seen so far; the phase only
switches when the best candidate's normalised evidence exceeds ``k``.
After a switch every accumulator is reset.

The ``"e_const"`` variant drops the normalisation and gates the raw
accumulated evidence against ``k``.

Everything is causal: the output at frame ``t`` only depends on frames
``0..t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .core import PhaseGateError, ProbStream, argmax_lowest, check_probs

VARIANTS = ("normalized", "e_const")
STAT_SOURCES = ("delta", "evidence")


@dataclass(frozen=True)
class EgtpConfig:
    """Smoother parameters.

    ``stat_source`` selects what the running count/std track: the raw
    per-frame increments (``"delta"``, default) or the accumulated evidence
    values after clipping (``"evidence"``).
    """

    k: float = 0.4
    variant: str = "normalized"
    prob_floor: float = 1e-12
    sigma_floor: float = 1e-6
    min_count: int = 2
    stat_source: str = "delta"

    def __post_init__(self):
        variant = self.variant.replace("-", "_")
        object.__setattr__(self, "variant", variant)
        if variant not in VARIANTS:
            raise PhaseGateError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.stat_source not in STAT_SOURCES:
            raise PhaseGateError(f"unknown stat_source {self.stat_source!r}")
        if not self.k > 0:
            raise PhaseGateError(f"k must be > 0, got {self.k}")
        if not (self.prob_floor > 0 and self.sigma_floor > 0):
            raise PhaseGateError("prob_floor and sigma_floor must be > 0")
        if int(self.min_count) != self.min_count or self.min_count < 1:
            raise PhaseGateError(f"min_count must be a positive integer, got {self.min_count}")


@dataclass
class EgtpState:
    """Mutable per-stream state. Never share one instance between streams."""

    current: int
    evidence: list[float]
    count: list[int]
    mean: list[float]
    m2: list[float]
    t: int = 0

    @classmethod
    def zeros(cls, current: int, n_phases: int) -> "EgtpState":
        return cls(current, [0.0] * n_phases, [0] * n_phases, [0.0] * n_phases, [0.0] * n_phases)

    @property
    def n_phases(self) -> int:
        return len(self.evidence)

    def reset(self) -> None:
        n = self.n_phases
        self.evidence = [0.0] * n
        self.count = [0] * n
        self.mean = [0.0] * n
        self.m2 = [0.0] * n

    def push(self, c: int, x: float) -> None:
        # Welford update of candidate c's running mean / M2
        n = self.count[c] + 1
        d = x - self.mean[c]
        self.mean[c] += d / n
        self.m2[c] += d * (x - self.mean[c])
        self.count[c] = n

    def std(self, c: int) -> float:
        n = self.count[c]
        return math.sqrt(max(self.m2[c], 0.0) / (n - 1)) if n > 1 else 0.0

    def normalized(self, c: int, config: EgtpConfig) -> float:
        n = self.count[c]
        s = self.std(c)
        if n < config.min_count or s <= config.sigma_floor:
            return 0.0
        return self.evidence[c] / (math.sqrt(n) * s)


@dataclass(frozen=True)
class StepResult:
    """Outcome of one frame: ``evidence`` and ``z`` are taken before any reset."""

    phase: int
    evidence: tuple[float, ...]
    z: tuple[float, ...]
    transition: bool


@dataclass(frozen=True)
class EvidenceTrace:
    """Per-frame record of the smoother, shape ``(T, N)`` for evidence and z."""

    current: np.ndarray
    transition: np.ndarray
    evidence: np.ndarray
    z: np.ndarray
    t: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.t is None:
            object.__setattr__(self, "t", np.arange(len(self.current)))

    def __len__(self) -> int:
        return len(self.current)


def _check_frame(frame, n_phases: int | None = None) -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 1:
        raise PhaseGateError(f"frame must be 1-D, got shape {frame.shape}")
    if n_phases is not None and frame.shape[0] != n_phases:
        raise PhaseGateError(f"frame has {frame.shape[0]} phases, state has {n_phases}")
    check_probs(frame[None, :])
    return frame


def init_state(first_frame, config: EgtpConfig | None = None) -> EgtpState:
    """Start a stream: current phase is the first frame's argmax (ties to lowest ID)."""
    frame = _check_frame(first_frame)
    return EgtpState.zeros(int(argmax_lowest(frame)), frame.shape[0])


def _log_frame(frame: np.ndarray, config: EgtpConfig) -> list[float]:
    return np.log(np.clip(frame, config.prob_floor, 1.0)).tolist()


def _advance(state: EgtpState, logp: list[float], config: EgtpConfig) -> StepResult:
    cur = state.current
    base = logp[cur]
    by_evidence = config.stat_source == "evidence"
    candidates = [c for c in range(state.n_phases) if c != cur]
    for c in candidates:
        delta = logp[c] - base
        e = state.evidence[c] + delta
        state.evidence[c] = e if e > 0.0 else 0.0
        state.push(c, state.evidence[c] if by_evidence else delta)

    z = [0.0] * state.n_phases
    for c in candidates:
        z[c] = state.normalized(c, config)
    gate = state.evidence if config.variant == "e_const" else z

    best = None
    for c in candidates:
        if best is None or gate[c] > gate[best]:
            best = c
    evidence = tuple(state.evidence)
    state.t += 1
    if best is not None and gate[best] > config.k:
        state.current = best
        state.reset()
        return StepResult(best, evidence, tuple(z), True)
    return StepResult(cur, evidence, tuple(z), False)


def step(state: EgtpState, frame, config: EgtpConfig | None = None) -> tuple[int, EgtpState]:
    """Consume one probability frame; updates ``state`` in place and returns it."""
    config = config or EgtpConfig()
    frame = _check_frame(frame, state.n_phases)
    result = _advance(state, _log_frame(frame, config), config)
    return result.phase, state


def smooth(stream, config: EgtpConfig | None = None) -> tuple[np.ndarray, EvidenceTrace]:
    """Run the smoother over a whole ``(T, N)`` stream.

    Returns the stabilised labels and the per-frame evidence trace. Frame 0
    only initialises the state, so its trace row is all zeros.
    """
    config = config or EgtpConfig()
    probs = check_probs(stream)
    T, n = probs.shape
    logs = np.log(np.clip(probs, config.prob_floor, 1.0)).tolist()

    state = init_state(probs[0], config)
    labels = np.empty(T, dtype=np.int64)
    transition = np.zeros(T, dtype=bool)
    evidence = np.zeros((T, n))
    z = np.zeros((T, n))
    labels[0] = state.current
    for t in range(1, T):
        res = _advance(state, logs[t], config)
        labels[t] = res.phase
        transition[t] = res.transition
        evidence[t] = res.evidence
        z[t] = res.z
    return labels, EvidenceTrace(labels.copy(), transition, evidence, z)


def smooth_argmax(stream) -> np.ndarray:
    """Memoryless baseline: per-frame argmax, ties to the lowest phase ID."""
    return argmax_lowest(check_probs(stream))


class EvidenceGatedSmoother(BaseEstimator):
    """Estimator wrapper around :func:`smooth`.

    The smoother has nothing to learn; ``fit`` only validates parameters and
    records the number of phases so that later streams can be checked.

    Parameters
    ----------
    k : float
        Transition threshold on normalised (or raw, for ``"e_const"``) evidence.
    variant : {"normalized", "e_const"}
    prob_floor, sigma_floor : float
        Clamp applied before logs, and minimum std for a candidate to be gated.
    min_count : int
        Samples a candidate needs since the last reset before it may win.
    stat_source : {"delta", "evidence"}
    """

    def __init__(self, k=0.4, variant="normalized", prob_floor=1e-12, sigma_floor=1e-6,
                 min_count=2, stat_source="delta"):
        self.k = k
        self.variant = variant
        self.prob_floor = prob_floor
        self.sigma_floor = sigma_floor
        self.min_count = min_count
        self.stat_source = stat_source

    def config(self) -> EgtpConfig:
        return EgtpConfig(**self.get_params())

    def fit(self, X=None, y=None):
        self.config_ = self.config()
        if X is not None:
            self.n_phases_in_ = self._check_X(X).shape[1]
        return self

    def _check_X(self, X) -> np.ndarray:
        probs = check_probs(X.probs if isinstance(X, ProbStream) else X)
        n = getattr(self, "n_phases_in_", None)
        if n is not None and probs.shape[1] != n:
            raise PhaseGateError(f"X has {probs.shape[1]} phases, fitted with {n}")
        return probs

    def predict(self, X) -> np.ndarray:
        return self.predict_trace(X)[0]

    def predict_trace(self, X) -> tuple[np.ndarray, EvidenceTrace]:
        return smooth(self._check_X(X), self.config())

    def score(self, X, y) -> float:
        """Frame accuracy of the smoothed labels against ``y``."""
        pred = self.predict(X)
        y = np.asarray(y)
        if len(y) != len(pred):
            raise PhaseGateError(f"sequence length mismatch: {len(pred)} != {len(y)}")
        return float(np.mean(pred == y))
