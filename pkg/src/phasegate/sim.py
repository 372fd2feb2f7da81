"""Synthetic surgical-workflow streams and threshold sweeps.

Randomness comes from numpy's ``Generator(PCG64(seed))`` only, drawn in a
fixed order, so a ``(WorkflowSpec, NoiseSpec)`` pair always produces the
same arrays. Golden files in the test suite were produced with numpy 2.2.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import PhaseGateError
from .egtp import EgtpConfig, smooth, smooth_argmax
from .metrics import edit_score, tfi


@dataclass(frozen=True)
class WorkflowSpec:
    """Ground-truth workflow.

    ``durations`` is either one ``(min, max)`` pair used for every phase or
    one pair per entry of ``phase_order``. With ``revisit_prob > 0`` each
    phase (but the last) may be followed by a short return to the previous
    phase, which gives the smoother legitimate backward transitions.
    """

    n_phases: int = 7
    phase_order: tuple[int, ...] | None = None
    durations: tuple = (100, 400)
    seed: int = 0
    revisit_prob: float = 0.0

    def __post_init__(self):
        if self.n_phases < 1:
            raise PhaseGateError("n_phases must be >= 1")
        order = tuple(range(self.n_phases)) if self.phase_order is None else tuple(self.phase_order)
        if not order:
            raise PhaseGateError("phase_order must be non-empty")
        if min(order) < 0 or max(order) >= self.n_phases:
            raise PhaseGateError("phase_order contains an ID outside [0, n_phases)")
        object.__setattr__(self, "phase_order", order)
        for lo, hi in self.duration_ranges():
            if not 1 <= lo <= hi:
                raise PhaseGateError(f"invalid duration range ({lo}, {hi})")
        if not 0.0 <= self.revisit_prob <= 1.0:
            raise PhaseGateError("revisit_prob must be in [0, 1]")

    def duration_ranges(self) -> list[tuple[int, int]]:
        d = self.durations
        if len(d) == 2 and np.isscalar(d[0]):
            return [(int(d[0]), int(d[1]))] * len(self.phase_order)
        if len(d) != len(self.phase_order):
            raise PhaseGateError("need one duration range per phase_order entry")
        return [(int(lo), int(hi)) for lo, hi in d]


@dataclass(frozen=True)
class NoiseSpec:
    """Shape of the synthetic classifier output.

    The true phase carries ``base_confidence``; the rest of the mass is a
    Dirichlet draw with total ``concentration`` (small values give spiky,
    low-entropy perturbations). Around each true boundary the target
    cross-fades linearly over ``boundary_width`` frames. Flicker events
    start with probability ``flicker_rate`` per frame, last
    ``1..flicker_length`` frames and move ``flicker_strength`` of the mass
    onto one random wrong phase. Finally ``temperature`` rescales every
    log-probability by ``1 / temperature`` (below 1 means overconfident).
    """

    base_confidence: float = 0.8
    boundary_width: int = 10
    flicker_rate: float = 0.01
    flicker_strength: float = 0.6
    flicker_length: int = 25
    concentration: float = 5.0
    temperature: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.base_confidence <= 1.0:
            raise PhaseGateError("base_confidence must be in (0, 1]")
        if self.boundary_width < 0:
            raise PhaseGateError("boundary_width must be >= 0")
        if not 0.0 <= self.flicker_rate <= 1.0:
            raise PhaseGateError("flicker_rate must be in [0, 1]")
        if not 0.0 <= self.flicker_strength <= 1.0:
            raise PhaseGateError("flicker_strength must be in [0, 1]")
        if self.flicker_length < 1:
            raise PhaseGateError("flicker_length must be >= 1")
        if not self.concentration > 0:
            raise PhaseGateError("concentration must be > 0")
        if not self.temperature > 0:
            raise PhaseGateError("temperature must be > 0")


def _ground_truth(spec: WorkflowSpec, rng: np.random.Generator) -> np.ndarray:
    segments = []
    ranges = spec.duration_ranges()
    for i, (phase, (lo, hi)) in enumerate(zip(spec.phase_order, ranges)):
        segments.append(np.full(int(rng.integers(lo, hi + 1)), phase))
        if spec.revisit_prob and i + 1 < len(spec.phase_order) and i > 0:
            if rng.random() < spec.revisit_prob:
                prev_lo, prev_hi = ranges[i - 1]
                length = int(rng.integers(max(1, prev_lo // 4), max(1, prev_hi // 4) + 1))
                segments.append(np.full(length, spec.phase_order[i - 1]))
                segments.append(np.full(int(rng.integers(lo, hi + 1)) // 2 + 1, phase))
    return np.concatenate(segments).astype(np.int64)


def _targets(gt: np.ndarray, n: int, width: int) -> np.ndarray:
    T = len(gt)
    target = np.zeros((T, n))
    target[np.arange(T), gt] = 1.0
    if width <= 0:
        return target
    for b in np.flatnonzero(gt[1:] != gt[:-1]) + 1:
        prev, nxt = gt[b - 1], gt[b]
        lo, hi = max(0, b - width // 2), min(T, b - width // 2 + width)
        for t in range(lo, hi):
            # only fade inside the two segments adjacent to this boundary
            if gt[t] not in (prev, nxt):
                continue
            lam = (t - (b - width / 2) + 0.5) / width
            target[t] = 0.0
            target[t, prev] += 1.0 - lam
            target[t, nxt] += lam
    return target


def generate(spec: WorkflowSpec, noise: NoiseSpec | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(gt_labels, probs)`` for one synthetic video."""
    noise = noise or NoiseSpec()
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    n = spec.n_phases
    gt = _ground_truth(spec, rng)
    T = len(gt)

    target = _targets(gt, n, noise.boundary_width)
    g = rng.standard_gamma(noise.concentration / n, size=(T, n))
    tot = g.sum(axis=1, keepdims=True)
    perturb = np.where(tot > 0, g / np.where(tot > 0, tot, 1.0), 1.0 / n)
    probs = noise.base_confidence * target + (1.0 - noise.base_confidence) * perturb

    starts = rng.random(T) < noise.flicker_rate
    lengths = rng.integers(1, noise.flicker_length + 1, size=T)
    offsets = rng.integers(1, max(n, 2), size=T)
    if n > 1:
        for t in np.flatnonzero(starts):
            wrong = (gt[t] + offsets[t]) % n
            sl = slice(t, min(T, t + lengths[t]))
            probs[sl] *= 1.0 - noise.flicker_strength
            probs[sl, wrong] += noise.flicker_strength

    if noise.temperature != 1.0:
        with np.errstate(divide="ignore"):
            logp = np.log(probs) / noise.temperature
        logp -= logp.max(axis=1, keepdims=True)
        probs = np.exp(logp)
    probs /= probs.sum(axis=1, keepdims=True)
    return gt, probs


@dataclass(frozen=True)
class SweepRow:
    k: float
    acc: float
    tfi: float
    edit: float


@dataclass
class SweepResult:
    rows: list[SweepRow]
    baseline: SweepRow
    details: list[dict] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def best_k(self, metric: str = "acc") -> float:
        """Threshold with the highest mean ``metric``; ties go to the smaller k."""
        values = self.column(metric)
        return self.rows[int(np.argmax(values))].k


def ensemble(spec: WorkflowSpec, noise: NoiseSpec, n_seeds: int):
    """Yield ``(seed, gt, probs)`` for seeds ``spec.seed .. spec.seed + n_seeds - 1``."""
    for i in range(n_seeds):
        seed = spec.seed + i
        gt, probs = generate(replace(spec, seed=seed), noise)
        yield seed, gt, probs


def sweep(spec: WorkflowSpec, noise: NoiseSpec, k_grid: Sequence[float],
          config: EgtpConfig | None = None, n_seeds: int = 50) -> SweepResult:
    """Mean accuracy / TFI / Edit of the smoother for every ``k`` in the grid.

    TFI is reported raw (not x100); accuracy as a fraction.
    """
    if len(k_grid) == 0:
        raise PhaseGateError("k_grid must be non-empty")
    if n_seeds < 1:
        raise PhaseGateError("need at least one seed")
    config = config or EgtpConfig()
    grid = sorted(float(k) for k in k_grid)
    sums = np.zeros((len(grid), 3))
    base = np.zeros(3)
    details = []
    for seed, gt, probs in ensemble(spec, noise, n_seeds):
        raw = smooth_argmax(probs)
        b = (float(np.mean(raw == gt)), tfi(raw, gt), edit_score(raw, gt))
        base += b
        details.append({"seed": seed, "k": None, "acc": b[0], "tfi": b[1], "edit": b[2]})
        for j, k in enumerate(grid):
            pred, _ = smooth(probs, replace(config, k=k))
            m = (float(np.mean(pred == gt)), tfi(pred, gt), edit_score(pred, gt))
            sums[j] += m
            details.append({"seed": seed, "k": k, "acc": m[0], "tfi": m[1], "edit": m[2]})
    means = sums / n_seeds
    rows = [SweepRow(k, *map(float, row)) for k, row in zip(grid, means)]
    return SweepResult(rows, SweepRow(float("nan"), *map(float, base / n_seeds)), details)


def spec_to_dict(spec: WorkflowSpec, noise: NoiseSpec) -> dict:
    return {"workflow": asdict(spec), "noise": asdict(noise)}
