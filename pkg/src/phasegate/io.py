"""Reading and writing label files, probability logs, traces and metrics.

Formats
-------
Label file
    One label per line, optional header line (``label``, ``labels``,
    ``phase``, ``pred`` or ``gt``). Labels are either all integers (taken
    as phase IDs directly) or all strings (mapped to dense IDs in order of
    first appearance unless a dictionary is given).
Probability log
    CSV with header ``p0,...,p{N-1}`` and one row per frame, or JSON lines
    ``{"t": int, "probs": [...]}`` with consecutive, increasing ``t``.
    Rows within 1e-3 of summing to one are renormalised; anything else is
    rejected with its row number.
"""

from __future__ import annotations

import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .core import LabelSequence, PhaseGateError, ProbStream
from .egtp import EvidenceTrace
from .metrics import FIELDS, DatasetMetrics

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

INGEST_TOL = 1e-3
HEADER_TOKENS = {"label", "labels", "phase", "pred", "gt"}

METRICS_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["scale", "videos", "aggregate"],
    "properties": {
        "scale": {
            "type": "object",
            "required": ["acc", "tfi"],
            "properties": {"acc": {"const": "percent"}, "tfi": {"enum": ["percent", "raw"]}},
        },
        "videos": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["video", *FIELDS],
                "properties": {"video": {"type": "string"},
                               **{f: {"type": ["number", "null"]} for f in FIELDS}},
            },
        },
        "aggregate": {
            "type": "object",
            "required": list(FIELDS),
            "properties": {f: {"type": ["number", "null"]} for f in FIELDS},
        },
    },
}


def _read_lines(path) -> list[str]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise PhaseGateError(f"{path}: {exc.strerror or exc}") from exc
    return [line.strip() for line in text.splitlines() if line.strip()]


def _is_int(s: str) -> bool:
    try:
        int(s)
    except ValueError:
        return False
    return True


def read_labels(path, dictionary=None, strict: bool = True, header: bool | None = None) -> LabelSequence:
    """Parse a label file.

    ``dictionary`` maps label names to phase IDs. With ``strict`` an unknown
    label is an error; otherwise unknown labels get the next free IDs (this
    is how a prediction file is read against the ground truth's table).
    """
    lines = _read_lines(path)
    if header is None:
        header = bool(lines) and lines[0].lower() in HEADER_TOKENS
    if header:
        lines = lines[1:]
    if not lines:
        raise PhaseGateError(f"{path}: empty sequence")

    ints = [_is_int(s) for s in lines]
    if dictionary is None and all(ints):
        ids = [int(s) for s in lines]
        if min(ids) < 0:
            raise PhaseGateError(f"{path}: negative phase ID")
        names = tuple(str(i) for i in range(max(ids) + 1))
        return LabelSequence(np.array(ids), n_phases=len(names), phase_names=names)
    if dictionary is None and any(ints):
        row = ints.index(not ints[0]) + 1 + int(header)
        raise PhaseGateError(f"{path}: mixed integer and string labels (line {row})")

    table = dict(dictionary or {})
    if sorted(table.values()) != list(range(len(table))):
        raise PhaseGateError("dictionary must map names to dense IDs 0..N-1")
    ids = []
    for i, name in enumerate(lines):
        if name not in table:
            if strict and dictionary is not None:
                raise PhaseGateError(f"{path}: unknown label {name!r} at line {i + 1 + int(header)}")
            table[name] = len(table)
        ids.append(table[name])
    names = tuple(sorted(table, key=table.get))
    return LabelSequence(np.array(ids), n_phases=len(names), phase_names=names)


def read_dictionary(path) -> dict[str, int]:
    """One phase name per line; line order defines the IDs."""
    names = _read_lines(path)
    if len(set(names)) != len(names):
        raise PhaseGateError(f"{path}: duplicate phase names")
    return {name: i for i, name in enumerate(names)}


def write_labels(seq, path, table=None) -> Path:
    """Write one label per line under a ``label`` header.

    ``table`` is a sequence of names indexed by phase ID (defaults to the
    sequence's own table, else integer IDs).
    """
    path = Path(path)
    labels = np.asarray(seq.labels if isinstance(seq, LabelSequence) else seq)
    if table is None and isinstance(seq, LabelSequence):
        table = seq.phase_names
    names = [str(table[i]) for i in labels] if table is not None else [str(int(i)) for i in labels]
    _write_text(path, "label\n" + "".join(n + "\n" for n in names))
    return path


def _write_text(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise PhaseGateError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _softmax(rows: np.ndarray) -> np.ndarray:
    z = rows - rows.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _finish_probs(rows: list[list[float]], path, logits: bool, first_row: int) -> ProbStream:
    if not rows:
        raise PhaseGateError(f"{path}: empty sequence")
    arr = np.array(rows, dtype=np.float64)
    if not np.isfinite(arr).all():
        r = int(np.argwhere(~np.isfinite(arr))[0, 0])
        raise PhaseGateError(f"{path}: non-finite value in row {r + first_row}")
    if logits:
        return ProbStream(_softmax(arr))
    for r, row in enumerate(arr):
        if (row < 0).any() or (row > 1 + INGEST_TOL).any():
            raise PhaseGateError(f"{path}: row {r + first_row} has a value outside [0, 1]")
        s = row.sum()
        if abs(s - 1.0) > INGEST_TOL:
            raise PhaseGateError(f"{path}: row {r + first_row} sums to {s:.6g}, not 1 (tolerance {INGEST_TOL})")
    arr = arr / arr.sum(axis=1, keepdims=True)
    return ProbStream(np.clip(arr, 0.0, 1.0))


def read_probs(path, logits: bool = False) -> ProbStream:
    """Read a probability (or, with ``logits``, logit) log from CSV or JSONL."""
    path = Path(path)
    lines = _read_lines(path)
    if not lines:
        raise PhaseGateError(f"{path}: empty sequence")
    if lines[0].startswith("{"):
        return _read_jsonl(path, lines, logits)

    header = [h.strip() for h in lines[0].split(",")]
    expected = [f"p{i}" for i in range(len(header))]
    if header != expected:
        raise PhaseGateError(f"{path}: header must be {','.join(expected)}, got {lines[0]!r}")
    rows = []
    for r, line in enumerate(csv.reader(lines[1:]), start=1):
        if len(line) != len(header):
            raise PhaseGateError(f"{path}: row {r} has {len(line)} values, expected {len(header)}")
        try:
            rows.append([float(v) for v in line])
        except ValueError as exc:
            raise PhaseGateError(f"{path}: row {r}: {exc}") from exc
    return _finish_probs(rows, path, logits, first_row=1)


def _read_jsonl(path: Path, lines: list[str], logits: bool) -> ProbStream:
    rows, last_t, width = [], None, None
    for r, line in enumerate(lines, start=1):
        try:
            rec = json.loads(line)
            t, probs = int(rec["t"]), [float(v) for v in rec["probs"]]
        except (ValueError, KeyError, TypeError) as exc:
            raise PhaseGateError(f"{path}: line {r}: malformed record ({exc})") from exc
        if last_t is not None and t != last_t + 1:
            kind = "non-monotone" if t <= last_t else "gap in"
            raise PhaseGateError(f"{path}: line {r}: {kind} frame index t={t} after t={last_t}")
        if width is not None and len(probs) != width:
            raise PhaseGateError(f"{path}: line {r} has {len(probs)} values, expected {width}")
        last_t, width = t, len(probs)
        rows.append(probs)
    return _finish_probs(rows, path, logits, first_row=1)


def write_probs(stream, path, fmt: str | None = None) -> Path:
    """Write a probability log; ``fmt`` is ``csv`` or ``jsonl`` (default from suffix)."""
    path = Path(path)
    probs = np.asarray(stream.probs if isinstance(stream, ProbStream) else stream)
    fmt = fmt or ("jsonl" if path.suffix in (".jsonl", ".json") else "csv")
    if fmt == "jsonl":
        text = "".join(json.dumps({"t": t, "probs": row.tolist()}) + "\n" for t, row in enumerate(probs))
    else:
        header = ",".join(f"p{i}" for i in range(probs.shape[1]))
        text = header + "\n" + "".join(",".join(repr(float(v)) for v in row) + "\n" for row in probs)
    _write_text(path, text)
    return path


def write_trace(trace: EvidenceTrace, path) -> Path:
    """Evidence trace CSV: ``t,current,transition,E_0..E_{N-1},Z_0..Z_{N-1}``."""
    path = Path(path)
    n = trace.evidence.shape[1]
    header = ["t", "current", "transition"] + [f"E_{c}" for c in range(n)] + [f"Z_{c}" for c in range(n)]
    lines = [",".join(header)]
    for t in range(len(trace)):
        vals = [str(int(trace.t[t])), str(int(trace.current[t])), str(int(trace.transition[t]))]
        vals += [repr(float(v)) for v in trace.evidence[t]]
        vals += [repr(float(v)) for v in trace.z[t]]
        lines.append(",".join(vals))
    _write_text(path, "\n".join(lines) + "\n")
    return path


def read_trace(path) -> EvidenceTrace:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    n = sum(1 for k in rows[0] if k.startswith("E_"))
    return EvidenceTrace(
        current=np.array([int(r["current"]) for r in rows]),
        transition=np.array([r["transition"] == "1" for r in rows]),
        evidence=np.array([[float(r[f"E_{c}"]) for c in range(n)] for r in rows]),
        z=np.array([[float(r[f"Z_{c}"]) for c in range(n)] for r in rows]),
        t=np.array([int(r["t"]) for r in rows]),
    )


def _clean(v: float):
    return None if isinstance(v, float) and math.isnan(v) else v


def metrics_document(metrics: DatasetMetrics, names=None, raw_tfi: bool = False) -> dict:
    names = names or [f"video{i}" for i in range(len(metrics.per_video))]
    return {
        "scale": {"acc": "percent", "tfi": "raw" if raw_tfi else "percent"},
        "videos": [{"video": str(name), **{k: _clean(v) for k, v in vm.as_row(raw_tfi).items()}}
                   for name, vm in zip(names, metrics.per_video)],
        "aggregate": {k: _clean(v) for k, v in metrics.aggregate_row(raw_tfi).items()},
    }


def write_metrics(metrics: DatasetMetrics, csv_path=None, json_path=None, names=None,
                  raw_tfi: bool = False) -> dict:
    """Write per-video rows plus a final ``mean`` row (CSV) and/or the JSON document.

    ``acc``, ``pre``, ``rec``, ``jac`` are percentages; ``edit`` is on
    ``[0, 100]``; ``tfi`` is x100 unless ``raw_tfi``; ``tfi_raw`` is always raw.
    """
    doc = metrics_document(metrics, names, raw_tfi)
    if csv_path is not None:
        rows = [",".join(("video",) + FIELDS)]
        for rec in doc["videos"] + [{"video": "mean", **doc["aggregate"]}]:
            rows.append(",".join([rec["video"]] + ["" if rec[f] is None else repr(float(rec[f])) for f in FIELDS]))
        _write_text(Path(csv_path), "\n".join(rows) + "\n")
    if json_path is not None:
        _write_text(Path(json_path), json.dumps(doc, indent=2) + "\n")
    return doc


def read_metrics_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return [{k: (v if k == "video" else (float(v) if v else None)) for k, v in row.items()}
                for row in csv.DictReader(fh)]


def read_manifest(path) -> list[tuple[Path, Path]]:
    """CSV of ``pred,gt`` path pairs (header required); relative paths resolve
    against the manifest's directory."""
    path = Path(path)
    base = path.parent
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"pred", "gt"} <= set(reader.fieldnames):
            raise PhaseGateError(f"{path}: manifest needs a 'pred,gt' header")
        pairs = []
        for i, row in enumerate(reader, start=2):
            if not row["pred"] or not row["gt"]:
                raise PhaseGateError(f"{path}: line {i}: missing pred or gt path")
            pairs.append((base / row["pred"].strip(), base / row["gt"].strip()))
    if not pairs:
        raise PhaseGateError(f"{path}: manifest lists no videos")
    return pairs


def read_config(path) -> dict:
    """TOML config; returns ``{subcommand: {param_name: value}}`` with dashes
    in keys mapped to underscores so keys can mirror the CLI flags."""
    with Path(path).open("rb") as fh:
        data = tomllib.load(fh)
    out = {}
    for section, values in data.items():
        if not isinstance(values, dict):
            raise PhaseGateError(f"{path}: top-level key {section!r} must be a [subcommand] table")
        out[section] = {k.replace("-", "_"): v for k, v in values.items()}
    return out
