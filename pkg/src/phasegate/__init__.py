"""Evidence-gated smoothing, error-onset loss weights and fragmentation
metrics for online surgical phase recognition."""

from .core import LabelSequence, PhaseGateError, ProbStream, SegmentRun, compress_tokens, decompose_runs
from .egtp import EgtpConfig, EgtpState, EvidenceGatedSmoother, EvidenceTrace, init_state, smooth, smooth_argmax, step
from .metrics import DatasetMetrics, VideoMetrics, dataset_aggregate, edit_score, frame_metrics, tfi, video_metrics
from .sim import NoiseSpec, WorkflowSpec, generate, sweep
from .tec import ErrorRun, TecConfig, WeightSchedule, error_runs, export_weights, tec_loss, tec_weights

__version__ = "0.1.0"

__all__ = [
    "LabelSequence", "PhaseGateError", "ProbStream", "SegmentRun", "compress_tokens", "decompose_runs",
    "EgtpConfig", "EgtpState", "EvidenceGatedSmoother", "EvidenceTrace", "init_state", "smooth",
    "smooth_argmax", "step",
    "DatasetMetrics", "VideoMetrics", "dataset_aggregate", "edit_score", "frame_metrics", "tfi", "video_metrics",
    "NoiseSpec", "WorkflowSpec", "generate", "sweep",
    "ErrorRun", "TecConfig", "WeightSchedule", "error_runs", "export_weights", "tec_loss", "tec_weights",
]
