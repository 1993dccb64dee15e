"""Frame-level facial action timelines: TICC-based annotation, metrics and diffusion-side primitives."""

from .annotate import ClusterLabelMap, PipelineConfig, ThresholdRule, run_pipeline
from .errors import ConvergenceError, DataError, LabelsRequired, ValidationError
from .ingest import ClipSeries, Corpus, RegionChannelMap, concatenate_with_null, load_corpus
from .metrics import MetricsReport, fid, macro_f1, tas
from .synth import SynthConfig, synth_corpus
from .ticc import TiccConfig, TiccModel, assign_dp, fit, predict, solve_toeplitz_glasso
from .timeline import Action, AnnotationSequence, Interval, Region, Timeline, validate

__version__ = "0.1.0"

__all__ = [
    "Action", "AnnotationSequence", "ClipSeries", "ClusterLabelMap", "ConvergenceError", "Corpus", "DataError",
    "Interval", "LabelsRequired", "MetricsReport", "PipelineConfig", "Region", "RegionChannelMap", "SynthConfig",
    "ThresholdRule", "TiccConfig", "TiccModel", "Timeline", "ValidationError", "assign_dp", "concatenate_with_null",
    "fid", "fit", "load_corpus", "macro_f1", "predict", "run_pipeline", "solve_toeplitz_glasso", "synth_corpus",
    "tas", "validate",
]
