"""Streaming anomaly detection with a graph-structured, self-maintaining model pool."""

from .detectors import ArchitectureSpec, ModelPool, builtin_arch_set
from .pipeline import PipelineConfig, RunReport, ablation_mode, individual_aucs, run
from .stream import LabeledStream, load_stream, synth_stream

__all__ = ["ArchitectureSpec", "LabeledStream", "ModelPool", "PipelineConfig", "RunReport",
           "ablation_mode", "builtin_arch_set", "individual_aucs", "load_stream", "run",
           "synth_stream"]
__version__ = "0.1.0"
