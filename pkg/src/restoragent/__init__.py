"""Agentic image restoration with quality-driven tool selection, a
self-evolving insight bank, and a GRPO-trained toy task policy."""

from .core import (
    DegradationReport,
    Detection,
    ExecutionHistory,
    ImageBuf,
    RestorationTask,
    ToolDescriptor,
    load_image,
    save_image,
)
from .iqa import QualityVector, aggregate_quality, evaluate_quality

__all__ = [
    "DegradationReport",
    "Detection",
    "ExecutionHistory",
    "ImageBuf",
    "QualityVector",
    "RestorationTask",
    "ToolDescriptor",
    "aggregate_quality",
    "evaluate_quality",
    "load_image",
    "save_image",
]

__version__ = "0.1.0"
