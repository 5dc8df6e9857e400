"""Simulator and closed-form analytics for timely asynchronous hierarchical federated learning."""

from .config import LearningConfig, RunConfig, TimingConfig, TopologyConfig

__all__ = ["LearningConfig", "RunConfig", "TimingConfig", "TopologyConfig"]
__version__ = "0.1.0"
