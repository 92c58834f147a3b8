"""Vectorized reinforcement learning with scope-partitioned multi-agent training."""

__version__ = "0.1.0"
