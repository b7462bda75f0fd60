"""Task-agnostic, post-hoc out-of-distribution scoring."""

__version__ = "0.1.0"
