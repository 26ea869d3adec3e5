"""Hybrid content + collaborative hashtag recommendation for micro-videos."""

__version__ = "0.1.0"
