"""Offline feature extractor emitting MVFB bundles for the engine."""

from .encoders import FRAME_COUNT, SAMPLE_RATE, TOKEN_CAP, build_encoders, load_lock
from .jobs import ExtractionJob, JobResult, jobs_from_manifest, run_batch, run_job

__all__ = [
    "FRAME_COUNT", "SAMPLE_RATE", "TOKEN_CAP",
    "build_encoders", "load_lock",
    "ExtractionJob", "JobResult", "jobs_from_manifest", "run_batch", "run_job",
]
