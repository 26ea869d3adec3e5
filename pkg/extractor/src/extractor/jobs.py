"""Extraction jobs: one raw micro-video in, one MVFB bundle out."""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bundle, encoders as enc_mod, media, tokenizer
from .encoders import Encoders, FRAME_COUNT, SAMPLE_RATE, TOKEN_CAP
from .errors import ConfigError, MediaError

log = logging.getLogger(__name__)


@dataclass
class ExtractionJob:
    video_id: str
    video_path: str
    audio_path: str | None
    caption: str
    out_path: Path
    frame_count: int = FRAME_COUNT
    token_cap: int = TOKEN_CAP
    sample_rate: int = SAMPLE_RATE


@dataclass
class JobResult:
    video_id: str
    status: str                      # "ok" | "failed"
    bundle: str | None = None
    flags: list[str] = field(default_factory=list)
    error: str | None = None

    def as_dict(self) -> dict:
        out = {"video_id": self.video_id, "status": self.status}
        if self.bundle:
            out["bundle"] = self.bundle
        if self.flags:
            out["flags"] = self.flags
        if self.error:
            out["error"] = self.error
        return out


def extract_visual(job: ExtractionJob, enc: Encoders) -> np.ndarray:
    frames = media.sample_frames(job.video_path, job.frame_count,
                                 enc.image_size)
    return enc_mod.encode_frames(enc, frames)


def extract_acoustic(job: ExtractionJob, enc: Encoders) -> np.ndarray | None:
    """None marks a missing/unreadable track; caller flags the record."""
    if job.audio_path is None:
        return None
    try:
        wave = media.load_audio(job.audio_path, job.sample_rate)
    except MediaError as exc:
        log.warning("%s: %s", job.video_id, exc)
        return None
    return enc_mod.encode_audio(enc, wave)


def extract_text(job: ExtractionJob, enc: Encoders) -> np.ndarray:
    ids = tokenizer.tokenize(job.caption, job.token_cap, enc.vocab_size)
    return enc_mod.encode_tokens(enc, ids)


def run_job(job: ExtractionJob, enc: Encoders) -> JobResult:
    try:
        visual = extract_visual(job, enc)
    except MediaError as exc:
        return JobResult(video_id=job.video_id, status="failed",
                         error=str(exc))
    acoustic = extract_acoustic(job, enc)
    textual = extract_text(job, enc)
    flags = []
    if acoustic is None:
        acoustic = np.zeros((0, visual.shape[1]), dtype=np.float32)
        flags.append("missing_audio")  # engine drops incomplete records
    job.out_path.parent.mkdir(parents=True, exist_ok=True)
    bundle.write_bundle(job.out_path, visual, acoustic, textual)
    return JobResult(video_id=job.video_id, status="ok",
                     bundle=str(job.out_path), flags=flags)


def jobs_from_manifest(manifest_path: str | Path,
                       out_dir: str | Path) -> list[ExtractionJob]:
    out_dir = Path(out_dir)
    jobs = []
    with open(manifest_path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            row = json.loads(line)
            for key in ("video_id", "video"):
                if key not in row:
                    raise ConfigError(
                        f"{manifest_path}:{line_no}: missing field {key!r}")
            jobs.append(ExtractionJob(
                video_id=row["video_id"], video_path=row["video"],
                audio_path=row.get("audio"), caption=row.get("caption", ""),
                out_path=out_dir / f"{row['video_id']}.mvfb"))
    if not jobs:
        raise ConfigError(f"{manifest_path}: empty manifest")
    return jobs


def run_batch(jobs: list[ExtractionJob], enc: Encoders,
              workers: int = 1) -> list[JobResult]:
    """Jobs are independent; results come back in manifest order."""
    if workers <= 1:
        return [run_job(job, enc) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda j: run_job(j, enc), jobs))
