"""Raw media decoding: frame sampling and audio loading."""

import logging
import math
from pathlib import Path
import wave

import cv2
import numpy as np
from scipy.signal import resample_poly

from .errors import MediaError

log = logging.getLogger(__name__)


def sample_frames(path: str | Path, count: int, size: int) -> np.ndarray:
    """`count` equally spaced RGB frames, resized to (size, size).

    Short and long clips alike yield exactly `count` frames; a clip with
    fewer decodable frames than `count` repeats frames as needed.
    """
    cap = cv2.VideoCapture(str(path))
    try:
        if not cap.isOpened():
            raise MediaError(f"{path}: cannot open video")
        frames = []
        while True:
            ok, frame = cap.read()
            if not ok:
                break
            frames.append(frame)
    finally:
        cap.release()
    if not frames:
        raise MediaError(f"{path}: no decodable frames")
    idx = np.round(np.linspace(0, len(frames) - 1, count)).astype(int)
    out = np.stack([
        cv2.cvtColor(cv2.resize(frames[i], (size, size)), cv2.COLOR_BGR2RGB)
        for i in idx])
    return out


def load_audio(path: str | Path, target_rate: int) -> np.ndarray:
    """Mono float waveform at target_rate from a PCM WAV file."""
    try:
        with wave.open(str(path), "rb") as f:
            channels = f.getnchannels()
            width = f.getsampwidth()
            rate = f.getframerate()
            raw = f.readframes(f.getnframes())
    except (wave.Error, EOFError, OSError) as exc:
        raise MediaError(f"{path}: cannot read audio ({exc})") from exc
    if width == 2:
        x = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    elif width == 1:
        x = (np.frombuffer(raw, dtype=np.uint8).astype(np.float64) - 128) / 128.0
    else:
        raise MediaError(f"{path}: unsupported sample width {width}")
    if channels > 1:
        x = x.reshape(-1, channels).mean(axis=1)
    if x.size == 0:
        raise MediaError(f"{path}: empty audio track")
    if rate != target_rate:
        g = math.gcd(rate, target_rate)
        x = resample_poly(x, target_rate // g, rate // g)
        log.info("%s: resampled %d Hz -> %d Hz", path, rate, target_rate)
    return x.astype(np.float32)
