"""Transformer encoders for the three modalities.

Architectures are pinned in ``encoders.lock.json``. Weights come either
from state dicts under the lockfile's ``weights_dir`` or, when that is
null, from a fixed-seed initialization of the pinned configs, so the
tool runs fully offline and two runs produce identical features.
"""

import json
import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import torch
from transformers import (BertConfig, BertModel, ViTConfig, ViTModel,
                          Wav2Vec2Config, Wav2Vec2Model)

from .errors import ConfigError

log = logging.getLogger(__name__)

FRAME_COUNT = 12
TOKEN_CAP = 30
SAMPLE_RATE = 16_000


def load_lock(path: str | Path | None = None) -> dict:
    if path is None:
        text = (resources.files("extractor") / "encoders.lock.json"
                ).read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    lock = json.loads(text)
    for key in ("seed", "vit", "wav2vec2", "bert"):
        if key not in lock:
            raise ConfigError(f"lockfile missing {key!r}")
    return lock


@dataclass
class Encoders:
    vit: ViTModel
    wav2vec2: Wav2Vec2Model
    bert: BertModel
    lock: dict

    @property
    def image_size(self) -> int:
        return self.vit.config.image_size

    @property
    def vocab_size(self) -> int:
        return self.bert.config.vocab_size


def _finalize(model: torch.nn.Module, name: str,
              weights_dir: str | None) -> torch.nn.Module:
    if weights_dir is not None:
        state = torch.load(Path(weights_dir) / f"{name}.pt",
                           map_location="cpu", weights_only=True)
        model.load_state_dict(state)
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model


def build_encoders(lock: dict | None = None) -> Encoders:
    lock = lock or load_lock()
    weights = lock.get("weights_dir")
    torch.manual_seed(int(lock["seed"]))
    vit = _finalize(ViTModel(ViTConfig(**lock["vit"]),
                             add_pooling_layer=False), "vit", weights)
    wav = _finalize(Wav2Vec2Model(Wav2Vec2Config(**lock["wav2vec2"])),
                    "wav2vec2", weights)
    bert = _finalize(BertModel(BertConfig(**lock["bert"]),
                               add_pooling_layer=False), "bert", weights)
    log.info("encoders ready (seed=%s, weights_dir=%s)",
             lock["seed"], weights)
    return Encoders(vit=vit, wav2vec2=wav, bert=bert, lock=lock)


# ---------------------------------------------------------------------------
# Forward passes; all return float32 numpy matrices with 768 columns.


def encode_frames(enc: Encoders, frames: np.ndarray) -> np.ndarray:
    """(N_f, H, W, 3) uint8 RGB frames -> (N_f, 768) penultimate CLS rows."""
    if frames.ndim != 4 or frames.shape[-1] != 3:
        raise ConfigError(f"expected (N,H,W,3) frames, got {frames.shape}")
    x = torch.from_numpy(frames.astype(np.float32) / 255.0)
    x = (x - 0.5) / 0.5
    x = x.permute(0, 3, 1, 2)
    with torch.inference_mode():
        out = enc.vit(pixel_values=x, output_hidden_states=True)
    # one vector per frame: CLS token of the penultimate layer
    return out.hidden_states[-2][:, 0, :].numpy().astype(np.float32)


def encode_audio(enc: Encoders, waveform: np.ndarray) -> np.ndarray:
    """Mono 16 kHz waveform -> (X_a, 768) penultimate frame features."""
    if waveform.ndim != 1:
        raise ConfigError("expected a mono 1-D waveform")
    x = waveform.astype(np.float64)
    x = (x - x.mean()) / np.sqrt(x.var() + 1e-7)  # silent input stays finite
    batch = torch.from_numpy(x[None, :].astype(np.float32))
    with torch.inference_mode():
        out = enc.wav2vec2(input_values=batch, output_hidden_states=True)
    return out.hidden_states[-2][0].numpy().astype(np.float32)


def encode_tokens(enc: Encoders, token_ids: list[int]) -> np.ndarray:
    """Capped/padded id sequence -> (TOKEN_CAP, 768); padding rows zeroed."""
    if len(token_ids) != TOKEN_CAP:
        raise ConfigError(f"expected {TOKEN_CAP} token ids, got {len(token_ids)}")
    ids = torch.tensor([token_ids], dtype=torch.long)
    mask = (ids != 0).long()
    with torch.inference_mode():
        out = enc.bert(input_ids=ids, attention_mask=mask,
                       output_hidden_states=True)
    h = out.hidden_states[-2][0].numpy().astype(np.float32)
    h[np.asarray(token_ids) == 0] = 0.0
    return h
