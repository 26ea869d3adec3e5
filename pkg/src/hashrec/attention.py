"""Attention pooling: one enriched vector per modality sequence.

Each unit row x is mapped to a hidden representation
h = tanh(W x + b_w); relevance scores h^T u_w pass through a
max-stabilized softmax, and the pooled output is sum_x alpha_x h_x.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from .errors import ValidationError


@dataclass
class AttentionParams:
    """One independent instance per modality."""

    W: torch.Tensor      # (D_h, D)
    b_w: torch.Tensor    # (D_h,)
    u_w: torch.Tensor    # (D_h,)

    @property
    def hidden_dim(self) -> int:
        return self.W.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W.shape[1]

    def tensors(self) -> list[torch.Tensor]:
        return [self.W, self.b_w, self.u_w]


@dataclass
class ModalityVector:
    values: torch.Tensor   # (D_h,)
    weights: torch.Tensor  # (X,) on the simplex


def uniform_init(shape: tuple[int, ...], bound: float,
                 generator: torch.Generator) -> torch.Tensor:
    """Uniform[-bound, +bound] in float64."""
    t = torch.empty(shape, dtype=torch.float64)
    t.uniform_(-bound, bound, generator=generator)
    return t


def init_attention(seed: int, dim: int, hidden_dim: int | None = None,
                   requires_grad: bool = False) -> AttentionParams:
    """Glorot-uniform W and u_w, zero bias; deterministic under seed."""
    if dim < 1 or (hidden_dim is not None and hidden_dim < 1):
        raise ValidationError("attention dims must be >= 1")
    d_h = dim if hidden_dim is None else hidden_dim
    gen = torch.Generator().manual_seed(seed)
    bound = math.sqrt(6.0 / (dim + d_h))
    W = uniform_init((d_h, dim), bound, gen)
    u_w = uniform_init((d_h,), bound, gen)
    b_w = torch.zeros(d_h, dtype=torch.float64)
    for t in (W, b_w, u_w):
        t.requires_grad_(requires_grad)
    return AttentionParams(W=W, b_w=b_w, u_w=u_w)


def attend(units: torch.Tensor, params: AttentionParams) -> ModalityVector:
    """Pool an (X, D) unit sequence into one enriched hidden vector."""
    if units.ndim != 2 or units.shape[0] == 0:
        raise ValidationError("empty modality")
    if units.shape[1] != params.input_dim:
        raise ValidationError(
            f"unit width {units.shape[1]} != attention input {params.input_dim}")
    h = torch.tanh(units @ params.W.T + params.b_w)       # (X, D_h)
    scores = h @ params.u_w                               # (X,)
    alpha = torch.softmax(scores, dim=0)
    return ModalityVector(values=alpha @ h, weights=alpha)


def attend_batch(units: torch.Tensor, mask: torch.Tensor,
                 params: AttentionParams) -> torch.Tensor:
    """Batched pooling over padded sequences.

    units: (B, X_max, D), mask: (B, X_max) bool with at least one True
    per row.  Returns (B, D_h).
    """
    h = torch.tanh(units @ params.W.T + params.b_w)       # (B, X, D_h)
    scores = h @ params.u_w                               # (B, X)
    scores = scores.masked_fill(~mask, -torch.inf)
    alpha = torch.softmax(scores, dim=1)
    return torch.einsum("bx,bxd->bd", alpha, h)


def pad_sequences(mats: list[torch.Tensor]) -> tuple[torch.Tensor, torch.Tensor]:
    """Stack variable-length (X_i, D) matrices into padded units + mask."""
    x_max = max(m.shape[0] for m in mats)
    dim = mats[0].shape[1]
    units = torch.zeros((len(mats), x_max, dim), dtype=torch.float64)
    mask = torch.zeros((len(mats), x_max), dtype=torch.bool)
    for i, m in enumerate(mats):
        units[i, : m.shape[0]] = m
        mask[i, : m.shape[0]] = True
    return units, mask
