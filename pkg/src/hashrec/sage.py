"""Inductive neighborhood aggregation over the interaction graph.

Per layer j every node concatenates its previous embedding with the
aggregate of its neighbors' previous embeddings, applies W^j and a
nonlinearity, then is renormalized to unit L2 norm.  Aggregation
ignores edge weights (weights gate graph construction only); empty
neighborhoods aggregate to the zero vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .attention import uniform_init
from .errors import ValidationError

AGGREGATORS = ("mean", "max", "min", "sum")
ACTIVATIONS = ("relu", "tanh", "identity")
NORM_EPS = 1e-12


@dataclass
class SageParams:
    layers: list[torch.Tensor]  # W^j with shape (d_out, 2*d_in)
    activation: str = "relu"
    aggregator: str = "mean"

    def __post_init__(self):
        if not self.layers:
            raise ValidationError("at least one propagation layer required")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {self.activation}")
        if self.aggregator not in AGGREGATORS:
            raise ValidationError(f"unknown aggregator {self.aggregator}")
        d_in = self.layers[0].shape[1] // 2
        for w in self.layers:
            if w.shape[1] != 2 * d_in:
                raise ValidationError("layer shapes do not chain")
            d_in = w.shape[0]

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def out_dim(self) -> int:
        return self.layers[-1].shape[0]

    def tensors(self) -> list[torch.Tensor]:
        return self.layers


def init_sage(seed: int, dims: list[int], activation: str = "relu",
              aggregator: str = "mean",
              requires_grad: bool = False) -> SageParams:
    """dims = [d_in, d_1, ..., d_J]; W^j is (d_j, 2*d_{j-1})."""
    if len(dims) < 2:
        raise ValidationError("dims must list input plus >= 1 output width")
    gen = torch.Generator().manual_seed(seed)
    layers = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        bound = math.sqrt(6.0 / (2 * d_in + d_out))
        w = uniform_init((d_out, 2 * d_in), bound, gen)
        w.requires_grad_(requires_grad)
        layers.append(w)
    return SageParams(layers=layers, activation=activation,
                      aggregator=aggregator)


def mean_aggregate(neighbor_embeddings: list[np.ndarray],
                   dim: int | None = None) -> np.ndarray:
    """Arithmetic mean; empty neighborhood yields the zero vector."""
    if not neighbor_embeddings:
        if dim is None:
            raise ValidationError("dim required for empty neighborhood")
        return np.zeros(dim)
    return np.mean(np.stack(neighbor_embeddings), axis=0)


def _aggregate(h: torch.Tensor, src: torch.Tensor, dst: torch.Tensor,
               degree: torch.Tensor, aggregator: str) -> torch.Tensor:
    """Aggregate h[src] into per-dst rows; isolated rows stay zero."""
    n, d = h.shape
    if aggregator in ("mean", "sum"):
        agg = torch.zeros_like(h)
        agg.index_add_(0, dst, h[src])
        if aggregator == "mean":
            agg = agg / degree.clamp(min=1.0).unsqueeze(1)
        return agg
    fill = -torch.inf if aggregator == "max" else torch.inf
    agg = torch.full((n, d), fill, dtype=h.dtype)
    reduce = "amax" if aggregator == "max" else "amin"
    agg = agg.scatter_reduce(0, dst.unsqueeze(1).expand(-1, d), h[src],
                             reduce=reduce)
    return torch.where(torch.isinf(agg), torch.zeros_like(agg), agg)


def _activate(h: torch.Tensor, activation: str) -> torch.Tensor:
    if activation == "relu":
        return torch.relu(h)
    if activation == "tanh":
        return torch.tanh(h)
    return h


def unit_normalize(h: torch.Tensor) -> torch.Tensor:
    """Row-wise L2 normalization; rows with norm < 1e-12 stay zero."""
    norms = torch.linalg.norm(h, dim=1, keepdim=True)
    return torch.where(norms > NORM_EPS, h / norms.clamp(min=NORM_EPS),
                       torch.zeros_like(h))


def sage_forward(edge_index: np.ndarray | torch.Tensor, features: torch.Tensor,
                 params: SageParams) -> torch.Tensor:
    """Run all propagation layers; returns unit-norm z_n per node."""
    if features.shape[1] != params.layers[0].shape[1] // 2:
        raise ValidationError(
            f"feature width {features.shape[1]} does not match layer-0 "
            f"input {params.layers[0].shape[1] // 2}")
    if isinstance(edge_index, np.ndarray):
        edge_index = torch.from_numpy(np.ascontiguousarray(edge_index))
    src, dst = edge_index[0].long(), edge_index[1].long()
    degree = torch.zeros(features.shape[0], dtype=features.dtype)
    degree.index_add_(0, dst, torch.ones_like(dst, dtype=features.dtype))

    h = features
    for w in params.layers:
        agg = _aggregate(h, src, dst, degree, params.aggregator)
        h = _activate(torch.cat([h, agg], dim=1) @ w.T, params.activation)
        h = unit_normalize(h)
    return h
