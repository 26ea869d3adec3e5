"""Shared orchestration used by the CLI, the ablation harness and tests."""

from __future__ import annotations

import logging

import numpy as np
import torch

from .corpus import Corpus, MODALITIES
from .graph import InteractionGraph, assemble_graph
from .model import (ModelConfig, ModelParameters, TrainConfig, init_model,
                    pooled_train_vectors, train)

log = logging.getLogger(__name__)


def graph_pooled_vectors(corpus: Corpus, config: ModelConfig,
                         ) -> dict[str, dict[str, np.ndarray]]:
    """Pooled per-video vectors for edge construction.

    Attention parameters are freshly initialized from the config seed;
    the edge set stays fixed while training later refines the weights.
    """
    params = init_model(corpus, config, requires_grad=False)
    with torch.no_grad():
        pooled = pooled_train_vectors(corpus, params)
    train_ids = corpus.split.train
    return {m: {vid: pooled[m][i].numpy() for i, vid in enumerate(train_ids)}
            for m in MODALITIES}


def build_graph(corpus: Corpus, config: ModelConfig) -> InteractionGraph:
    pooled = graph_pooled_vectors(corpus, config)
    return assemble_graph(corpus, pooled, theta=config.theta,
                          gamma=config.gamma, alpha=config.alpha,
                          families=config.families)


def train_pipeline(corpus: Corpus, config: ModelConfig,
                   train_config: TrainConfig,
                   graph: InteractionGraph | None = None,
                   ) -> tuple[ModelParameters, InteractionGraph, list[float]]:
    """Graph construction (unless supplied) followed by training."""
    from dataclasses import replace
    cfg = replace(config, seed=train_config.seed)
    if graph is None:
        graph = build_graph(corpus, cfg)
    params, curve = train(corpus, graph, cfg, train_config)
    return params, graph, curve
