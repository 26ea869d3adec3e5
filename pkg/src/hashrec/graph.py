"""Interaction graph construction: typed nodes and four edge families.

Nodes are the three modality nodes of every train video plus one node
per user (|N| = 3M + U).  Edge families:
  * intramodality: cosine(pooled_i, pooled_j) >= theta, weight = sim
  * user-user:     Jaccard(history_i, history_j) >= gamma, weight = sim
  * cold-start:    weight-1 edges from top-engagement users to everyone
  * hetero:        weight-1 edges user <-> own modality nodes
Duplicate pairs across families keep the max weight.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Corpus, UserRecord
from .errors import ValidationError

GRAPH_MAGIC = b"MVIG"
GRAPH_VERSION = 1

NODE_KINDS = ("visual", "acoustic", "text", "user")
_KIND_CODES = {k: i for i, k in enumerate(NODE_KINDS)}
MODALITY_KIND = {"visual": "visual", "acoustic": "acoustic", "textual": "text"}


@dataclass(frozen=True)
class Node:
    kind: str
    owner: str  # video_id for modality nodes, user_id for user nodes


@dataclass
class InteractionGraph:
    nodes: list[Node]
    edges: dict[tuple[int, int], float] = field(default_factory=dict)
    _index: dict[Node, int] = field(default_factory=dict, repr=False)
    _adj: list[list[int]] | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self._index:
            self._index = {n: i for i, n in enumerate(self.nodes)}

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    def node_id(self, node: Node) -> int:
        return self._index[node]

    def add_edge(self, i: int, j: int, weight: float) -> None:
        """Undirected, no self-loops; duplicate pairs resolve to max weight."""
        if i == j:
            return
        key = (i, j) if i < j else (j, i)
        prev = self.edges.get(key)
        if prev is None or weight > prev:
            self.edges[key] = weight
            self._adj = None

    def adjacency(self) -> list[list[int]]:
        """Sorted neighbor lists, built lazily."""
        if self._adj is None:
            adj: list[list[int]] = [[] for _ in self.nodes]
            for (i, j) in self.edges:
                adj[i].append(j)
                adj[j].append(i)
            self._adj = [sorted(n) for n in adj]
        return self._adj

    def edge_index(self) -> np.ndarray:
        """Both-direction (2, 2E) int array for aggregation kernels."""
        if not self.edges:
            return np.zeros((2, 0), dtype=np.int64)
        pairs = np.array(sorted(self.edges), dtype=np.int64)
        return np.concatenate([pairs.T, pairs.T[::-1]], axis=1)


# ---------------------------------------------------------------------------
# Similarity primitives


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ValidationError("degenerate feature: zero-norm vector")
    return float(np.dot(u, v) / (nu * nv))


def jaccard_users(h_i: frozenset[int] | set[int],
                  h_j: frozenset[int] | set[int]) -> float:
    if not h_i and not h_j:
        raise ValidationError("Jaccard of two empty histories")
    return len(set(h_i) & set(h_j)) / len(set(h_i) | set(h_j))


def engagement_rate(user: UserRecord) -> float:
    """likes/followers; cold-start users score 0 by definition."""
    if user.cold_start:
        return 0.0
    if user.followers == 0:
        if user.likes:
            import logging
            logging.getLogger(__name__).warning(
                "user %s has likes but zero followers; rate set to 0",
                user.user_id)
        return 0.0
    return user.likes / user.followers


# ---------------------------------------------------------------------------
# Edge families


def build_intramodality_edges(pooled: dict[str, np.ndarray], order: list[str],
                              theta: float = 0.5) -> list[tuple[str, str, float]]:
    """All unordered same-modality pairs with cosine >= theta.

    pooled maps video_id -> pooled vector for ONE modality; order fixes
    the pair enumeration.  Vectorized over the full similarity matrix.
    """
    if not order:
        return []
    mat = np.stack([pooled[v] for v in order]).astype(np.float64)
    norms = np.linalg.norm(mat, axis=1)
    if np.any(norms == 0):
        raise ValidationError("degenerate feature: zero-norm pooled vector")
    sims = (mat / norms[:, None]) @ (mat / norms[:, None]).T
    edges = []
    for i in range(len(order)):
        for j in range(i + 1, len(order)):
            if sims[i, j] >= theta:
                edges.append((order[i], order[j], float(sims[i, j])))
    return edges


def build_user_edges(users: dict[str, UserRecord],
                     gamma: float = 0.5) -> list[tuple[str, str, float]]:
    """Jaccard-similarity edges between non-cold-start users."""
    ids = sorted(u for u, rec in users.items() if not rec.cold_start
                 and rec.history)
    edges = []
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            sim = jaccard_users(users[ids[a]].history, users[ids[b]].history)
            if sim >= gamma:
                edges.append((ids[a], ids[b], sim))
    return edges


def popular_users(users: dict[str, UserRecord], alpha: float = 0.1) -> list[str]:
    """Top ceil(alpha*|U|) users by engagement rate, ids ascending on ties."""
    if not users:
        raise ValidationError("no users")
    ranked = sorted(users, key=lambda u: (-engagement_rate(users[u]), u))
    top_p = math.ceil(alpha * len(users))
    return ranked[:top_p]


def cold_start_edges(users: dict[str, UserRecord],
                     alpha: float = 0.1) -> list[tuple[str, str, float]]:
    """Weight-1 influence edges from every popular user to every other user."""
    pops = popular_users(users, alpha)
    seen = set()
    edges = []
    for pu in pops:
        for u in sorted(users):
            if u == pu:
                continue
            key = (pu, u) if pu < u else (u, pu)
            if key not in seen:
                seen.add(key)
                edges.append((key[0], key[1], 1.0))
    return edges


def build_hetero_edges(corpus: Corpus,
                       video_ids: list[str]) -> list[tuple[Node, Node, float]]:
    """user <-> {visual, acoustic, text} node of each of their videos."""
    edges = []
    for vid in video_ids:
        rec = corpus.records[vid]
        if rec.user_id not in corpus.users:
            raise ValidationError(f"video {vid}: unknown user {rec.user_id}")
        u = Node("user", rec.user_id)
        for kind in ("visual", "acoustic", "text"):
            edges.append((u, Node(kind, vid), 1.0))
    return edges


# ---------------------------------------------------------------------------
# Assembly


def graph_nodes(video_ids: list[str], user_ids: list[str]) -> list[Node]:
    """Fixed node ordering: (v, a, t) per video, then users."""
    nodes = []
    for vid in video_ids:
        nodes.extend([Node("visual", vid), Node("acoustic", vid),
                      Node("text", vid)])
    nodes.extend(Node("user", uid) for uid in user_ids)
    return nodes


def assemble_graph(corpus: Corpus, pooled: dict[str, dict[str, np.ndarray]],
                   theta: float = 0.5, gamma: float = 0.5, alpha: float = 0.1,
                   families: set[str] | frozenset[str] = frozenset({"homo", "hetero"}),
                   ) -> InteractionGraph:
    """Merge the selected edge families over the train split.

    pooled maps modality name ('visual'/'acoustic'/'textual') to
    {video_id: pooled vector}; required for the intramodality family.
    """
    unknown = set(families) - {"homo", "hetero"}
    if unknown:
        raise ValidationError(f"unknown edge families: {sorted(unknown)}")
    video_ids = list(corpus.split.train)
    if not video_ids:
        raise ValidationError("empty corpus: no train videos")
    user_ids = sorted(corpus.users)
    g = InteractionGraph(nodes=graph_nodes(video_ids, user_ids))

    if "homo" in families:
        for modality in ("visual", "acoustic", "textual"):
            kind = MODALITY_KIND[modality]
            for vi, vj, w in build_intramodality_edges(pooled[modality],
                                                       video_ids, theta):
                g.add_edge(g.node_id(Node(kind, vi)), g.node_id(Node(kind, vj)), w)
        for ui, uj, w in build_user_edges(corpus.users, gamma):
            g.add_edge(g.node_id(Node("user", ui)), g.node_id(Node("user", uj)), w)
        for ui, uj, w in cold_start_edges(corpus.users, alpha):
            g.add_edge(g.node_id(Node("user", ui)), g.node_id(Node("user", uj)), w)

    if "hetero" in families:
        for a, b, w in build_hetero_edges(corpus, video_ids):
            g.add_edge(g.node_id(a), g.node_id(b), w)

    return g


# ---------------------------------------------------------------------------
# Serialization (MVIG)


def save_graph(graph: InteractionGraph, path: str | Path) -> None:
    with open(path, "wb") as f:
        f.write(GRAPH_MAGIC)
        f.write(struct.pack("<I", GRAPH_VERSION))
        f.write(struct.pack("<I", graph.num_nodes))
        for node in graph.nodes:
            owner = node.owner.encode("utf-8")
            f.write(struct.pack("<BH", _KIND_CODES[node.kind], len(owner)))
            f.write(owner)
        f.write(struct.pack("<I", len(graph.edges)))
        for (i, j) in sorted(graph.edges):
            f.write(struct.pack("<IIf", i, j, graph.edges[(i, j)]))


def load_graph(path: str | Path) -> InteractionGraph:
    with open(path, "rb") as f:
        if f.read(4) != GRAPH_MAGIC:
            raise ValidationError(f"{path}: bad graph magic")
        (version,) = struct.unpack("<I", f.read(4))
        if version != GRAPH_VERSION:
            raise ValidationError(f"{path}: unsupported graph version {version}")
        (n,) = struct.unpack("<I", f.read(4))
        nodes = []
        for _ in range(n):
            code, ln = struct.unpack("<BH", f.read(3))
            nodes.append(Node(NODE_KINDS[code], f.read(ln).decode("utf-8")))
        (m,) = struct.unpack("<I", f.read(4))
        g = InteractionGraph(nodes=nodes)
        for _ in range(m):
            i, j, w = struct.unpack("<IIf", f.read(12))
            g.add_edge(i, j, w)
    return g
