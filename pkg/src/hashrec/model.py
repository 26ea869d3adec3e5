"""End-to-end model: pooling -> graph refinement -> fusion -> softmax head.

Training runs in float64 with reverse-mode differentiation; gradients
flow through the output head, fusion, propagation weights, attention
parameters, and the user embedding table.  Checkpoints use the MVCK
binary block format with float32 payloads.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from . import attention as att_mod
from . import sage as sage_mod
from .attention import AttentionParams, attend_batch, init_attention, pad_sequences
from .corpus import Corpus, MODALITIES, MicroVideoRecord
from .errors import TrainingError, ValidationError
from .graph import InteractionGraph, popular_users
from .sage import SageParams, init_sage, sage_forward

log = logging.getLogger(__name__)

CKPT_MAGIC = b"MVCK"
CKPT_VERSION = 1
PROB_FLOOR = 1e-12

_FAMILY_CODES = {frozenset({"homo"}): 1, frozenset({"hetero"}): 2,
                 frozenset({"homo", "hetero"}): 3}
_CODE_FAMILIES = {v: k for k, v in _FAMILY_CODES.items()}


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and graph hyperparameters, frozen into the checkpoint."""

    feature_dim: int
    vocab_size: int
    num_users: int
    hidden_dim: int | None = None   # attention width D_h; None -> feature_dim
    depth: int = 2                  # propagation layers J
    activation: str = "relu"
    aggregator: str = "mean"
    theta: float = 0.5
    gamma: float = 0.5
    alpha: float = 0.1
    families: frozenset[str] = frozenset({"homo", "hetero"})
    use_attention: bool = True
    use_frm: bool = True
    seed: int = 0

    @property
    def node_dim(self) -> int:
        """Width of initial node features (pooled vectors / user slots)."""
        if self.use_attention:
            return self.hidden_dim if self.hidden_dim else self.feature_dim
        return self.feature_dim

    @property
    def refined_dim(self) -> int:
        return self.node_dim  # propagation preserves width by default

    @property
    def overall_dim(self) -> int:
        return 4 * self.refined_dim


@dataclass
class ModelParameters:
    config: ModelConfig
    att: dict[str, AttentionParams] | None
    sage: SageParams | None
    user_emb: torch.Tensor          # (U, node_dim)
    user_ids: list[str]
    head_w: torch.Tensor            # (|H|, overall_dim)
    head_b: torch.Tensor            # (|H|,)

    def trainable(self) -> list[torch.Tensor]:
        out = []
        if self.att is not None:
            for m in MODALITIES:
                out.extend(self.att[m].tensors())
        if self.sage is not None:
            out.extend(self.sage.tensors())
        out.append(self.user_emb)
        out.extend([self.head_w, self.head_b])
        return out

    def user_index(self, user_id: str) -> int:
        try:
            return self.user_ids.index(user_id)
        except ValueError:
            raise ValidationError(f"unknown user {user_id!r}") from None


@dataclass
class Prediction:
    y_pred: np.ndarray
    ranked: list[int]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 200
    batch_size: int = 0             # 0 = full batch
    optimizer: str = "adam"
    seed: int = 0
    patience: int = 0               # 0 = no early stop

    def __post_init__(self):
        if self.lr < 0 or self.epochs <= 0 or self.batch_size < 0:
            raise ValidationError("train config numerics must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValidationError(f"unknown optimizer {self.optimizer}")


# ---------------------------------------------------------------------------
# Initialization


def init_model(corpus: Corpus, config: ModelConfig,
               requires_grad: bool = True) -> ModelParameters:
    """Deterministic initialization of all parameter groups."""
    derived = replace(config, feature_dim=corpus.feature_dim,
                      vocab_size=len(corpus.vocab),
                      num_users=len(corpus.users))
    d = derived.node_dim
    att = None
    if derived.use_attention:
        att = {m: init_attention(derived.seed + i, derived.feature_dim, d,
                                 requires_grad=requires_grad)
               for i, m in enumerate(MODALITIES)}
    sage = None
    if derived.use_frm:
        sage = init_sage(derived.seed + 10, [d] * (derived.depth + 1),
                         activation=derived.activation,
                         aggregator=derived.aggregator,
                         requires_grad=requires_grad)
    gen = torch.Generator().manual_seed(derived.seed + 20)
    user_emb = att_mod.uniform_init((derived.num_users, d),
                                    math.sqrt(6.0 / (2 * d)), gen)
    bound = math.sqrt(6.0 / (derived.overall_dim + derived.vocab_size))
    head_w = att_mod.uniform_init((derived.vocab_size, derived.overall_dim),
                                  bound, gen)
    head_b = torch.zeros(derived.vocab_size, dtype=torch.float64)
    for t in (user_emb, head_w, head_b):
        t.requires_grad_(requires_grad)
    return ModelParameters(config=derived, att=att, sage=sage,
                           user_emb=user_emb, user_ids=sorted(corpus.users),
                           head_w=head_w, head_b=head_b)


# ---------------------------------------------------------------------------
# Pooling and forward pass


def pool_modality(mats: list[np.ndarray], params: ModelParameters,
                  modality: str) -> torch.Tensor:
    """Pooled (B, node_dim) vectors: trained attention or plain row mean."""
    tensors = [torch.from_numpy(np.asarray(m, dtype=np.float64)) for m in mats]
    for i, t in enumerate(tensors):
        if t.numel() == 0:
            raise ValidationError(f"empty {modality} matrix at index {i}")
    if params.att is None:
        return torch.stack([t.mean(dim=0) for t in tensors])
    units, mask = pad_sequences(tensors)
    return attend_batch(units, mask, params.att[modality])


def pooled_train_vectors(corpus: Corpus, params: ModelParameters,
                         ) -> dict[str, torch.Tensor]:
    """Pooled vectors for every train video, keyed by modality."""
    train = corpus.train_records()
    return {m: pool_modality([r.matrix(m) for r in train], params, m)
            for m in MODALITIES}


def node_feature_matrix(pooled: dict[str, torch.Tensor],
                        user_emb: torch.Tensor) -> torch.Tensor:
    """Interleave (v, a, t) rows per video, then append user rows."""
    mod_rows = torch.stack([pooled[m] for m in MODALITIES], dim=1)
    mod_rows = mod_rows.reshape(-1, pooled["visual"].shape[1])
    return torch.cat([mod_rows, user_emb], dim=0)


def fuse(v: torch.Tensor, a: torch.Tensor, t: torch.Tensor,
         u: torch.Tensor) -> torch.Tensor:
    """Fixed-order concatenation v||a||t||u along the last dimension."""
    widths = {x.shape[-1] for x in (v, a, t, u)}
    if len(widths) != 1:
        raise ValidationError(f"fusion width mismatch: {sorted(widths)}")
    return torch.cat([v, a, t, u], dim=-1)


def forward_train(corpus: Corpus, graph: InteractionGraph,
                  params: ModelParameters) -> tuple[torch.Tensor, list[frozenset[int]]]:
    """Logits for every train post plus the aligned ground-truth sets."""
    train = corpus.train_records()
    pooled = pooled_train_vectors(corpus, params)
    features = node_feature_matrix(pooled, params.user_emb)
    if params.sage is not None:
        z = sage_forward(graph.edge_index(), features, params.sage)
    else:
        z = features
    m = len(train)
    z_v, z_a, z_t = z[0:3 * m:3], z[1:3 * m:3], z[2:3 * m:3]
    uidx = torch.tensor([params.user_index(r.user_id) for r in train])
    z_u = z[3 * m + uidx]
    overall = fuse(z_v, z_a, z_t, z_u)
    logits = overall @ params.head_w.T + params.head_b
    return logits, [r.hashtags for r in train]


# ---------------------------------------------------------------------------
# Head, loss, prediction


def rank_scores(y_pred: np.ndarray) -> list[int]:
    """Descending-score order; ties broken by ascending hashtag id."""
    return sorted(range(len(y_pred)), key=lambda j: (-y_pred[j], j))


def predict(mv_overall: torch.Tensor, params: ModelParameters,
            k: int | None = None) -> Prediction:
    """Softmax scores over the vocabulary plus the ranked id list."""
    with torch.no_grad():
        logits = mv_overall @ params.head_w.T + params.head_b
        y = torch.softmax(logits, dim=-1).numpy()
    ranked = rank_scores(y)
    if k is not None:
        if k > len(y):
            log.warning("K=%d exceeds vocabulary size %d; truncating", k, len(y))
            k = len(y)
        ranked = ranked[:k]
    return Prediction(y_pred=y, ranked=ranked)


def loss_from_logits(logits: torch.Tensor,
                     targets: list[frozenset[int]] | list[set[int]]) -> torch.Tensor:
    """Mean over posts of the summed NLL of every ground-truth tag."""
    if logits.shape[0] != len(targets):
        raise ValidationError("logit/target batch mismatch")
    logp = torch.log_softmax(logits, dim=-1)
    logp = logp.clamp(min=math.log(PROB_FLOOR))
    per_post = []
    for i, tags in enumerate(targets):
        if not tags:
            raise ValidationError(f"post {i}: empty ground-truth set")
        ids = torch.tensor(sorted(tags))
        if ids.max() >= logits.shape[1] or ids.min() < 0:
            raise ValidationError(f"post {i}: tag id out of range")
        per_post.append(-logp[i, ids].sum())
    return torch.stack(per_post).mean()


def loss(mv_overall: torch.Tensor, targets: list[frozenset[int]],
         params: ModelParameters) -> torch.Tensor:
    logits = mv_overall @ params.head_w.T + params.head_b
    return loss_from_logits(logits, targets)


# ---------------------------------------------------------------------------
# Training


def train(corpus: Corpus, graph: InteractionGraph, config: ModelConfig,
          train_config: TrainConfig,
          ) -> tuple[ModelParameters, list[float]]:
    """Full-gradient training over the train split; returns the loss curve."""
    torch.manual_seed(train_config.seed)
    cfg = replace(config, seed=train_config.seed)
    params = init_model(corpus, cfg, requires_grad=True)
    tensors = params.trainable()
    if train_config.optimizer == "adam":
        opt = torch.optim.Adam(tensors, lr=train_config.lr)
    else:
        opt = torch.optim.SGD(tensors, lr=train_config.lr)

    n_train = len(corpus.split.train)
    rng = np.random.default_rng(train_config.seed)
    curve: list[float] = []
    best, stale = math.inf, 0
    for epoch in range(train_config.epochs):
        opt.zero_grad()
        logits, targets = forward_train(corpus, graph, params)
        if train_config.batch_size and train_config.batch_size < n_train:
            idx = rng.choice(n_train, size=train_config.batch_size,
                             replace=False)
            loss_t = loss_from_logits(logits[idx], [targets[i] for i in idx])
        else:
            loss_t = loss_from_logits(logits, targets)
        value = float(loss_t.detach())
        if not math.isfinite(value):
            raise TrainingError(
                f"non-finite loss {value} at epoch {epoch}; "
                f"lr={train_config.lr}, seed={train_config.seed}")
        loss_t.backward()
        opt.step()
        curve.append(value)
        log.debug("epoch %d loss %.6f", epoch, value)
        if value < best - 1e-12:
            best, stale = value, 0
        else:
            stale += 1
            if train_config.patience and stale >= train_config.patience:
                log.info("early stop at epoch %d (patience %d)", epoch,
                         train_config.patience)
                break
    return params, curve


# ---------------------------------------------------------------------------
# Inductive inference


class Inferencer:
    """Attaches new videos to the frozen training graph and predicts.

    Precomputes pooled train vectors and node features once so that
    per-post inference only adds three modality nodes (plus a fresh
    user node for cold-start users) and reruns propagation.
    """

    def __init__(self, params: ModelParameters, graph: InteractionGraph,
                 corpus: Corpus, cold_social: bool = True):
        self.params = params
        self.graph = graph
        self.corpus = corpus
        self.cold_social = cold_social
        cfg = params.config
        with torch.no_grad():
            self.pooled = pooled_train_vectors(corpus, params)
            self.features = node_feature_matrix(self.pooled, params.user_emb)
        self.base_edges = graph.edge_index()
        self.n_base = graph.num_nodes
        self.n_videos = len(corpus.split.train)
        # unit-normalized pooled vectors per modality for cosine attachment
        self.pooled_unit = {}
        for m in MODALITIES:
            mat = self.pooled[m].numpy()
            norms = np.linalg.norm(mat, axis=1, keepdims=True)
            if np.any(norms == 0):
                raise ValidationError("degenerate pooled train vector")
            self.pooled_unit[m] = mat / norms
        self.popular = popular_users(corpus.users, cfg.alpha)
        self.user_node = {u: 3 * self.n_videos + i
                          for i, u in enumerate(sorted(corpus.users))}

    def _pool_record(self, record: MicroVideoRecord) -> dict[str, torch.Tensor]:
        with torch.no_grad():
            return {m: pool_modality([record.matrix(m)], self.params, m)[0]
                    for m in MODALITIES}

    def infer(self, record: MicroVideoRecord, user_id: str,
              k: int = 5, cold_start: bool = False) -> Prediction:
        cfg = self.params.config
        if not cold_start and user_id not in self.user_node:
            raise ValidationError(
                f"unknown user {user_id!r} without cold_start flag")
        pooled_new = self._pool_record(record)

        new_edges: list[tuple[int, int]] = []
        node_ids = {m: self.n_base + i for i, m in enumerate(MODALITIES)}
        extra_rows = [pooled_new[m] for m in MODALITIES]

        if "homo" in cfg.families:
            for m in MODALITIES:
                vec = pooled_new[m].numpy()
                norm = np.linalg.norm(vec)
                if norm == 0:
                    raise ValidationError("degenerate feature in new record")
                sims = self.pooled_unit[m] @ (vec / norm)
                for j in np.nonzero(sims >= cfg.theta)[0]:
                    # train modality nodes are interleaved (v, a, t)
                    new_edges.append((node_ids[m],
                                      3 * int(j) + MODALITIES.index(m)))

        if cold_start:
            u_node = self.n_base + 3
            extra_rows.append(torch.zeros(cfg.node_dim, dtype=torch.float64))
            if self.cold_social and "homo" in cfg.families:
                for pu in self.popular:
                    new_edges.append((u_node, self.user_node[pu]))
        else:
            u_node = self.user_node[user_id]
        if "hetero" in cfg.families:
            for m in MODALITIES:
                new_edges.append((u_node, node_ids[m]))

        features = torch.cat([self.features, torch.stack(extra_rows)], dim=0)
        if new_edges:
            add = np.array(new_edges, dtype=np.int64).T
            edge_index = np.concatenate(
                [self.base_edges, add, add[::-1]], axis=1)
        else:
            edge_index = self.base_edges
        with torch.no_grad():
            if self.params.sage is not None:
                z = sage_forward(edge_index, features, self.params.sage)
            else:
                z = features
            overall = fuse(z[node_ids["visual"]], z[node_ids["acoustic"]],
                           z[node_ids["textual"]], z[u_node])
        return predict(overall, self.params, k=k)


def infer_new_video(record: MicroVideoRecord, user_id: str,
                    params: ModelParameters, graph: InteractionGraph,
                    corpus: Corpus, k: int = 5, cold_start: bool = False,
                    cold_social: bool = True) -> Prediction:
    """One-shot wrapper around Inferencer for single predictions."""
    inf = Inferencer(params, graph, corpus, cold_social=cold_social)
    return inf.infer(record, user_id, k=k, cold_start=cold_start)


# ---------------------------------------------------------------------------
# Gradient verification


def grad_check(corpus: Corpus, graph: InteractionGraph,
               params: ModelParameters, step: float = 1e-5) -> dict[str, float]:
    """Max relative error of analytic vs central-FD gradients per group."""
    groups: dict[str, list[torch.Tensor]] = {}
    if params.att is not None:
        groups["attention"] = [t for m in MODALITIES
                               for t in params.att[m].tensors()]
    if params.sage is not None:
        groups["sage"] = params.sage.tensors()
    groups["user_emb"] = [params.user_emb]
    groups["head"] = [params.head_w, params.head_b]

    def eval_loss() -> float:
        with torch.no_grad():
            logits, targets = forward_train(corpus, graph, params)
            return float(loss_from_logits(logits, targets))

    for t in params.trainable():
        if t.grad is not None:
            t.grad = None
    logits, targets = forward_train(corpus, graph, params)
    loss_from_logits(logits, targets).backward()

    report: dict[str, float] = {}
    for name, tensors in groups.items():
        worst = 0.0
        for t in tensors:
            analytic = (t.grad if t.grad is not None
                        else torch.zeros_like(t)).reshape(-1)
            flat = t.data.reshape(-1)
            for i in range(flat.numel()):
                orig = float(flat[i])
                flat[i] = orig + step
                up = eval_loss()
                flat[i] = orig - step
                down = eval_loss()
                flat[i] = orig
                fd = (up - down) / (2 * step)
                denom = max(abs(fd), abs(float(analytic[i])), 1e-8)
                worst = max(worst, abs(fd - float(analytic[i])) / denom)
        report[name] = worst
    return report


# ---------------------------------------------------------------------------
# Checkpoint serialization (MVCK)


def _config_blocks(cfg: ModelConfig) -> dict[str, np.ndarray]:
    scalars = {
        "config.feature_dim": cfg.feature_dim,
        "config.vocab_size": cfg.vocab_size,
        "config.num_users": cfg.num_users,
        "config.hidden_dim": cfg.hidden_dim if cfg.hidden_dim else 0,
        "config.depth": cfg.depth,
        "config.activation": sage_mod.ACTIVATIONS.index(cfg.activation),
        "config.aggregator": sage_mod.AGGREGATORS.index(cfg.aggregator),
        "config.theta": cfg.theta,
        "config.gamma": cfg.gamma,
        "config.alpha": cfg.alpha,
        "config.families": _FAMILY_CODES[frozenset(cfg.families)],
        "config.use_attention": int(cfg.use_attention),
        "config.use_frm": int(cfg.use_frm),
        "config.seed": cfg.seed,
    }
    return {k: np.array([v], dtype=np.float32) for k, v in scalars.items()}


def _config_from_blocks(blocks: dict[str, np.ndarray]) -> ModelConfig:
    def get(name):
        return float(blocks[name][0])

    hidden = int(get("config.hidden_dim"))
    return ModelConfig(
        feature_dim=int(get("config.feature_dim")),
        vocab_size=int(get("config.vocab_size")),
        num_users=int(get("config.num_users")),
        hidden_dim=hidden if hidden else None,
        depth=int(get("config.depth")),
        activation=sage_mod.ACTIVATIONS[int(get("config.activation"))],
        aggregator=sage_mod.AGGREGATORS[int(get("config.aggregator"))],
        theta=get("config.theta"), gamma=get("config.gamma"),
        alpha=get("config.alpha"),
        families=_CODE_FAMILIES[int(get("config.families"))],
        use_attention=bool(int(get("config.use_attention"))),
        use_frm=bool(int(get("config.use_frm"))),
        seed=int(get("config.seed")))


def save_checkpoint(params: ModelParameters, path: str | Path) -> None:
    blocks = _config_blocks(params.config)
    if params.att is not None:
        for m in MODALITIES:
            blocks[f"att.{m}.W"] = params.att[m].W.detach().numpy()
            blocks[f"att.{m}.b"] = params.att[m].b_w.detach().numpy()
            blocks[f"att.{m}.u"] = params.att[m].u_w.detach().numpy()
    if params.sage is not None:
        for j, w in enumerate(params.sage.layers):
            blocks[f"sage.{j}"] = w.detach().numpy()
    blocks["user_emb"] = params.user_emb.detach().numpy()
    blocks["head.W"] = params.head_w.detach().numpy()
    blocks["head.b"] = params.head_b.detach().numpy()

    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<I", CKPT_VERSION))
        f.write(struct.pack("<I", len(blocks)))
        for name in sorted(blocks):
            arr = np.ascontiguousarray(blocks[name], dtype="<f4")
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", arr.ndim))
            for d in arr.shape:
                f.write(struct.pack("<I", d))
            f.write(arr.tobytes())


def load_checkpoint(path: str | Path, user_ids: list[str]) -> ModelParameters:
    with open(path, "rb") as f:
        if f.read(4) != CKPT_MAGIC:
            raise ValidationError(f"{path}: bad checkpoint magic")
        (version,) = struct.unpack("<I", f.read(4))
        if version != CKPT_VERSION:
            raise ValidationError(f"{path}: unsupported checkpoint version")
        (count,) = struct.unpack("<I", f.read(4))
        blocks: dict[str, np.ndarray] = {}
        for _ in range(count):
            (ln,) = struct.unpack("<H", f.read(2))
            name = f.read(ln).decode("utf-8")
            (ndim,) = struct.unpack("<B", f.read(1))
            shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
            n = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(f.read(4 * n), dtype="<f4").reshape(shape)
            blocks[name] = arr.copy()

    cfg = _config_from_blocks(blocks)
    if cfg.num_users != len(user_ids):
        raise ValidationError(
            f"checkpoint expects {cfg.num_users} users, corpus has "
            f"{len(user_ids)}")

    def t64(name):
        return torch.from_numpy(blocks[name].astype(np.float64))

    att = None
    if cfg.use_attention:
        att = {m: AttentionParams(W=t64(f"att.{m}.W"), b_w=t64(f"att.{m}.b"),
                                  u_w=t64(f"att.{m}.u")) for m in MODALITIES}
    sage = None
    if cfg.use_frm:
        layers = [t64(f"sage.{j}") for j in range(cfg.depth)]
        sage = SageParams(layers=layers, activation=cfg.activation,
                          aggregator=cfg.aggregator)
    return ModelParameters(config=cfg, att=att, sage=sage,
                           user_emb=t64("user_emb"),
                           user_ids=sorted(user_ids),
                           head_w=t64("head.W"), head_b=t64("head.b"))
