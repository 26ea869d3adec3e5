import math

import numpy as np
import pytest
import torch

from hashrec import model as mdl
from hashrec.corpus import MODALITIES
from hashrec.errors import ValidationError
from hashrec.graph import Node, cosine, popular_users
from hashrec.model import ModelConfig, TrainConfig
from hashrec.pipeline import build_graph, train_pipeline
from hashrec.sage import sage_forward

from conftest import make_toy_corpus


def toy_config(corpus, **kw):
    base = dict(feature_dim=corpus.feature_dim,
                vocab_size=len(corpus.vocab.tags),
                num_users=len(corpus.users), seed=0)
    base.update(kw)
    return ModelConfig(**base)


# ---------------------------------------------------------------------------
# Fusion


def test_fuse_order_and_width():
    v, a, t, u = (torch.full((2,), float(i), dtype=torch.float64)
                  for i in range(4))
    out = mdl.fuse(v, a, t, u)
    assert torch.equal(out, torch.tensor(
        [0.0, 0, 1, 1, 2, 2, 3, 3], dtype=torch.float64))
    with pytest.raises(ValidationError, match="width mismatch"):
        mdl.fuse(v, a, t, torch.zeros(3, dtype=torch.float64))


# ---------------------------------------------------------------------------
# Prediction head


def test_rank_scores_tie_break():
    assert mdl.rank_scores(np.array([0.2, 0.5, 0.2, 0.5])) == [1, 3, 0, 2]
    assert mdl.rank_scores(np.array([0.25, 0.25, 0.25, 0.25])) == [0, 1, 2, 3]


def test_predict_matches_numpy_oracle(toy_corpus):
    params = mdl.init_model(toy_corpus, toy_config(toy_corpus, seed=11),
                            requires_grad=False)
    gen = torch.Generator().manual_seed(11)
    overall = torch.randn(params.config.overall_dim, dtype=torch.float64,
                          generator=gen)
    pred = mdl.predict(overall, params)
    logits = overall.numpy() @ params.head_w.numpy().T + params.head_b.numpy()
    e = np.exp(logits - logits.max())
    expected = e / e.sum()
    np.testing.assert_allclose(pred.y_pred, expected, atol=1e-12)
    assert abs(pred.y_pred.sum() - 1.0) < 1e-12
    assert pred.ranked == sorted(range(len(expected)),
                                 key=lambda j: (-expected[j], j))


def test_predict_k_clamp_warns(toy_corpus, caplog):
    params = mdl.init_model(toy_corpus, toy_config(toy_corpus),
                            requires_grad=False)
    overall = torch.zeros(params.config.overall_dim, dtype=torch.float64)
    with caplog.at_level("WARNING"):
        pred = mdl.predict(overall, params, k=10 ** 6)
    assert len(pred.ranked) == len(toy_corpus.vocab.tags)
    assert any("exceeds vocabulary" in r.message for r in caplog.records)


# ---------------------------------------------------------------------------
# Loss


def test_loss_trivials():
    # one post, correct tag dominant: loss approaches 0
    logits = torch.tensor([[50.0, 0.0, 0.0, 0.0]], dtype=torch.float64)
    assert float(mdl.loss_from_logits(logits, [frozenset({0})])) < 1e-12
    # uniform logits over 4 tags, two ground-truth tags: 2*log(4)
    logits = torch.zeros(1, 4, dtype=torch.float64)
    got = float(mdl.loss_from_logits(logits, [frozenset({1, 2})]))
    assert abs(got - 2 * math.log(4)) < 1e-12
    # mean over posts
    two = torch.zeros(2, 4, dtype=torch.float64)
    got = float(mdl.loss_from_logits(two, [frozenset({0}), frozenset({0, 1})]))
    assert abs(got - 1.5 * math.log(4)) < 1e-12


def test_loss_validation():
    logits = torch.zeros(1, 4, dtype=torch.float64)
    with pytest.raises(ValidationError, match="empty ground-truth"):
        mdl.loss_from_logits(logits, [frozenset()])
    with pytest.raises(ValidationError, match="out of range"):
        mdl.loss_from_logits(logits, [frozenset({4})])
    with pytest.raises(ValidationError, match="batch mismatch"):
        mdl.loss_from_logits(logits, [])


def test_loss_floor_finite():
    logits = torch.tensor([[2000.0, 0.0]], dtype=torch.float64)
    got = float(mdl.loss_from_logits(logits, [frozenset({1})]))
    assert math.isfinite(got)
    assert abs(got + math.log(mdl.PROB_FLOOR)) < 1e-9


# ---------------------------------------------------------------------------
# Training


def test_zero_lr_leaves_parameters_bit_identical(toy_corpus):
    config = toy_config(toy_corpus)
    graph = build_graph(toy_corpus, config)
    tc = TrainConfig(lr=0.0, epochs=3, seed=0)
    params, curve = mdl.train(toy_corpus, graph, config, tc)
    fresh = mdl.init_model(toy_corpus, config, requires_grad=False)
    for got, want in zip(params.trainable(), fresh.trainable()):
        assert torch.equal(got.detach(), want.detach())
    assert len(curve) == 3 and curve[0] == curve[1] == curve[2]


def test_same_seed_identical_curves(toy_corpus):
    config = toy_config(toy_corpus)
    tc = TrainConfig(lr=0.01, epochs=5, seed=3)
    _, _, curve_a = train_pipeline(toy_corpus, config, tc)
    _, _, curve_b = train_pipeline(toy_corpus, config, tc)
    assert curve_a == curve_b


def test_loss_decreases(toy_corpus):
    config = toy_config(toy_corpus)
    tc = TrainConfig(lr=0.01, epochs=30, seed=0)
    _, _, curve = train_pipeline(toy_corpus, config, tc)
    assert curve[-1] < curve[0]


def test_minibatch_runs(toy_corpus):
    config = toy_config(toy_corpus)
    tc = TrainConfig(lr=0.01, epochs=3, batch_size=4, seed=0)
    params, _, curve = train_pipeline(toy_corpus, config, tc)
    assert len(curve) == 3


def test_sgd_differs_from_adam(toy_corpus):
    config = toy_config(toy_corpus)
    _, _, adam = train_pipeline(toy_corpus, config,
                                TrainConfig(lr=0.01, epochs=5, seed=0))
    _, _, sgd = train_pipeline(toy_corpus, config,
                               TrainConfig(lr=0.01, epochs=5,
                                           optimizer="sgd", seed=0))
    assert adam[0] == sgd[0]  # same init, same first forward
    assert adam[1:] != sgd[1:]


def test_train_config_validation():
    with pytest.raises(ValidationError):
        TrainConfig(lr=-1.0)
    with pytest.raises(ValidationError):
        TrainConfig(epochs=0)
    with pytest.raises(ValidationError):
        TrainConfig(optimizer="rmsprop")


# ---------------------------------------------------------------------------
# Checkpoint round trip


def trained_toy(toy_corpus, **cfg_kw):
    config = toy_config(toy_corpus, **cfg_kw)
    tc = TrainConfig(lr=0.01, epochs=5, seed=0)
    return train_pipeline(toy_corpus, config, tc)


def test_checkpoint_round_trip_bit_exact(tmp_path, toy_corpus):
    params, _, _ = trained_toy(toy_corpus)
    p1 = tmp_path / "a.bin"
    mdl.save_checkpoint(params, p1)
    loaded = mdl.load_checkpoint(p1, sorted(toy_corpus.users))
    # thresholds are stored as float32, so compare at f32 precision
    from dataclasses import replace
    f32 = lambda x: float(np.float32(x))
    assert loaded.config == replace(params.config,
                                    theta=f32(params.config.theta),
                                    gamma=f32(params.config.gamma),
                                    alpha=f32(params.config.alpha))
    p2 = tmp_path / "b.bin"
    mdl.save_checkpoint(loaded, p2)
    assert p2.read_bytes() == p1.read_bytes()
    # float32 payload: values agree to f32 precision
    for got, want in zip(loaded.trainable(), params.trainable()):
        np.testing.assert_allclose(got.detach().numpy(),
                                   want.detach().numpy(), rtol=1e-6,
                                   atol=1e-6)


def test_checkpoint_user_count_mismatch(tmp_path, toy_corpus):
    params, _, _ = trained_toy(toy_corpus)
    path = tmp_path / "c.bin"
    mdl.save_checkpoint(params, path)
    with pytest.raises(ValidationError, match="users"):
        mdl.load_checkpoint(path, ["only_one"])


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"XXXX" + b"\x00" * 12)
    with pytest.raises(ValidationError, match="magic"):
        mdl.load_checkpoint(path, [])


# ---------------------------------------------------------------------------
# Inductive inference


def manual_inference_oracle(params, graph, corpus, record, user_id,
                            cold_start=False, cold_social=True, k=5):
    """Hand-built augmented graph, checked against the Inferencer."""
    cfg = params.config
    train = corpus.train_records()
    with torch.no_grad():
        pooled = mdl.pooled_train_vectors(corpus, params)
        features = mdl.node_feature_matrix(pooled, params.user_emb)
        pooled_new = {m: mdl.pool_modality([record.matrix(m)], params, m)[0]
                      for m in MODALITIES}
    n_base = graph.num_nodes
    node_ids = {m: n_base + i for i, m in enumerate(MODALITIES)}
    rows = [pooled_new[m] for m in MODALITIES]
    edges = dict(graph.edges)
    if "homo" in cfg.families:
        for m in MODALITIES:
            vec = pooled_new[m].numpy()
            for j, rec in enumerate(train):
                sim = cosine(vec, pooled[m][j].numpy())
                if sim >= cfg.theta:
                    tgt = 3 * j + MODALITIES.index(m)
                    edges[(tgt, node_ids[m])] = sim
    if cold_start:
        u_node = n_base + 3
        rows.append(torch.zeros(cfg.node_dim, dtype=torch.float64))
        if cold_social and "homo" in cfg.families:
            offset = 3 * len(train)
            users = sorted(corpus.users)
            for pu in popular_users(corpus.users, cfg.alpha):
                edges[(offset + users.index(pu), u_node)] = 1.0
    else:
        u_node = 3 * len(train) + sorted(corpus.users).index(user_id)
    if "hetero" in cfg.families:
        for m in MODALITIES:
            edges[(u_node, node_ids[m])] = 1.0
    pairs = np.array(sorted((min(a, b), max(a, b)) for a, b in edges),
                     dtype=np.int64).T
    edge_index = np.concatenate([pairs, pairs[::-1]], axis=1)
    feats = torch.cat([features, torch.stack(rows)], dim=0)
    with torch.no_grad():
        z = (sage_forward(edge_index, feats, params.sage)
             if params.sage is not None else feats)
        overall = mdl.fuse(z[node_ids["visual"]], z[node_ids["acoustic"]],
                           z[node_ids["textual"]], z[u_node])
    return mdl.predict(overall, params, k=k), z, node_ids, u_node


def test_inference_matches_manual_oracle(toy_corpus):
    params, graph, _ = trained_toy(toy_corpus)
    record = toy_corpus.test_records()[0]
    pred = mdl.infer_new_video(record, record.user_id, params, graph,
                               toy_corpus, k=3)
    want, _, _, _ = manual_inference_oracle(params, graph, toy_corpus,
                                            record, record.user_id, k=3)
    np.testing.assert_allclose(pred.y_pred, want.y_pred, atol=1e-12)
    assert pred.ranked == want.ranked


def test_cold_inference_matches_manual_oracle(toy_corpus):
    params, graph, _ = trained_toy(toy_corpus)
    record = toy_corpus.test_records()[0]
    for social in (True, False):
        pred = mdl.infer_new_video(record, "newcomer", params, graph,
                                   toy_corpus, k=3, cold_start=True,
                                   cold_social=social)
        want, _, _, _ = manual_inference_oracle(
            params, graph, toy_corpus, record, "newcomer",
            cold_start=True, cold_social=social, k=3)
        np.testing.assert_allclose(pred.y_pred, want.y_pred, atol=1e-12)


def test_twin_video_gets_twin_embeddings(toy_corpus):
    # re-submitting a training video: the three new modality nodes are
    # automorphic with the original nodes, so embeddings coincide
    params, graph, _ = trained_toy(toy_corpus)
    twin_id = toy_corpus.split.train[0]
    record = toy_corpus.records[twin_id]
    _, z, node_ids, _ = manual_inference_oracle(
        params, graph, toy_corpus, record, record.user_id)
    for i, m in enumerate(MODALITIES):
        assert torch.allclose(z[node_ids[m]], z[3 * 0 + i], atol=1e-12)
    pred = mdl.infer_new_video(record, record.user_id, params, graph,
                               toy_corpus, k=3)
    assert len(pred.ranked) == 3


def test_unknown_user_requires_cold_flag(toy_corpus):
    params, graph, _ = trained_toy(toy_corpus)
    record = toy_corpus.test_records()[0]
    with pytest.raises(ValidationError, match="cold_start"):
        mdl.infer_new_video(record, "stranger", params, graph, toy_corpus)


def test_inference_deterministic(toy_corpus):
    params, graph, _ = trained_toy(toy_corpus)
    record = toy_corpus.test_records()[0]
    inf = mdl.Inferencer(params, graph, toy_corpus)
    a = inf.infer(record, record.user_id, k=3)
    b = inf.infer(record, record.user_id, k=3)
    assert np.array_equal(a.y_pred, b.y_pred) and a.ranked == b.ranked


# ---------------------------------------------------------------------------
# Ablated variants still run end to end


@pytest.mark.parametrize("cfg_kw", [
    {"use_attention": False},
    {"use_frm": False},
    {"families": frozenset({"homo"})},
    {"families": frozenset({"hetero"})},
    {"aggregator": "max"},
    {"activation": "tanh"},
])
def test_variant_end_to_end(toy_corpus, cfg_kw):
    params, graph, curve = trained_toy(toy_corpus, **cfg_kw)
    record = toy_corpus.test_records()[0]
    pred = mdl.infer_new_video(record, record.user_id, params, graph,
                               toy_corpus, k=3)
    assert len(pred.ranked) == 3
    assert all(math.isfinite(v) for v in curve)
