"""Command-line entry point.

Subcommands: ingest / synth / build-graph / train / recommend /
evaluate / sweep / ablate.  Value precedence is flags > config file >
defaults; exit codes: 0 success, 1 validation/usage error, 2 runtime
failure.  HASHREC_SEED serves as a fallback seed source.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

from . import ablation, synth
from .corpus import ingest, load_corpus, load_inference_manifest, read_bundle, save_corpus
from .errors import ConfigError, TrainingError, ValidationError
from .graph import load_graph, save_graph
from .metrics import k_sweep, rank_test_posts
from .model import (MODALITIES, ModelConfig, TrainConfig, MicroVideoRecord,
                    infer_new_video, load_checkpoint, save_checkpoint)
from .pipeline import build_graph, train_pipeline

log = logging.getLogger("hashrec")

DEFAULTS = {
    "min_count": 50, "min_posts": 4, "split": 0.8,
    "theta": 0.5, "gamma": 0.5, "alpha": 0.1, "families": "homo,hetero",
    "k": 5, "lr": 1e-3, "epochs": 200, "depth": 2,
    "aggregator": "mean", "activation": "relu", "optimizer": "adam",
    "seed": 0, "threads": 0,
}


@dataclass
class RunConfig:
    """Merged settings with per-value provenance (flag/config/default/env)."""

    values: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def get(self, key):
        return self.values[key]


def _read_config_file(path: str) -> dict:
    """Flat key=value file; '#' starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{line_no}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = val
    return out


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg_file = _read_config_file(args.config) if getattr(args, "config", None) else {}
    rc = RunConfig()
    for key, default in DEFAULTS.items():
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            rc.values[key], rc.provenance[key] = flag_val, "flag"
        elif key in cfg_file:
            rc.values[key] = type(default)(cfg_file[key]) if not isinstance(
                default, str) else cfg_file[key]
            rc.provenance[key] = "config-file"
        elif key == "seed" and os.environ.get("HASHREC_SEED"):
            rc.values[key] = int(os.environ["HASHREC_SEED"])
            rc.provenance[key] = "env"
        else:
            rc.values[key], rc.provenance[key] = default, "default"
    return rc


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        self.print_usage(sys.stderr)
        raise SystemExit(1) from None


def _families(text: str) -> frozenset[str]:
    fams = frozenset(s.strip() for s in text.split(",") if s.strip())
    if not fams or fams - {"homo", "hetero"}:
        raise ValidationError(f"bad --families value {text!r}")
    return fams


def _model_config(corpus, rc: RunConfig, args) -> ModelConfig:
    return ModelConfig(
        feature_dim=corpus.feature_dim, vocab_size=len(corpus.vocab),
        num_users=len(corpus.users),
        hidden_dim=getattr(args, "hidden_dim", None),
        depth=rc.get("depth"), activation=rc.get("activation"),
        aggregator=rc.get("aggregator"), theta=rc.get("theta"),
        gamma=rc.get("gamma"), alpha=rc.get("alpha"),
        families=_families(rc.get("families")),
        use_attention=not getattr(args, "no_attention", False),
        use_frm=not getattr(args, "no_frm", False),
        seed=rc.get("seed"))


def build_parser() -> _Parser:
    p = _Parser(prog="hashrec", description=__doc__)
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--seed", type=int, help=f"RNG seed (default {DEFAULTS['seed']})")
    p.add_argument("--threads", type=int,
                   help="cap torch worker threads (default: library choice)")
    p.add_argument("--quiet", action="store_true", help="suppress info logs")
    p.add_argument("--json", action="store_true", dest="json_logs",
                   help="machine-readable NDJSON logs")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("ingest", help="preprocess a raw manifest into a corpus dir")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--users", required=True)
    sp.add_argument("--min-count", type=int, dest="min_count",
                    help=f"hashtag frequency floor (default {DEFAULTS['min_count']})")
    sp.add_argument("--min-posts", type=int, dest="min_posts",
                    help=f"posts-per-user floor (default {DEFAULTS['min_posts']})")
    sp.add_argument("--split", type=float, help="train ratio (default 0.8)")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("synth", help="generate a planted synthetic dataset")
    sp.add_argument("--topics", type=int, default=5)
    sp.add_argument("--users-per-topic", type=int, default=4)
    sp.add_argument("--posts-per-user", type=int, default=10)
    sp.add_argument("--tags-per-topic", type=int, default=6)
    sp.add_argument("--dim", type=int, default=32)
    sp.add_argument("--sep", type=float, default=3.0)
    sp.add_argument("--noise-rows", type=int, default=0)
    sp.add_argument("--cold-users", type=int, default=0)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("build-graph", help="assemble the interaction graph")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--theta", type=float)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--families", help="homo,hetero subset (default both)")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("train", help="train a model over a corpus + graph")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--graph", help="graph file (default: rebuilt from corpus)")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--optimizer", choices=("adam", "sgd"))
    sp.add_argument("--depth", type=int)
    sp.add_argument("--hidden-dim", type=int, dest="hidden_dim")
    sp.add_argument("--aggregator", choices=("mean", "max", "min", "sum"))
    sp.add_argument("--activation", choices=("relu", "tanh", "identity"))
    sp.add_argument("--theta", type=float)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--families")
    sp.add_argument("--no-attention", action="store_true")
    sp.add_argument("--no-frm", action="store_true")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("recommend", help="rank hashtags for one new video")
    sp.add_argument("--model", required=True)
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--graph", help="graph file (default: graph.bin next to model)")
    sp.add_argument("--video", required=True, help="feature bundle path")
    sp.add_argument("--video-id", default="new-video")
    sp.add_argument("--user", required=True)
    sp.add_argument("--cold-start", action="store_true")
    sp.add_argument("--k", type=int)
    sp.add_argument("--out", help="write NDJSON here instead of stdout")

    sp = sub.add_parser("evaluate", help="metrics over the held-out split")
    sp.add_argument("--model", required=True)
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--graph")
    sp.add_argument("--k", type=int)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("sweep", help="K-sweep metrics table")
    sp.add_argument("--model", required=True)
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--graph")
    sp.add_argument("--k-min", type=int, default=1, dest="k_min")
    sp.add_argument("--k-max", type=int, default=9, dest="k_max")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("ablate", help="configuration grid over synthetic corpora")
    sp.add_argument("--matrix", help="TOML matrix file (default: built-in grid)")
    sp.add_argument("--workdir")
    sp.add_argument("--out", required=True)
    return p


class _JsonFormatter(logging.Formatter):
    def format(self, record):
        return json.dumps({"level": record.levelname.lower(),
                           "logger": record.name,
                           "message": record.getMessage()})


def _setup_logging(args) -> None:
    handler = logging.StreamHandler()
    if getattr(args, "json_logs", False):
        handler.setFormatter(_JsonFormatter())
    else:
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(logging.WARNING if args.quiet else logging.INFO)


def _load_model_and_graph(args, rc):
    corpus = load_corpus(args.corpus)
    params = load_checkpoint(args.model, sorted(corpus.users))
    graph_path = args.graph or str(Path(args.model).parent / "graph.bin")
    if not Path(graph_path).exists():
        raise ValidationError(
            f"graph file {graph_path!r} not found; pass --graph")
    return corpus, params, load_graph(graph_path)


def _ablation_matrix_from_toml(path: str) -> ablation.AblationMatrix:
    import tomllib
    with open(path, "rb") as f:
        raw = tomllib.load(f)
    base = raw.get("base", {})
    synth_keys = {f.name for f in dc_fields(synth.SynthSpec)}
    synth_kwargs = {k: v for k, v in base.items() if k in synth_keys}
    matrix_kwargs = {k: v for k, v in base.items()
                     if k in ("seeds", "min_count", "min_posts", "ratio",
                              "epochs", "lr", "k")}
    matrix = ablation.AblationMatrix(
        synth_spec=synth.SynthSpec(**synth_kwargs), **matrix_kwargs)
    configs = raw.get("configs", [])
    if configs:
        for c in configs:
            if "families" in c:
                c["families"] = frozenset(c["families"])
        matrix.configs = configs
    else:
        matrix.configs = ablation.default_matrix().configs
    return matrix


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args)
    rc = resolve_config(args)
    if rc.get("threads"):
        import torch
        torch.set_num_threads(rc.get("threads"))

    cmd = args.command
    if cmd == "ingest":
        corpus = ingest(args.manifest, args.users,
                        min_count=rc.get("min_count"),
                        min_posts=rc.get("min_posts"),
                        ratio=rc.get("split"), seed=rc.get("seed"))
        save_corpus(corpus, args.out)
        log.info("corpus: %d records, %d users, %d tags -> %s",
                 len(corpus.records), len(corpus.users), len(corpus.vocab),
                 args.out)
        return 0

    if cmd == "synth":
        spec = synth.SynthSpec(
            topics=args.topics, users_per_topic=args.users_per_topic,
            posts_per_user=args.posts_per_user,
            tags_per_topic=args.tags_per_topic, dim=args.dim,
            separation=args.sep, noise_rows=args.noise_rows,
            cold_users=args.cold_users, seed=rc.get("seed"))
        synth.generate(spec, args.out)
        log.info("synthetic dataset written to %s", args.out)
        return 0

    if cmd == "build-graph":
        corpus = load_corpus(args.corpus)
        cfg = _model_config(corpus, rc, args)
        graph = build_graph(corpus, cfg)
        save_graph(graph, args.out)
        log.info("graph: %d nodes, %d edges -> %s", graph.num_nodes,
                 len(graph.edges), args.out)
        return 0

    if cmd == "train":
        corpus = load_corpus(args.corpus)
        cfg = _model_config(corpus, rc, args)
        graph = load_graph(args.graph) if args.graph else None
        train_cfg = TrainConfig(lr=rc.get("lr"), epochs=rc.get("epochs"),
                                optimizer=rc.get("optimizer"),
                                seed=rc.get("seed"))
        params, graph, curve = train_pipeline(corpus, cfg, train_cfg, graph)
        save_checkpoint(params, args.out)
        save_graph(graph, Path(args.out).parent / "graph.bin")
        log.info("final loss %.6f after %d epochs -> %s", curve[-1],
                 len(curve), args.out)
        return 0

    if cmd == "recommend":
        corpus, params, graph = _load_model_and_graph(args, rc)
        mats = read_bundle(args.video)
        record = MicroVideoRecord(
            video_id=args.video_id, user_id=args.user,
            visual=mats["visual"], acoustic=mats["acoustic"],
            textual=mats["textual"], hashtags=frozenset())
        pred = infer_new_video(record, args.user, params, graph, corpus,
                               k=rc.get("k"), cold_start=args.cold_start)
        tags = corpus.vocab.tags
        payload = json.dumps({
            "video_id": args.video_id,
            "hashtags": [{"tag": tags[i], "score": float(pred.y_pred[i])}
                         for i in pred.ranked]})
        if args.out:
            Path(args.out).write_text(payload + "\n", encoding="utf-8")
        else:
            print(payload)
        return 0

    if cmd in ("evaluate", "sweep"):
        corpus, params, graph = _load_model_and_graph(args, rc)
        k_min = args.k_min if cmd == "sweep" else rc.get("k")
        k_max = args.k_max if cmd == "sweep" else rc.get("k")
        ranked = rank_test_posts(params, graph, corpus, k_max=k_max)
        report = k_sweep(ranked, k_min=k_min, k_max=k_max)
        report.write_csv(args.out, seed=params.config.seed)
        for row in report.rows:
            log.info("K=%d hit=%.4f p=%.4f r=%.4f f1=%.4f", row.k,
                     row.hit_rate, row.precision, row.recall, row.f1)
        return 0

    if cmd == "ablate":
        matrix = (_ablation_matrix_from_toml(args.matrix) if args.matrix
                  else ablation.default_matrix())
        rows = ablation.ablation_run(matrix, args.workdir)
        ablation.write_rows(rows, args.out)
        for name, stats in ablation.summarize(rows).items():
            mean, std = stats["f1"]
            log.info("%s: f1 %.4f +- %.4f", name, mean, std)
        return 0

    raise ValidationError(f"unknown command {cmd!r}")


def main(argv: list[str] | None = None) -> int:
    try:
        return run(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ValidationError, ConfigError) as exc:
        log.error("%s", exc)
        return 1
    except TrainingError as exc:
        log.error("%s", exc)
        return 2
    except Exception as exc:  # unexpected runtime failure
        log.exception("unexpected failure: %s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
