"""Deterministic synthetic corpus generator with planted topic structure.

Every topic owns one Gaussian feature center per modality plus a
disjoint tag pool; users post within a single topic.  Rows are sampled
around the topic center and L2-normalized so cosine thresholds behave
predictably.  Optional zero-mean distractor rows corrupt naive row
averaging, giving attention pooling something to learn to suppress.
A cold-start cohort (zero likes) is emitted as a
separate inference manifest.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import MODALITIES, write_bundle
from .errors import ValidationError


@dataclass(frozen=True)
class SynthSpec:
    topics: int = 5
    users_per_topic: int = 4
    posts_per_user: int = 10
    tags_per_topic: int = 6
    dim: int = 32
    separation: float = 3.0
    noise_std: float = 1.0
    rows: dict[str, int] = field(
        default_factory=lambda: {"visual": 6, "acoustic": 8, "textual": 5})
    noise_rows: int = 0
    noise_jitter: float = 0.5
    offtopic_prob: float = 0.0
    min_tags: int = 3
    max_tags: int = 6
    cold_users: int = 0
    cold_posts_per_user: int = 3
    cold_attenuation: float = 1.0  # center magnitude multiplier, cold posts
    seed: int = 1

    def __post_init__(self):
        counts = (self.topics, self.users_per_topic, self.posts_per_user,
                  self.tags_per_topic, self.dim)
        if any(c < 1 for c in counts):
            raise ValidationError("all synth counts must be >= 1")
        if self.separation <= 0:
            raise ValidationError("separation must be > 0")
        if not 0.0 <= self.offtopic_prob <= 1.0:
            raise ValidationError("offtopic_prob must be in [0, 1]")


def _unit_rows(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return mat / norms


def topic_tag(topic: int, i: int) -> str:
    return f"topic{topic}_tag{i}"


def generate(spec: SynthSpec, out_dir: str | Path) -> Path:
    """Write manifest + users + bundles (and a cold-start cohort) to disk."""
    out = Path(out_dir)
    bundles = out / "bundles"
    bundles.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)

    # separation measures center magnitude in units of the expected noise
    # norm (noise_std * sqrt(dim)), so cluster structure survives pooling
    scale = spec.separation * spec.noise_std * math.sqrt(spec.dim)
    centers = {}   # (topic, modality) -> unit direction * scale
    for t in range(spec.topics):
        for m in MODALITIES:
            c = rng.standard_normal(spec.dim)
            centers[(t, m)] = c / np.linalg.norm(c) * scale

    def sample_post(topic: int, atten: float = 1.0) -> dict[str, np.ndarray]:
        mats = {}
        for m in MODALITIES:
            rows = (atten * centers[(topic, m)]
                    + spec.noise_std * rng.standard_normal(
                        (spec.rows[m], spec.dim)))
            if spec.noise_rows:
                # zero-mean distractors: they corrupt a plain row mean but
                # carry no shared direction that could fake cluster edges
                extra = (spec.noise_jitter * scale / math.sqrt(spec.dim)
                         * rng.standard_normal((spec.noise_rows, spec.dim)))
                rows = np.concatenate([rows, extra], axis=0)
            mats[m] = _unit_rows(rows).astype(np.float32)
        return mats

    def sample_tags(topic: int) -> list[str]:
        hi = min(spec.max_tags, spec.tags_per_topic)
        lo = min(spec.min_tags, hi)
        n = int(rng.integers(lo, hi + 1))
        ids = rng.choice(spec.tags_per_topic, size=n, replace=False)
        return [topic_tag(topic, int(i)) for i in sorted(ids)]

    def post_topic(home: int) -> int:
        """Home topic, or with offtopic_prob a uniformly drawn other topic."""
        if spec.topics > 1 and rng.random() < spec.offtopic_prob:
            return int((home + 1 + rng.integers(spec.topics - 1)) % spec.topics)
        return home

    def emit_post(vid: str, uid: str, home: int, manifest_rows: list,
                  atten: float = 1.0, drift: bool = True) -> None:
        topic = post_topic(home) if drift else home
        mats = sample_post(topic, atten)
        path = bundles / f"{vid}.mvfb"
        write_bundle(path, mats["visual"], mats["acoustic"], mats["textual"])
        manifest_rows.append({
            "video_id": vid, "user_id": uid, "hashtags": sample_tags(topic),
            "features": str(path.relative_to(out))})

    manifest_rows: list[dict] = []
    user_rows: list[dict] = []
    for t in range(spec.topics):
        for u in range(spec.users_per_topic):
            uid = f"user_t{t}_{u}"
            # engagement concentrates in topic 0 ("trending"), so the
            # popular-user set is topically coherent and influence edges
            # toward it carry a usable prior
            if t == 0:
                likes = int(rng.integers(500, 1000))
                followers = int(rng.integers(1, 100))
            else:
                likes = int(rng.integers(0, 300))
                followers = int(rng.integers(100, 500))
            user_rows.append({"user_id": uid, "likes": likes,
                              "followers": followers})
            for p in range(spec.posts_per_user):
                # trending-topic posters stay on topic; everyone else
                # drifts with offtopic_prob
                emit_post(f"vid_t{t}_{u}_{p:03d}", uid, t, manifest_rows,
                          drift=(t != 0))

    # cold-start users mimic the most-engaging posters: their posts come
    # from popular users' home topics, so influence edges carry real signal
    home_topic = {row["user_id"]: int(row["user_id"].split("_")[1][1:])
                  for row in user_rows}
    ranked = sorted(user_rows,
                    key=lambda r: (-r["likes"] / r["followers"], r["user_id"]))
    popular = ranked[:math.ceil(0.1 * len(ranked))]

    cold_manifest: list[dict] = []
    cold_users: list[dict] = []
    for c in range(spec.cold_users):
        t = home_topic[popular[c % len(popular)]["user_id"]]
        uid = f"cold_{c}"
        cold_users.append({"user_id": uid, "likes": 0,
                           "followers": int(rng.integers(1, 500)),
                           "cold_start": True})
        for p in range(spec.cold_posts_per_user):
            # cold users post squarely on their influencer's topic; the
            # drift knob models established users only
            emit_post(f"vid_cold_{c}_{p:03d}", uid, t, cold_manifest,
                      atten=spec.cold_attenuation, drift=False)

    def dump(rows: list[dict], name: str) -> None:
        with open(out / name, "w", encoding="utf-8") as f:
            for row in rows:
                f.write(json.dumps(row) + "\n")

    dump(manifest_rows, "manifest.ndjson")
    dump(user_rows, "users.ndjson")
    if spec.cold_users:
        dump(cold_manifest, "cold_manifest.ndjson")
        dump(cold_users, "cold_users.ndjson")
    with open(out / "synth_spec.json", "w", encoding="utf-8") as f:
        json.dump({k: (dict(v) if isinstance(v, dict) else v)
                   for k, v in vars(spec).items()}, f, sort_keys=True)
    return out
