"""Corpus data model, preprocessing pipeline, splitting, and on-disk formats.

Pipeline order is fixed: normalize -> count -> frequency-filter ->
drop-incomplete -> filter-users -> split -> build-histories.  Feature
matrices are stored as float32 on disk and promoted to float64 by the
trainer.
"""

from __future__ import annotations

import json
import logging
import struct
import unicodedata
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, ValidationError

log = logging.getLogger(__name__)

BUNDLE_MAGIC = b"MVFB"
BUNDLE_VERSION = 1
MODALITIES = ("visual", "acoustic", "textual")
_MODALITY_CODES = {"visual": 0, "acoustic": 1, "textual": 2}
_CODE_MODALITIES = {v: k for k, v in _MODALITY_CODES.items()}


# ---------------------------------------------------------------------------
# Domain types


@dataclass(frozen=True)
class HashtagVocab:
    """Dense hashtag-id assignment plus per-tag occurrence counts."""

    entries: dict[str, int]
    counts: dict[int, int]

    def __post_init__(self):
        ids = sorted(self.entries.values())
        if ids != list(range(len(ids))):
            raise ValidationError("vocab ids must be dense 0..|H|-1")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def tags(self) -> list[str]:
        """Canonical tag strings indexed by hashtag id."""
        out = [""] * len(self.entries)
        for tag, i in self.entries.items():
            out[i] = tag
        return out

    @classmethod
    def from_counts(cls, counts: dict[str, int]) -> "HashtagVocab":
        entries = {tag: i for i, tag in enumerate(counts)}
        return cls(entries=entries, counts={entries[t]: c for t, c in counts.items()})


@dataclass
class MicroVideoRecord:
    """One micro-video post with its three modality feature matrices."""

    video_id: str
    user_id: str
    visual: np.ndarray
    acoustic: np.ndarray
    textual: np.ndarray
    hashtags: frozenset[int]
    features_path: str = ""

    def matrix(self, modality: str) -> np.ndarray:
        return getattr(self, modality)

    def is_complete(self) -> bool:
        mats = [self.visual, self.acoustic, self.textual]
        if any(m is None or m.size == 0 for m in mats):
            return False
        if len({m.shape[1] for m in mats}) != 1:
            return False
        return len(self.hashtags) > 0


@dataclass
class UserRecord:
    user_id: str
    likes: int
    followers: int
    history: frozenset[int] = frozenset()
    cold_start: bool = False

    def __post_init__(self):
        if self.likes < 0 or self.followers < 0:
            raise ValidationError(f"user {self.user_id}: negative likes/followers")


@dataclass
class DatasetSplit:
    train: list[str]
    test: list[str]
    seed: int

    def __post_init__(self):
        if set(self.train) & set(self.test):
            raise ValidationError("train/test overlap")


@dataclass
class Corpus:
    """Preprocessed dataset: records, users, vocabulary and split."""

    records: dict[str, MicroVideoRecord]
    users: dict[str, UserRecord]
    vocab: HashtagVocab
    split: DatasetSplit
    meta: dict = field(default_factory=dict)

    @property
    def feature_dim(self) -> int:
        first = next(iter(self.records.values()))
        return first.visual.shape[1]

    def train_records(self) -> list[MicroVideoRecord]:
        return [self.records[v] for v in self.split.train]

    def test_records(self) -> list[MicroVideoRecord]:
        return [self.records[v] for v in self.split.test]


# ---------------------------------------------------------------------------
# Feature bundle binary format


def write_bundle(path: str | Path, visual: np.ndarray, acoustic: np.ndarray,
                 textual: np.ndarray) -> None:
    """Write the three modality matrices as a little-endian MVFB bundle."""
    mats = {"visual": visual, "acoustic": acoustic, "textual": textual}
    with open(path, "wb") as f:
        f.write(BUNDLE_MAGIC)
        f.write(struct.pack("<I", BUNDLE_VERSION))
        f.write(struct.pack("<B", len(mats)))
        for name, mat in mats.items():
            mat = np.ascontiguousarray(mat, dtype="<f4")
            if mat.ndim != 2:
                mat = mat.reshape(0, 0) if mat.size == 0 else np.atleast_2d(mat)
            rows, cols = mat.shape
            f.write(struct.pack("<BII", _MODALITY_CODES[name], rows, cols))
            f.write(mat.tobytes())


def read_bundle(path: str | Path) -> dict[str, np.ndarray]:
    """Read an MVFB bundle; rejects wrong magic or version."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != BUNDLE_MAGIC:
            raise ValidationError(f"{path}: bad bundle magic {magic!r}")
        (version,) = struct.unpack("<I", f.read(4))
        if version != BUNDLE_VERSION:
            raise ValidationError(f"{path}: unsupported bundle version {version}")
        (count,) = struct.unpack("<B", f.read(1))
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            code, rows, cols = struct.unpack("<BII", f.read(9))
            if code not in _CODE_MODALITIES:
                raise ValidationError(f"{path}: unknown modality code {code}")
            buf = f.read(4 * rows * cols)
            if len(buf) != 4 * rows * cols:
                raise ValidationError(f"{path}: truncated bundle")
            out[_CODE_MODALITIES[code]] = np.frombuffer(
                buf, dtype="<f4").reshape(rows, cols).copy()
    return out


# ---------------------------------------------------------------------------
# Preprocessing operations


def normalize_hashtag(raw: str) -> str | None:
    """Canonicalize one hashtag string; returns None when nothing is left."""
    tag = unicodedata.normalize("NFC", raw).strip().lstrip("#").strip().lower()
    if not tag:
        log.warning("hashtag %r empty after normalization; dropped", raw)
        return None
    return tag


def count_hashtags(tag_lists: list[list[str]]) -> HashtagVocab:
    """Count normalized tags over the full pre-split corpus (set per post)."""
    counts: dict[str, int] = {}
    for tags in tag_lists:
        seen = set()
        for raw in tags:
            tag = normalize_hashtag(raw)
            if tag is not None and tag not in seen:
                seen.add(tag)
                counts[tag] = counts.get(tag, 0) + 1
    return HashtagVocab.from_counts(counts)


def filter_low_frequency(vocab: HashtagVocab, min_count: int = 50) -> HashtagVocab:
    """Drop tags occurring fewer than min_count times; re-densify ids."""
    kept = {tag: vocab.counts[i] for tag, i in vocab.entries.items()
            if vocab.counts[i] >= min_count}
    if not kept:
        raise ConfigError(
            f"no hashtag reaches min_count={min_count}; empty vocabulary")
    # preserve original id order for stability
    ordered = sorted(kept, key=lambda t: vocab.entries[t])
    return HashtagVocab.from_counts({t: kept[t] for t in ordered})


def drop_incomplete(records: list[MicroVideoRecord]) -> list[MicroVideoRecord]:
    """Drop records missing a modality or left with no retained hashtags."""
    out = []
    for rec in records:
        if not isinstance(rec.hashtags, frozenset):
            rec = replace(rec, hashtags=frozenset(rec.hashtags))
        if rec.is_complete():
            out.append(rec)
        else:
            log.info("dropping %s: missing modality or no retained hashtags",
                     rec.video_id)
    return out


def filter_users(records: list[MicroVideoRecord], users: dict[str, UserRecord],
                 min_posts: int = 4) -> tuple[list[MicroVideoRecord], dict[str, UserRecord]]:
    """Keep non-cold-start users with >= min_posts retained records."""
    per_user: dict[str, int] = {}
    for rec in records:
        per_user[rec.user_id] = per_user.get(rec.user_id, 0) + 1
    kept_users = {}
    for uid, user in users.items():
        if user.cold_start or per_user.get(uid, 0) >= min_posts:
            kept_users[uid] = user
        else:
            log.info("dropping user %s: %d < %d posts", uid,
                     per_user.get(uid, 0), min_posts)
    kept_records = [r for r in records if r.user_id in kept_users]
    return kept_records, kept_users


def split_records(records: list[MicroVideoRecord], ratio: float = 0.8,
                  seed: int = 0) -> DatasetSplit:
    """Deterministic per-user stratified split.

    Every user keeps ~ratio of their posts in train; users with a single
    post go entirely to train so each test user has train history.
    """
    by_user: dict[str, list[str]] = {}
    for rec in records:
        by_user.setdefault(rec.user_id, []).append(rec.video_id)
    train, test = [], []
    rng = np.random.default_rng(seed)
    for uid in sorted(by_user):
        vids = sorted(by_user[uid])
        order = rng.permutation(len(vids))
        n = len(vids)
        n_test = int(round(n * (1.0 - ratio)))
        if n < 2 or n - n_test < 1:
            n_test = 0 if n < 2 else max(0, n - 1)
        test.extend(vids[i] for i in order[:n_test])
        train.extend(vids[i] for i in order[n_test:])
    return DatasetSplit(train=sorted(train), test=sorted(test), seed=seed)


def build_user_history(users: dict[str, UserRecord],
                       records: dict[str, MicroVideoRecord],
                       split: DatasetSplit) -> dict[str, UserRecord]:
    """History = union of hashtags over TRAIN posts only; empty => cold start."""
    train_set = set(split.train)
    hist: dict[str, set[int]] = {uid: set() for uid in users}
    for vid in train_set:
        rec = records[vid]
        if rec.user_id in hist:
            hist[rec.user_id] |= rec.hashtags
    out = {}
    for uid, user in users.items():
        h = frozenset(hist[uid])
        out[uid] = replace(user, history=h, cold_start=len(h) == 0)
    return out


# ---------------------------------------------------------------------------
# Manifest ingestion


def _load_ndjson(path: str | Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{line_no}: bad JSON: {exc}") from exc
    return rows


def load_manifest(manifest_path: str | Path) -> list[dict]:
    """Read the post manifest; feature paths resolved relative to it."""
    base = Path(manifest_path).parent
    posts = []
    for row in _load_ndjson(manifest_path):
        for key in ("video_id", "user_id", "hashtags", "features"):
            if key not in row:
                raise ValidationError(f"manifest row missing {key!r}: {row}")
        row = dict(row)
        row["features"] = str((base / row["features"]).resolve())
        posts.append(row)
    return posts


def load_users(users_path: str | Path) -> dict[str, UserRecord]:
    users = {}
    for row in _load_ndjson(users_path):
        for key in ("user_id", "likes", "followers"):
            if key not in row:
                raise ValidationError(f"users row missing {key!r}: {row}")
        users[row["user_id"]] = UserRecord(
            user_id=row["user_id"], likes=int(row["likes"]),
            followers=int(row["followers"]),
            cold_start=bool(row.get("cold_start", False)))
    return users


def ingest(manifest_path: str | Path, users_path: str | Path, *,
           min_count: int = 50, min_posts: int = 4, ratio: float = 0.8,
           seed: int = 0) -> Corpus:
    """Run the full preprocessing pipeline over a raw manifest."""
    posts = load_manifest(manifest_path)
    users = load_users(users_path)

    vocab = count_hashtags([p["hashtags"] for p in posts])
    vocab = filter_low_frequency(vocab, min_count)

    records = []
    for p in posts:
        if p["user_id"] not in users:
            raise ValidationError(f"post {p['video_id']}: unknown user {p['user_id']}")
        mats = read_bundle(p["features"])
        ids = set()
        for raw in p["hashtags"]:
            tag = normalize_hashtag(raw)
            if tag is not None and tag in vocab.entries:
                ids.add(vocab.entries[tag])
        records.append(MicroVideoRecord(
            video_id=p["video_id"], user_id=p["user_id"],
            visual=mats.get("visual", np.zeros((0, 0), dtype=np.float32)),
            acoustic=mats.get("acoustic", np.zeros((0, 0), dtype=np.float32)),
            textual=mats.get("textual", np.zeros((0, 0), dtype=np.float32)),
            hashtags=frozenset(ids), features_path=p["features"]))

    records = drop_incomplete(records)
    records, users = filter_users(records, users, min_posts)
    if not records:
        raise ConfigError("no records survive preprocessing")
    split = split_records(records, ratio, seed)
    record_map = {r.video_id: r for r in sorted(records, key=lambda r: r.video_id)}
    users = build_user_history(users, record_map, split)
    meta = {"min_count": min_count, "min_posts": min_posts,
            "ratio": ratio, "seed": seed}
    return Corpus(records=record_map, users=users, vocab=vocab,
                  split=split, meta=meta)


def load_inference_manifest(manifest_path: str | Path,
                            vocab: HashtagVocab) -> list[MicroVideoRecord]:
    """Read a manifest of unseen posts, projecting tags onto a vocabulary.

    Used for held-out cohorts (e.g. cold-start users); records whose
    tags all fall outside the vocabulary are dropped with a log line.
    """
    out = []
    for p in load_manifest(manifest_path):
        mats = read_bundle(p["features"])
        ids = set()
        for raw in p["hashtags"]:
            tag = normalize_hashtag(raw)
            if tag is not None and tag in vocab.entries:
                ids.add(vocab.entries[tag])
        rec = MicroVideoRecord(
            video_id=p["video_id"], user_id=p["user_id"],
            visual=mats.get("visual", np.zeros((0, 0), dtype=np.float32)),
            acoustic=mats.get("acoustic", np.zeros((0, 0), dtype=np.float32)),
            textual=mats.get("textual", np.zeros((0, 0), dtype=np.float32)),
            hashtags=frozenset(ids), features_path=p["features"])
        if rec.is_complete():
            out.append(rec)
        else:
            log.info("inference manifest: dropping %s", rec.video_id)
    return out


# ---------------------------------------------------------------------------
# Corpus directory round-trip


def save_corpus(corpus: Corpus, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "vocab.json", "w", encoding="utf-8") as f:
        json.dump({"entries": corpus.vocab.entries,
                   "counts": {str(k): v for k, v in corpus.vocab.counts.items()}},
                  f, sort_keys=True)
    with open(out / "records.ndjson", "w", encoding="utf-8") as f:
        for rec in corpus.records.values():
            f.write(json.dumps({
                "video_id": rec.video_id, "user_id": rec.user_id,
                "hashtags": sorted(rec.hashtags),
                "features": rec.features_path}) + "\n")
    with open(out / "users.ndjson", "w", encoding="utf-8") as f:
        for uid in sorted(corpus.users):
            u = corpus.users[uid]
            f.write(json.dumps({
                "user_id": u.user_id, "likes": u.likes,
                "followers": u.followers, "history": sorted(u.history),
                "cold_start": u.cold_start}) + "\n")
    with open(out / "split.json", "w", encoding="utf-8") as f:
        json.dump({"train": corpus.split.train, "test": corpus.split.test,
                   "seed": corpus.split.seed}, f)
    with open(out / "meta.json", "w", encoding="utf-8") as f:
        json.dump(corpus.meta, f, sort_keys=True)


def load_corpus(corpus_dir: str | Path) -> Corpus:
    d = Path(corpus_dir)
    if not (d / "vocab.json").exists():
        raise ValidationError(f"{d}: not a corpus directory (vocab.json missing)")
    with open(d / "vocab.json", encoding="utf-8") as f:
        raw = json.load(f)
    vocab = HashtagVocab(entries=raw["entries"],
                         counts={int(k): v for k, v in raw["counts"].items()})
    records = {}
    for row in _load_ndjson(d / "records.ndjson"):
        mats = read_bundle(row["features"])
        records[row["video_id"]] = MicroVideoRecord(
            video_id=row["video_id"], user_id=row["user_id"],
            visual=mats["visual"], acoustic=mats["acoustic"],
            textual=mats["textual"], hashtags=frozenset(row["hashtags"]),
            features_path=row["features"])
    users = {}
    for row in _load_ndjson(d / "users.ndjson"):
        users[row["user_id"]] = UserRecord(
            user_id=row["user_id"], likes=row["likes"],
            followers=row["followers"], history=frozenset(row["history"]),
            cold_start=row["cold_start"])
    with open(d / "split.json", encoding="utf-8") as f:
        s = json.load(f)
    split = DatasetSplit(train=s["train"], test=s["test"], seed=s["seed"])
    meta = {}
    if (d / "meta.json").exists():
        with open(d / "meta.json", encoding="utf-8") as f:
            meta = json.load(f)
    return Corpus(records=records, users=users, vocab=vocab, split=split,
                  meta=meta)
