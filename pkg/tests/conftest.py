import numpy as np
import pytest

from hashrec.corpus import (Corpus, DatasetSplit, HashtagVocab,
                            MicroVideoRecord, UserRecord, build_user_history)


def make_record(video_id, user_id, rng, dim=6, rows=(3, 4, 2), tags=(0,),
                center=None):
    center = np.zeros(dim) if center is None else center
    mats = [rng.normal(size=(r, dim)) + center for r in rows]
    return MicroVideoRecord(
        video_id=video_id, user_id=user_id,
        visual=mats[0].astype(np.float32),
        acoustic=mats[1].astype(np.float32),
        textual=mats[2].astype(np.float32),
        hashtags=frozenset(tags))


def make_toy_corpus(n_topics=2, users_per_topic=2, posts_per_user=4, dim=6,
                    tags_per_topic=3, separation=4.0, seed=0):
    """Small in-memory corpus with planted topic clusters, no disk I/O."""
    rng = np.random.default_rng(seed)
    centers = {t: rng.normal(size=dim) / np.sqrt(dim) * separation
               for t in range(n_topics)}
    records, users = {}, {}
    counts = {}
    train, test = [], []
    for t in range(n_topics):
        pool = list(range(t * tags_per_topic, (t + 1) * tags_per_topic))
        for u in range(users_per_topic):
            uid = f"u{t}_{u}"
            users[uid] = UserRecord(user_id=uid,
                                    likes=int(rng.integers(0, 100)),
                                    followers=int(rng.integers(1, 50)))
            for p in range(posts_per_user):
                vid = f"v{t}_{u}_{p}"
                tags = tuple(rng.choice(pool, size=2, replace=False))
                rec = make_record(vid, uid, rng, dim=dim, tags=tags,
                                  center=centers[t])
                records[vid] = rec
                for g in tags:
                    counts[g] = counts.get(g, 0) + 1
                (test if p == posts_per_user - 1 else train).append(vid)
    n_tags = n_topics * tags_per_topic
    vocab = HashtagVocab(entries={f"tag{i}": i for i in range(n_tags)},
                         counts={i: counts.get(i, 1) for i in range(n_tags)})
    split = DatasetSplit(train=sorted(train), test=sorted(test), seed=seed)
    users = build_user_history(users, records, split)
    return Corpus(records=records, users=users, vocab=vocab, split=split)


@pytest.fixture
def toy_corpus():
    return make_toy_corpus()
