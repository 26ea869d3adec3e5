"""Deterministic caption tokenizer.

Pretrained vocabularies are unavailable offline, so captions are
lowercased, split on non-alphanumeric runs, and each word is hashed
into a stable id range. Special ids follow the usual convention:
0 = [PAD], 101 = [CLS], 102 = [SEP]; word ids start above the reserved
block. Combined with the fixed-seed encoders this keeps the whole text
path reproducible; swap in a real vocabulary alongside pinned weights
if checkpoint-faithful features are needed.
"""

import hashlib
import re

PAD_ID = 0
CLS_ID = 101
SEP_ID = 102
RESERVED = 1_000

_WORD = re.compile(r"[a-z0-9]+")


def word_id(word: str, vocab_size: int) -> int:
    digest = hashlib.sha1(word.encode("utf-8")).digest()
    return RESERVED + int.from_bytes(digest[:8], "big") % (vocab_size - RESERVED)


def tokenize(caption: str, cap: int, vocab_size: int) -> list[int]:
    """[CLS] + hashed words + [SEP], truncated/padded to exactly `cap` ids."""
    words = _WORD.findall(caption.lower())
    body = [word_id(w, vocab_size) for w in words[:cap - 2]]
    ids = [CLS_ID] + body + [SEP_ID]
    return ids + [PAD_ID] * (cap - len(ids))
