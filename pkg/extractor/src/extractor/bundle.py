"""Writer for the MVFB feature-bundle format the engine consumes.

Layout (little-endian throughout):
  magic  b"MVFB"
  u32    version (1)
  u8     matrix count (3)
  per matrix: u8 modality code (0=visual, 1=acoustic, 2=textual),
              u32 rows, u32 cols, rows*cols float32 payload

Text padding rows are emitted as zero vectors; downstream attention
pooling is expected to learn to down-weight them. A modality with zero
rows marks the track as missing so the engine can drop the record.
"""

import struct
from pathlib import Path

import numpy as np

MAGIC = b"MVFB"
VERSION = 1
MODALITY_CODES = {"visual": 0, "acoustic": 1, "textual": 2}


def write_bundle(path: str | Path, visual: np.ndarray, acoustic: np.ndarray,
                 textual: np.ndarray) -> None:
    mats = {"visual": visual, "acoustic": acoustic, "textual": textual}
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<B", len(mats)))
        for name, mat in mats.items():
            mat = np.ascontiguousarray(mat, dtype="<f4")
            if mat.ndim != 2:
                raise ValueError(f"{name}: expected a 2-D matrix")
            rows, cols = mat.shape
            f.write(struct.pack("<BII", MODALITY_CODES[name], rows, cols))
            f.write(mat.tobytes())
