"""Font embedding database: build, persist, and query by cosine similarity.

File format (little-endian): magic ``FONTDB1\n``, u32 entry count, then per
entry a u32-length-prefixed UTF-8 id, u32-length-prefixed UTF-8 path, u32
dimension, and the float32 embedding vector.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fonts import load_glyph_outlines
from .raster import render
from .scorer import ScorerRequest

MAGIC = b"FONTDB1\n"
DEFAULT_PROBE_TEXT = "handgloves"


class FontDbError(Exception):
    pass


@dataclass
class FontEmbeddingDB:
    entries: list[tuple[str, str, np.ndarray]]  # (font_id, font_path, unit vector)

    def __post_init__(self):
        dims = {e[2].shape[0] for e in self.entries}
        if len(dims) > 1:
            raise FontDbError(f"mixed embedding dimensions: {sorted(dims)}")
        for fid, _, vec in self.entries:
            n = float(np.linalg.norm(vec))
            if abs(n - 1.0) > 1e-6:
                raise FontDbError(f"embedding for {fid!r} not unit-norm ({n:.8f})")

    @property
    def dim(self) -> int:
        return self.entries[0][2].shape[0] if self.entries else 0

    def save(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", len(self.entries)))
            for fid, fpath, vec in self.entries:
                for s in (fid, fpath):
                    raw = s.encode("utf-8")
                    fh.write(struct.pack("<I", len(raw)))
                    fh.write(raw)
                v = np.ascontiguousarray(vec, dtype="<f4")
                fh.write(struct.pack("<I", v.shape[0]))
                fh.write(v.tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "FontEmbeddingDB":
        with open(path, "rb") as fh:
            if fh.read(len(MAGIC)) != MAGIC:
                raise FontDbError(f"{path}: bad magic (not a FONTDB1 file)")
            (count,) = struct.unpack("<I", fh.read(4))
            entries = []
            for _ in range(count):
                strs = []
                for _ in range(2):
                    (n,) = struct.unpack("<I", fh.read(4))
                    strs.append(fh.read(n).decode("utf-8"))
                (dim,) = struct.unpack("<I", fh.read(4))
                vec = np.frombuffer(fh.read(dim * 4), dtype="<f4").astype(np.float64)
                entries.append((strs[0], strs[1], vec))
        return cls(entries)


def select_font(prompt_embedding: np.ndarray, db: FontEmbeddingDB) -> tuple[str, float]:
    """Cosine-similarity argmax; ties go to the lexicographically smallest id."""
    if not db.entries:
        raise FontDbError("font database is empty")
    p = np.asarray(prompt_embedding, dtype=np.float64).ravel()
    if p.shape[0] != db.dim:
        raise FontDbError(f"prompt embedding dim {p.shape[0]} != db dim {db.dim}")
    norm = float(np.linalg.norm(p))
    if norm == 0.0:
        raise FontDbError("zero prompt embedding")
    p = p / norm
    best_id, best_sim = None, -np.inf
    for fid, _, vec in sorted(db.entries, key=lambda e: e[0]):
        sim = float(p @ vec)
        if sim > best_sim:
            best_id, best_sim = fid, sim
    return best_id, best_sim


def font_path(db: FontEmbeddingDB, font_id: str) -> str:
    for fid, fpath, _ in db.entries:
        if fid == font_id:
            return fpath
    raise FontDbError(f"font id {font_id!r} not in database")


def build_db(
    font_paths: list[str | Path],
    scorer,
    probe_text: str = DEFAULT_PROBE_TEXT,
    image_size: int = 512,
) -> FontEmbeddingDB:
    """Render the probe text in each font, embed via the scorer, L2-normalize.

    Per-font failures are warned and skipped; an empty result is an error.
    """
    entries = []
    failures = []
    for fp in font_paths:
        fp = str(fp)
        try:
            layout = load_glyph_outlines(fp, probe_text)
            image = render(layout, image_size)
            resp = scorer.score(
                ScorerRequest(
                    kind="font-embed",
                    image=image.to_guidance().astype(np.float32),
                )
            )
            vec = np.asarray(resp.features, dtype=np.float64)
            norm = float(np.linalg.norm(vec))
            if norm == 0.0 or not np.all(np.isfinite(vec)):
                raise FontDbError("degenerate embedding")
            entries.append((Path(fp).stem, fp, vec / norm))
        except Exception as exc:  # noqa: BLE001 - per-font isolation is the contract
            failures.append((fp, exc))
            warnings.warn(f"skipping font {fp}: {exc}", stacklevel=2)
    if not entries:
        raise FontDbError(
            "all fonts failed: " + "; ".join(f"{p}: {e}" for p, e in failures)
        )
    return FontEmbeddingDB(entries)
