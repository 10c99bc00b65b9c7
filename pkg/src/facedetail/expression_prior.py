"""Expression priors from a semantic-feature dictionary.

Features are opaque vectors produced elsewhere (an emotion network plus
appearance descriptors).  :func:`downsampled_pixels` is a stand-in extractor
so the command line runs end to end; it carries no semantic meaning.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

DICT_MAGIC = b"FACEDETAIL-DICT 1\n"


@dataclass(frozen=True, eq=False)
class SemanticDictionary:
    """Feature -> expression pairs, stored as float32 rows."""

    features: np.ndarray     # (N, D) float32
    expressions: np.ndarray  # (N, Ke) float32

    def __post_init__(self):
        if self.features.ndim != 2 or self.expressions.ndim != 2:
            raise ValueError("features and expressions must be 2-D")
        if len(self.features) != len(self.expressions) or len(self.features) == 0:
            raise ValueError("dictionary needs at least one entry and matching row counts")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")
        self.features.setflags(write=False)
        self.expressions.setflags(write=False)

    def __len__(self) -> int:
        return len(self.features)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def expression_dim(self) -> int:
        return self.expressions.shape[1]


def build_dictionary(samples: Iterable[Tuple[Sequence[float], Sequence[float]]]) -> SemanticDictionary:
    feats, exprs = [], []
    for f, e in samples:
        f = np.asarray(f, dtype=float).ravel()
        e = np.asarray(e, dtype=float).ravel()
        if feats and (f.size != feats[0].size or e.size != exprs[0].size):
            raise ValueError(f"sample {len(feats)} has dimensions ({f.size}, {e.size}), "
                             f"expected ({feats[0].size}, {exprs[0].size})")
        feats.append(f)
        exprs.append(e)
    if not feats:
        raise ValueError("cannot build a dictionary from no samples")
    if feats[0].size == 0 or exprs[0].size == 0:
        raise ValueError("feature and expression vectors must be non-empty")
    return SemanticDictionary(np.array(feats, dtype=np.float32), np.array(exprs, dtype=np.float32))


def from_arrays(features: np.ndarray, expressions: np.ndarray) -> SemanticDictionary:
    features = np.atleast_2d(np.asarray(features))
    expressions = np.atleast_2d(np.asarray(expressions))
    if len(features) != len(expressions):
        raise ValueError("feature and expression counts differ")
    return SemanticDictionary(features.astype(np.float32), expressions.astype(np.float32))


def nearest_index(dictionary: SemanticDictionary, query: np.ndarray, chunk: int = 8192) -> int:
    """Index of the entry closest to ``query`` in Euclidean distance; lowest index on ties."""
    q = np.asarray(query, dtype=np.float64).ravel()
    if q.size != dictionary.feature_dim:
        raise ValueError(f"query has dimension {q.size}, dictionary {dictionary.feature_dim}")
    if not np.all(np.isfinite(q)):
        raise ValueError("query must be finite")
    best, best_d = -1, np.inf
    for start in range(0, len(dictionary), chunk):
        block = dictionary.features[start:start + chunk].astype(np.float64)
        d = np.sum((block - q) ** 2, axis=1)
        i = int(np.argmin(d))  # first occurrence
        if d[i] < best_d:
            best, best_d = start + i, d[i]
    return best


class IndexedDictionary:
    """KD-tree accelerated lookup with the same tie rule as the linear scan."""

    def __init__(self, dictionary: SemanticDictionary):
        self.dictionary = dictionary
        self._tree = cKDTree(dictionary.features.astype(np.float64))

    def nearest_index(self, query: np.ndarray) -> int:
        q = np.asarray(query, dtype=np.float64).ravel()
        if q.size != self.dictionary.feature_dim:
            raise ValueError("query dimension mismatch")
        d, _ = self._tree.query(q)
        ties = self._tree.query_ball_point(q, d * (1 + 1e-12) + 1e-300)
        cand = np.array(sorted(ties), dtype=np.int64)
        dist = np.sum((self.dictionary.features[cand].astype(np.float64) - q) ** 2, axis=1)
        return int(cand[np.argmin(dist)])

    def query_prior(self, query: np.ndarray) -> np.ndarray:
        return self.dictionary.expressions[self.nearest_index(query)].astype(np.float64)


def query_prior(dictionary: SemanticDictionary, query: np.ndarray) -> np.ndarray:
    """Expression vector of the nearest stored feature."""
    return dictionary.expressions[nearest_index(dictionary, query)].astype(np.float64)


def sample_expressions(seed: int, count: int, Ke: int, bound: float = 3.0) -> np.ndarray:
    """Standard-normal expression vectors, each coordinate resampled into [-bound, bound]."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    out = rng.standard_normal((count, Ke))
    bad = np.abs(out) > bound
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > bound
    return out


def downsampled_pixels(image: np.ndarray, size: int = 16) -> np.ndarray:
    """Non-semantic stand-in features: a size x size grayscale thumbnail, zero-mean, unit-norm."""
    img = np.asarray(image, dtype=float)
    if img.ndim == 3:
        img = img.mean(axis=2)
    h, w = img.shape
    rows = np.linspace(0, h, size + 1).astype(int)
    cols = np.linspace(0, w, size + 1).astype(int)
    thumb = np.array([[img[rows[i]:max(rows[i + 1], rows[i] + 1), cols[j]:max(cols[j + 1], cols[j] + 1)].mean()
                       for j in range(size)] for i in range(size)])
    f = thumb.ravel() - thumb.mean()
    n = np.linalg.norm(f)
    return f / n if n > 0 else f


def save_dictionary(dictionary: SemanticDictionary, path: str | os.PathLike) -> None:
    """Header line with counts, then little-endian float32 (feature, expression) rows."""
    n, d = dictionary.features.shape
    k = dictionary.expression_dim
    rows = np.hstack([dictionary.features, dictionary.expressions]).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(DICT_MAGIC)
        fh.write(f"entries {n} feature_dim {d} expression_dim {k}\n".encode("ascii"))
        fh.write(rows.tobytes())


def load_dictionary(path: str | os.PathLike) -> SemanticDictionary:
    with open(path, "rb") as fh:
        if fh.readline() != DICT_MAGIC:
            raise ValueError(f"{path}: not a facedetail dictionary")
        parts = fh.readline().split()
        n, d, k = int(parts[1]), int(parts[3]), int(parts[5])
        rows = np.frombuffer(fh.read(), dtype="<f4", count=n * (d + k)).reshape(n, d + k)
    return SemanticDictionary(rows[:, :d].astype(np.float32), rows[:, d:].astype(np.float32))


def load_features(path: Optional[str | os.PathLike]) -> np.ndarray:
    """Whitespace separated feature values (any layout)."""
    return np.loadtxt(path, dtype=float, ndmin=1).ravel()
