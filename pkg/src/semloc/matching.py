"""Candidate correspondences between two graphs from descriptor similarity."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from semloc._backend import kernels
from semloc.descriptors import _walk_codes
from semloc.errors import InputError

DEFAULT_SIMILARITY_THRESHOLD = 0.6
MATCH_HEADER = "# matches v1"


@dataclass(frozen=True, eq=False)
class MatchSet:
    """Ordered ``(query, target)`` vertex pairs with a score per pair."""

    pairs: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        pairs = np.array(self.pairs, dtype=np.int64).reshape(-1, 2)
        scores = np.array(self.scores, dtype=np.float64).reshape(-1)
        if len(scores) != len(pairs):
            raise InputError("pairs and scores differ in length")
        pairs.setflags(write=False)
        scores.setflags(write=False)
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "scores", scores)

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 2), dtype=np.int64), np.zeros(0))

    @classmethod
    def from_pairs(cls, pairs, scores=None):
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        return cls(pairs, np.ones(len(pairs)) if scores is None else scores)

    def __len__(self):
        return len(self.pairs)

    @property
    def query(self):
        return self.pairs[:, 0]

    @property
    def target(self):
        return self.pairs[:, 1]

    def subset(self, index):
        return MatchSet(self.pairs[index], self.scores[index])

    def __eq__(self, other):
        if not isinstance(other, MatchSet):
            return NotImplemented
        return np.array_equal(self.pairs, other.pairs) and np.array_equal(self.scores, other.scores)

    def validate(self, gq, gt):
        if len(self) and (self.query.min() < 0 or self.query.max() >= len(gq)
                          or self.target.min() < 0 or self.target.max() >= len(gt)):
            raise InputError("match refers to a vertex outside its graph")
        if len(np.unique(self.query * len(gt) + self.target)) != len(self):
            raise InputError("duplicate match pairs")


def _pair_scores(dq, dt, qi, ti):
    if dq.kind == "histogram":
        # rows are unit-norm or zero, so the dot product is the cosine
        return np.einsum("ij,ij->i", dq.data[qi], dt.data[ti])
    n = dq.data.shape[1]
    codes = _walk_codes(np.concatenate([dq.data, dt.data]))
    cq, ct = codes[:len(dq)], codes[len(dq):]
    return kernels.walk_overlap(np.ascontiguousarray(cq), np.ascontiguousarray(ct), qi, ti) / n


def match_graphs(gq, dq, gt, dt, threshold=DEFAULT_SIMILARITY_THRESHOLD):
    """All same-label pairs with similarity above ``threshold``.

    Sorted by descending score, ties by ``(query, target)``.
    """
    if dq.kind != dt.kind or dq.params != dt.params:
        raise InputError(f"descriptor parameters differ: {dq.kind}{dq.params} vs {dt.kind}{dt.params}")
    if len(dq) != len(gq) or len(dt) != len(gt):
        raise InputError("descriptor count does not match graph size")
    qs, ts = [], []
    for label in np.intersect1d(gq.labels, gt.labels):
        qa = np.flatnonzero(gq.labels == label)
        ta = np.flatnonzero(gt.labels == label)
        qq, tt = np.meshgrid(qa, ta, indexing="ij")
        qs.append(qq.ravel())
        ts.append(tt.ravel())
    if not qs:
        return MatchSet.empty()
    qi = np.concatenate(qs).astype(np.int64)
    ti = np.concatenate(ts).astype(np.int64)
    scores = _pair_scores(dq, dt, qi, ti)
    keep = scores > threshold
    qi, ti, scores = qi[keep], ti[keep], scores[keep]
    order = np.lexsort((ti, qi, -scores))
    return MatchSet(np.stack([qi[order], ti[order]], axis=1), scores[order])


def format_matches(matches):
    lines = [MATCH_HEADER]
    lines += [f"{q} {t} {s!r}" for (q, t), s in zip(matches.pairs.tolist(), matches.scores.tolist())]
    return "\n".join(lines) + "\n"


def write_matches(path, matches):
    Path(path).write_text(format_matches(matches), encoding="utf-8")


def read_matches(path):
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith(MATCH_HEADER):
        raise InputError(f"{path}: missing '{MATCH_HEADER}' header")
    pairs, scores = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise InputError(f"{path}:{lineno}: expected 'q t score'")
        try:
            pairs.append((int(parts[0]), int(parts[1])))
            scores.append(float(parts[2]))
        except ValueError:
            raise InputError(f"{path}:{lineno}: malformed match") from None
    if not pairs:
        return MatchSet.empty()
    return MatchSet(pairs, scores)
