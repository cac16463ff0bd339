"""Neighbor-constraint outlier rejection.

Two matches ``i`` and ``j`` are *consistent* when the geometry between their
query vertices agrees with the geometry between their target vertices.
Two agreement rules are available:

``"distance"``
    ``|d_q(i, j) - d_t(i, j)| < threshold`` (the rejection pseudocode's
    test; default).
``"nei"``
    ``(d_q(i, j) < threshold) == (d_t(i, j) < threshold)``, i.e. both pairs
    are neighbors or both are not.

Rejection then repeatedly drops the match with the fewest consistent
partners until every survivor is consistent with at least ``eta`` times
the number of survivors (self included).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from semloc._backend import kernels
from semloc.errors import EmptyInputError, InputError, SearchSizeError

DEFAULT_ETA = 0.5
# distance rule: tolerated pairwise-distance discrepancy; must exceed what
# sensor noise produces on true matches (~sqrt(2) * sigma * 3)
DEFAULT_DISTANCE_TOLERANCE = 2.0
RULES = {"nei": 0, "distance": 1}
DENOMINATORS = ("current", "original")


@dataclass(frozen=True, eq=False)
class ConstraintMatrix:
    m: np.ndarray

    @classmethod
    def from_matrix(cls, m):
        m = np.ascontiguousarray(m, dtype=np.uint8)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InputError("constraint matrix must be square")
        return cls(m)

    @property
    def row_sums(self):
        """Consistency count ``V_i`` per match, self included."""
        return self.m.sum(axis=1, dtype=np.int64)

    def __len__(self):
        return len(self.m)


def default_threshold(rule, gq):
    """Distance rule: ``DEFAULT_DISTANCE_TOLERANCE``; nei rule: the edge threshold."""
    return DEFAULT_DISTANCE_TOLERANCE if rule == "distance" else gq.edge_threshold


def build_constraint_matrix(gq, gt, m0, nei_threshold=None, rule="distance"):
    if nei_threshold is None:
        nei_threshold = default_threshold(rule, gq)
    if len(m0) == 0:
        raise EmptyInputError("cannot build a constraint matrix from zero matches")
    if rule not in RULES:
        raise InputError(f"unknown consistency rule {rule!r}")
    if not nei_threshold > 0:
        raise InputError("nei_threshold must be positive")
    m0.validate(gq, gt)
    M = kernels.constraint_matrix(gq.distance_matrix, gt.distance_matrix,
                                  np.ascontiguousarray(m0.query), np.ascontiguousarray(m0.target),
                                  float(nei_threshold), RULES[rule])
    return ConstraintMatrix.from_matrix(M)


def reject_mask(mat, eta=DEFAULT_ETA, eta_denominator="current"):
    """Survivor mask of the greedy rejection loop on a constraint matrix.

    Ties for the worst match go to the lowest index. With
    ``eta_denominator="original"`` the bound stays ``eta * m`` instead of
    shrinking with the survivor count.
    """
    if not 0 < eta < 1:
        raise InputError(f"eta must lie in (0, 1), got {eta}")
    if eta_denominator not in DENOMINATORS:
        raise InputError(f"eta_denominator must be one of {DENOMINATORS}")
    if isinstance(mat, ConstraintMatrix):
        M = mat.m
    else:
        M = np.ascontiguousarray(mat, dtype=np.uint8)
        if M.ndim != 2 or M.shape[0] != M.shape[1] or not np.array_equal(M, M.T):
            raise InputError("constraint matrix must be square and symmetric")
    if len(M) == 0:
        return np.zeros(0, dtype=bool)
    return np.asarray(kernels.reject_loop(M, float(eta), eta_denominator == "original"), dtype=bool)


def reject(gq, gt, m0, nei_threshold=None, eta=DEFAULT_ETA,
           eta_denominator="current", rule="distance"):
    """Surviving matches of ``m0`` in their original order (may be empty)."""
    mat = build_constraint_matrix(gq, gt, m0, nei_threshold, rule)
    return m0.subset(reject_mask(mat, eta, eta_denominator))


def brute_force_max_consistent(mat, limit=18):
    """Largest fully consistent match subset (max clique), exhaustive.

    Among maximum subsets the lexicographically smallest sorted index tuple
    wins. Depth-first search visits subsets in lexicographic order, so the
    incumbent is replaced only by strictly larger subsets.
    """
    M = mat.m if isinstance(mat, ConstraintMatrix) else np.asarray(mat)
    m = len(M)
    if m > limit:
        raise SearchSizeError(f"{m} matches exceeds exhaustive search limit {limit}")
    if m == 0:
        return set()
    adj = [frozenset(np.flatnonzero((M[i] != 0) & (M[:, i] != 0)).tolist()) - {i} for i in range(m)]
    best = []

    def grow(current, candidates):
        nonlocal best
        if len(current) > len(best):
            best = list(current)
        for pos, v in enumerate(candidates):
            rest = [c for c in candidates[pos + 1:] if c in adj[v]]
            if len(current) + 1 + len(rest) <= len(best):
                continue
            current.append(v)
            grow(current, rest)
            current.pop()

    grow([], list(range(m)))
    return set(best)


def is_consistent_set(mat, index):
    M = mat.m if isinstance(mat, ConstraintMatrix) else np.asarray(mat)
    idx = sorted(index)
    return all(M[i, j] for i, j in itertools.combinations(idx, 2))
