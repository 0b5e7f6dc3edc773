"""Capacity matrices, Birkhoff-von Neumann decomposition and frame calendars.

A permutation is stored as an int array ``perm`` with ``perm[i]`` the output
connected to input ``i``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np

from .errors import (DecompositionStall, DimensionError, FrameTooSmall,
                     NegativeEntryError, StochasticityError, ValidationError)


@dataclass(frozen=True, eq=False)
class CapacityMatrix:
    entries: np.ndarray

    @property
    def n(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True, eq=False)
class BirkhoffDecomposition:
    weights: np.ndarray        # (M,)
    perms: np.ndarray          # (M, n)

    @property
    def n(self) -> int:
        return self.perms.shape[1]

    @property
    def terms(self):
        return [(float(w), p) for w, p in zip(self.weights, self.perms)]

    def __len__(self):
        return len(self.weights)

    def reconstruct(self) -> np.ndarray:
        n = self.n
        out = np.zeros((n, n))
        rows = np.arange(n)
        for w, p in zip(self.weights, self.perms):
            out[rows, p] += w
        return out


@dataclass(frozen=True, eq=False)
class FrameSchedule:
    slots: np.ndarray          # (F, n) permutation per slot

    @property
    def frame_size(self) -> int:
        return self.slots.shape[0]

    @property
    def n(self) -> int:
        return self.slots.shape[1]

    def tokens(self) -> np.ndarray:
        """Per-frame token count of every VC as an n x n int matrix."""
        n = self.n
        out = np.zeros((n, n), dtype=np.int64)
        rows = np.arange(n)
        for p in self.slots:
            out[rows, p] += 1
        return out

    def __eq__(self, other):
        return (isinstance(other, FrameSchedule)
                and np.array_equal(self.slots, other.slots))


def validate_capacity_matrix(entries, tol=1e-6) -> CapacityMatrix:
    if tol <= 0:
        raise ValidationError("tol must be positive")
    m = np.array(entries, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise DimensionError(f"capacity matrix must be square, got {m.shape}")
    if (m < 0).any():
        i, j = np.argwhere(m < 0)[0]
        raise NegativeEntryError(f"entry ({i}, {j}) = {m[i, j]} is negative")
    for axis, name in ((1, "row"), (0, "column")):
        sums = m.sum(axis=axis)
        bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
        if bad.size:
            k = bad[0]
            raise StochasticityError(f"{name} {k} sums to {sums[k]:.12g}")
    m.setflags(write=False)
    return CapacityMatrix(m)


@numba.njit(cache=True)
def _augment(support, match_col, match_row, start):
    """BFS for an augmenting path from unmatched row ``start``.

    Rows and columns are visited in index order so the result is
    deterministic.  Returns False if no path exists.
    """
    n = support.shape[0]
    parent_row = np.full(n, -1, dtype=np.int64)   # column -> row reached from
    seen_col = np.zeros(n, dtype=np.bool_)
    frontier = np.empty(n, dtype=np.int64)
    nxt = np.empty(n, dtype=np.int64)
    frontier[0] = start
    n_front = 1
    while n_front:
        n_next = 0
        for i in range(n_front):
            r = frontier[i]
            free = -1
            for c in range(n):
                if support[r, c] and not seen_col[c]:
                    seen_col[c] = True
                    parent_row[c] = r
                    if match_row[c] < 0:
                        if free < 0:
                            free = c
                    elif free < 0:
                        nxt[n_next] = match_row[c]
                        n_next += 1
            if free >= 0:
                # flip the alternating path back to start
                c = free
                while c >= 0:
                    r = parent_row[c]
                    prev = match_col[r]
                    match_col[r] = c
                    match_row[c] = r
                    c = prev
                return True
        frontier, nxt = nxt, frontier
        n_front = n_next
    return False


def birkhoff_decompose(m: CapacityMatrix, tol=1e-12) -> BirkhoffDecomposition:
    """Split ``m`` into a convex combination of permutation matrices.

    Repeatedly takes a perfect matching on the entries above ``tol``, peels
    off the smallest matched entry, and repairs the matching for the rows
    whose entry dropped out of the support.
    """
    if tol <= 0:
        raise ValidationError("tol must be positive")
    resid = np.array(m.entries, dtype=float)
    n = resid.shape[0]
    weights, perms, stalled = _peel(resid, float(tol))
    if stalled:
        raise DecompositionStall(
            f"no perfect matching after {len(weights)} terms; "
            f"residual max {resid.max():.3g}")
    return BirkhoffDecomposition(weights, perms.reshape(-1, n))


@numba.njit(cache=True)
def _peel(resid, tol):
    # works on resid in place; returns (weights, perms, stalled)
    n = resid.shape[0]
    match_col = np.full(n, -1, dtype=np.int64)
    match_row = np.full(n, -1, dtype=np.int64)
    cap = n * n + 1
    weights = np.empty(cap)
    perms = np.empty((cap, n), dtype=np.int64)
    k = 0
    while resid.max() >= tol:
        if k == cap:
            # more terms than any exact decomposition needs; grow anyway
            cap *= 2
            w2 = np.empty(cap)
            w2[:k] = weights[:k]
            p2 = np.empty((cap, n), dtype=np.int64)
            p2[:k] = perms[:k]
            weights, perms = w2, p2
        support = resid >= tol
        for r in range(n):
            if match_col[r] < 0:
                if not _augment(support, match_col, match_row, r):
                    return weights[:k].copy(), perms[:k].copy(), True
        w = np.inf
        for r in range(n):
            w = min(w, resid[r, match_col[r]])
        for r in range(n):
            resid[r, match_col[r]] -= w
        weights[k] = w
        perms[k] = match_col
        k += 1
        for r in range(n):
            if resid[r, match_col[r]] < tol:
                match_row[match_col[r]] = -1
                match_col[r] = -1
    return weights[:k].copy(), perms[:k].copy(), False


def _largest_remainder(weights, F):
    raw = np.asarray(weights, dtype=float) * F
    counts = np.floor(raw).astype(np.int64)
    short = F - counts.sum()
    if short > 0:
        # stable: ties broken by term order
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def build_frame_schedule(d: BirkhoffDecomposition, F: int,
                         tol=1e-12) -> FrameSchedule:
    """Quantise the weights to ``F`` slots and spread each term's slots.

    Term ``i`` gets ``F_i`` slots by largest remainder; its ``k``-th slot has
    ideal position ``(k + 0.5) * F / F_i`` and all slots are ordered by ideal
    position (ties by term index).
    """
    F = int(F)
    if F < len(d):
        raise FrameTooSmall(f"frame size {F} < number of terms {len(d)}")
    counts = _largest_remainder(d.weights / d.weights.sum(), F)
    starved = np.flatnonzero((counts == 0) & (d.weights > tol))
    if starved.size:
        raise FrameTooSmall(
            f"term {starved[0]} (weight {d.weights[starved[0]]:.3g}) "
            f"gets no slot in a frame of {F}")
    pos, term = [], []
    for i, c in enumerate(counts):
        if c:
            pos.append((np.arange(c) + 0.5) * F / c)
            term.append(np.full(c, i))
    pos, term = np.concatenate(pos), np.concatenate(term)
    order = np.lexsort((term, pos))
    return FrameSchedule(d.perms[term[order]].copy())


def circular_shift(n: int, offset: int) -> np.ndarray:
    return (np.arange(n) + offset) % n


def circular_shift_schedule(n: int, seed: int) -> FrameSchedule:
    """The ``n`` circular shifts, one per slot, in a seed-determined order.

    The order is ``numpy.random.default_rng(seed).permutation(n)``; offset
    ``o`` connects input ``i`` to output ``(i + o) mod n``.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    offsets = np.random.default_rng(seed).permutation(n)
    return FrameSchedule(np.stack([circular_shift(n, o) for o in offsets]))


# -- plain-text I/O ----------------------------------------------------------

def read_matrix(text: str) -> np.ndarray:
    """Parse ``n`` on the first line followed by ``n`` whitespace rows."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DimensionError("empty matrix text")
    n = int(lines[0])
    rows = [[float(x) for x in ln.split()] for ln in lines[1:]]
    if len(rows) != n or any(len(r) != n for r in rows):
        raise DimensionError(f"expected {n} rows of {n} values")
    return np.array(rows, dtype=float).reshape(n, n)


def format_matrix(m) -> str:
    m = np.asarray(m)
    lines = [str(m.shape[0])]
    lines += [" ".join(repr(float(x)) for x in row) for row in m]
    return "\n".join(lines) + "\n"


def format_decomposition(d: BirkhoffDecomposition) -> str:
    return "".join(f"{float(w)!r} " + " ".join(map(str, p)) + "\n"
                   for w, p in zip(d.weights, d.perms))


def parse_decomposition(text: str) -> BirkhoffDecomposition:
    weights, perms = [], []
    for ln in text.splitlines():
        if not ln.strip():
            continue
        head, *rest = ln.split()
        weights.append(float(head))
        perms.append([int(x) for x in rest])
    return BirkhoffDecomposition(np.array(weights),
                                 np.array(perms, dtype=np.int64))


def format_schedule(s: FrameSchedule) -> str:
    """One slot per line; the weight column is ``1/F``."""
    w = 1.0 / s.frame_size
    return "".join(f"{w!r} " + " ".join(map(str, p)) + "\n" for p in s.slots)


def parse_schedule(text: str) -> FrameSchedule:
    return FrameSchedule(parse_decomposition(text).perms)


def random_doubly_stochastic(n: int, seed: int, terms: int | None = None,
                             ) -> np.ndarray:
    """Seeded doubly stochastic matrix.

    With ``terms`` given: a random convex combination of that many random
    permutations.  Otherwise a dense matrix from Sinkhorn balancing of
    uniform entries, iterated until row and column sums are 1 to 1e-15.
    """
    rng = np.random.default_rng(seed)
    if terms is not None:
        w = rng.random(terms)
        w /= w.sum()
        out = np.zeros((n, n))
        for wk in w:
            out[np.arange(n), rng.permutation(n)] += wk
        return out
    a = rng.random((n, n)) + 0.05
    for _ in range(10_000):
        a /= a.sum(axis=1, keepdims=True)
        a /= a.sum(axis=0, keepdims=True)
        if np.abs(a.sum(axis=1) - 1.0).max() < 1e-15:
            break
    return a


def is_permutation(p: Sequence[int]) -> bool:
    p = np.asarray(p)
    return p.ndim == 1 and np.array_equal(np.sort(p), np.arange(p.size))
