"""Lotteries over feasible assignments that realize a marginal matrix exactly.

A bidder with demand ``C`` is split into ``min(n, C)`` unit-demand copies.
The copy matrix is padded to a square doubly stochastic matrix, decomposed
into permutation matrices, and a sampled permutation hands cell ``(r, c)`` to
its owner with probability ``copy[r][c] / padded[r][c]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .model import UNBOUNDED, ModelError, as_fraction, bernoulli, exact_choice

ZERO, ONE = Fraction(0), Fraction(1)


class InfeasibleMarginals(ModelError):
    pass


class NotDoublyStochastic(ModelError):
    pass


@dataclass
class PaddedMatrix:
    """Square doubly stochastic ``padded`` plus the cells it came from.

    ``copy`` holds the copy-split marginals before filling (same shape as
    ``padded``); ``owner[r]`` is the bidder behind row ``r`` or ``None`` for
    a dummy row; columns ``>= n`` are dummy items.
    """

    padded: list[list[Fraction]]
    copy: list[list[Fraction]]
    owner: list[int | None]
    m: int
    n: int

    @property
    def size(self) -> int:
        return len(self.padded)


@dataclass
class BvnDecomposition:
    terms: list[tuple[Fraction, tuple[int, ...]]]  # weight, row -> column
    matrix: PaddedMatrix

    def keep_probability(self, r: int, c: int) -> Fraction:
        p = self.matrix.padded[r][c]
        return self.matrix.copy[r][c] / p if p else ZERO

    def reconstruct(self) -> list[list[Fraction]]:
        N = self.matrix.size
        out = [[ZERO] * N for _ in range(N)]
        for w, perm in self.terms:
            for r, c in enumerate(perm):
                out[r][c] += w
        return out

    def exact_marginals(self) -> list[list[Fraction]]:
        """``Pr[bidder i gets item j]`` under :func:`sample_assignment`, exactly."""
        mat = self.matrix
        out = [[ZERO] * mat.n for _ in range(mat.m)]
        for w, perm in self.terms:
            for r, c in enumerate(perm):
                i = mat.owner[r]
                if i is not None and c < mat.n:
                    out[i][c] += w * self.keep_probability(r, c)
        return out


def _check_marginals(phi, demands):
    m = len(phi)
    n = len(phi[0]) if m else 0
    for i in range(m):
        if len(phi[i]) != n:
            raise InfeasibleMarginals("ragged marginal matrix")
        for j in range(n):
            if not 0 <= phi[i][j] <= 1:
                raise InfeasibleMarginals(f"entry ({i},{j}) = {phi[i][j]} outside [0, 1]")
    for j in range(n):
        if sum((phi[i][j] for i in range(m)), ZERO) > 1:
            raise InfeasibleMarginals(f"item {j} allocated more than once in expectation")
    for i in range(m):
        d = demands[i]
        if d is not UNBOUNDED and sum(phi[i], ZERO) > d:
            raise InfeasibleMarginals(f"bidder {i} exceeds demand {d} in expectation")


def pad(phi: Sequence[Sequence], demands: Sequence | None = None) -> PaddedMatrix:
    """Copy-split, square up and greedily fill to a doubly stochastic matrix."""
    phi = [[as_fraction(x) for x in row] for row in phi]
    m = len(phi)
    n = len(phi[0]) if m else 0
    demands = list(demands) if demands is not None else [1] * m
    _check_marginals(phi, demands)
    rows: list[list[Fraction]] = []
    owner: list[int | None] = []
    for i in range(m):
        d = demands[i]
        k = n if d is UNBOUNDED else min(n, int(d))
        k = max(k, 1)
        copies = [[ZERO] * n for _ in range(k)]
        r, room = 0, ONE
        for j in range(n):
            left = phi[i][j]
            while left > 0:
                take = min(left, room)
                copies[r][j] += take
                left -= take
                room -= take
                if room == 0 and left > 0:
                    r, room = r + 1, ONE
            if room == 0 and r + 1 < k:
                r, room = r + 1, ONE
        rows.extend(copies)
        owner.extend([i] * k)
    N = max(len(rows), n, 1)
    copy = [row + [ZERO] * (N - n) for row in rows]
    while len(copy) < N:
        copy.append([ZERO] * N)
        owner.append(None)
    padded = [list(row) for row in copy]
    rs = [sum(row, ZERO) for row in padded]
    cs = [sum((padded[r][c] for r in range(N)), ZERO) for c in range(N)]
    for r in range(N):
        for c in range(N):
            add = min(1 - rs[r], 1 - cs[c])
            if add > 0:
                padded[r][c] += add
                rs[r] += add
                cs[c] += add
    return PaddedMatrix(padded, copy, owner, m, n)


def _is_doubly_stochastic(mat) -> bool:
    N = len(mat)
    if any(len(row) != N for row in mat):
        return False
    if any(x < 0 for row in mat for x in row):
        return False
    return all(sum(row, ZERO) == 1 for row in mat) and \
        all(sum((mat[r][c] for r in range(N)), ZERO) == 1 for c in range(N))


def _matching_through(support: np.ndarray, r0: int, c0: int) -> tuple[int, ...] | None:
    N = support.shape[0]
    sub = support.copy()
    sub[r0, :] = False
    sub[:, c0] = False
    sub[r0, c0] = True
    match = maximum_bipartite_matching(csr_matrix(sub.astype(np.int8)), perm_type="column")
    if np.any(match < 0):
        return None
    return tuple(int(x) for x in match)


def decompose(padded: PaddedMatrix | Sequence[Sequence]) -> BvnDecomposition:
    """Exact convex decomposition into permutation matrices.

    Each step takes the smallest positive cell (first in row-major order on
    ties), finds a perfect matching of the support through it and subtracts
    the matching at that cell's weight, zeroing at least one cell.
    """
    if not isinstance(padded, PaddedMatrix):
        mat = [[as_fraction(x) for x in row] for row in padded]
        N = len(mat)
        padded = PaddedMatrix([list(r) for r in mat], [list(r) for r in mat], list(range(N)), N, N)
    rest = [list(row) for row in padded.padded]
    if not _is_doubly_stochastic(rest):
        raise NotDoublyStochastic("rows and columns must be non-negative and sum to exactly 1")
    N = len(rest)
    terms = []
    remaining = ONE
    while remaining > 0:
        best = None
        for r in range(N):
            for c in range(N):
                x = rest[r][c]
                if x > 0 and (best is None or x < best[0]):
                    best = (x, r, c)
        _, r0, c0 = best
        support = np.array([[x > 0 for x in row] for row in rest])
        perm = _matching_through(support, r0, c0)
        if perm is None:
            raise NotDoublyStochastic("support has no perfect matching")
        w = min(rest[r][perm[r]] for r in range(N))
        for r in range(N):
            rest[r][perm[r]] -= w
        terms.append((w, perm))
        remaining -= w
    return BvnDecomposition(terms, padded)


def decompose_marginals(phi, demands=None) -> BvnDecomposition:
    return decompose(pad(phi, demands))


def sample_assignment(dec: BvnDecomposition, rng: np.random.Generator) -> tuple[tuple[int, ...], ...]:
    """Items handed to each bidder (sorted tuple per bidder)."""
    mat = dec.matrix
    _, perm = exact_choice(rng, dec.terms, [w for w, _ in dec.terms])
    got: list[list[int]] = [[] for _ in range(mat.m)]
    for r, c in enumerate(perm):
        i = mat.owner[r]
        if i is None or c >= mat.n:
            continue
        if bernoulli(rng, dec.keep_probability(r, c)):
            got[i].append(c)
    return tuple(tuple(sorted(g)) for g in got)


def term_bound(m: int, n: int) -> int:
    return max(m, n) ** 2
