"""Class weights tying representative outcomes to interim quantities.

``aux(i', j', i, j, w, v_i)`` is the weight with which ``phi_{i'j'}(w)`` (for a
representative ``w``) enters ``pi_ij(v_i)``.  Summing over group elements
``sigma`` with ``sigma(w)_i = v_i`` and ``sigma^-1(i, j) = (i', j')`` of
``Pr[sigma(w) | sigma(w)_i = v_i]`` counts every profile of the class once per
element of the stabilizer of ``w``.  With ``normalize=True`` (the default)
that multiplicity is divided out, which makes the weights exact for the
mechanism ``SymmetricMechanism`` evaluates (the stabilizer average at ``w``
transported to ``sigma(w)``).  ``normalize=False`` gives the raw element sum.
"""

from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from fractions import Fraction

from ..model import DiscreteDistribution, TypeProfile, ValueVector
from ..symmetry import SymmetryGroup, apply

log = logging.getLogger(__name__)

ZERO = Fraction(0)


def enumerated_aux(dist: DiscreteDistribution, group: SymmetryGroup, w: TypeProfile, i: int, j: int,
                   v_i: ValueVector, normalize: bool = True) -> dict[tuple[int, int], Fraction]:
    """``{(i', j'): aux}`` by walking every group element (small groups only)."""
    denom = dist.marginal(i).get(v_i)
    if not denom:
        return {}
    out: dict[tuple[int, int], Fraction] = defaultdict(Fraction)
    for g in group.elements():
        x = apply(g, w)
        if x[i] != v_i:
            continue
        cell = g.inverse()((i, j))
        out[cell] += dist.prob(x) / denom
    if normalize:
        s = group.stabilizer_order(w)
        out = {c: v / s for c, v in out.items()}
    return {c: v for c, v in sorted(out.items()) if v}


def closed_form_aux(dist: DiscreteDistribution, group: SymmetryGroup, w: TypeProfile, i: int, j: int,
                    v_i: ValueVector, normalize: bool = True) -> dict[tuple[int, int], Fraction]:
    """``{(i', j'): aux}`` from the counting formulas of the two standard groups."""
    denom = dist.marginal(i).get(v_i)
    if not denom:
        return {}
    pw = dist.prob(w)
    if not pw:
        return {}
    m, n = group.m, group.n
    if group.kind == "AllBidders":
        # j' = j; any i' whose type equals v_i; (m-1)! bidder permutations send i' to i
        base = math.factorial(m - 1) * pw / denom
        if normalize:
            base /= group.stabilizer_order(w)
        return {(a, j): base for a in range(m) if w[a] == v_i}
    if group.kind == "AllItems":
        # i' = i; w_i a rearrangement of v_i; item j' carries the value v_ij
        if sorted(w[i]) != sorted(v_i):
            return {}
        counts = Counter(v_i)
        total = math.prod(math.factorial(c) for c in counts.values())
        base = Fraction(total, counts[v_i[j]]) * pw / denom
        if normalize:
            base /= group.stabilizer_order(w)
        return {(i, b): base for b in range(n) if w[i][b] == v_i[j]}
    raise ValueError(f"no closed form for {group.kind} groups")


class AuxWeights:
    """All nonzero weights for a representative set, built row by row.

    ``row(i, j, v_i)`` lists ``((w, i', j'), weight)`` with ``w`` ranging over
    representatives; lookups by the full six-tuple go through :meth:`get`.
    """

    def __init__(self, dist: DiscreteDistribution, group: SymmetryGroup, reps, normalize: bool = True,
                 method: str = "closed", cross_check: bool | str = "auto"):
        if method not in ("closed", "enumerated"):
            raise ValueError(f"unknown method {method!r}")
        self.dist, self.group, self.normalize = dist, group, normalize
        self.reps = list(reps)
        self.method = method
        self.mismatches: list[tuple] = []
        if cross_check == "auto":
            cross_check = group.order <= 24 and len(self.reps) <= 200
        self.cross_check = bool(cross_check) and method == "closed"
        self._by_key: dict = defaultdict(list)
        for w in self.reps:
            if group.kind == "AllBidders":
                for t in set(w):
                    self._by_key[("t", t)].append(w)
            elif group.kind == "AllItems":
                for a in range(group.m):
                    self._by_key[("s", a, tuple(sorted(w[a])))].append(w)
        self._cache: dict = {}

    def _candidates(self, i, v_i):
        if self.group.kind == "AllBidders":
            return self._by_key.get(("t", v_i), [])
        if self.group.kind == "AllItems":
            return self._by_key.get(("s", i, tuple(sorted(v_i))), [])
        return self.reps

    def cell_weights(self, w, i, j, v_i) -> dict[tuple[int, int], Fraction]:
        if self.method == "enumerated" or self.group.kind not in ("AllBidders", "AllItems"):
            return enumerated_aux(self.dist, self.group, w, i, j, v_i, self.normalize)
        got = closed_form_aux(self.dist, self.group, w, i, j, v_i, self.normalize)
        if self.cross_check:
            ref = enumerated_aux(self.dist, self.group, w, i, j, v_i, self.normalize)
            if ref != got:
                self.mismatches.append((w, i, j, v_i, got, ref))
                log.warning("closed-form class weight disagrees with enumeration at w=%s i=%d j=%d; "
                            "using the enumerated value", w, i, j)
                return ref
        return got

    def row(self, i: int, j: int, v_i: ValueVector) -> list[tuple[tuple, Fraction]]:
        key = (i, j, v_i)
        if key not in self._cache:
            out = []
            for w in self._candidates(i, v_i):
                for (a, b), val in self.cell_weights(w, i, j, v_i).items():
                    out.append(((w, a, b), val))
            self._cache[key] = out
        return self._cache[key]

    def get(self, i2: int, j2: int, i: int, j: int, w: TypeProfile, v_i: ValueVector) -> Fraction:
        return self.cell_weights(w, i, j, v_i).get((i2, j2), ZERO)


def compute_aux_weights(dist: DiscreteDistribution, group: SymmetryGroup, E, setting=None,
                        normalize: bool = True, method: str = "closed") -> AuxWeights:
    reps = E.representatives if hasattr(E, "representatives") else E
    return AuxWeights(dist, group, reps, normalize=normalize, method=method)


def interim_from_representatives(M, dist: DiscreteDistribution, normalize: bool = True):
    """Interim form of a representative-table mechanism through class weights."""
    from ..mechanism import InterimForm
    from ..symmetry import enumerate_representatives

    reps = enumerate_representatives(dist, M.group)
    aux = AuxWeights(dist, M.group, reps.representatives, normalize=normalize, cross_check=False)
    pi, q = {}, {}
    for i in range(dist.m):
        for t in dist.marginal(i):
            row = []
            for j in range(dist.n):
                acc = ZERO
                for (w, a, b), val in aux.row(i, j, t):
                    acc += val * M.table[w].phi[a][b]
                row.append(acc)
            pi[(i, t)] = tuple(row)
            acc = ZERO
            for (w, a, _b), val in aux.row(i, 0, t):
                acc += val * M.table[w].price[a]
            q[(i, t)] = acc
    return InterimForm(pi, q)
