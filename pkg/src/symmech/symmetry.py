"""Bidder/item permutations, symmetry groups and equivalence-class representatives.

A permutation ``sigma = (s1, s2)`` moves cell ``(i, j)`` to ``(s1[i], s2[j])``,
so ``apply(sigma, v)`` has ``w[s1[i]][s2[j]] = v[i][j]``.

The two groups the LPs rely on are handled combinatorially and never expanded:

* ``AllBidders`` (every bidder permutation): canonical form sorts rows ascending.
* ``AllItems`` (every item permutation): canonical form sorts columns ascending.

Both canonical forms are the lexicographic minimum of the orbit.  ``Product``
and ``Custom`` groups fall back to element enumeration.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

from .model import (DEFAULT_MAX_SUPPORT, DimensionMismatch, DiscreteDistribution, ExplosionGuard,
                    ModelError, TypeProfile, ValueVector)

MAX_GROUP_ORDER = math.factorial(10)


class NotASubgroup(ModelError):
    pass


@dataclass(frozen=True, order=True)
class Permutation:
    bidder_perm: tuple[int, ...]
    item_perm: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "bidder_perm", tuple(int(x) for x in self.bidder_perm))
        object.__setattr__(self, "item_perm", tuple(int(x) for x in self.item_perm))
        for p in (self.bidder_perm, self.item_perm):
            if sorted(p) != list(range(len(p))):
                raise ValueError(f"{p} is not a bijection")

    @property
    def m(self) -> int:
        return len(self.bidder_perm)

    @property
    def n(self) -> int:
        return len(self.item_perm)

    @classmethod
    def identity(cls, m: int, n: int) -> "Permutation":
        return cls(tuple(range(m)), tuple(range(n)))

    @classmethod
    def items(cls, m: int, item_perm: Sequence[int]) -> "Permutation":
        return cls(tuple(range(m)), tuple(item_perm))

    @classmethod
    def bidders(cls, bidder_perm: Sequence[int], n: int) -> "Permutation":
        return cls(tuple(bidder_perm), tuple(range(n)))

    def is_identity(self) -> bool:
        return self.bidder_perm == tuple(range(self.m)) and self.item_perm == tuple(range(self.n))

    def __call__(self, cell: tuple[int, int]) -> tuple[int, int]:
        i, j = cell
        return self.bidder_perm[i], self.item_perm[j]

    def compose(self, other: "Permutation") -> "Permutation":
        """``self ∘ other``: apply ``other`` first."""
        return Permutation(tuple(self.bidder_perm[x] for x in other.bidder_perm),
                           tuple(self.item_perm[x] for x in other.item_perm))

    def __mul__(self, other: "Permutation") -> "Permutation":
        return self.compose(other)

    def inverse(self) -> "Permutation":
        bp = [0] * self.m
        for i, x in enumerate(self.bidder_perm):
            bp[x] = i
        ip = [0] * self.n
        for j, x in enumerate(self.item_perm):
            ip[x] = j
        return Permutation(tuple(bp), tuple(ip))

    def apply_vector(self, t: Sequence) -> tuple:
        """Item part acting on a single type vector."""
        out = [None] * self.n
        for j, x in enumerate(t):
            out[self.item_perm[j]] = x
        return tuple(out)

    def apply(self, v: TypeProfile) -> TypeProfile:
        return apply(self, v)


def apply(sigma: Permutation, v: Sequence[Sequence]) -> tuple:
    """``w`` with ``w[s1(i)][s2(j)] = v[i][j]``."""
    if len(v) != sigma.m or any(len(row) != sigma.n for row in v):
        raise DimensionMismatch(f"permutation is {sigma.m}x{sigma.n}, profile is "
                                f"{len(v)}x{len(v[0]) if v else 0}")
    rows = [None] * sigma.m
    for i, row in enumerate(v):
        rows[sigma.bidder_perm[i]] = sigma.apply_vector(row)
    return tuple(rows)


def apply_prices(sigma: Permutation, p: Sequence) -> tuple:
    out = [None] * sigma.m
    for i, x in enumerate(p):
        out[sigma.bidder_perm[i]] = x
    return tuple(out)


def has_symmetry(dist: DiscreteDistribution, sigma: Permutation) -> bool:
    """True iff ``Pr[v] = Pr[sigma(v)]`` for every profile."""
    if sigma.m != dist.m or sigma.n != dist.n:
        raise DimensionMismatch("permutation and distribution sizes differ")
    if dist.factors is not None:
        for i, f in enumerate(dist.factors):
            g = dist.factors[sigma.bidder_perm[i]]
            if len(f) != len(g):
                return False
            for t, p in f.items():
                if g.get(sigma.apply_vector(t)) != p:
                    return False
        return True
    for prof, p in dist.joint.items():
        if dist.joint.get(apply(sigma, prof), Fraction(0)) != p:
            return False
    return True


def _transpositions(k: int) -> list[tuple[int, ...]]:
    out = []
    for a in range(k - 1):
        p = list(range(k))
        p[a], p[a + 1] = p[a + 1], p[a]
        out.append(tuple(p))
    return out


def _stable_order(keys: Sequence) -> list[int]:
    return sorted(range(len(keys)), key=lambda k: (keys[k], k))


def _multinomial(counts: Iterable[int]) -> int:
    counts = list(counts)
    out = math.factorial(sum(counts))
    for c in counts:
        out //= math.factorial(c)
    return out


def _distinct_permutations(seq: Sequence) -> Iterator[tuple[tuple, tuple[int, ...]]]:
    """Distinct rearrangements of ``seq`` with one index map each (lex order)."""
    seen = set()
    for perm in itertools.permutations(range(len(seq))):
        arr = tuple(seq[k] for k in perm)
        if arr not in seen:
            seen.add(arr)
            yield arr, perm


class SymmetryGroup:
    """A subgroup of ``S_m x S_n``.

    kinds: ``AllBidders``, ``AllItems``, ``Product`` (both), ``Custom``
    (explicit element list, checked for closure on construction).
    """

    KINDS = ("AllBidders", "AllItems", "Product", "Custom")

    def __init__(self, kind: str, m: int, n: int, elements: Sequence[Permutation] | None = None):
        if kind not in self.KINDS:
            raise ValueError(f"unknown group kind {kind!r}")
        self.kind = kind
        self.m = m
        self.n = n
        self._elements: tuple[Permutation, ...] | None = None
        if kind == "Custom":
            if elements is None:
                raise ValueError("Custom groups need an explicit element list")
            elems = tuple(sorted(set(elements)))
            for e in elems:
                if e.m != m or e.n != n:
                    raise DimensionMismatch("element size differs from group size")
            self._elements = elems
            self._check_subgroup()

    def __repr__(self):
        if self.kind == "Custom":
            return f"SymmetryGroup(Custom, m={self.m}, n={self.n}, order={len(self._elements)})"
        return f"SymmetryGroup({self.kind}, m={self.m}, n={self.n})"

    def __eq__(self, other):
        if not isinstance(other, SymmetryGroup):
            return NotImplemented
        return (self.kind, self.m, self.n, self._elements) == (other.kind, other.m, other.n,
                                                                 other._elements)

    def __hash__(self):
        return hash((self.kind, self.m, self.n, self._elements))

    # -- constructors ------------------------------------------------------------
    @classmethod
    def all_bidders(cls, m: int, n: int) -> "SymmetryGroup":
        return cls("AllBidders", m, n)

    @classmethod
    def all_items(cls, m: int, n: int) -> "SymmetryGroup":
        return cls("AllItems", m, n)

    @classmethod
    def product(cls, m: int, n: int) -> "SymmetryGroup":
        return cls("Product", m, n)

    @classmethod
    def custom(cls, m: int, n: int, elements: Sequence[Permutation]) -> "SymmetryGroup":
        return cls("Custom", m, n, elements)

    @classmethod
    def trivial(cls, m: int, n: int) -> "SymmetryGroup":
        return cls("Custom", m, n, [Permutation.identity(m, n)])

    @classmethod
    def for_setting(cls, setting) -> "SymmetryGroup":
        if setting.kind == "k-items":
            return cls.all_bidders(setting.m, setting.n)
        return cls.all_items(setting.m, setting.n)

    def _check_subgroup(self):
        elems = set(self._elements)
        ident = Permutation.identity(self.m, self.n)
        if ident not in elems:
            raise NotASubgroup("identity missing")
        for a in self._elements:
            if a.inverse() not in elems:
                raise NotASubgroup(f"inverse of {a} missing")
            for b in self._elements:
                if a * b not in elems:
                    raise NotASubgroup(f"{a} * {b} not in the set")

    # -- size and elements -----------------------------------------------------
    @property
    def order(self) -> int:
        if self.kind == "AllBidders":
            return math.factorial(self.m)
        if self.kind == "AllItems":
            return math.factorial(self.n)
        if self.kind == "Product":
            return math.factorial(self.m) * math.factorial(self.n)
        return len(self._elements)

    def generators(self) -> list[Permutation]:
        idb, idi = tuple(range(self.m)), tuple(range(self.n))
        if self.kind == "Custom":
            return list(self._elements)
        gens = []
        if self.kind in ("AllBidders", "Product"):
            gens += [Permutation(p, idi) for p in _transpositions(self.m)]
        if self.kind in ("AllItems", "Product"):
            gens += [Permutation(idb, p) for p in _transpositions(self.n)]
        return gens

    def elements(self, cap: int = MAX_GROUP_ORDER) -> Iterator[Permutation]:
        if self.order > cap:
            raise ExplosionGuard(f"group order {self.order} exceeds {cap}")
        if self._elements is not None:
            yield from self._elements
            return
        idb, idi = tuple(range(self.m)), tuple(range(self.n))
        bps = list(itertools.permutations(range(self.m))) if self.kind in ("AllBidders", "Product") else [idb]
        ips = list(itertools.permutations(range(self.n))) if self.kind in ("AllItems", "Product") else [idi]
        for bp in bps:
            for ip in ips:
                yield Permutation(bp, ip)

    def contains(self, sigma: Permutation) -> bool:
        if sigma.m != self.m or sigma.n != self.n:
            return False
        if self.kind == "Product":
            return True
        if self.kind == "AllBidders":
            return sigma.item_perm == tuple(range(self.n))
        if self.kind == "AllItems":
            return sigma.bidder_perm == tuple(range(self.m))
        return sigma in set(self._elements)

    def leaves_invariant(self, dist: DiscreteDistribution) -> bool:
        return all(has_symmetry(dist, g) for g in self.generators())

    # -- canonical forms ---------------------------------------------------------
    def _check_dims(self, v):
        if len(v) != self.m or any(len(row) != self.n for row in v):
            raise DimensionMismatch(f"group acts on {self.m}x{self.n} profiles")

    def canonical_with_transporter(self, v: TypeProfile) -> tuple[TypeProfile, Permutation]:
        """Return ``(rep, sigma)`` with ``rep`` canonical and ``apply(sigma, rep) == v``."""
        self._check_dims(v)
        v = tuple(tuple(row) for row in v)
        idb, idi = tuple(range(self.m)), tuple(range(self.n))
        if self.kind == "AllBidders":
            order = _stable_order(v)
            rep = tuple(v[k] for k in order)
            return rep, Permutation(tuple(order), idi)
        if self.kind == "AllItems":
            cols = list(zip(*v))
            order = _stable_order(cols)
            rep = tuple(tuple(row[k] for k in order) for row in v)
            return rep, Permutation(idb, tuple(order))
        best = None
        for g in self.elements():
            w = apply(g, v)
            if best is None or w < best[0]:
                best = (w, g)
        return best[0], best[1].inverse()

    def canonical(self, v: TypeProfile) -> TypeProfile:
        return self.canonical_with_transporter(v)[0]

    def is_canonical(self, v: TypeProfile) -> bool:
        return self.canonical(v) == tuple(tuple(r) for r in v)

    # -- orbits and stabilizers ----------------------------------------------------
    def orbit_size(self, v: TypeProfile) -> int:
        if self.kind == "AllBidders":
            return _multinomial(Counter(tuple(r) for r in v).values())
        if self.kind == "AllItems":
            return _multinomial(Counter(zip(*v)).values())
        return len(self.orbit(v))

    def stabilizer_order(self, v: TypeProfile) -> int:
        if self.kind == "AllBidders":
            return math.prod(math.factorial(c) for c in Counter(tuple(r) for r in v).values())
        if self.kind == "AllItems":
            return math.prod(math.factorial(c) for c in Counter(zip(*v)).values())
        return self.order // self.orbit_size(v)

    def orbit(self, v: TypeProfile) -> list[TypeProfile]:
        """Distinct profiles equivalent to ``v`` (sorted)."""
        self._check_dims(v)
        v = tuple(tuple(r) for r in v)
        if self.kind == "AllBidders":
            return sorted(arr for arr, _ in _distinct_permutations(v))
        if self.kind == "AllItems":
            cols = list(zip(*v))
            out = []
            for arr, _ in _distinct_permutations(cols):
                out.append(tuple(zip(*arr)) if arr else v)
            return sorted(out)
        return sorted({apply(g, v) for g in self.elements()})

    def orbit_with_transporters(self, v: TypeProfile) -> list[tuple[TypeProfile, Permutation]]:
        """``(x, sigma)`` pairs with ``apply(sigma, v) == x``, one per distinct ``x``."""
        v = tuple(tuple(r) for r in v)
        out = {}
        if self.kind == "AllBidders":
            for arr, perm in _distinct_permutations(v):
                # arr[k] = v[perm[k]] so bidder perm[k] moves to k
                bp = [0] * self.m
                for k, src in enumerate(perm):
                    bp[src] = k
                out[arr] = Permutation(tuple(bp), tuple(range(self.n)))
        elif self.kind == "AllItems":
            cols = list(zip(*v))
            for arr, perm in _distinct_permutations(cols):
                ip = [0] * self.n
                for k, src in enumerate(perm):
                    ip[src] = k
                out[tuple(zip(*arr))] = Permutation(tuple(range(self.m)), tuple(ip))
        else:
            for g in self.elements():
                out.setdefault(apply(g, v), g)
        return sorted(out.items())

    def stabilizer(self, v: TypeProfile) -> list[Permutation]:
        v = tuple(tuple(r) for r in v)
        if self.kind in ("AllBidders", "AllItems"):
            idb, idi = tuple(range(self.m)), tuple(range(self.n))
            keys = list(v) if self.kind == "AllBidders" else list(zip(*v))
            groups = defaultdict(list)
            for k, key in enumerate(keys):
                groups[key].append(k)
            blocks = list(groups.values())
            out = []
            for choice in itertools.product(*[itertools.permutations(b) for b in blocks]):
                p = list(range(len(keys)))
                for block, img in zip(blocks, choice):
                    for a, b in zip(block, img):
                        p[a] = b
                out.append(Permutation(tuple(p), idi) if self.kind == "AllBidders"
                           else Permutation(idb, tuple(p)))
            return sorted(out)
        return [g for g in self.elements() if apply(g, v) == v]

    def transporters(self, rep: TypeProfile, x: TypeProfile) -> list[Permutation]:
        """Every group element ``sigma`` with ``apply(sigma, rep) == x``."""
        found = self.canonical_with_transporter(x)
        rep0, s = found
        r2, t = self.canonical_with_transporter(rep)
        if rep0 != r2:
            return []
        # apply(s, rep0) = x and apply(t, rep0) = rep, so x = s t^-1 (rep)
        base = s * t.inverse()
        return sorted(base * h for h in self.stabilizer(rep))

    # -- stabilizer averaging --------------------------------------------------
    def bidder_classes(self, v: TypeProfile) -> list[list[int]]:
        """Partition of bidders into orbits of the stabilizer of ``v``."""
        v = tuple(tuple(r) for r in v)
        if self.kind == "AllBidders":
            groups = defaultdict(list)
            for i, row in enumerate(v):
                groups[row].append(i)
            return sorted(groups.values())
        if self.kind == "AllItems":
            return [[i] for i in range(self.m)]
        return _orbits_of(range(self.m), [g.bidder_perm for g in self.stabilizer(v)])

    def cell_classes(self, v: TypeProfile) -> dict[tuple[int, int], list[tuple[int, int]]]:
        """Map each cell ``(i, j)`` to its orbit under the stabilizer of ``v``."""
        v = tuple(tuple(r) for r in v)
        cells = [(i, j) for i in range(self.m) for j in range(self.n)]
        if self.kind == "AllBidders":
            out = {}
            for cls in self.bidder_classes(v):
                for j in range(self.n):
                    orb = [(a, j) for a in cls]
                    for c in orb:
                        out[c] = orb
            return out
        if self.kind == "AllItems":
            groups = defaultdict(list)
            for j, col in enumerate(zip(*v)):
                groups[col].append(j)
            out = {}
            for cls in groups.values():
                for i in range(self.m):
                    orb = [(i, b) for b in cls]
                    for c in orb:
                        out[c] = orb
            return out
        stab = self.stabilizer(v)
        out = {}
        for c in cells:
            if c not in out:
                orb = sorted({g(c) for g in stab})
                for d in orb:
                    out[d] = orb
        return out


def _orbits_of(points, perms) -> list[list[int]]:
    points = list(points)
    seen = set()
    out = []
    for p in points:
        if p in seen:
            continue
        orb = {p}
        frontier = [p]
        while frontier:
            x = frontier.pop()
            for g in perms:
                y = g[x]
                if y not in orb:
                    orb.add(y)
                    frontier.append(y)
        seen |= orb
        out.append(sorted(orb))
    return sorted(out)


# --------------------------------------------------------------------------
# representatives
# --------------------------------------------------------------------------


@dataclass
class RepresentativeSet:
    """Canonical class representatives with exact class masses."""

    group: SymmetryGroup
    representatives: list[TypeProfile]
    class_weight: dict[TypeProfile, Fraction]
    class_size: dict[TypeProfile, int]
    per_bidder: dict[int, list[ValueVector]] = field(default_factory=dict)

    def __len__(self):
        return len(self.representatives)

    def __iter__(self):
        return iter(self.representatives)

    def index(self) -> dict[TypeProfile, int]:
        return {w: k for k, w in enumerate(self.representatives)}

    def total_weight(self) -> Fraction:
        return sum(self.class_weight.values(), Fraction(0))


def sorted_types(dist: DiscreteDistribution, i: int) -> list[ValueVector]:
    """Bidder ``i``'s support types with nonincreasing coordinates (the set ``E_i``)."""
    out = {tuple(sorted(t, reverse=True)) for t in dist.marginal(i)}
    return sorted(out, reverse=True)


def enumerate_representatives(dist: DiscreteDistribution, group: SymmetryGroup,
                              setting=None, cap: int = DEFAULT_MAX_SUPPORT) -> RepresentativeSet:
    """One canonical profile per class, with class mass ``Pr[orbit]``.

    ``AllBidders`` with identical factors enumerates multisets of types;
    ``AllItems`` with independent item-symmetric factors enumerates multisets
    of columns.  Everything else expands the support (guarded by ``cap``).
    """
    if group.m != dist.m or group.n != dist.n:
        raise DimensionMismatch("group and distribution sizes differ")
    reps: list[TypeProfile] = []
    weight: dict[TypeProfile, Fraction] = {}
    size: dict[TypeProfile, int] = {}

    def push(rep, p):
        if len(reps) >= cap:
            raise ExplosionGuard(f"more than {cap} classes")
        s = group.orbit_size(rep)
        reps.append(rep)
        weight[rep] = p * s
        size[rep] = s

    if (group.kind == "AllBidders" and dist.is_product
            and all(f == dist.factors[0] for f in dist.factors)):
        f = dist.factors[0]
        types = sorted(f)
        est = math.comb(len(types) + dist.m - 1, dist.m)
        if est > cap:
            raise ExplosionGuard(f"{est} classes exceeds cap {cap}")
        for combo in itertools.combinations_with_replacement(types, dist.m):
            push(tuple(combo), math.prod((f[t] for t in combo), start=Fraction(1)))
    elif (group.kind == "AllItems" and dist.is_product
          and all(f.is_item_symmetric() for f in dist.factors)):
        coord_values = [sorted(f.values_used()) for f in dist.factors]
        columns = list(itertools.product(*coord_values))
        est = math.comb(len(columns) + dist.n - 1, dist.n)
        if est > 50 * cap:
            raise ExplosionGuard(f"{est} candidate column multisets exceeds cap")
        for combo in itertools.combinations_with_replacement(columns, dist.n):
            prof = tuple(tuple(c[i] for c in combo) for i in range(dist.m))
            p = dist.prob(prof)
            if p:
                push(prof, p)
    else:
        acc: dict[TypeProfile, Fraction] = defaultdict(Fraction)
        for prof, p in dist.support(cap=cap):
            acc[group.canonical(prof)] += p
        for rep in sorted(acc):
            s = group.orbit_size(rep)
            reps.append(rep)
            weight[rep] = acc[rep]
            size[rep] = s
    per_bidder = {}
    if group.kind == "AllItems" and dist.is_product:
        per_bidder = {i: sorted_types(dist, i) for i in range(dist.m)}
    return RepresentativeSet(group, reps, weight, size, per_bidder)


# --------------------------------------------------------------------------
# symmetrization
# --------------------------------------------------------------------------


def symmetrize(mechanism, group: SymmetryGroup):
    """Uniform mixture of ``sigma(M)`` over the group, evaluated lazily.

    The returned mechanism computes ``(1/|G|) sum_sigma sigma(M(sigma^-1 v))``
    on demand; nothing is materialized.
    """
    from .mechanism import SymmetrizedMechanism
    if not isinstance(group, SymmetryGroup):
        raise TypeError("group must be a SymmetryGroup")
    if group.m != mechanism.m or group.n != mechanism.n:
        raise DimensionMismatch("group and mechanism sizes differ")
    return SymmetrizedMechanism(mechanism, group)


def symmetrize_elements(mechanism, elements: Sequence[Permutation]):
    """Like :func:`symmetrize` for a raw element list; rejects non-subgroups."""
    if not elements:
        raise NotASubgroup("empty set of permutations")
    g = SymmetryGroup.custom(elements[0].m, elements[0].n, elements)
    return symmetrize(mechanism, g)
