"""Revenue-maximization LPs: the full-support program and the two class-based ones.

Variable names:

* ``("phi", v, i, j)`` allocation probability at profile (or representative) ``v``
* ``("p", v, i)`` expected payment at ``v``
* ``("pi", i, t, j)`` interim allocation of bidder ``i`` reporting type ``t``
* ``("q", i, t)`` interim payment

Incentive rows carry the slack ``eps * (expected items won by the misreport)``.
"""

from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

from ..mechanism import (InterimForm, Outcome, SupportSnapper, SymmetricMechanism, TableMechanism)
from ..model import (UNBOUNDED, Constraints, DiscreteDistribution, MissingRequiredSymmetry,
                     as_fraction)
from ..symmetry import SymmetryGroup, enumerate_representatives, sorted_types
from .aux import AuxWeights
from .program import EQ, GE, LE, LinearProgram, LpSolution

ZERO = Fraction(0)


@dataclass
class FormulationInfo:
    kind: str  # "naive", "k-items", "k-bidders"
    mode: str
    eps: Fraction
    dist: DiscreteDistribution
    cons: Constraints
    profiles: list
    types: dict[int, list]
    group: SymmetryGroup | None = None
    weights: dict = field(default_factory=dict)
    aux: Any = None


def _check_mode(mode: str) -> str:
    mode = mode.lower()
    if mode not in ("bic", "ic"):
        raise ValueError(f"mode must be 'bic' or 'ic', not {mode!r}")
    return mode


def _feasibility_rows(lp: LinearProgram, profiles, m: int, n: int, cons: Constraints):
    for v in profiles:
        for j in range(n):
            lp.add_row({("phi", v, i, j): 1 for i in range(m)}, LE, 1, ("supply", v, j))
        for i in range(m):
            d = cons.demand(i)
            if d is not UNBOUNDED and d < n:
                lp.add_row({("phi", v, i, j): 1 for j in range(n)}, LE, d, ("demand", v, i))
            b = cons.budget(i)
            if b is not UNBOUNDED:
                lp.add_row({("p", v, i): 1}, LE, b, ("budget", v, i))


def _interim_rows(lp: LinearProgram, types: dict[int, list], n: int, eps: Fraction, mode: str,
                  bic_pairs: bool = True):
    for i, ts in types.items():
        for t in ts:
            ir = {("pi", i, t, j): t[j] for j in range(n)}
            ir[("q", i, t)] = -1
            lp.add_row(ir, GE, 0, ("ir", i, t))
        if mode != "bic" or not bic_pairs:
            continue
        for t, s in itertools.permutations(ts, 2):
            row: dict = defaultdict(Fraction)
            for j in range(n):
                row[("pi", i, t, j)] += t[j]
                row[("pi", i, s, j)] += -t[j] + eps
            row[("q", i, t)] -= 1
            row[("q", i, s)] += 1
            lp.add_row(row, GE, 0, ("bic", i, t, s))


def _add_interim_vars(lp: LinearProgram, types: dict[int, list], n: int):
    for i, ts in types.items():
        for t in ts:
            for j in range(n):
                lp.add_var(("pi", i, t, j), lower=None)
            lp.add_var(("q", i, t), lower=None)


def _add_profile_vars(lp: LinearProgram, profiles, m: int, n: int):
    for v in profiles:
        for i in range(m):
            for j in range(n):
                lp.add_var(("phi", v, i, j), 0, 1)
        for i in range(m):
            lp.add_var(("p", v, i), lower=None)


# --------------------------------------------------------------------------
# full-support program
# --------------------------------------------------------------------------


def build_naive(dist: DiscreteDistribution, cons: Constraints, eps=0, mode: str = "bic",
                cap: int | None = None) -> LinearProgram:
    """One variable block per support profile; the reference program."""
    mode = _check_mode(mode)
    eps = as_fraction(eps)
    m, n = dist.m, dist.n
    support = dict(dist.support(cap=cap))
    profiles = sorted(support)
    types = {i: sorted(dist.marginal(i)) for i in range(m)}
    marg = {i: dist.marginal(i) for i in range(m)}
    lp = LinearProgram(f"naive-{mode}")
    _add_profile_vars(lp, profiles, m, n)
    _add_interim_vars(lp, types, n)
    lp.set_objective({("p", v, i): support[v] for v in profiles for i in range(m)})
    by_type = defaultdict(list)
    for v in profiles:
        for i in range(m):
            by_type[(i, v[i])].append(v)
    for i, ts in types.items():
        for t in ts:
            den = marg[i][t]
            for j in range(n):
                row = {("pi", i, t, j): -1}
                for v in by_type[(i, t)]:
                    row[("phi", v, i, j)] = support[v] / den
                lp.add_row(row, EQ, 0, ("pi", i, t, j))
            row = {("q", i, t): -1}
            for v in by_type[(i, t)]:
                row[("p", v, i)] = support[v] / den
            lp.add_row(row, EQ, 0, ("q", i, t))
    _feasibility_rows(lp, profiles, m, n, cons)
    _interim_rows(lp, types, n, eps, mode)
    if mode == "ic":
        for v in profiles:
            for i in range(m):
                for s in types[i]:
                    if s == v[i]:
                        continue
                    dev = v[:i] + (s,) + v[i + 1:]
                    if dev not in support:
                        continue
                    row: dict = defaultdict(Fraction)
                    for j in range(n):
                        row[("phi", v, i, j)] += v[i][j]
                        row[("phi", dev, i, j)] += -v[i][j] + eps
                    row[("p", v, i)] -= 1
                    row[("p", dev, i)] += 1
                    lp.add_row(row, GE, 0, ("ic", v, i, s))
    lp.info = FormulationInfo("naive", mode, eps, dist, cons, profiles, types,
                              weights={v: support[v] for v in profiles})
    return lp


# --------------------------------------------------------------------------
# class-based programs
# --------------------------------------------------------------------------


class _ProfileExpr:
    """Linear expressions for the outcome at any profile in terms of
    representative variables (stabilizer average, then transport)."""

    def __init__(self, group: SymmetryGroup, reps):
        self.group = group
        self.reps = set(reps)
        self._cells: dict = {}
        self._bidders: dict = {}

    def _classes(self, rep):
        if rep not in self._cells:
            self._cells[rep] = self.group.cell_classes(rep)
            cls = {}
            for c in self.group.bidder_classes(rep):
                for a in c:
                    cls[a] = c
            self._bidders[rep] = cls
        return self._cells[rep], self._bidders[rep]

    def phi(self, x, i, j) -> dict:
        rep, sigma = self.group.canonical_with_transporter(x)
        cells, _ = self._classes(rep)
        a, b = sigma.inverse()((i, j))
        orb = cells[(a, b)]
        return {("phi", rep, c, d): Fraction(1, len(orb)) for c, d in orb}

    def price(self, x, i) -> dict:
        rep, sigma = self.group.canonical_with_transporter(x)
        _, bidders = self._classes(rep)
        a = sigma.inverse().bidder_perm[i]
        cls = bidders[a]
        return {("p", rep, c): Fraction(1, len(cls)) for c in cls}


def _add_scaled(row: dict, expr: dict, scale: Fraction):
    for k, v in expr.items():
        row[k] += v * scale


def _comonotone_deviations(v, i: int, types_i) -> list:
    """Types of bidder ``i`` ordered like ``v_i`` inside every block of items the
    other bidders value identically (one per rearrangement class)."""
    m, n = len(v), len(v[0])
    blocks = defaultdict(list)
    for j in range(n):
        blocks[tuple(v[k][j] for k in range(m) if k != i)].append(j)
    blocks = list(blocks.values())

    def key(t):
        return tuple(tuple(t[j] for j in b) for b in blocks)

    def ordered_like(t):
        for b in blocks:
            for a, c in itertools.combinations(b, 2):
                if v[i][a] < v[i][c] and t[a] > t[c]:
                    return False
                if v[i][a] > v[i][c] and t[a] < t[c]:
                    return False
                if v[i][a] == v[i][c] and t[a] > t[c]:
                    # inside a tie of v_i keep the ascending arrangement
                    return False
        return True

    return sorted(t for t in types_i if ordered_like(t))


def build_succinct(dist: DiscreteDistribution, cons: Constraints, setting_kind: str, eps=0,
                   mode: str = "bic", normalize: bool = True, aux_method: str = "closed",
                   cross_check="auto") -> LinearProgram:
    """Variables only on class representatives of the setting's symmetry group."""
    mode = _check_mode(mode)
    eps = as_fraction(eps)
    m, n = dist.m, dist.n
    if setting_kind == "k-items":
        if not dist.is_product or any(f != dist.factors[0] for f in dist.factors):
            raise MissingRequiredSymmetry("k-items programs need i.i.d. bidders")
        if len({cons.demand(i) for i in range(m)}) > 1 or len({cons.budget(i) for i in range(m)}) > 1:
            raise MissingRequiredSymmetry("k-items programs need one demand and one budget for all bidders")
        group = SymmetryGroup.all_bidders(m, n)
        types = {i: sorted(dist.marginal(i)) for i in range(m)}
    elif setting_kind == "k-bidders":
        if not dist.is_product or not all(f.is_item_symmetric() for f in dist.factors):
            raise MissingRequiredSymmetry("k-bidders programs need independent item-symmetric bidders")
        group = SymmetryGroup.all_items(m, n)
        types = {i: sorted_types(dist, i) for i in range(m)}
    else:
        raise ValueError(f"unknown setting {setting_kind!r}")
    E = enumerate_representatives(dist, group)
    reps = E.representatives
    aux = AuxWeights(dist, group, reps, normalize=normalize, method=aux_method, cross_check=cross_check)
    lp = LinearProgram(f"{setting_kind}-{mode}")
    _add_profile_vars(lp, reps, m, n)
    _add_interim_vars(lp, types, n)
    lp.set_objective({("p", w, i): E.class_weight[w] for w in reps for i in range(m)})
    for i, ts in types.items():
        for t in ts:
            for j in range(n):
                row: dict = defaultdict(Fraction)
                row[("pi", i, t, j)] -= 1
                for (w, a, b), val in aux.row(i, j, t):
                    row[("phi", w, a, b)] += val
                lp.add_row(row, EQ, 0, ("pi", i, t, j))
            row = defaultdict(Fraction)
            row[("q", i, t)] -= 1
            for (w, a, _b), val in aux.row(i, 0, t):
                row[("p", w, a)] += val
            lp.add_row(row, EQ, 0, ("q", i, t))
    _feasibility_rows(lp, reps, m, n, cons)
    _interim_rows(lp, types, n, eps, mode)
    if mode == "bic" and setting_kind == "k-bidders":
        for i, ts in types.items():
            for t in ts:
                for j in range(n - 1):
                    lp.add_row({("pi", i, t, j): 1, ("pi", i, t, j + 1): -1}, GE, 0, ("mono", i, t, j))
    if mode == "ic":
        expr = _ProfileExpr(group, reps)
        supp_types = {i: sorted(dist.marginal(i)) for i in range(m)}
        for v in reps:
            for i in range(m):
                if setting_kind == "k-bidders":
                    devs = _comonotone_deviations(v, i, supp_types[i])
                else:
                    devs = supp_types[i]
                for s in devs:
                    if s == v[i]:
                        continue
                    dev = v[:i] + (s,) + v[i + 1:]
                    row = defaultdict(Fraction)
                    for j in range(n):
                        _add_scaled(row, expr.phi(v, i, j), v[i][j])
                        _add_scaled(row, expr.phi(dev, i, j), -v[i][j] + eps)
                    _add_scaled(row, expr.price(v, i), Fraction(-1))
                    _add_scaled(row, expr.price(dev, i), Fraction(1))
                    lp.add_row(row, GE, 0, ("ic", v, i, s))
                if setting_kind == "k-bidders":
                    for j, jj in itertools.permutations(range(n), 2):
                        if v[i][j] > v[i][jj] and all(v[k][j] == v[k][jj] for k in range(m) if k != i):
                            row = defaultdict(Fraction)
                            _add_scaled(row, expr.phi(v, i, j), Fraction(1))
                            _add_scaled(row, expr.phi(v, i, jj), Fraction(-1))
                            lp.add_row(row, GE, 0, ("mono_ic", v, i, j, jj))
    lp.info = FormulationInfo(setting_kind, mode, eps, dist, cons, reps, types, group,
                              weights=dict(E.class_weight), aux=aux)
    return lp


def build_succinct_k_items(dist, cons, eps=0, mode="bic", **kw) -> LinearProgram:
    return build_succinct(dist, cons, "k-items", eps, mode, **kw)


def build_succinct_k_bidders(dist, cons, eps=0, mode="bic", **kw) -> LinearProgram:
    return build_succinct(dist, cons, "k-bidders", eps, mode, **kw)


def build(dist, cons, kind: str, eps=0, mode="bic", **kw) -> LinearProgram:
    if kind == "naive":
        return build_naive(dist, cons, eps, mode)
    return build_succinct(dist, cons, kind, eps, mode, **kw)


# --------------------------------------------------------------------------
# solution extraction
# --------------------------------------------------------------------------


def extract(solution: LpSolution, lp: LinearProgram):
    """Mechanism encoded by an optimal solution (table or representative table)."""
    if not solution.optimal:
        raise ValueError(f"cannot extract from a {solution.status} solution")
    info: FormulationInfo = lp.info
    m, n = info.dist.m, info.dist.n
    vals = solution.values
    table = {}
    for v in info.profiles:
        phi = tuple(tuple(Fraction(vals[("phi", v, i, j)]) for j in range(n)) for i in range(m))
        price = tuple(Fraction(vals[("p", v, i)]) for i in range(m))
        table[v] = Outcome(phi, price)
    snap = SupportSnapper(info.dist)
    if info.kind == "naive":
        return TableMechanism(table, m, n, fallback=snap)
    return SymmetricMechanism(info.group, table, fallback=snap)


def extract_interim(solution: LpSolution, lp: LinearProgram) -> InterimForm:
    info: FormulationInfo = lp.info
    n = info.dist.n
    pi, q = {}, {}
    for i, ts in info.types.items():
        for t in ts:
            pi[(i, t)] = tuple(Fraction(solution.values[("pi", i, t, j)]) for j in range(n))
            q[(i, t)] = Fraction(solution.values[("q", i, t)])
    return InterimForm(pi, q)
