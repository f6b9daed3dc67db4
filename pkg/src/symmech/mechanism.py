"""Mechanisms, interim forms, audits and the two outcome transforms.

An :class:`Outcome` is the pair ``(phi, price)``: ``phi[i][j]`` is the
probability bidder ``i`` gets item ``j`` and ``price[i]`` the expected payment.
Every mechanism maps a reported profile to an outcome in exact arithmetic.
"""

from __future__ import annotations

import itertools
from abc import ABC, abstractmethod
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence

from .model import (UNBOUNDED, Constraints, DiscreteDistribution, ModelError, TypeProfile,
                    ValueVector, as_fraction, round_profile, round_vector)
from .symmetry import Permutation, SymmetryGroup, apply, apply_prices

ZERO = Fraction(0)


class NotItemSymmetric(ModelError):
    pass


class DivisionByZeroValue(ArithmeticError):
    pass


@dataclass(frozen=True)
class Outcome:
    phi: tuple[tuple[Fraction, ...], ...]
    price: tuple[Fraction, ...]

    def __post_init__(self):
        object.__setattr__(self, "phi", tuple(tuple(as_fraction(x) for x in row) for row in self.phi))
        object.__setattr__(self, "price", tuple(as_fraction(x) for x in self.price))

    @classmethod
    def zero(cls, m: int, n: int) -> "Outcome":
        return cls(((ZERO,) * n,) * m, (ZERO,) * m)

    def permuted(self, sigma: Permutation) -> "Outcome":
        return Outcome(apply(sigma, self.phi), apply_prices(sigma, self.price))

    def scale_prices(self, factor: Fraction) -> "Outcome":
        return Outcome(self.phi, tuple(p * factor for p in self.price))

    def items_won(self, i: int) -> Fraction:
        return sum(self.phi[i], ZERO)

    def value(self, i: int, t: Sequence[Fraction]) -> Fraction:
        return sum((v * x for v, x in zip(t, self.phi[i])), ZERO)

    def utility(self, i: int, t: Sequence[Fraction]) -> Fraction:
        return self.value(i, t) - self.price[i]


def average_outcomes(outcomes: Sequence[Outcome]) -> Outcome:
    k = len(outcomes)
    m, n = len(outcomes[0].phi), len(outcomes[0].phi[0]) if outcomes[0].phi else 0
    phi = tuple(tuple(sum((o.phi[i][j] for o in outcomes), ZERO) / k for j in range(n))
                for i in range(m))
    price = tuple(sum((o.price[i] for o in outcomes), ZERO) / k for i in range(m))
    return Outcome(phi, price)


def stabilizer_average(out: Outcome, group: SymmetryGroup, rep: TypeProfile) -> Outcome:
    """Average of ``tau(out)`` over the stabilizer of ``rep`` (closed form)."""
    cells = group.cell_classes(rep)
    m, n = len(out.phi), len(out.phi[0])
    phi = tuple(tuple(sum((out.phi[a][b] for a, b in cells[(i, j)]), ZERO) / len(cells[(i, j)])
                      for j in range(n)) for i in range(m))
    price = [ZERO] * m
    for cls in group.bidder_classes(rep):
        avg = sum((out.price[a] for a in cls), ZERO) / len(cls)
        for a in cls:
            price[a] = avg
    return Outcome(phi, tuple(price))


# --------------------------------------------------------------------------
# mechanisms
# --------------------------------------------------------------------------


class Mechanism(ABC):
    m: int
    n: int

    @abstractmethod
    def outcome(self, profile: TypeProfile) -> Outcome:
        ...

    def __call__(self, profile):
        return self.outcome(tuple(tuple(t) for t in profile))


class SupportSnapper:
    """Maps an off-support report to an on-support type below it.

    The report is rounded down to the grid, then replaced by the dominated
    support type with the largest coordinate sum (ties: lexicographically
    largest).  When nothing is dominated the smallest support type is used.
    """

    def __init__(self, dist: DiscreteDistribution):
        self.delta = dist.delta
        self.types = [set(dist.marginal(i)) for i in range(dist.m)]
        self.sorted_types = [sorted(ts) for ts in self.types]

    def snap_type(self, i: int, t: ValueVector) -> ValueVector:
        if t in self.types[i]:
            return t
        if self.delta is not None:
            t = round_vector(t, self.delta, "down")
            if t in self.types[i]:
                return t
        below = [s for s in self.sorted_types[i] if all(a <= b for a, b in zip(s, t))]
        if not below:
            return self.sorted_types[i][0]
        return max(below, key=lambda s: (sum(s), s))

    def __call__(self, profile: TypeProfile) -> TypeProfile:
        return tuple(self.snap_type(i, t) for i, t in enumerate(profile))


class TableMechanism(Mechanism):
    """Explicit outcome per profile."""

    def __init__(self, table: Mapping[TypeProfile, Outcome], m: int, n: int,
                 fallback: Callable[[TypeProfile], TypeProfile] | None = None):
        self.table = dict(table)
        self.m, self.n = m, n
        self.fallback = fallback

    def outcome(self, profile):
        try:
            return self.table[profile]
        except KeyError:
            if self.fallback is None:
                raise
            return self.table[self.fallback(profile)]

    def map_outcomes(self, fn: Callable[[Outcome], Outcome]) -> "TableMechanism":
        return TableMechanism({k: fn(o) for k, o in self.table.items()}, self.m, self.n, self.fallback)


class SymmetricMechanism(Mechanism):
    """Outcomes stored on canonical representatives only.

    At a profile ``x = sigma(w)`` the outcome is ``sigma`` applied to the
    stabilizer average of the stored outcome of ``w``, so the mechanism
    respects every element of ``group`` by construction.
    """

    def __init__(self, group: SymmetryGroup, table: Mapping[TypeProfile, Outcome],
                 fallback: Callable[[TypeProfile], TypeProfile] | None = None):
        self.group = group
        self.m, self.n = group.m, group.n
        self.table = dict(table)
        self.fallback = fallback
        self._avg: dict[TypeProfile, Outcome] = {}

    def rep_outcome(self, rep: TypeProfile) -> Outcome:
        """Stabilizer-averaged outcome at a canonical representative."""
        out = self._avg.get(rep)
        if out is None:
            out = stabilizer_average(self.table[rep], self.group, rep)
            self._avg[rep] = out
        return out

    def outcome(self, profile):
        rep, sigma = self.group.canonical_with_transporter(profile)
        if rep not in self.table:
            if self.fallback is None:
                raise KeyError(profile)
            rep, sigma = self.group.canonical_with_transporter(self.fallback(profile))
        return self.rep_outcome(rep).permuted(sigma)

    def map_outcomes(self, fn: Callable[[Outcome], Outcome]) -> "SymmetricMechanism":
        return SymmetricMechanism(self.group, {k: fn(o) for k, o in self.table.items()}, self.fallback)


class SymmetrizedMechanism(Mechanism):
    """Lazy uniform mixture of ``sigma(M)`` over a group."""

    def __init__(self, base: Mechanism, group: SymmetryGroup):
        self.base = base
        self.group = group
        self.m, self.n = base.m, base.n
        self._elements = list(group.elements())
        self._cache: dict[TypeProfile, Outcome] = {}

    def outcome(self, profile):
        out = self._cache.get(profile)
        if out is None:
            parts = [self.base.outcome(apply(g.inverse(), profile)).permuted(g) for g in self._elements]
            out = average_outcomes(parts)
            self._cache[profile] = out
        return out


class FunctionMechanism(Mechanism):
    def __init__(self, fn: Callable[[TypeProfile], Outcome], m: int, n: int):
        self.fn, self.m, self.n = fn, m, n

    def outcome(self, profile):
        return self.fn(profile)


class LiftedMechanism(Mechanism):
    """Run ``base`` on the report rounded down to the ``delta`` grid."""

    def __init__(self, base: Mechanism, delta):
        self.base = base
        self.delta = as_fraction(delta)
        self.m, self.n = base.m, base.n

    def outcome(self, profile):
        return self.base.outcome(round_profile(profile, self.delta, "down"))


class DiscountedMechanism(Mechanism):
    def __init__(self, base: Mechanism, factor: Fraction):
        self.base, self.factor = base, as_fraction(factor)
        self.m, self.n = base.m, base.n

    def outcome(self, profile):
        return self.base.outcome(profile).scale_prices(self.factor)


def scale_prices(M: Mechanism, factor) -> Mechanism:
    factor = as_fraction(factor)
    if isinstance(M, (TableMechanism, SymmetricMechanism)):
        return M.map_outcomes(lambda o: o.scale_prices(factor))
    return DiscountedMechanism(M, factor)


def materialize(M: Mechanism, dist: DiscreteDistribution) -> TableMechanism:
    """Tabulate ``M`` on the full (guarded) support."""
    return TableMechanism({prof: M.outcome(prof) for prof, _ in dist.support()}, M.m, M.n)


def check_feasible(M: Mechanism, profiles, cons: Constraints) -> list[tuple]:
    """Per-profile violations of the marginal feasibility invariants."""
    bad = []
    for prof in profiles:
        o = M.outcome(prof)
        m, n = len(o.phi), len(o.phi[0])
        for i in range(m):
            for j in range(n):
                if not 0 <= o.phi[i][j] <= 1:
                    bad.append((prof, "range", i, j))
        for j in range(n):
            if sum(o.phi[i][j] for i in range(m)) > 1:
                bad.append((prof, "supply", j))
        for i in range(m):
            d = cons.demand(i)
            if d is not UNBOUNDED and o.items_won(i) > d:
                bad.append((prof, "demand", i))
            b = cons.budget(i)
            if b is not UNBOUNDED and o.price[i] > b:
                bad.append((prof, "budget", i))
    return bad


# --------------------------------------------------------------------------
# interim forms
# --------------------------------------------------------------------------


@dataclass
class InterimForm:
    pi: dict[tuple[int, ValueVector], tuple[Fraction, ...]]
    q: dict[tuple[int, ValueVector], Fraction]

    def value(self, i: int, truth: ValueVector, report: ValueVector) -> Fraction:
        return sum((v * x for v, x in zip(truth, self.pi[(i, report)])), ZERO)

    def utility(self, i: int, truth: ValueVector, report: ValueVector) -> Fraction:
        return self.value(i, truth, report) - self.q[(i, report)]

    def items(self, i: int, report: ValueVector) -> Fraction:
        return sum(self.pi[(i, report)], ZERO)


def _uses_representatives(M, dist: DiscreteDistribution) -> bool:
    return (isinstance(M, SymmetricMechanism) and dist.is_product
            and M.group.kind in ("AllBidders", "AllItems"))


def interim_form(M: Mechanism, dist: DiscreteDistribution, method: str = "auto",
                 extra_types: Mapping[int, Sequence[ValueVector]] | None = None) -> InterimForm:
    """Exact ``pi`` and ``q`` for every support type of every bidder.

    ``expand`` sums over the opponents' support directly.  ``classes`` works
    on representatives through the precomputed class weights (only for a
    :class:`SymmetricMechanism` over ``AllBidders``/``AllItems``).  ``auto``
    uses ``classes`` when available and ``expand`` otherwise.
    """
    if method == "auto":
        method = "classes" if _uses_representatives(M, dist) and not extra_types else "expand"
    if method == "classes":
        from .lp.aux import interim_from_representatives
        return interim_from_representatives(M, dist)
    if method != "expand":
        raise ValueError(f"unknown method {method!r}")
    pi, q = {}, {}
    for i in range(dist.m):
        types = list(dist.marginal(i))
        if extra_types and i in extra_types:
            types += [t for t in extra_types[i] if t not in types]
        for t in types:
            acc = [ZERO] * dist.n
            pay = ZERO
            for prof, p in dist.conditional_others(i, t):
                o = M.outcome(prof)
                for j in range(dist.n):
                    acc[j] += p * o.phi[i][j]
                pay += p * o.price[i]
            pi[(i, t)] = tuple(acc)
            q[(i, t)] = pay
    return InterimForm(pi, q)


# --------------------------------------------------------------------------
# revenue and audits
# --------------------------------------------------------------------------


def revenue(M: Mechanism, dist: DiscreteDistribution, method: str = "auto") -> Fraction:
    """Exact expected revenue under truthful play."""
    if method == "auto":
        method = "classes" if _uses_representatives(M, dist) else "expand"
    if method == "classes":
        from .symmetry import enumerate_representatives
        reps = enumerate_representatives(dist, M.group)
        return sum((reps.class_weight[w] * sum(M.rep_outcome(w).price, ZERO) for w in reps), ZERO)
    return sum((p * sum(M.outcome(prof).price, ZERO) for prof, p in dist.support()), ZERO)


@dataclass
class AuditReport:
    """Incentive, IR and monotonicity diagnostics.

    ``max_bic_violation`` is the least ``eps`` making the mechanism eps-BIC
    (eps-IC for :func:`check_ic`) in the units where a misreport's gain is
    compared with ``eps * (expected number of items it wins)``.
    ``max_gain`` is the raw worst gain, the quantity bounded by
    ``eps * max C_i`` under the definition without that item-count factor.
    ``unbounded`` flags a positive gain from a report that wins no items,
    which no finite ``eps`` covers.
    """

    max_bic_violation: Fraction = ZERO
    max_gain: Fraction = ZERO
    max_ir_violation: Fraction = ZERO
    unbounded: bool = False
    monotonicity_violations: list = field(default_factory=list)
    revenue: Fraction | None = None
    witness: tuple | None = None

    def is_eps_compatible(self, eps) -> bool:
        return not self.unbounded and self.max_bic_violation <= as_fraction(eps)

    @property
    def clean(self) -> bool:
        return (not self.unbounded and self.max_bic_violation == 0 and self.max_ir_violation == 0
                and not self.monotonicity_violations)

    def as_dict(self) -> dict:
        from .model import fmt
        return {
            "max_violation": fmt(self.max_bic_violation),
            "max_gain": fmt(self.max_gain),
            "max_ir_violation": fmt(self.max_ir_violation),
            "unbounded": self.unbounded,
            "monotonicity_violations": [list(map(str, v)) for v in self.monotonicity_violations],
            "revenue": None if self.revenue is None else fmt(self.revenue),
        }


def _record(report: AuditReport, gain: Fraction, items: Fraction, witness):
    if gain <= 0:
        return
    if gain > report.max_gain:
        report.max_gain = gain
    if items == 0:
        report.unbounded = True
        report.witness = witness
        return
    ratio = gain / items
    if ratio > report.max_bic_violation:
        report.max_bic_violation = ratio
        report.witness = witness


def check_bic(M: Mechanism, dist: DiscreteDistribution, eps=0, interim: InterimForm | None = None,
              with_revenue: bool = True) -> AuditReport:
    """Worst interim misreport gain and interim IR shortfall."""
    form = interim or interim_form(M, dist)
    rep = AuditReport()
    for i in range(dist.m):
        types = list(dist.marginal(i))
        for v in types:
            u = form.utility(i, v, v)
            if -u > rep.max_ir_violation:
                rep.max_ir_violation = -u
            for w in types:
                if w != v:
                    _record(rep, form.utility(i, v, w) - u, form.items(i, w), (i, v, w))
    if with_revenue:
        rep.revenue = revenue(M, dist)
    return rep


def check_ic(M: Mechanism, dist: DiscreteDistribution, eps=0, with_revenue: bool = True) -> AuditReport:
    """Worst per-profile misreport gain; IR is still checked ex interim."""
    rep = AuditReport()
    types = [list(dist.marginal(i)) for i in range(dist.m)]
    for prof, _ in dist.support():
        truth = M.outcome(prof)
        for i in range(dist.m):
            u = truth.utility(i, prof[i])
            for w in types[i]:
                if w == prof[i]:
                    continue
                dev = prof[:i] + (w,) + prof[i + 1:]
                if dist.prob(dev) == 0:
                    continue
                o = M.outcome(dev)
                _record(rep, o.utility(i, prof[i]) - u, o.items_won(i), (i, prof, w))
    form = interim_form(M, dist)
    for (i, v), _ in form.q.items():
        short = -form.utility(i, v, v)
        if short > rep.max_ir_violation:
            rep.max_ir_violation = short
    if with_revenue:
        rep.revenue = revenue(M, dist)
    return rep


def check_strong_monotonicity(M: Mechanism, dist: DiscreteDistribution, mode: str = "bic",
                              interim: InterimForm | None = None) -> list[tuple]:
    """Violations of strong monotonicity (empty list when monotone).

    ``bic``: ``(i, v_i, j, j')`` with ``v_ij >= v_ij'`` but ``pi_ij < pi_ij'``.
    ``ic``: ``(i, v, j, j')`` on profiles where every other bidder values
    ``j`` and ``j'`` equally, with ``phi_ij > phi_ij'`` but ``v_ij < v_ij'``.
    """
    if not all(dist.marginal(i).is_item_symmetric() for i in range(dist.m)):
        raise NotItemSymmetric("strong monotonicity is defined for item-symmetric distributions")
    out = []
    if mode == "bic":
        form = interim or interim_form(M, dist)
        for i in range(dist.m):
            for v in dist.marginal(i):
                pi = form.pi[(i, v)]
                for j, jj in itertools.permutations(range(dist.n), 2):
                    if v[j] >= v[jj] and pi[j] < pi[jj]:
                        out.append((i, v, j, jj))
        return out
    if mode == "ic":
        for prof, _ in dist.support():
            o = M.outcome(prof)
            for i in range(dist.m):
                for j, jj in itertools.permutations(range(dist.n), 2):
                    if all(prof[k][j] == prof[k][jj] for k in range(dist.m) if k != i):
                        if o.phi[i][j] > o.phi[i][jj] and prof[i][j] < prof[i][jj]:
                            out.append((i, prof, j, jj))
        return out
    raise ValueError(f"mode must be 'bic' or 'ic', not {mode!r}")


def check_equivariance(M: Mechanism, group: SymmetryGroup, profiles,
                       elements: Sequence[Permutation] | None = None) -> list[tuple]:
    """Pairs ``(sigma, v)`` where ``M(sigma(v)) != sigma(M(v))``."""
    elements = list(group.generators()) if elements is None else list(elements)
    bad = []
    for v in profiles:
        base = M.outcome(v)
        for g in elements:
            if M.outcome(apply(g, v)) != base.permuted(g):
                bad.append((g, v))
    return bad


def check_item_symmetry(M: Mechanism, dist: DiscreteDistribution) -> list[tuple]:
    """Item-permutation equivariance on the support (generators suffice)."""
    g = SymmetryGroup.all_items(dist.m, dist.n)
    return check_equivariance(M, g, [p for p, _ in dist.support()])


# --------------------------------------------------------------------------
# strong-monotonicity repair
# --------------------------------------------------------------------------


class _SwapRepair(Mechanism):
    """Reports in the orbit of ``target`` get their values at the images of
    ``j`` and ``j'`` swapped (averaged over every matching item permutation)."""

    def __init__(self, base: Mechanism, i: int, target: ValueVector, j: int, jj: int):
        self.base, self.i, self.target, self.j, self.jj = base, i, target, j, jj
        self.m, self.n = base.m, base.n
        swapped = list(target)
        swapped[j], swapped[jj] = swapped[jj], swapped[j]
        self.swapped = tuple(swapped)
        self.key = sorted(target)

    def outcome(self, profile):
        x = profile[self.i]
        if sorted(x) != self.key:
            return self.base.outcome(profile)
        parts = []
        for tau in itertools.permutations(range(self.n)):
            moved = [None] * self.n
            for a, b in enumerate(tau):
                moved[b] = self.target[a]
            if tuple(moved) != x:
                continue
            report = [None] * self.n
            for a, b in enumerate(tau):
                report[b] = self.swapped[a]
            dev = profile[:self.i] + (tuple(report),) + profile[self.i + 1:]
            parts.append(self.base.outcome(dev))
        return average_outcomes(parts)


def repair_strong_monotonicity(M: Mechanism, dist: DiscreteDistribution,
                               max_rounds: int = 10_000) -> SymmetricMechanism:
    """Swap-repair until the interim rule is strongly monotone.

    Each round picks the first violation ``(i, v*, j, j')`` and lets types in
    the orbit of ``v*`` play ``M`` as if their values at the images of ``j``
    and ``j'`` were exchanged.  The result is tabulated on item-class
    representatives.  Revenue and the incentive class are unchanged.
    """
    if not all(dist.marginal(i).is_item_symmetric() for i in range(dist.m)):
        raise NotItemSymmetric("distribution is not item-symmetric")
    if check_item_symmetry(M, dist):
        raise NotItemSymmetric("mechanism is not item-symmetric")
    from .symmetry import enumerate_representatives
    group = SymmetryGroup.all_items(dist.m, dist.n)
    reps = enumerate_representatives(dist, group)
    cur: Mechanism = M
    for _ in range(max_rounds):
        form = interim_form(cur, dist)
        bad = [v for v in check_strong_monotonicity(cur, dist, "bic", form)
               if v[1][v[2]] > v[1][v[3]]]
        table = {w: cur.outcome(w) for w in reps}
        cur = SymmetricMechanism(group, table, getattr(M, "fallback", None))
        if not bad:
            return cur
        i, v, j, jj = bad[0]
        # item j is valued higher but wins less often; swapping fixes the pair
        cur = _SwapRepair(cur, i, v, j, jj)
    raise RuntimeError("repair did not converge")


# --------------------------------------------------------------------------
# ex-post individual rationality
# --------------------------------------------------------------------------


class ExPostIRRule:
    """Charge ``c_i(v_i) * sum_{j in J} v_ij`` for a realized bundle ``J``.

    ``c_i(v_i) = q_i(v_i) / sum_j v_ij pi_ij(v_i)`` keeps the expected
    payment of every type and never exceeds the realized value when the
    mechanism is interim IR.
    """

    def __init__(self, M: Mechanism, dist: DiscreteDistribution, interim: InterimForm | None = None):
        self.M = M
        self.dist = dist
        self.form = interim or interim_form(M, dist)
        self.rate: dict[tuple[int, ValueVector], Fraction] = {}
        for (i, t), q in self.form.q.items():
            denom = self.form.value(i, t, t)
            if denom == 0:
                if q != 0:
                    raise DivisionByZeroValue(
                        f"bidder {i} type {t}: zero interim value but payment {q}")
                self.rate[(i, t)] = ZERO
            else:
                self.rate[(i, t)] = q / denom

    def charge(self, i: int, report: ValueVector, bundle) -> Fraction:
        c = self.rate[(i, report)]
        return c * sum((report[j] for j in bundle), ZERO)

    def expected_payment(self, i: int, report: ValueVector) -> Fraction:
        """Exact expectation of :meth:`charge` over the allocation lottery."""
        pi = self.form.pi[(i, report)]
        return self.rate[(i, report)] * sum((report[j] * pi[j] for j in range(len(pi))), ZERO)

    def run(self, profile: TypeProfile, cons: Constraints, rng):
        """Sample a feasible allocation and charge each bidder ex post."""
        from .allocation import decompose_marginals, sample_assignment
        o = self.M.outcome(profile)
        dec = decompose_marginals(o.phi, [cons.demand(i) for i in range(len(o.phi))])
        bundles = sample_assignment(dec, rng)
        pay = tuple(self.charge(i, profile[i], bundles[i]) for i in range(len(bundles)))
        return bundles, pay


def ex_post_ir_transform(M: Mechanism, dist: DiscreteDistribution) -> ExPostIRRule:
    return ExPostIRRule(M, dist)
