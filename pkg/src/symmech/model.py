"""Value distributions, feasibility constraints and the two symmetric settings.

Values are exact :class:`fractions.Fraction` objects in units of ``v_max``
(so the largest admissible value is 1).  A type is a tuple of ``n`` values,
a profile is a tuple of ``m`` types.  Floating point never enters a
distribution; it only shows up in Monte-Carlo estimators.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np

ValueVector = tuple[Fraction, ...]
TypeProfile = tuple[ValueVector, ...]

DEFAULT_MAX_SUPPORT = 100_000


class ModelError(ValueError):
    """Base class for invalid model input."""


class NonNormalized(ModelError):
    pass


class OffGrid(ModelError):
    pass


class MissingRequiredSymmetry(ModelError):
    pass


class DimensionMismatch(ModelError):
    pass


class ExplosionGuard(RuntimeError):
    """An enumeration would exceed the configured size cap."""


class Unbounded:
    """No demand or budget limit.  Use the module level ``UNBOUNDED``."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNBOUNDED"

    def __reduce__(self):
        return (Unbounded, ())


UNBOUNDED = Unbounded()


def as_fraction(x) -> Fraction:
    """Parse ``"p/q"`` strings, ints and Fractions.  Floats are refused."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise TypeError("booleans are not values")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    raise TypeError(f"expected an exact rational, got {type(x).__name__}: {x!r}")


def as_vector(values: Iterable) -> ValueVector:
    return tuple(as_fraction(v) for v in values)


def fmt(x: Fraction) -> str:
    """Canonical ``p/q`` string of a rational (``p`` when integral)."""
    x = Fraction(x)
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


# --------------------------------------------------------------------------
# distributions
# --------------------------------------------------------------------------


class BidderFactor(Mapping[ValueVector, Fraction]):
    """Distribution of a single bidder's type: a finite map type -> mass."""

    def __init__(self, masses: Mapping | Iterable[tuple[Sequence, object]]):
        items = masses.items() if isinstance(masses, Mapping) else masses
        acc: dict[ValueVector, Fraction] = defaultdict(Fraction)
        for t, p in items:
            acc[as_vector(t)] += as_fraction(p)
        self._masses = {t: p for t, p in sorted(acc.items()) if p != 0}
        lengths = {len(t) for t in self._masses}
        if len(lengths) > 1:
            raise DimensionMismatch(f"types of different lengths {sorted(lengths)}")
        self.n = lengths.pop() if lengths else 0

    def __getitem__(self, t):
        return self._masses[t]

    def get(self, t, default=Fraction(0)):
        return self._masses.get(t, default)

    def __iter__(self):
        return iter(self._masses)

    def __len__(self):
        return len(self._masses)

    def __eq__(self, other):
        if isinstance(other, BidderFactor):
            return self._masses == other._masses
        return NotImplemented

    def __hash__(self):
        return hash(tuple(self._masses.items()))

    def __repr__(self):
        body = ", ".join(f"{tuple(fmt(v) for v in t)}: {fmt(p)}" for t, p in self._masses.items())
        return f"BidderFactor({{{body}}})"

    @property
    def total(self) -> Fraction:
        return sum(self._masses.values(), Fraction(0))

    def values_used(self) -> set[Fraction]:
        return {v for t in self._masses for v in t}

    def is_item_symmetric(self) -> bool:
        for t, p in self._masses.items():
            for perm in set(itertools.permutations(t)):
                if self.get(perm) != p:
                    return False
        return True

    @classmethod
    def iid(cls, values: Mapping, n: int) -> "BidderFactor":
        """Product of ``n`` independent coordinates sharing one marginal."""
        marg = {as_fraction(v): as_fraction(p) for v, p in values.items()}
        out = {}
        for combo in itertools.product(sorted(marg), repeat=n):
            out[combo] = math.prod((marg[v] for v in combo), start=Fraction(1))
        return cls(out)

    @classmethod
    def independent(cls, marginals: Sequence[Mapping]) -> "BidderFactor":
        """Product of independent (possibly different) coordinate marginals."""
        margs = [{as_fraction(v): as_fraction(p) for v, p in m.items()} for m in marginals]
        out = {}
        for combo in itertools.product(*[sorted(m) for m in margs]):
            out[combo] = math.prod((m[v] for m, v in zip(margs, combo)), start=Fraction(1))
        return cls(out)


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finite-support distribution over profiles.

    Product form stores one :class:`BidderFactor` per bidder and never
    expands the joint support unless :meth:`support` is called.  Correlated
    form stores the joint support explicitly.
    """

    factors: tuple[BidderFactor, ...] | None = None
    joint: Mapping[TypeProfile, Fraction] | None = None
    delta: Fraction | None = None
    max_support: int = DEFAULT_MAX_SUPPORT

    def __post_init__(self):
        if (self.factors is None) == (self.joint is None):
            raise ValueError("give exactly one of factors= or joint=")
        if self.joint is not None:
            acc: dict[TypeProfile, Fraction] = defaultdict(Fraction)
            for prof, p in self.joint.items():
                acc[tuple(as_vector(t) for t in prof)] += as_fraction(p)
            object.__setattr__(self, "joint", {k: v for k, v in sorted(acc.items()) if v != 0})
        else:
            object.__setattr__(self, "factors", tuple(
                f if isinstance(f, BidderFactor) else BidderFactor(f) for f in self.factors))
        if self.delta is not None:
            object.__setattr__(self, "delta", as_fraction(self.delta))

    # -- construction helpers -------------------------------------------------
    @classmethod
    def product(cls, factors: Sequence, delta=None, **kw) -> "DiscreteDistribution":
        return cls(factors=tuple(factors), delta=delta, **kw)

    @classmethod
    def iid_bidders(cls, factor, m: int, delta=None, **kw) -> "DiscreteDistribution":
        f = factor if isinstance(factor, BidderFactor) else BidderFactor(factor)
        return cls(factors=(f,) * m, delta=delta, **kw)

    @classmethod
    def point_mass(cls, profile: Sequence[Sequence], delta=None) -> "DiscreteDistribution":
        prof = tuple(as_vector(t) for t in profile)
        return cls(factors=tuple(BidderFactor({t: 1}) for t in prof), delta=delta)

    # -- shape -------------------------------------------------------------------
    @property
    def is_product(self) -> bool:
        return self.factors is not None

    @property
    def m(self) -> int:
        if self.factors is not None:
            return len(self.factors)
        return len(next(iter(self.joint)))

    @property
    def n(self) -> int:
        if self.factors is not None:
            return self.factors[0].n
        return len(next(iter(self.joint))[0])

    def support_size(self) -> int:
        if self.factors is not None:
            return math.prod(len(f) for f in self.factors)
        return len(self.joint)

    def marginal(self, i: int) -> BidderFactor:
        if self.factors is not None:
            return self.factors[i]
        acc: dict[ValueVector, Fraction] = defaultdict(Fraction)
        for prof, p in self.joint.items():
            acc[prof[i]] += p
        return BidderFactor(acc)

    def types(self, i: int) -> list[ValueVector]:
        return list(self.marginal(i))

    def values_used(self) -> set[Fraction]:
        if self.factors is not None:
            return set().union(*(f.values_used() for f in self.factors))
        return {v for prof in self.joint for t in prof for v in t}

    # -- probabilities -------------------------------------------------------------
    def prob(self, profile: TypeProfile) -> Fraction:
        if self.factors is not None:
            if len(profile) != len(self.factors):
                return Fraction(0)
            out = Fraction(1)
            for f, t in zip(self.factors, profile):
                p = f.get(t)
                if not p:
                    return Fraction(0)
                out *= p
            return out
        return self.joint.get(profile, Fraction(0))

    def support(self, cap: int | None = None) -> Iterator[tuple[TypeProfile, Fraction]]:
        """Expand the joint support, guarded by ``cap`` (default ``max_support``)."""
        cap = self.max_support if cap is None else cap
        size = self.support_size()
        if size > cap:
            raise ExplosionGuard(f"support has {size} profiles, cap is {cap}")
        if self.joint is not None:
            yield from self.joint.items()
            return
        for combo in itertools.product(*[list(f.items()) for f in self.factors]):
            prof = tuple(t for t, _ in combo)
            yield prof, math.prod((p for _, p in combo), start=Fraction(1))

    def conditional_others(self, i: int, v_i: ValueVector, cap: int | None = None):
        """Yield ``(v_{-i} as full profile with slot i = v_i, Pr[v_{-i} | v_i])``."""
        if self.factors is not None:
            others = [list(f.items()) for k, f in enumerate(self.factors) if k != i]
            size = math.prod(len(o) for o in others)
            cap = self.max_support if cap is None else cap
            if size > cap:
                raise ExplosionGuard(f"{size} opponent profiles, cap is {cap}")
            for combo in itertools.product(*others):
                rest = [t for t, _ in combo]
                prof = tuple(rest[:i]) + (v_i,) + tuple(rest[i:])
                yield prof, math.prod((p for _, p in combo), start=Fraction(1))
            return
        denom = self.marginal(i).get(v_i)
        if not denom:
            return
        for prof, p in self.joint.items():
            if prof[i] == v_i:
                yield prof, p / denom

    def expanded(self) -> "DiscreteDistribution":
        """Correlated-form copy (guarded expansion)."""
        return DiscreteDistribution(joint=dict(self.support()), delta=self.delta,
                                    max_support=self.max_support)

    def with_delta(self, delta) -> "DiscreteDistribution":
        return DiscreteDistribution(factors=self.factors, joint=self.joint, delta=delta,
                                    max_support=self.max_support)

    def total(self) -> Fraction:
        if self.factors is not None:
            return math.prod((f.total for f in self.factors), start=Fraction(1))
        return sum(self.joint.values(), Fraction(0))


# --------------------------------------------------------------------------
# constraints and settings
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Setting:
    """``k-items`` (few items, many i.i.d. bidders) or ``k-bidders``."""

    kind: str
    m: int
    n: int

    def __post_init__(self):
        if self.kind not in ("k-items", "k-bidders"):
            raise ValueError(f"unknown setting {self.kind!r}")
        if self.m < 1 or self.n < 1:
            raise ValueError("need at least one bidder and one item")

    @property
    def k(self) -> int:
        return self.n if self.kind == "k-items" else self.m

    @classmethod
    def k_items(cls, k: int, m: int) -> "Setting":
        return cls("k-items", m=m, n=k)

    @classmethod
    def k_bidders(cls, k: int, n: int) -> "Setting":
        return cls("k-bidders", m=k, n=n)


@dataclass(frozen=True)
class Constraints:
    demands: tuple = ()
    budgets: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "demands", tuple(
            UNBOUNDED if d is UNBOUNDED else int(d) for d in self.demands))
        object.__setattr__(self, "budgets", tuple(
            UNBOUNDED if b is UNBOUNDED else as_fraction(b) for b in self.budgets))
        for d in self.demands:
            if d is not UNBOUNDED and d < 1:
                raise ModelError(f"demand must be a positive integer, got {d}")
        for b in self.budgets:
            if b is not UNBOUNDED and b < 0:
                raise ModelError(f"budget must be non-negative, got {b}")

    @classmethod
    def unit_demand(cls, m: int) -> "Constraints":
        return cls(demands=(1,) * m, budgets=(UNBOUNDED,) * m)

    @classmethod
    def additive(cls, m: int) -> "Constraints":
        return cls(demands=(UNBOUNDED,) * m, budgets=(UNBOUNDED,) * m)

    def demand(self, i: int):
        return self.demands[i] if self.demands else UNBOUNDED

    def budget(self, i: int):
        return self.budgets[i] if self.budgets else UNBOUNDED

    def items_cap(self, i: int, n: int) -> int:
        """``T_i``: the most items bidder ``i`` can ever receive."""
        d = self.demand(i)
        return n if d is UNBOUNDED else min(n, d)

    def total_cap(self, m: int, n: int) -> int:
        """``T``: the most items a feasible mechanism can hand out."""
        return min(n, sum(self.items_cap(i, n) for i in range(m)))


@dataclass(frozen=True)
class Instance:
    """A validated (distribution, constraints, setting) triple."""

    dist: DiscreteDistribution
    cons: Constraints
    setting: Setting

    @property
    def T(self) -> int:
        return self.cons.total_cap(self.setting.m, self.setting.n)


@dataclass
class Violation:
    error: type
    message: str


class ValidationError(ModelError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(f"{v.error.__name__}: {v.message}" for v in violations))


def check(dist: DiscreteDistribution, cons: Constraints, setting: Setting) -> list[Violation]:
    """List every problem with the input (empty list when valid)."""
    out: list[Violation] = []
    if dist.m != setting.m or dist.n != setting.n:
        out.append(Violation(DimensionMismatch,
                             f"distribution is {dist.m}x{dist.n}, setting is {setting.m}x{setting.n}"))
        return out
    if dist.factors is not None:
        for i, f in enumerate(dist.factors):
            if f.total != 1:
                out.append(Violation(NonNormalized, f"bidder {i} factor sums to {fmt(f.total)}"))
    elif dist.total() != 1:
        out.append(Violation(NonNormalized, f"probabilities sum to {fmt(dist.total())}"))
    for v in sorted(dist.values_used()):
        if v < 0:
            out.append(Violation(OffGrid, f"negative value {fmt(v)}"))
        elif dist.delta is not None and (v / dist.delta).denominator != 1:
            out.append(Violation(OffGrid, f"value {fmt(v)} is not a multiple of delta={fmt(dist.delta)}"))
    if dist.delta is not None and (dist.delta <= 0 or (1 / dist.delta).denominator != 1):
        out.append(Violation(OffGrid, f"delta={fmt(dist.delta)} must be 1/integer"))
    if cons.demands and len(cons.demands) != setting.m:
        out.append(Violation(DimensionMismatch, "one demand per bidder expected"))
    if cons.budgets and len(cons.budgets) != setting.m:
        out.append(Violation(DimensionMismatch, "one budget per bidder expected"))
    if setting.kind == "k-bidders":
        if not dist.is_product:
            out.append(Violation(MissingRequiredSymmetry, "k-bidders needs independent bidders"))
        else:
            for i, f in enumerate(dist.factors):
                if not f.is_item_symmetric():
                    out.append(Violation(MissingRequiredSymmetry,
                                         f"bidder {i} distribution is not item-symmetric"))
    else:
        if not dist.is_product:
            out.append(Violation(MissingRequiredSymmetry, "k-items needs independent bidders"))
        elif any(f != dist.factors[0] for f in dist.factors):
            out.append(Violation(MissingRequiredSymmetry, "k-items needs identical bidder factors"))
        if len(set(cons.demands)) > 1 or len(set(cons.budgets)) > 1:
            out.append(Violation(MissingRequiredSymmetry,
                                 "k-items needs the same demand and budget for every bidder"))
    return out


def validate(dist: DiscreteDistribution, cons: Constraints, setting: Setting) -> Instance:
    """Return the checked instance or raise :class:`ValidationError`.

    The raised error carries every violation in ``.violations``; it is also
    an instance of the first violation's class so callers can catch e.g.
    :class:`NonNormalized` directly.
    """
    problems = check(dist, cons, setting)
    if problems:
        first = problems[0].error
        err_cls = type(f"{first.__name__}Error", (ValidationError, first), {})
        raise err_cls(problems)
    return Instance(dist, cons, setting)


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------


def randbelow(rng: np.random.Generator, n: int) -> int:
    """Uniform integer in ``[0, n)`` for arbitrarily large ``n`` (exact)."""
    if n <= 0:
        raise ValueError("n must be positive")
    if n <= 2**62:
        return int(rng.integers(0, n))
    bits = n.bit_length()
    while True:
        x = 0
        for _ in range(0, bits, 62):
            x = (x << 62) | int(rng.integers(0, 2**62))
        x >>= (-bits) % 62
        if x < n:
            return x


def exact_choice(rng: np.random.Generator, items: Sequence, probs: Sequence[Fraction]):
    """Draw one element with exactly the given rational probabilities."""
    den = math.lcm(*(Fraction(p).denominator for p in probs))
    weights = [int(Fraction(p) * den) for p in probs]
    total = sum(weights)
    x = randbelow(rng, total)
    for item, w in zip(items, weights):
        if x < w:
            return item
        x -= w
    raise AssertionError("unreachable")


def bernoulli(rng: np.random.Generator, p: Fraction) -> bool:
    p = Fraction(p)
    if p <= 0:
        return False
    if p >= 1:
        return True
    return randbelow(rng, p.denominator) < p.numerator


def sample_type(factor: BidderFactor, rng: np.random.Generator) -> ValueVector:
    types = list(factor)
    return exact_choice(rng, types, [factor[t] for t in types])


def sample(dist: DiscreteDistribution, rng: np.random.Generator) -> TypeProfile:
    """Draw one profile with exactly the support probabilities."""
    if dist.factors is not None:
        return tuple(sample_type(f, rng) for f in dist.factors)
    profs = list(dist.joint)
    return exact_choice(rng, profs, [dist.joint[p] for p in profs])


# --------------------------------------------------------------------------
# discretization
# --------------------------------------------------------------------------


def round_value(v: Fraction, delta: Fraction, direction: str = "down") -> Fraction:
    """Round to the ``delta`` grid.

    ``down`` floors.  ``up`` moves to the next multiple strictly above, so
    exact multiples also move up by one step.
    """
    k = math.floor(Fraction(v) / delta)
    if direction == "down":
        return k * delta
    if direction == "up":
        return (k + 1) * delta
    raise ValueError(f"direction must be 'down' or 'up', not {direction!r}")


def round_vector(t: Sequence, delta: Fraction, direction: str = "down") -> ValueVector:
    return tuple(round_value(v, delta, direction) for v in t)


def round_profile(prof: TypeProfile, delta: Fraction, direction: str = "down") -> TypeProfile:
    return tuple(round_vector(t, delta, direction) for t in prof)


def _round_factor(f: BidderFactor, delta: Fraction, direction: str) -> BidderFactor:
    acc: dict[ValueVector, Fraction] = defaultdict(Fraction)
    for t, p in f.items():
        acc[round_vector(t, delta, direction)] += p
    return BidderFactor(acc)


def discretize(dist, delta, direction: str = "down", n_items: int | None = None,
               n_bidders: int | None = None) -> DiscreteDistribution:
    """Push a distribution onto the ``delta`` grid.

    ``dist`` is a :class:`DiscreteDistribution`, or a continuous per-coordinate
    marginal (anything with a ``cdf`` method, see :mod:`symmech.mhr`) in which
    case ``n_items`` independent coordinates per bidder and ``n_bidders``
    i.i.d. bidders are assumed, and the support is truncated at 1.
    """
    delta = as_fraction(delta)
    if delta <= 0 or (1 / delta).denominator != 1:
        raise OffGrid(f"delta={fmt(delta)} must be 1/integer")
    if isinstance(dist, DiscreteDistribution):
        if dist.factors is not None:
            facs = tuple(_round_factor(f, delta, direction) for f in dist.factors)
            return DiscreteDistribution(factors=facs, delta=delta, max_support=dist.max_support)
        acc: dict[TypeProfile, Fraction] = defaultdict(Fraction)
        for prof, p in dist.joint.items():
            acc[round_profile(prof, delta, direction)] += p
        return DiscreteDistribution(joint=acc, delta=delta, max_support=dist.max_support)
    if hasattr(dist, "cdf"):
        from .mhr import truncate_and_discretize
        if direction != "down":
            raise ValueError("continuous marginals are only discretized downward")
        coord = truncate_and_discretize(dist, 1.0, delta)
        factor = BidderFactor.iid(coord, n_items or 1)
        return DiscreteDistribution(factors=(factor,) * (n_bidders or 1), delta=delta)
    raise TypeError(f"cannot discretize {type(dist).__name__}")


# --------------------------------------------------------------------------
# sample-only access
# --------------------------------------------------------------------------


def hoeffding_sample_count(classes: int, zeta: float, failure: float = 1e-3) -> int:
    """Samples so every class frequency is within ``zeta`` w.p. ``1 - failure``."""
    return math.ceil(math.log(2 * max(classes, 1) / failure) / (2 * zeta * zeta))


def estimate_from_samples(oracle: Callable[[np.random.Generator], TypeProfile], delta, group,
                          zeta: float, rng: np.random.Generator, n_samples: int | None = None,
                          class_bound: int | None = None) -> DiscreteDistribution:
    """Histogram estimate of class probabilities from a sampling oracle.

    Each sample is rounded down to the ``delta`` grid and mapped to its
    canonical class representative under ``group``.  The estimated class
    mass is then spread uniformly over the class (what applying a uniformly
    random group element to the representative does), so the result keeps
    every symmetry of ``group``.  Masses are exact sample fractions and sum
    to exactly 1.
    """
    delta = as_fraction(delta)
    if n_samples is None:
        if class_bound is None:
            m, n = group.m, group.n
            class_bound = max(n, m) ** ((int(1 / delta) + 1) ** min(n, m))
        n_samples = hoeffding_sample_count(class_bound, zeta)
    counts: Counter = Counter()
    for _ in range(n_samples):
        prof = round_profile(oracle(rng), delta, "down")
        counts[group.canonical(prof)] += 1
    joint: dict[TypeProfile, Fraction] = defaultdict(Fraction)
    for rep, c in counts.items():
        orbit = group.orbit(rep)
        share = Fraction(c, n_samples * len(orbit))
        for x in orbit:
            joint[x] += share
    return DiscreteDistribution(joint=joint, delta=delta)
