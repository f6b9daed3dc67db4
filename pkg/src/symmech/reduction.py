"""Turning an approximately truthful mechanism into an exactly truthful one.

Each bidder is sold a *surrogate* in a private VCG auction against ``r - 1``
replicas of herself.  Surrogates are fresh draws from the rounded
distribution ``D'``, replicas are fresh draws from ``D``.  A replica's value
for a surrogate is its utility for the surrogate's interim outcome under the
mechanism with all prices discounted by ``1 - eta``.  The chosen surrogates
then play the mechanism, and every bidder who won her surrogate in VCG gets
her surrogate's outcome and pays its price on top of the VCG price.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import chisquare

from .mechanism import InterimForm, Mechanism, Outcome, interim_form, revenue, scale_prices
from .model import (Constraints, DiscreteDistribution, ModelError, Setting, TypeProfile, ValueVector,
                    as_fraction, randbelow, sample)

ZERO = Fraction(0)


class NegativeVcgPrice(ArithmeticError):
    pass


@dataclass(frozen=True)
class ReductionConfig:
    """Rebate ``eta``, grid step ``delta`` and the replica count ``r``.

    ``r`` defaults to ``(eta/delta)^2 * m^2 * beta_hat``.  That is far too
    large to simulate, so ``scale_override`` pins ``r`` directly.
    """

    eta: Fraction
    delta: Fraction
    setting: Setting
    scale_override: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "eta", as_fraction(self.eta))
        object.__setattr__(self, "delta", as_fraction(self.delta))
        if not 0 <= self.eta <= 1:
            raise ModelError(f"eta={self.eta} must lie in [0, 1]")
        if self.delta <= 0 or (1 / self.delta).denominator != 1:
            raise ModelError(f"delta={self.delta} must be 1/integer")
        if self.scale_override is not None and self.scale_override < 1:
            raise ModelError("r must be at least 1")

    @property
    def beta_hat(self) -> int:
        steps = int(1 / self.delta)
        if self.setting.kind == "k-items":
            return (steps + 1) ** self.setting.k
        return (self.setting.n + 1) ** (steps + 1)

    @property
    def formula_r(self) -> int:
        m = self.setting.m
        r = (self.eta / self.delta) ** 2 * m * m * self.beta_hat
        return max(1, math.ceil(r))

    @property
    def r(self) -> int:
        return self.scale_override if self.scale_override is not None else self.formula_r


def discount(M1: Mechanism, eta) -> Mechanism:
    """Same allocations, every price multiplied by ``1 - eta``."""
    return scale_prices(M1, 1 - as_fraction(eta))


def sort_permutation(v_i: Sequence) -> tuple[int, ...]:
    """Item order ``sigma`` with ``v[sigma[0]] >= v[sigma[1]] >= ...`` (stable)."""
    return tuple(sorted(range(len(v_i)), key=lambda j: -v_i[j]))


def respect_order(w: Sequence, order: Sequence[int]) -> ValueVector:
    """Rearrange ``w`` so its values are ordered like the vector ``order`` came from."""
    vals = sorted(w, reverse=True)
    out = [ZERO] * len(w)
    for rank, j in enumerate(order):
        out[j] = vals[rank]
    return tuple(out)


def build_weights(replicas: Sequence[ValueVector], surrogates: Sequence[ValueVector],
                  form: InterimForm, i: int, eta) -> list[list[Fraction]]:
    """``weight[a][b]``: replica ``a``'s utility for surrogate ``b``'s discounted outcome.

    ``form`` is the interim form of the undiscounted mechanism under ``D'``.
    """
    keep = 1 - as_fraction(eta)
    out = []
    for rep in replicas:
        row = []
        for s in surrogates:
            pi = form.pi[(i, s)]
            row.append(sum((x * p for x, p in zip(rep, pi)), ZERO) - keep * form.q[(i, s)])
        out.append(row)
    return out


@dataclass
class VcgResult:
    match: list[int | None]  # left -> right, None when unmatched
    welfare: Fraction
    prices: list[Fraction]  # per left node, zero when unmatched


def _compress(weights: Sequence[Sequence[Fraction]]) -> tuple[list[Fraction], np.ndarray]:
    """Distinct weight values plus an index matrix into them."""
    vals: list[Fraction] = []
    pos: dict[Fraction, int] = {}
    idx = np.zeros((len(weights), len(weights[0]) if weights else 0), dtype=np.int64)
    for a, row in enumerate(weights):
        for b, w in enumerate(row):
            k = pos.get(w)
            if k is None:
                k = pos[w] = len(vals)
                vals.append(w)
            idx[a, b] = k
    return vals, idx


def _max_weight_matching(vals: Sequence[Fraction], idx: np.ndarray,
                         skip: int | None = None) -> list[int | None]:
    """Max-weight matching with unmatched nodes allowed.

    Ties go to the matching with more edges.  Solved as an assignment
    problem on ``(r + c) x (c + r)``: each node may instead take its private
    dummy at weight 0.  Scores are integers when they fit a double exactly.
    """
    r, c = idx.shape
    if r == 0 or c == 0:
        return [None] * r
    den = math.lcm(*(w.denominator for w in vals))
    nums = [int(w * den) for w in vals]
    big = max(abs(x) for x in nums)
    if (big + 1) * (r + 1) * 4 * (r + c + 1) < 2 ** 52:
        table = np.array([x * (r + 1) + 1 for x in nums], dtype=np.float64)
        forbid = -float((big + 1) * (r + 1) * 2 * (r + c + 1))
    else:
        table = np.array([float(w) + 1e-12 for w in vals], dtype=np.float64)
        forbid = -(max(abs(float(w)) for w in vals) + 1.0) * 4 * (r + c + 1)
    N = r + c
    score = np.full((N, N), forbid)
    score[:r, :c] = table[idx]
    # left a -> its dummy c+a; dummy left r+b -> right b; dummies pair freely
    score[np.arange(r), c + np.arange(r)] = 0.0
    score[r + np.arange(c), np.arange(c)] = 0.0
    score[r:, c:] = 0.0
    if skip is not None:
        score[skip, :c] = forbid
    rows, cols = linear_sum_assignment(score, maximize=True)
    match: list[int | None] = [None] * r
    for a, b in zip(rows, cols):
        if a < r and b < c:
            match[a] = int(b)
    return match


def _welfare(vals, idx, match, skip: int | None = None) -> Fraction:
    return sum((vals[idx[a, b]] for a, b in enumerate(match) if b is not None and a != skip), ZERO)


def vcg_match(weights: Sequence[Sequence], price_for: Sequence[int] | None = None) -> VcgResult:
    """Welfare-maximizing matching and VCG prices.

    The price of a matched left node is the best welfare of the others
    without it minus the welfare the others get in the chosen matching.
    Prices are computed for the nodes in ``price_for`` (all by default).
    """
    vals, idx = _compress([[as_fraction(w) for w in row] for row in weights])
    return _vcg(vals, idx, price_for)


def _vcg(vals: Sequence[Fraction], idx: np.ndarray, price_for) -> VcgResult:
    r = idx.shape[0]
    match = _max_weight_matching(vals, idx)
    total = _welfare(vals, idx, match)
    prices = [ZERO] * r
    targets = range(r) if price_for is None else price_for
    for a in targets:
        if match[a] is None:
            continue
        alt = _max_weight_matching(vals, idx, skip=a)
        p = _welfare(vals, idx, alt, skip=a) - (total - vals[idx[a, match[a]]])
        if p < 0:
            raise NegativeVcgPrice(f"left node {a}: VCG price {p}")
        prices[a] = p
    return VcgResult(match, total, prices)


@dataclass
class SurrogateAuction:
    """One bidder's Phase-1 auction, kept for diagnostics."""

    bidder: int
    report: ValueVector
    slot: int  # the bidder's position among the left nodes
    replicas: list[ValueVector]  # all r left nodes, the bidder included at ``slot``
    surrogates: list[ValueVector]
    order: tuple[int, ...] | None
    values: list[Fraction]  # distinct edge weights
    index: np.ndarray  # weight[a][b] = values[index[a, b]]
    vcg: VcgResult
    chosen: int  # surrogate index representing the bidder
    matched: bool  # won the surrogate in VCG (rather than by the random fallback)
    W: Fraction  # sum over surrogates and items of pi_ij(s)

    @property
    def weights(self) -> list[list[Fraction]]:
        return [[self.values[k] for k in row] for row in self.index]

    @property
    def surrogate(self) -> ValueVector:
        return self.surrogates[self.chosen]

    @property
    def vcg_price(self) -> Fraction:
        return self.vcg.prices[self.slot] if self.matched else ZERO

    @property
    def matched_count(self) -> int:
        return sum(1 for b in self.vcg.match if b is not None)


@dataclass
class ReductionTrace:
    """Everything one run produced."""

    report: TypeProfile
    auctions: list[SurrogateAuction]
    surrogate_profile: TypeProfile
    outcome: Outcome  # expected allocation given the surrogates, and the realized payments
    bundles: tuple[tuple[int, ...], ...] | None = None

    def as_dict(self) -> dict:
        return {
            "report": [[str(x) for x in t] for t in self.report],
            "surrogates": [[str(x) for x in t] for t in self.surrogate_profile],
            "matched": [a.matched for a in self.auctions],
            "vcg_price": [str(a.vcg_price) for a in self.auctions],
            "phi": [[str(x) for x in row] for row in self.outcome.phi],
            "payment": [str(p) for p in self.outcome.price],
            "bundles": None if self.bundles is None else [list(b) for b in self.bundles],
        }


def _as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def child_seed(seed, k: int) -> np.random.SeedSequence:
    """The ``k``-th child stream of ``seed``.

    Unlike ``SeedSequence.spawn`` this is stateless, so asking twice gives
    the same stream.
    """
    ss = _as_seed_sequence(seed)
    return np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + (k,))


class ReducedMechanism:
    """The exactly truthful mechanism built from ``M1`` (tuned for ``D'``)."""

    def __init__(self, M1: Mechanism, D: DiscreteDistribution, D_prime: DiscreteDistribution,
                 config: ReductionConfig, cons: Constraints | None = None,
                 form: InterimForm | None = None):
        if D.m != D_prime.m or D.n != D_prime.n:
            raise ModelError("D and D' must have the same shape")
        self.M1, self.D, self.Dp, self.config = M1, D, D_prime, config
        self.cons = cons
        self.M = discount(M1, config.eta)
        self.form = form or interim_form(M1, D_prime)
        self.m, self.n = D.m, D.n
        self.sorts = config.setting.kind == "k-bidders"
        self._types: list[list[ValueVector]] = [[] for _ in range(self.m)]
        self._ids: list[dict[ValueVector, int]] = [{} for _ in range(self.m)]
        self._samplers: dict = {}
        self._wcache: dict = {}
        self._rcache: dict = {}
        self._ocache: dict = {}

    def _intern(self, i: int, t: ValueVector) -> int:
        ids = self._ids[i]
        k = ids.get(t)
        if k is None:
            k = ids[t] = len(self._types[i])
            self._types[i].append(t)
        return k

    def _draw(self, i: int, which: str, rng: np.random.Generator, count: int) -> list[int]:
        """``count`` i.i.d. type ids from ``D_i`` or ``D'_i`` (exact probabilities)."""
        key = (i, which)
        if key not in self._samplers:
            factor = (self.D if which == "D" else self.Dp).marginal(i)
            types = list(factor)
            den = math.lcm(*(factor[t].denominator for t in types))
            cum = np.cumsum([int(factor[t] * den) for t in types])
            self._samplers[key] = ([self._intern(i, t) for t in types], cum, int(cum[-1]))
        ids, cum, total = self._samplers[key]
        if total <= 2 ** 62:
            draws = rng.integers(0, total, size=count)
        else:
            draws = [randbelow(rng, total) for _ in range(count)]
        return [ids[k] for k in np.searchsorted(cum, draws, side="right")]

    def _reorder(self, i: int, k: int, order: tuple[int, ...]) -> int:
        key = (i, k, order)
        out = self._rcache.get(key)
        if out is None:
            out = self._rcache[key] = self._intern(i, respect_order(self._types[i][k], order))
        return out

    def _weight(self, i: int, a: int, b: int) -> Fraction:
        key = (i, a, b)
        w = self._wcache.get(key)
        if w is None:
            ta, tb = self._types[i][a], self._types[i][b]
            w = self._wcache[key] = build_weights([ta], [tb], self.form, i, self.config.eta)[0][0]
        return w

    # -- phase 1 --------------------------------------------------------------------
    def auction(self, i: int, report: ValueVector, rng: np.random.Generator) -> SurrogateAuction:
        r = self.config.r
        report = tuple(report)
        reps = self._draw(i, "D", rng, r - 1)
        surs = self._draw(i, "D'", rng, r)
        order = None
        if self.sorts:
            order = sort_permutation(report)
            reps = [self._reorder(i, k, order) for k in reps]
            surs = [self._reorder(i, k, order) for k in surs]
        slot = randbelow(rng, r)
        left = np.array(reps[:slot] + [self._intern(i, report)] + reps[slot:], dtype=np.int64)
        right = np.array(surs, dtype=np.int64)
        K = len(self._types[i])
        pairs, inverse = np.unique(left[:, None] * K + right[None, :], return_inverse=True)
        vals = [self._weight(i, int(p // K), int(p % K)) for p in pairs]
        idx = inverse.reshape(r, r)
        vcg = _vcg(vals, idx, [slot])
        chosen = vcg.match[slot]
        matched = chosen is not None
        if not matched:
            # unmatched left nodes take a uniformly random assignment of the
            # unmatched surrogates; only the bidder's draw matters here
            taken = {b for b in vcg.match if b is not None}
            free = [b for b in range(r) if b not in taken]
            chosen = free[randbelow(rng, len(free))]
        types = self._types[i]
        W = sum((c * self.form.items(i, types[k]) for k, c in Counter(surs).items()), ZERO)
        return SurrogateAuction(i, report, slot, [types[k] for k in left], [types[k] for k in surs],
                                order, vals, idx, vcg, chosen, matched, W)

    # -- both phases ----------------------------------------------------------------------
    def run(self, profile: TypeProfile, seed=None, sample_items: bool = False) -> ReductionTrace:
        """Run on a reported profile.

        The random stream is split per bidder (one child per Phase-1
        auction, one for Phase 2), so the auctions are independent and the
        result depends only on ``seed``.
        """
        profile = tuple(tuple(as_fraction(x) for x in t) for t in profile)
        auctions = [self.auction(i, profile[i], np.random.default_rng(child_seed(seed, i)))
                    for i in range(self.m)]
        s = tuple(a.surrogate for a in auctions)
        o = self._ocache.get(s)
        if o is None:
            o = self._ocache[s] = self.M.outcome(s)
        phi, pay = [], []
        for i, a in enumerate(auctions):
            if a.matched:
                phi.append(o.phi[i])
                pay.append(a.vcg_price + o.price[i])
            else:
                phi.append((ZERO,) * self.n)
                pay.append(ZERO)
        out = Outcome(tuple(phi), tuple(pay))
        bundles = None
        if sample_items:
            from .allocation import decompose_marginals, sample_assignment
            demands = [self.cons.demand(i) for i in range(self.m)] if self.cons else [self.n] * self.m
            dec = decompose_marginals(out.phi, demands)
            bundles = sample_assignment(dec, np.random.default_rng(child_seed(seed, self.m)))
        return ReductionTrace(profile, auctions, s, out, bundles)


# --------------------------------------------------------------------------
# Monte-Carlo diagnostics
# --------------------------------------------------------------------------


@dataclass
class Estimate:
    mean: float
    stderr: float
    trials: int

    def within(self, target: float, sigmas: float = 3.0) -> bool:
        return abs(self.mean - target) <= sigmas * self.stderr + 1e-12


def _estimate(xs: Sequence[float]) -> Estimate:
    a = np.asarray(xs, dtype=float)
    se = float(a.std(ddof=1) / math.sqrt(len(a))) if len(a) > 1 else 0.0
    return Estimate(float(a.mean()), se, len(a))


def surrogate_law_test(mech: ReducedMechanism, i: int, trials: int, seed=0) -> dict:
    """Chi-square test that the surrogate chosen for truthful bidder ``i`` follows ``D'_i``.

    Each trial draws a fresh truthful profile from ``D``.
    """
    types = list(mech.Dp.marginal(i))
    counts = {t: 0 for t in types}
    for k in range(trials):
        child = child_seed(seed, k)
        rng_prof, rng_run = (np.random.default_rng(child_seed(child, c)) for c in (0, 1))
        prof = sample(mech.D, rng_prof)
        a = mech.auction(i, prof[i], rng_run)
        counts[a.surrogate] += 1
    observed = np.array([counts[t] for t in types], dtype=float)
    expected = np.array([float(mech.Dp.marginal(i)[t]) * trials for t in types])
    if len(types) == 1:
        return {"bidder": i, "statistic": 0.0, "p_value": 1.0, "counts": observed.tolist()}
    stat, p = chisquare(observed, expected)
    return {"bidder": i, "statistic": float(stat), "p_value": float(p), "counts": observed.tolist(),
            "expected": expected.tolist()}


def misreport_gains(mech: ReducedMechanism, trials: int, seed=0,
                    bidders: Sequence[int] | None = None) -> list[dict]:
    """Estimated utility gain of every on-support misreport.

    For truth ``t`` and report ``t'`` the same seeds drive both runs, and the
    gain is the paired mean of ``u(t') - u(t)`` with its standard error.
    """
    out = []
    for i in (range(mech.m) if bidders is None else bidders):
        types = list(mech.D.marginal(i))
        for t in types:
            for t2 in types:
                if t2 == t:
                    continue
                diffs = []
                for k in range(trials):
                    child = child_seed(seed, k)
                    prof = list(sample(mech.D, np.random.default_rng(child_seed(child, 0))))
                    prof[i] = t
                    honest = mech.run(prof, child_seed(child, 1))
                    prof[i] = t2
                    lie = mech.run(prof, child_seed(child, 1))
                    diffs.append(float(lie.outcome.utility(i, t) - honest.outcome.utility(i, t)))
                e = _estimate(diffs)
                out.append({"bidder": i, "truth": t, "report": t2, "gain": e.mean,
                            "stderr": e.stderr, "ok": e.mean <= 3 * e.stderr + 1e-12})
    return out


@dataclass
class BoundReport:
    revenue: Estimate
    m1_revenue: Fraction
    eps: Fraction
    T: int
    bound: float  # (1-eta) R^{M1}(D') - ((eps + 2 delta)/eta) T
    bound_three_delta: float  # the 3 delta / eta variant
    matched_fraction: float
    matching_reference: float  # (r - sqrt(beta_hat r)) / r, clipped at 0
    trials: int

    @property
    def holds(self) -> bool:
        loose = min(self.bound, self.bound_three_delta)
        return self.revenue.mean + 3 * self.revenue.stderr >= loose

    def as_dict(self) -> dict:
        return {
            "revenue_mean": self.revenue.mean, "revenue_stderr": self.revenue.stderr,
            "m1_revenue": str(self.m1_revenue), "eps": str(self.eps), "T": self.T,
            "bound": self.bound, "bound_three_delta": self.bound_three_delta,
            "matched_fraction": self.matched_fraction, "matching_reference": self.matching_reference,
            "trials": self.trials, "holds": self.holds,
        }


def revenue_bound_check(mech: ReducedMechanism, trials: int, eps=0, T: int | None = None,
                        seed=0) -> BoundReport:
    """Monte-Carlo revenue of the reduced mechanism against its guarantee."""
    eps = as_fraction(eps)
    cfg = mech.config
    if T is None:
        T = mech.cons.total_cap(mech.m, mech.n) if mech.cons else mech.n
    r1 = revenue(mech.M1, mech.Dp)
    revs, matched = [], []
    for k in range(trials):
        child = child_seed(seed, k)
        prof = sample(mech.D, np.random.default_rng(child_seed(child, 0)))
        tr = mech.run(prof, child_seed(child, 1))
        revs.append(float(sum(tr.outcome.price, ZERO)))
        matched.append(sum(a.matched_count for a in tr.auctions) / (mech.m * cfg.r))
    keep = float(1 - cfg.eta)
    if cfg.eta > 0:
        bound = keep * float(r1) - float((eps + 2 * cfg.delta) / cfg.eta) * T
        bound3 = keep * float(r1) - float(3 * cfg.delta / cfg.eta) * T
    else:
        bound = bound3 = -math.inf
    r = cfg.r
    ref = max(0.0, (r - math.sqrt(cfg.beta_hat * r)) / r)
    return BoundReport(_estimate(revs), r1, eps, T, bound, bound3, float(np.mean(matched)), ref, trials)
