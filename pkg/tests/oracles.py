"""Independent reference computations used by the tests.

Nothing here imports the package's symmetry, mechanism or LP code paths;
each oracle works from the definitions by brute force, so agreement with
the library is evidence rather than tautology.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

ZERO = Fraction(0)


# -- distributions ------------------------------------------------------------


def expand(factors):
    """Every profile with its probability, from per-bidder ``{type: mass}`` maps."""
    out = {}
    for combo in itertools.product(*[list(f.items()) for f in factors]):
        prof = tuple(tuple(t) for t, _ in combo)
        out[prof] = out.get(prof, ZERO) + math.prod((p for _, p in combo), start=Fraction(1))
    return out


# -- permutations ---------------------------------------------------------------


def act(bperm, iperm, v):
    """``w[bperm[i]][iperm[j]] = v[i][j]``."""
    m, n = len(v), len(v[0])
    w = [[None] * n for _ in range(m)]
    for i in range(m):
        for j in range(n):
            w[bperm[i]][iperm[j]] = v[i][j]
    return tuple(tuple(r) for r in w)


def group_elements(kind, m, n):
    ib, ii = tuple(range(m)), tuple(range(n))
    if kind == "AllBidders":
        return [(b, ii) for b in itertools.permutations(range(m))]
    if kind == "AllItems":
        return [(ib, p) for p in itertools.permutations(range(n))]
    if kind == "Product":
        return [(b, p) for b in itertools.permutations(range(m)) for p in itertools.permutations(range(n))]
    raise ValueError(kind)


def canonical(kind, v):
    m, n = len(v), len(v[0])
    return min(act(b, p, v) for b, p in group_elements(kind, m, n))


def classes(kind, support):
    """``{canonical profile: total mass}`` by merging every orbit."""
    out = {}
    for prof, p in support.items():
        c = canonical(kind, prof)
        out[c] = out.get(c, ZERO) + p
    return out


def aux_by_sigma(kind, support, marg_i, w, i, j, v_i, stab_normalize=True):
    """The defining sum of the precomputed weights, straight from the definition.

    ``sum over sigma with sigma(w)_i = v_i of Pr[sigma(w)] / Pr[x_i = v_i]``,
    bucketed by the cell ``sigma^-1(i, j)``; divided by ``|Stab(w)|`` so that
    each distinct profile of the orbit counts once.
    """
    m, n = len(w), len(w[0])
    elems = group_elements(kind, m, n)
    stab = sum(1 for b, p in elems if act(b, p, w) == w)
    out = {}
    for b, p in elems:
        x = act(b, p, w)
        if x[i] != tuple(v_i):
            continue
        ib = b.index(i)
        jb = p.index(j)
        out[(ib, jb)] = out.get((ib, jb), ZERO) + support.get(x, ZERO) / marg_i[tuple(v_i)]
    if stab_normalize:
        out = {c: x / stab for c, x in out.items()}
    return {c: x for c, x in out.items() if x}


# -- mechanisms ---------------------------------------------------------------


def interim(outcome_fn, factors):
    """``pi`` and ``q`` for every bidder type by summing the full support."""
    m = len(factors)
    pi, q = {}, {}
    for i in range(m):
        for t, pt in factors[i].items():
            others = [factors[k] for k in range(m) if k != i]
            n = len(t)
            acc, pay = [ZERO] * n, ZERO
            for combo in itertools.product(*[list(f.items()) for f in others]):
                prof = [tt for tt, _ in combo]
                prof.insert(i, tuple(t))
                p = math.prod((pp for _, pp in combo), start=Fraction(1))
                phi, price = outcome_fn(tuple(prof))
                for j in range(n):
                    acc[j] += p * phi[i][j]
                pay += p * price[i]
            pi[(i, tuple(t))] = tuple(acc)
            q[(i, tuple(t))] = pay
    return pi, q


def expected_revenue(outcome_fn, support):
    return sum((p * sum(outcome_fn(prof)[1], ZERO) for prof, p in support.items()), ZERO)


def max_bic_gain(outcome_fn, factors):
    """Largest interim gain from any misreport, and the largest IR shortfall."""
    pi, q = interim(outcome_fn, factors)
    gain, ir = ZERO, ZERO
    for i, f in enumerate(factors):
        for v in f:
            u = sum((a * b for a, b in zip(v, pi[(i, v)])), ZERO) - q[(i, v)]
            ir = max(ir, -u)
            for w in f:
                g = sum((a * b for a, b in zip(v, pi[(i, w)])), ZERO) - q[(i, w)] - u
                gain = max(gain, g)
    return gain, ir


# -- single-bidder menus ------------------------------------------------------------


def menu_revenue(menu, factor):
    """Revenue of a menu of ``(allocation vector, price)`` options.

    The bidder picks a utility-maximizing option, or nothing; ties go to
    the option with the highest price.
    """
    total = ZERO
    for t, p in factor.items():
        best = (ZERO, ZERO)  # utility, price of the outside option
        for alloc, price in menu:
            u = sum((a * b for a, b in zip(t, alloc)), ZERO) - price
            if (u, price) > best:
                best = (u, price)
        total += p * best[1]
    return total


def best_deterministic_item_pricing(factor, grid, unit_demand=True):
    """Best revenue over per-item prices drawn from ``grid``.

    Unit demand: the bidder buys one item with the largest nonnegative
    surplus (ties to the pricier item).  Additive: every item worth at least
    its price.
    """
    return max(item_pricing_revenues(factor, grid, unit_demand).values())


def item_pricing_revenues(factor, grid, unit_demand=True):
    """``{price vector: revenue}`` for every per-item price vector on ``grid``."""
    n = len(next(iter(factor)))
    out = {}
    for prices in itertools.product(grid, repeat=n):
        if unit_demand:
            menu = []
            for j in range(n):
                alloc = tuple(Fraction(int(k == j)) for k in range(n))
                menu.append((alloc, prices[j]))
            rev = menu_revenue(menu, factor)
        else:
            rev = sum((p * sum((prices[j] for j in range(n) if t[j] >= prices[j]), ZERO)
                       for t, p in factor.items()), ZERO)
        out[prices] = rev
    return out


# -- matchings -------------------------------------------------------------------


def best_partial_matching(W, skip=None):
    """Largest total weight over matchings that may leave nodes unmatched."""
    r = len(W)
    best = ZERO
    rows = [a for a in range(r) if a != skip]
    for perm in itertools.permutations(range(r), len(rows)):
        edges = [W[a][b] for a, b in zip(rows, perm)]
        best = max(best, sum((e for e in edges if e > 0), ZERO))
    return best


def vcg_prices(W, match):
    """Externality of each matched left node, by brute force."""
    total = sum((W[a][b] for a, b in enumerate(match) if b is not None), ZERO)
    out = []
    for a, b in enumerate(match):
        if b is None:
            out.append(ZERO)
        else:
            out.append(best_partial_matching(W, skip=a) - (total - W[a][b]))
    return out


# -- allocation --------------------------------------------------------------------


def permutation_matrix(perm):
    N = len(perm)
    return [[Fraction(int(perm[r] == c)) for c in range(N)] for r in range(N)]


def binomial_sigma(p, n):
    return math.sqrt(max(p * (1 - p), 0.0) / n)
