"""Monotone-hazard-rate marginals: quantiles, tail truncation and a posted-price benchmark.

Values at or above the threshold ``Xi`` carry little revenue for MHR
marginals, so they are collapsed onto ``Xi`` and everything below is rounded
down to the grid ``{0, delta*Xi, 2*delta*Xi, ...}``.  A first-come
first-served sale at a single posted price gives a revenue baseline that
turns the additive loss into a multiplicative one.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import integrate, stats

from .model import ModelError, Setting, as_fraction
from .reduction import Estimate, _estimate

log = logging.getLogger(__name__)

CDF_BITS = 40
HAZARD_POINTS = 1000
ALPHA_TOL = 1e-12
ZERO_F = Fraction(0)


class NotMHR(ModelError):
    pass


class NonConvergence(RuntimeError):
    pass


class ContinuousMarginal:
    """A value distribution on ``[0, inf)`` given by its cdf and pdf."""

    name = "continuous"

    def cdf(self, x: float) -> float:
        raise NotImplementedError

    def cdf_left(self, x: float) -> float:
        """``Pr[X < x]``; equals :meth:`cdf` unless there are atoms."""
        return self.cdf(x)

    def pdf(self, x: float) -> float:
        raise NotImplementedError

    def quantile(self, u: np.ndarray) -> np.ndarray:
        """Inverse cdf, vectorized (used for sampling)."""
        return np.array([alpha(self, 1.0 / (1.0 - float(x)), check=False) for x in np.atleast_1d(u)])

    def sample(self, rng: np.random.Generator, size=None):
        u = rng.random(size)
        out = self.quantile(np.atleast_1d(u))
        return out if size is not None else float(out[0])

    def upper(self) -> float:
        """A point past which the cdf is 1 to double precision (or a far quantile)."""
        return alpha(self, 1e12, check=False)

    def hazard(self, x: float) -> float:
        tail = 1.0 - self.cdf(x)
        return self.pdf(x) / tail if tail > 0 else math.inf

    def spec(self) -> dict:
        return {"family": self.name}


class Exponential(ContinuousMarginal):
    name = "exponential"

    def __init__(self, rate: float = 1.0):
        if rate <= 0:
            raise ModelError("rate must be positive")
        self.rate = float(rate)

    def cdf(self, x):
        return 0.0 if x <= 0 else -math.expm1(-self.rate * x)

    def pdf(self, x):
        return 0.0 if x < 0 else self.rate * math.exp(-self.rate * x)

    def hazard(self, x):
        return self.rate if x >= 0 else 0.0

    def quantile(self, u):
        return -np.log1p(-np.asarray(u, dtype=float)) / self.rate

    def spec(self):
        return {"family": self.name, "rate": self.rate}


class Uniform(ContinuousMarginal):
    name = "uniform"

    def __init__(self, low: float = 0.0, high: float = 1.0):
        if not 0 <= low < high:
            raise ModelError("need 0 <= low < high")
        self.low, self.high = float(low), float(high)

    def cdf(self, x):
        return min(1.0, max(0.0, (x - self.low) / (self.high - self.low)))

    def pdf(self, x):
        return 1.0 / (self.high - self.low) if self.low <= x <= self.high else 0.0

    def quantile(self, u):
        return self.low + np.asarray(u, dtype=float) * (self.high - self.low)

    def upper(self):
        return self.high

    def spec(self):
        return {"family": self.name, "low": self.low, "high": self.high}


class TruncatedNormal(ContinuousMarginal):
    """Normal(mu, sigma) conditioned on being non-negative."""

    name = "normal"

    def __init__(self, mu: float = 0.0, sigma: float = 1.0):
        if sigma <= 0:
            raise ModelError("sigma must be positive")
        self.mu, self.sigma = float(mu), float(sigma)
        self._d = stats.truncnorm((0.0 - self.mu) / self.sigma, np.inf, loc=self.mu, scale=self.sigma)

    def cdf(self, x):
        return float(self._d.cdf(x))

    def pdf(self, x):
        return float(self._d.pdf(x))

    def hazard(self, x):
        # sf underflows long before the hazard does
        lsf = float(self._d.logsf(x))
        if lsf == -math.inf:
            return math.inf
        return math.exp(float(self._d.logpdf(x)) - lsf)

    def quantile(self, u):
        return self._d.ppf(np.asarray(u, dtype=float))

    def spec(self):
        return {"family": self.name, "mu": self.mu, "sigma": self.sigma}


class Tabulated(ContinuousMarginal):
    """Piecewise-linear cdf through ``(value, cdf)`` points.

    A repeated value is a jump (an atom).  The cdf is 0 before the first
    point and must reach 1 at the last.
    """

    name = "tabulated"

    def __init__(self, points: Sequence[tuple[float, float]]):
        pts = [(float(x), float(c)) for x, c in points]
        if len(pts) < 2:
            raise ModelError("need at least two points")
        for (x0, c0), (x1, c1) in zip(pts, pts[1:]):
            if x1 < x0 or c1 < c0:
                raise ModelError("values and cdf must both be non-decreasing")
        if pts[0][0] < 0 or not 0 <= pts[0][1] <= 1 or abs(pts[-1][1] - 1.0) > 1e-12:
            raise ModelError("cdf must live on [0, inf) and end at 1")
        self.points = pts
        self.xs = np.array([p[0] for p in pts])
        self.cs = np.array([p[1] for p in pts])

    def cdf(self, x):
        if x < self.xs[0]:
            return 0.0
        if x >= self.xs[-1]:
            return 1.0
        k = int(np.searchsorted(self.xs, x, side="right")) - 1
        x0, c0 = self.points[k]
        x1, c1 = self.points[k + 1]
        return c1 if x1 == x0 else c0 + (c1 - c0) * (x - x0) / (x1 - x0)

    def cdf_left(self, x):
        if x <= self.xs[0]:
            return 0.0
        if x > self.xs[-1]:
            return 1.0
        k = int(np.searchsorted(self.xs, x, side="left"))
        x0, c0 = self.points[k - 1]
        x1, c1 = self.points[k]
        return c0 + (c1 - c0) * (x - x0) / (x1 - x0)

    def pdf(self, x):
        if x < self.xs[0] or x >= self.xs[-1]:
            return 0.0
        k = int(np.searchsorted(self.xs, x, side="right")) - 1
        x0, c0 = self.points[k]
        x1, c1 = self.points[k + 1]
        return math.inf if x1 == x0 else (c1 - c0) / (x1 - x0)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        out = np.empty_like(u)
        for n, t in enumerate(u.flat):
            k = int(np.searchsorted(self.cs, t, side="left"))
            k = min(max(k, 1), len(self.points) - 1)
            x0, c0 = self.points[k - 1]
            x1, c1 = self.points[k]
            out.flat[n] = x1 if c1 == c0 else x0 + (t - c0) * (x1 - x0) / (c1 - c0)
        return out

    def upper(self):
        return float(self.xs[-1])

    def spec(self):
        return {"family": self.name, "points": [list(p) for p in self.points]}


def from_spec(spec: dict) -> ContinuousMarginal:
    family = spec.get("family")
    if family == "exponential":
        return Exponential(spec.get("rate", 1.0))
    if family == "uniform":
        return Uniform(spec.get("low", 0.0), spec.get("high", 1.0))
    if family in ("normal", "truncated-normal"):
        return TruncatedNormal(spec.get("mu", 0.0), spec.get("sigma", 1.0))
    if family == "tabulated":
        return Tabulated(spec["points"])
    raise ModelError(f"unknown family {family!r}")


def check_mhr(F: ContinuousMarginal, points: int = HAZARD_POINTS, rtol: float = 1e-6) -> None:
    """Sample the hazard rate on a grid and reject a decrease.

    The grid spans ``[0, alpha_{10^6})``, where ``1 - F`` is still well
    resolved in double precision.
    """
    hi = min(F.upper(), alpha(F, 1e6, check=False))
    xs = np.linspace(0.0, hi, points, endpoint=False)
    prev = None
    for x in xs:
        if F.cdf(x) >= 1.0:
            break
        if F.pdf(x) == 0 and F.cdf(x) == 0:
            continue  # below the support
        h = F.hazard(x)
        if prev is not None and h < prev[1] * (1 - rtol) - 1e-300:
            raise NotMHR(f"hazard rate drops from {prev[1]:.6g} at {prev[0]:.6g} to {h:.6g} at {x:.6g}")
        prev = (x, h)


def alpha(F: ContinuousMarginal, p: float, check: bool = True, tol: float = ALPHA_TOL) -> float:
    """``inf {x : F(x) >= 1 - 1/p}`` by bisection."""
    if p < 1:
        raise ValueError("p must be at least 1")
    if check:
        check_mhr(F)
    target = 1.0 - 1.0 / p
    if target <= 0:
        return 0.0
    lo, hi = 0.0, 1.0
    for _ in range(2000):
        if F.cdf(hi) >= target:
            break
        lo, hi = hi, hi * 2
    else:
        raise NonConvergence(f"could not bracket the {target} quantile")
    for _ in range(400):
        if hi - lo <= tol * max(1.0, hi):
            return hi
        mid = (lo + hi) / 2
        if F.cdf(mid) >= target:
            hi = mid
        else:
            lo = mid
    raise NonConvergence(f"bisection for the {target} quantile did not reach {tol}")


def zeta_for(k: int, eps) -> int:
    """``ceil(log2(k/eps)) + 1``, computed exactly."""
    ratio = Fraction(k) / as_fraction(eps)
    z = 0
    while Fraction(2) ** z < ratio:
        z += 1
    while z > 0 and Fraction(2) ** (z - 1) >= ratio:
        z -= 1
    return z + 1


@dataclass
class TailPlan:
    zeta: int
    xi: float  # truncation threshold
    xi_prime: float  # posted price
    alphas: list[dict]  # per marginal: alpha at the count and at count**zeta
    count: int  # n for k-bidders, m for k-items

    def as_dict(self) -> dict:
        return {"zeta": self.zeta, "xi": self.xi, "xi_prime": self.xi_prime,
                "alphas": self.alphas, "count": self.count}


def plan(marginals: Sequence[ContinuousMarginal], eps, setting: Setting) -> TailPlan:
    """Threshold and posted price.

    ``marginals`` holds one per-item marginal per bidder (``k-bidders``) or
    one marginal per item (``k-items``).
    """
    for F in marginals:
        check_mhr(F)
    zeta = zeta_for(setting.k, eps)
    count = setting.n if setting.kind == "k-bidders" else setting.m
    rows = []
    for F in marginals:
        rows.append({"alpha_count": alpha(F, count, check=False),
                     "alpha_count_zeta": alpha(F, float(count) ** zeta, check=False)})
    xi = max(r["alpha_count_zeta"] for r in rows)
    xi_prime = max(r["alpha_count"] for r in rows)
    return TailPlan(zeta, xi, xi_prime, rows, count)


def snap(x: float, bits: int = CDF_BITS) -> Fraction:
    x = min(1.0, max(0.0, float(x)))
    return Fraction(round(x * 2 ** bits), 2 ** bits)


def truncate_and_discretize(F: ContinuousMarginal, xi: float, delta) -> dict[Fraction, Fraction]:
    """Exact masses on the grid ``{0, delta, ..., 1}`` in units of ``xi``.

    A value in ``[k*delta*xi, (k+1)*delta*xi)`` goes to ``k*delta``; anything
    at or above ``xi`` goes to ``1``.  cdf readings are snapped to
    ``CDF_BITS`` binary digits, and the masses telescope to exactly 1.
    """
    delta = as_fraction(delta)
    if delta <= 0 or (1 / delta).denominator != 1:
        raise ModelError(f"delta={delta} must be 1/integer")
    K = int(1 / delta)
    xi = float(xi)
    cuts = [ZERO_F] + [snap(F.cdf_left(k * float(delta) * xi)) for k in range(1, K + 1)]
    for a, b in zip(cuts, cuts[1:]):
        if b < a:
            raise ModelError("cdf oracle is not monotone")
    out: dict[Fraction, Fraction] = {}
    for k in range(K):
        mass = cuts[k + 1] - cuts[k]
        if mass:
            out[k * delta] = mass
    top = 1 - cuts[K]
    if top:
        out[Fraction(1)] = top
    residual = abs(1 - sum(out.values(), ZERO_F))
    log.debug("truncate_and_discretize residual %s", residual)
    return out


def tail_contribution(F: ContinuousMarginal, p: float) -> float:
    """``E[X * 1{X >= alpha_p}]``, the most revenue the tail above ``alpha_p`` can carry."""
    a = alpha(F, p, check=False)
    val, _ = integrate.quad(lambda x: x * F.pdf(x), a, np.inf)
    return float(val)


def posted_price_revenue(marginals: Sequence[Sequence[ContinuousMarginal]], price: float,
                         trials: int, seed=0, demands: Sequence | None = None) -> Estimate:
    """Monte-Carlo revenue of first-come first-served selling at one price.

    ``marginals[i][j]`` is bidder ``i``'s value distribution for item ``j``.
    Bidders arrive in index order.  Each buys the remaining items worth at
    least ``price`` to her (highest values first, up to her demand).
    """
    rng = np.random.default_rng(seed)
    m, n = len(marginals), len(marginals[0])
    vals = np.empty((trials, m, n))
    for i in range(m):
        for j in range(n):
            vals[:, i, j] = marginals[i][j].sample(rng, trials)
    caps = [n if demands is None or demands[i] is None else min(n, int(demands[i])) for i in range(m)]
    revs = np.zeros(trials)
    if price <= 0:
        return _estimate(revs)
    for t in range(trials):
        left = np.ones(n, dtype=bool)
        sold = 0
        for i in range(m):
            want = [j for j in np.argsort(-vals[t, i], kind="stable") if left[j] and vals[t, i, j] >= price]
            for j in want[:caps[i]]:
                left[j] = False
                sold += 1
        revs[t] = sold * price
    return _estimate(revs)


def posted_price_revenue_exact(marginals: Sequence[Sequence[ContinuousMarginal]], price: float,
                               demands: Sequence | None = None) -> float:
    """Closed form when items never compete for a bidder's demand.

    Holds for additive bidders and for a single item; each item is then
    sold iff some bidder values it at the price or more.
    """
    m, n = len(marginals), len(marginals[0])
    if n > 1 and demands is not None and any(d is not None and d < n for d in demands):
        raise ValueError("no closed form for unit demand over several items")
    if price <= 0:
        return 0.0
    total = 0.0
    for j in range(n):
        unsold = math.prod(marginals[i][j].cdf_left(price) for i in range(m))
        total += price * (1.0 - unsold)
    return total


def posted_price_lower_bound(marginals: Sequence[ContinuousMarginal], tail: TailPlan, setting: Setting,
                             trials: int, seed=0, demands: Sequence | None = None) -> Estimate:
    """The baseline sale at ``Xi'`` with the value grid implied by ``setting``."""
    return posted_price_revenue(value_grid(marginals, setting), tail.xi_prime, trials, seed, demands)


def value_grid(marginals: Sequence[ContinuousMarginal], setting: Setting) -> list[list[ContinuousMarginal]]:
    """``[i][j]`` marginals: per bidder for ``k-bidders``, per item for ``k-items``."""
    if setting.kind == "k-bidders":
        if len(marginals) not in (1, setting.m):
            raise ModelError("need one marginal per bidder")
        per = list(marginals) if len(marginals) == setting.m else list(marginals) * setting.m
        return [[per[i]] * setting.n for i in range(setting.m)]
    if len(marginals) not in (1, setting.n):
        raise ModelError("need one marginal per item")
    per = list(marginals) if len(marginals) == setting.n else list(marginals) * setting.n
    return [list(per) for _ in range(setting.m)]
