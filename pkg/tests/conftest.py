import itertools
import random
import sys
from fractions import Fraction as F
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from symmech import BidderFactor, Constraints, DiscreteDistribution  # noqa: E402
from symmech.model import UNBOUNDED  # noqa: E402


def random_masses(rnd: random.Random, k: int) -> list[F]:
    w = [rnd.randint(1, 4) for _ in range(k)]
    s = sum(w)
    return [F(x, s) for x in w]


def random_values(rnd: random.Random, c: int, grid: int = 4) -> list[F]:
    return sorted(F(x, grid) for x in rnd.sample(range(1, grid + 1), c))


def random_item_symmetric_factor(rnd: random.Random, n: int, c: int) -> BidderFactor:
    """Independent i.i.d. coordinates, so the factor is invariant under item swaps."""
    vals = random_values(rnd, c)
    return BidderFactor.iid(dict(zip(vals, random_masses(rnd, c))), n)


def random_general_factor(rnd: random.Random, n: int, c: int) -> BidderFactor:
    """Arbitrary mass on the grid ``vals^n`` (usually not item-symmetric)."""
    vals = random_values(rnd, c)
    types = list(itertools.product(vals, repeat=n))
    k = rnd.randint(1, len(types))
    chosen = rnd.sample(types, k)
    return BidderFactor(list(zip(chosen, random_masses(rnd, k))))


def random_constraints(rnd: random.Random, m: int, n: int, identical: bool) -> Constraints:
    def one():
        d = rnd.choice([1, UNBOUNDED] if n > 1 else [1])
        b = rnd.choice([UNBOUNDED, UNBOUNDED, F(rnd.randint(1, 4), 4)])
        return d, b
    if identical:
        d, b = one()
        return Constraints(demands=(d,) * m, budgets=(b,) * m)
    pairs = [one() for _ in range(m)]
    return Constraints(demands=tuple(d for d, _ in pairs), budgets=tuple(b for _, b in pairs))


def two_value_iid(m: int = 2, n: int = 1, lo=F(1, 2), hi=F(1)) -> DiscreteDistribution:
    return DiscreteDistribution.iid_bidders(BidderFactor.iid({lo: F(1, 2), hi: F(1, 2)}, n), m)


@pytest.fixture
def rnd():
    return random.Random(20240611)


@pytest.fixture
def section3():
    """One unit-demand bidder, two items, values i.i.d. uniform on {4, 5} scaled by 1/5."""
    dist = DiscreteDistribution.product([BidderFactor.iid({F(4, 5): F(1, 2), F(1): F(1, 2)}, 2)],
                                        delta=F(1, 5))
    return dist, Constraints.unit_demand(1)


def pytest_terminal_summary(terminalreporter):
    acc = sys.modules.get("test_acceptance")
    if acc is None or not acc.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(acc.RESULTS):
        terminalreporter.write_line(acc.RESULTS[n])
