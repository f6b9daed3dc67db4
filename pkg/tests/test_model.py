from fractions import Fraction as F

import numpy as np
import pytest

from symmech import BidderFactor, Constraints, DiscreteDistribution, Setting, discretize, sample, validate
from symmech.model import (ExplosionGuard, MissingRequiredSymmetry, NonNormalized, OffGrid, estimate_from_samples,
                           round_value)
from symmech.symmetry import SymmetryGroup


def test_valid_single_bidder_two_items():
    dist = DiscreteDistribution.product([BidderFactor.iid({F(2, 5): F(1, 2), F(1, 2): F(1, 2)}, 2)],
                                        delta=F(1, 10))
    inst = validate(dist, Constraints.unit_demand(1), Setting("k-bidders", 1, 2))
    assert inst.T == 1


def test_non_normalized_rejected():
    f = BidderFactor([((F(1, 2),), F(99, 200)), ((F(1),), F(1, 2))])
    dist = DiscreteDistribution.product([f])
    with pytest.raises(NonNormalized):
        validate(dist, Constraints.unit_demand(1), Setting("k-bidders", 1, 1))


def test_item_asymmetric_rejected_for_k_bidders():
    f = BidderFactor([((F(1, 10), F(1, 5)), F(3, 4)), ((F(1, 5), F(1, 10)), F(1, 4))])
    dist = DiscreteDistribution.product([f])
    with pytest.raises(MissingRequiredSymmetry):
        validate(dist, Constraints.unit_demand(1), Setting("k-bidders", 1, 2))


def test_k_items_needs_identical_bidders():
    a = BidderFactor([((F(1),), F(1))])
    b = BidderFactor([((F(1, 2),), F(1))])
    dist = DiscreteDistribution.product([a, b])
    with pytest.raises(MissingRequiredSymmetry):
        validate(dist, Constraints.unit_demand(2), Setting("k-items", 2, 1))


def test_off_grid_value_rejected():
    dist = DiscreteDistribution.product([BidderFactor([((F(1, 3),), F(1))])], delta=F(1, 2))
    with pytest.raises(OffGrid):
        validate(dist, Constraints.unit_demand(1), Setting("k-bidders", 1, 1))


def test_point_mass_sample():
    prof = ((F(1, 2), F(1)), (F(0), F(1, 4)))
    dist = DiscreteDistribution.point_mass(prof)
    assert sample(dist, np.random.default_rng(0)) == prof


def test_sample_mean_within_three_sigma():
    dist = DiscreteDistribution.product([BidderFactor([((F(0),), F(1, 2)), ((F(1),), F(1, 2))])])
    rng = np.random.default_rng(7)
    N = 100_000
    draws = np.array([float(sample(dist, rng)[0][0]) for _ in range(N)])
    assert abs(draws.mean() - 0.5) <= 3 * 0.5 / np.sqrt(N)


def test_same_seed_same_profile():
    dist = DiscreteDistribution.iid_bidders(BidderFactor.iid({F(1, 4): F(1, 3), F(1): F(2, 3)}, 2), 3)
    a = sample(dist, np.random.default_rng(42))
    b = sample(dist, np.random.default_rng(42))
    assert a == b


@pytest.mark.parametrize("v,direction,expected", [
    (F(47, 100), "down", F(2, 5)),
    (F(2, 5), "up", F(1, 2)),
    (F(0), "down", F(0)),
])
def test_round_value(v, direction, expected):
    assert round_value(v, F(1, 10), direction) == expected


def test_discretize_merges_mass():
    f = BidderFactor([((F(47, 100),), F(1, 2)), ((F(41, 100),), F(1, 4)), ((F(9, 10),), F(1, 4))])
    d = discretize(DiscreteDistribution.product([f]), F(1, 10))
    assert dict(d.marginal(0)) == {(F(2, 5),): F(3, 4), (F(9, 10),): F(1, 4)}
    assert d.delta == F(1, 10)


def test_discretize_rejects_bad_delta():
    dist = DiscreteDistribution.product([BidderFactor([((F(1),), F(1))])])
    with pytest.raises(OffGrid):
        discretize(dist, F(2, 7))


def test_support_guard():
    f = BidderFactor.iid({F(k, 10): F(1, 10) for k in range(10)}, 2)
    dist = DiscreteDistribution.iid_bidders(f, 3, max_support=1000)
    with pytest.raises(ExplosionGuard):
        list(dist.support())


def test_estimate_point_mass_oracle():
    prof = ((F(1, 2),), (F(1),))
    group = SymmetryGroup.all_bidders(2, 1)
    est = estimate_from_samples(lambda rng: prof, F(1, 2), group, 0.1, np.random.default_rng(0), n_samples=50)
    # the class of prof is {prof, swapped prof}, each getting half
    assert est.prob(prof) == F(1, 2)
    assert est.prob(((F(1),), (F(1, 2),))) == F(1, 2)
    assert est.total() == 1


def test_estimate_fair_coin_classes():
    group = SymmetryGroup.all_bidders(1, 1)

    def coin(rng):
        return ((F(int(rng.integers(0, 2))),),)

    est = estimate_from_samples(coin, F(1), group, 0.01, np.random.default_rng(3), n_samples=100_000)
    assert est.total() == 1
    for v in (F(0), F(1)):
        assert abs(float(est.prob(((v,),))) - 0.5) <= 0.01
