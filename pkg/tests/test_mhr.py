import math
from fractions import Fraction as F

import pytest

from symmech import Setting
from symmech.mhr import (Exponential, NotMHR, Tabulated, TruncatedNormal, Uniform, alpha, check_mhr, from_spec,
                         plan, posted_price_revenue, posted_price_revenue_exact, tail_contribution,
                         truncate_and_discretize, value_grid, zeta_for)


def test_alpha_closed_forms():
    E = Exponential(1.0)
    assert abs(alpha(E, math.e) - 1.0) < 1e-9
    assert abs(alpha(Uniform(0, 1), 2) - 0.5) < 1e-9
    for p in (2, 4, 8, 100):
        assert abs(alpha(E, p) - math.log(p)) < 1e-9


@pytest.mark.parametrize("p", [2, 4])
@pytest.mark.parametrize("k", [2, 3])
def test_alpha_subadditive_in_log(p, k):
    E = Exponential(1.0)
    assert k * alpha(E, p) >= alpha(E, p ** k) - 1e-9


def test_zeta():
    assert zeta_for(1, F(1, 2)) == 2
    assert zeta_for(3, F(1, 4)) == math.ceil(math.log2(12)) + 1
    assert zeta_for(4, F(1, 2)) == 4  # log2(8) = 3 exactly


def test_plan_exponential():
    tp = plan([Exponential(1.0)], F(1, 2), Setting("k-bidders", 1, 2))
    assert tp.zeta == 2
    assert abs(tp.xi - math.log(4)) < 1e-9
    assert abs(tp.xi_prime - math.log(2)) < 1e-9
    assert tp.xi_prime >= tp.xi / tp.zeta - 1e-12


def test_plan_identical_marginals():
    a = plan([Exponential(2.0)], F(1, 4), Setting("k-items", 3, 1))
    b = plan([Exponential(2.0)] * 3, F(1, 4), Setting("k-items", 3, 1))
    assert a.xi == b.xi and a.xi_prime == b.xi_prime


def test_truncate_uniform():
    assert truncate_and_discretize(Uniform(0, 1), 1.0, F(1, 2)) == {F(0): F(1, 2), F(1, 2): F(1, 2)}


def test_truncate_point_mass_on_grid():
    atom = Tabulated([(0.0, 0.0), (0.5, 0.0), (0.5, 1.0), (1.0, 1.0)])
    assert truncate_and_discretize(atom, 1.0, F(1, 4)) == {F(1, 2): F(1)}


def test_truncate_tail_collapses_onto_xi():
    E = Exponential(1.0)
    xi = math.log(4)
    masses = truncate_and_discretize(E, xi, F(1, 4))
    assert sum(masses.values()) == 1
    assert abs(float(masses[F(1)]) - 0.25) < 1e-9  # Pr[X >= ln 4] = 1/4


def test_check_mhr_families():
    for F_ in (Exponential(1.0), Uniform(0, 2), TruncatedNormal(0.5, 1.0)):
        check_mhr(F_)
    # mass 0.8 near zero and a long thin tail: the hazard falls
    bad = Tabulated([(0.0, 0.0), (0.1, 0.8), (10.0, 1.0)])
    with pytest.raises(NotMHR):
        check_mhr(bad)


def test_from_spec():
    assert isinstance(from_spec({"family": "exponential", "rate": 2}), Exponential)
    assert isinstance(from_spec({"family": "uniform"}), Uniform)


def test_tail_identity_exponential():
    E = Exponential(1.0)
    for p in (math.e, 4, 8, 32):
        a = math.log(p)
        val = tail_contribution(E, p)
        assert abs(val - (a + 1) / p) < 1e-7
        assert val <= 2 * a / p


def test_posted_price_single_bidder_closed_form():
    E = Exponential(1.0)
    for n in (2, 4):
        price = alpha(E, n)
        grid = [[E]]
        assert abs(posted_price_revenue_exact(grid, price) - price / n) < 1e-9
        est = posted_price_revenue(grid, price, 20_000, seed=n)
        assert est.within(price / n)


def test_posted_price_zero_price():
    assert posted_price_revenue([[Exponential(1.0)]], 0.0, 100, seed=0).mean == 0
    assert posted_price_revenue_exact([[Exponential(1.0)]], 0.0) == 0


def test_value_grid_shapes():
    g = value_grid([Exponential(1.0)], Setting("k-bidders", 2, 3))
    assert len(g) == 2 and len(g[0]) == 3
    g = value_grid([Exponential(1.0), Uniform(0, 1)], Setting("k-items", 4, 2))
    assert len(g) == 4 and isinstance(g[3][1], Uniform)
