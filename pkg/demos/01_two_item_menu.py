"""One unit-demand bidder, two items, values i.i.d. uniform on {4, 5}.

Scaled so the top value is 1.  The class-based LP finds the optimal
revenue, and we compare it with a lottery menu and with item pricing.
"""
from fractions import Fraction as F

from symmech import BidderFactor, Constraints, DiscreteDistribution, check_bic, check_strong_monotonicity
from symmech.lp import build, extract, solve

factor = BidderFactor.iid({F(4, 5): F(1, 2), F(1): F(1, 2)}, 2)
dist = DiscreteDistribution.product([factor], delta=F(1, 5))
cons = Constraints.unit_demand(1)

lp = build(dist, cons, "k-bidders")
sol = solve(lp)
print("phi variables in the class LP:", lp.count_vars("phi"))
print("optimal revenue:", sol.objective, "=", sol.objective * 5, "in original units")

M = extract(sol, lp)
for prof, p in dist.support():
    o = M.outcome(prof)
    print(f"  values {[str(v) for v in prof[0]]}  alloc {[str(x) for x in o.phi[0]]}  price {o.price[0]}")


def menu_revenue(menu):
    # the bidder picks the entry with the best utility, ties to the higher price
    total = F(0)
    for t, p in factor.items():
        best = max(menu, key=lambda e: (sum(a * v for a, v in zip(e[0], t)) - e[1], e[1]))
        if sum(a * v for a, v in zip(best[0], t)) - best[1] >= 0:
            total += p * best[1]
    return total


lottery = [((F(1), F(0)), F(9, 10)), ((F(0), F(1)), F(9, 10)), ((F(1, 2), F(1, 2)), F(4, 5))]
pricing = [((F(1), F(0)), F(4, 5)), ((F(0), F(1)), F(1))]
print("lottery menu revenue:", menu_revenue(lottery))
print("item pricing (4, 5) revenue:", menu_revenue(pricing))

audit = check_bic(M, dist)
print("max incentive violation:", audit.max_bic_violation, " IR shortfall:", audit.max_ir_violation)
print("strong monotonicity violations:", check_strong_monotonicity(M, dist, "bic"))
