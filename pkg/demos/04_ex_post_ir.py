"""Interim IR to ex-post IR, and why budgets do not survive it.

Two bidders value one item at 10 and each has a budget of 5 (scaled by 1/10).
"""
from fractions import Fraction as F

from symmech import BidderFactor, Constraints, DiscreteDistribution, ex_post_ir_transform
from symmech.lp import build, extract, solve

dist = DiscreteDistribution.iid_bidders(BidderFactor([((F(1),), F(1))]), 2)
cons = Constraints(demands=(1, 1), budgets=(F(1, 2), F(1, 2)))
lp = build(dist, cons, "naive")
sol = solve(lp)
M = extract(sol, lp)
o = M.outcome(((F(1),), (F(1),)))
print("revenue:", sol.objective * 10, " allocation:", [str(x[0]) for x in o.phi], " prices:",
      [str(p * 10) for p in o.price])

rule = ex_post_ir_transform(M, dist)
print("payment rate c:", rule.rate[(0, (F(1),))])
print("winner pays:", rule.charge(0, (F(1),), (0,)) * 10, " budget: 5")
print("expected payment:", rule.expected_payment(0, (F(1),)) * 10)

# Respecting the budget ex post, the winner can pay at most 5 and the loser nothing.
print("best revenue with ex-post IR and budgets:", max(min(cons.budget(i), F(1)) for i in range(2)) * 10)
