"""From a fine distribution to a truthful mechanism.

Round values down to a grid, solve for an approximately truthful optimum,
then run the replica/surrogate reduction and measure its revenue.
"""
from fractions import Fraction as F

from symmech import BidderFactor, Constraints, DiscreteDistribution, Setting, check_bic, discretize, revenue
from symmech.lp import build, extract, solve
from symmech.mechanism import LiftedMechanism
from symmech.reduction import ReducedMechanism, ReductionConfig, misreport_gains, revenue_bound_check

fine = DiscreteDistribution.iid_bidders(
    BidderFactor.iid({F(3, 8): F(1, 4), F(5, 8): F(1, 4), F(1): F(1, 2)}, 1), 2)
cons = Constraints.unit_demand(2)
opt = solve(build(fine, cons, "naive")).objective
print("optimum on the fine distribution:", opt)

delta = F(1, 4)
coarse = discretize(fine, delta)
lp = build(coarse, cons, "naive", eps=delta)
M1 = extract(solve(lp), lp)
print("delta-BIC optimum on the grid:", revenue(M1, coarse), ">=", opt - delta)
print("lifted mechanism violation on the fine distribution:",
      check_bic(LiftedMechanism(M1, delta), fine).max_bic_violation, "<=", 2 * delta)

truthful = build(coarse, cons, "naive")
exact = extract(solve(truthful), truthful)
cfg = ReductionConfig(F(1, 4), delta, Setting.k_items(1, 2), scale_override=30)
mech = ReducedMechanism(exact, coarse, coarse, cfg, cons)
print("formula r:", cfg.formula_r, " running with r =", cfg.r)
rep = revenue_bound_check(mech, 2000, seed=1)
print(f"reduced revenue {rep.revenue.mean:.3f} +- {rep.revenue.stderr:.3f}, guarantee {rep.bound:.3f}")
for g in misreport_gains(mech, 500, seed=2, bidders=[0]):
    print(f"  truth {g['truth'][0]} report {g['report'][0]}: gain {g['gain']:+.3f} +- {g['stderr']:.3f}")
