"""How much the symmetry classes shrink the program.

Three i.i.d. bidders, two i.i.d. items each with two values: 64 profiles.
"""
from fractions import Fraction as F

from symmech import BidderFactor, Constraints, DiscreteDistribution, SymmetryGroup, enumerate_representatives
from symmech.lp import build, solve

factor = BidderFactor.iid({F(1, 2): F(1, 3), F(1): F(2, 3)}, 2)
dist = DiscreteDistribution.iid_bidders(factor, 3)
cons = Constraints.unit_demand(3)
print("profiles in the support:", dist.support_size())

for name, group in [("bidder swaps", SymmetryGroup.all_bidders(3, 2)),
                    ("item swaps", SymmetryGroup.all_items(3, 2))]:
    reps = enumerate_representatives(dist, group)
    print(f"{name}: group order {group.order}, {len(list(reps))} classes")

for kind in ("naive", "k-items", "k-bidders"):
    lp = build(dist, cons, kind)
    print(f"{kind:10s} phi vars {lp.count_vars('phi'):4d}  optimum {solve(lp).objective}")

prof = ((F(1), F(1, 2)), (F(1, 2), F(1, 2)), (F(1, 2), F(1)))
g = SymmetryGroup.all_bidders(3, 2)
print("profile", [[str(v) for v in t] for t in prof])
print("canonical", [[str(v) for v in t] for t in g.canonical(prof)], " orbit size", g.orbit_size(prof))
