"""Turning fractional allocations into real lotteries.

A bidder with demand 2 and a unit-demand bidder share three items.  The
marginals are split into a convex combination of assignments, and each
sampled assignment is feasible.
"""
from collections import Counter
from fractions import Fraction as F

import numpy as np

from symmech.allocation import decompose, pad, sample_assignment

phi = [[F(1, 2), F(3, 4), F(1, 2)],
       [F(1, 4), F(1, 4), F(1, 4)]]
demands = [2, 1]

padded = pad(phi, demands)
dec = decompose(padded)
print("padded size:", padded.size, " terms:", len(dec.terms))
for w, perm in dec.terms:
    print("  weight", w, "permutation", perm)
print("marginals recovered exactly:", dec.exact_marginals() == phi)

rng = np.random.default_rng(0)
N = 20_000
hits = Counter()
for _ in range(N):
    for i, bundle in enumerate(sample_assignment(dec, rng)):
        assert len(bundle) <= demands[i]
        for j in bundle:
            hits[i, j] += 1
for i in range(2):
    print(f"bidder {i} empirical", [round(hits[i, j] / N, 3) for j in range(3)],
          " target", [float(x) for x in phi[i]])
