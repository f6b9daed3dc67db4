"""Optimal revenue mechanisms for symmetric multi-item auctions.

Exact LP formulations over symmetry-class representatives, with the
supporting machinery: symmetrization, feasible lottery sampling, the
approximate-to-exact incentive reduction and monotone-hazard-rate tails.
"""

from .model import (UNBOUNDED, BidderFactor, Constraints, DiscreteDistribution, Setting, Unbounded,
                    discretize, estimate_from_samples, sample, validate)
from .symmetry import Permutation, SymmetryGroup, enumerate_representatives, symmetrize
from .mechanism import (Outcome, SymmetricMechanism, TableMechanism, check_bic, check_ic,
                        check_strong_monotonicity, ex_post_ir_transform, interim_form,
                        repair_strong_monotonicity, revenue)

__version__ = "0.1.0"
