"""Linear programs for optimal symmetric mechanisms."""

from .aux import AuxWeights, closed_form_aux, compute_aux_weights, enumerated_aux
from .formulations import (build, build_naive, build_succinct, build_succinct_k_bidders,
                           build_succinct_k_items, extract, extract_interim)
from .program import EQ, GE, LE, LinearProgram, LpSolution
from .solver import certify_basis, simplex, solve

__all__ = [
    "AuxWeights", "closed_form_aux", "compute_aux_weights", "enumerated_aux",
    "build", "build_naive", "build_succinct", "build_succinct_k_bidders", "build_succinct_k_items",
    "extract", "extract_interim", "EQ", "GE", "LE", "LinearProgram", "LpSolution",
    "certify_basis", "simplex", "solve",
]
