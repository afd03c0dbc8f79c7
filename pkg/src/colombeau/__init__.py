"""Nonlinear generalized functions on a desk-scale grid.

Regularization nets, representatives as expression graphs, moderate/negligible classification
in polynomial and ultradifferentiable scales, and restriction/gluing along covers.
"""
from .basic_space import differential, evaluate, hat, iota, parse_expr, pushforward, sigma
from .quotient import classify, default_config, equivalent
from .regularization import MollifierParams, build_mollifier_net, verify_fourier_bounds, verify_test_object
from .scales import check_admissible, make_polynomial_pair, make_ultra_pair
from .weights import associated_function, build_weight_sequence, weight_from_spec

__all__ = [
    "MollifierParams", "associated_function", "build_mollifier_net", "build_weight_sequence", "check_admissible",
    "classify", "default_config", "differential", "equivalent", "evaluate", "hat", "iota", "make_polynomial_pair",
    "make_ultra_pair", "parse_expr", "pushforward", "sigma", "verify_fourier_bounds", "verify_test_object",
    "weight_from_spec",
]
