"""Optimization machinery: NLP description, interior-point solve, convex QP."""

from .diff import (
    DerivativeError,
    check_against_finite_differences,
    finite_difference_jacobian,
    gradient,
    hessian,
    jacobian,
)
from .nlp import NlpProblem, VariableLayout
from .ipm import IpmOptions, NlpSolution, solve_nlp
from .qp import QpProblem, QpSolution, solve_qp

__all__ = [
    "DerivativeError",
    "check_against_finite_differences",
    "finite_difference_jacobian",
    "gradient",
    "hessian",
    "jacobian",
    "NlpProblem",
    "VariableLayout",
    "IpmOptions",
    "NlpSolution",
    "solve_nlp",
    "QpProblem",
    "QpSolution",
    "solve_qp",
]
