"""Numerical companion for the critical Choquard equation lifted to the sphere."""

from .params import Bubble, ParameterError, ProblemParams, bubble_eval, make_params

__version__ = "0.1.0"

__all__ = ["Bubble", "ParameterError", "ProblemParams", "bubble_eval", "make_params", "__version__"]
