"""Problem parameters, critical exponents and the flat-space bubble family."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Union

import numpy as np

Number = Union[Fraction, float]


class ParameterError(ValueError):
    """Raised when (n, mu) or a derived object fails validation."""


def as_exact(value) -> Number:
    """Return ``value`` as a Fraction when it is rational-typed, else as float.

    Strings are parsed exactly (``"0.3"`` becomes 3/10), integral floats are
    promoted to Fractions. Other floats stay floats.
    """
    if isinstance(value, bool):
        raise ParameterError(f"not a number: {value!r}")
    if isinstance(value, (Fraction, Rational, int)):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except ValueError as exc:
            raise ParameterError(f"cannot parse number {value!r}") from exc
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            raise ParameterError(f"non-finite value {value!r}")
        if value.is_integer():
            return Fraction(int(value))
        return value
    raise ParameterError(f"unsupported numeric type {type(value).__name__}")


def to_float(x: Number) -> float:
    return float(x)


@dataclass(frozen=True)
class ProblemParams:
    """Dimension ``n`` and nonlocality ``mu`` with the two critical exponents.

    ``two_star_mu = (2n - mu)/(n - 2)`` and ``two_star = 2n/(n - 2)``. Both are
    Fractions when ``mu`` is rational, floats otherwise.
    """

    n: int
    mu: Number
    two_star_mu: Number = field(init=False)
    two_star: Number = field(init=False)

    def __post_init__(self):
        if not isinstance(self.n, int) or isinstance(self.n, bool):
            raise ParameterError(f"n must be an integer, got {self.n!r}")
        if self.n < 3:
            raise ParameterError(f"n must be >= 3, got {self.n}")
        mu = as_exact(self.mu)
        if not (0 < mu < self.n):
            raise ParameterError(f"mu must lie in (0, {self.n}), got {mu}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "two_star_mu", (2 * self.n - mu) / (self.n - 2))
        object.__setattr__(self, "two_star", Fraction(2 * self.n, self.n - 2))

    @property
    def exact(self) -> bool:
        return isinstance(self.mu, Fraction)

    @property
    def p(self) -> float:
        """``two_star_mu`` as a float, the power used by the numerics."""
        return float(self.two_star_mu)

    @property
    def mass(self) -> float:
        """Coefficient n(n-2)/4 of the zeroth-order term in the H^1 norm."""
        return self.n * (self.n - 2) / 4

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "mu": _num_json(self.mu),
            "two_star_mu": _num_json(self.two_star_mu),
            "two_star": _num_json(self.two_star),
        }


def _num_json(x: Number):
    if isinstance(x, Fraction):
        return str(x)
    return float(x)


def make_params(n: int, mu) -> ProblemParams:
    return ProblemParams(n, mu)


def bubble_constant(n: int) -> float:
    """c_n = (n(n-2))^((n-2)/4)."""
    return (n * (n - 2)) ** ((n - 2) / 4)


@dataclass(frozen=True)
class Bubble:
    x0: tuple
    lam: float = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ParameterError(f"bubble scale must be positive, got {self.lam}")
        object.__setattr__(self, "x0", tuple(float(c) for c in self.x0))


def bubble_eval(b: Bubble, params: ProblemParams, x) -> np.ndarray | float:
    """Evaluate lam^{-(n-2)/2} c_n (1 + |x - x0|^2/lam^2)^{-(n-2)/2}.

    ``x`` may be a single point of shape (n,) or an array of points (..., n).
    """
    n = params.n
    x = np.asarray(x, dtype=float)
    x0 = np.asarray(b.x0, dtype=float)
    if x.shape[-1] != n or x0.shape != (n,):
        raise ParameterError(f"points must have {n} coordinates")
    r2 = np.sum((x - x0) ** 2, axis=-1) / b.lam**2
    val = b.lam ** (-(n - 2) / 2) * bubble_constant(n) * (1.0 + r2) ** (-(n - 2) / 2)
    return float(val) if np.ndim(val) == 0 else val
