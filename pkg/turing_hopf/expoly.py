"""Vector-valued exponential polynomials on the delay interval.

A function is a finite sum of terms ``c * theta**p * exp(rate * theta)`` with
``c`` a complex 2-vector.  Eigenfunctions, adjoint eigenfunctions and the
second-order center-manifold corrections all have this form, so bilinear forms
and boundary evaluations can be done exactly.
"""

import math
from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedBasisFunction

_SERIES_RADIUS = 0.5
_SERIES_TERMS = 30


@dataclass(frozen=True)
class ExpTerm:
    coef: np.ndarray
    rate: complex
    power: int = 0


class ExpPoly:
    """Sum of :class:`ExpTerm` with arithmetic, evaluation and differentiation."""

    def __init__(self, terms: Iterable[ExpTerm] = ()) -> None:
        self.terms = tuple(terms)
        for term in self.terms:
            if term.power < 0 or np.shape(term.coef) != (2,):
                raise UnsupportedBasisFunction("Terms need a 2-vector coefficient and a non-negative power")

    @classmethod
    def exponential(cls, coef, rate: complex = 0.0) -> "ExpPoly":
        return cls((ExpTerm(np.asarray(coef, dtype=complex), complex(rate)),))

    @classmethod
    def zero(cls) -> "ExpPoly":
        return cls()

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        value = np.zeros(theta.shape + (2,), dtype=complex)
        for term in self.terms:
            weight = np.exp(term.rate * theta) * theta**term.power
            value = value + weight[..., None] * term.coef
        return value

    def __add__(self, other: "ExpPoly") -> "ExpPoly":
        return ExpPoly(self.terms + other.terms)

    def __sub__(self, other: "ExpPoly") -> "ExpPoly":
        return self + (-1.0) * other

    def __neg__(self) -> "ExpPoly":
        return (-1.0) * self

    def __mul__(self, scalar) -> "ExpPoly":
        return ExpPoly(ExpTerm(term.coef * scalar, term.rate, term.power) for term in self.terms)

    __rmul__ = __mul__

    def __truediv__(self, scalar) -> "ExpPoly":
        return self * (1.0 / scalar)

    def conj(self) -> "ExpPoly":
        return ExpPoly(ExpTerm(np.conj(term.coef), complex(np.conj(term.rate)), term.power) for term in self.terms)

    def derivative(self) -> "ExpPoly":
        terms = []
        for term in self.terms:
            terms.append(ExpTerm(term.coef * term.rate, term.rate, term.power))
            if term.power > 0:
                terms.append(ExpTerm(term.coef * term.power, term.rate, term.power - 1))
        return ExpPoly(terms)

    def __repr__(self) -> str:
        parts = [f"{term.coef}*theta^{term.power}*exp({term.rate}*theta)" for term in self.terms]
        return "ExpPoly(" + " + ".join(parts) + ")"


def exp_moment(k: int, c: complex) -> complex:
    """Integral of ``xi**k * exp(c*xi)`` over [-1, 0]."""
    if abs(c) < _SERIES_RADIUS:
        total = 0.0j
        factor = 1.0 + 0.0j
        for j in range(_SERIES_TERMS):
            total += factor * (-1) ** (k + j) / (k + j + 1)
            factor *= c / (j + 1)
        return total
    # Integration by parts, upward in k.
    value = (1.0 - np.exp(-c)) / c
    for m in range(1, k + 1):
        value = (-((-1) ** m) * np.exp(-c)) / c - (m / c) * value
    return complex(value)


def bilinear_form(alpha: ExpPoly, beta: ExpPoly, delayed: np.ndarray) -> complex:
    """Delay pairing of a row function on [0, 1] with a column function on [-1, 0].

    ``(alpha, beta) = alpha(0) beta(0) + int_{-1}^{0} alpha(xi + 1) B beta(xi) dxi``
    for a single discrete delay with delayed Jacobian ``B``.
    """
    value = complex(np.dot(alpha(0.0), beta(0.0)))
    for a in alpha.terms:
        for b in beta.terms:
            weight = complex(a.coef @ delayed @ b.coef)
            if weight == 0:
                continue
            # (xi + 1)**p expanded binomially.
            integral = 0.0j
            for s in range(a.power + 1):
                integral += math.comb(a.power, s) * exp_moment(s + b.power, a.rate + b.rate)
            value += weight * np.exp(a.rate) * integral
    return value
