"""
Exact solutions of the benchmark problems and their right-hand sides.

Both solutions are separable, u(x, y) = X(x) Y(y), with X a polynomial that
vanishes to order m at x = 0, 1 and Y = sin^m(pi y) written as a short sum
of sines. That gives every derivative in closed form, and
f = (-Delta)^m u = (-1)^m sum_k C(m, k) X^(2k) Y^(2m-2k).
"""
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from scipy.special import comb

from errors import ConfigurationError


@dataclass(frozen=True)
class SineTerm:
    """coef * sin(freq * pi * y + phase)"""
    coef: float
    freq: float
    phase: float = 0.0

    def derivative(self, y: np.ndarray, order: int) -> np.ndarray:
        omega = self.freq * np.pi
        return self.coef * omega ** order * np.sin(omega * y + self.phase + order * np.pi / 2)


@dataclass(frozen=True, eq=False)
class ManufacturedSolution:
    name: str
    m: int
    x_factor: Polynomial
    y_terms: Tuple[SineTerm, ...]

    def x_derivative(self, x: np.ndarray, order: int) -> np.ndarray:
        return self.x_factor.deriv(order)(x) if order else self.x_factor(x)

    def y_derivative(self, y: np.ndarray, order: int) -> np.ndarray:
        return sum(term.derivative(y, order) for term in self.y_terms)

    def derivative(self, x, y, a: int, b: int) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return self.x_derivative(x, a) * self.y_derivative(y, b)

    def value(self, x, y) -> np.ndarray:
        return self.derivative(x, y, 0, 0)

    def rhs(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        total = sum(comb(self.m, k, exact=True) * self.x_derivative(x, 2 * k) * self.y_derivative(y, 2 * (self.m - k))
                    for k in range(self.m + 1))
        return (-1) ** self.m * total


HALF_PI = np.pi / 2

SOLUTIONS: Dict[str, ManufacturedSolution] = {
    # x^2 (1-x)^2 sin^2(pi y),  sin^2 = 1/2 - 1/2 cos(2 pi y)
    "manufactured-m2": ManufacturedSolution(
        "manufactured-m2", 2,
        Polynomial([0, 0, 1, -2, 1]),
        (SineTerm(0.5, 0.0, HALF_PI), SineTerm(-0.5, 2.0, HALF_PI)),
    ),
    # x^3 (1-x)^3 sin^3(pi y),  sin^3 = 3/4 sin(pi y) - 1/4 sin(3 pi y)
    "manufactured-m3": ManufacturedSolution(
        "manufactured-m3", 3,
        Polynomial([0, 0, 0, 1, -3, 3, -1]),
        (SineTerm(0.75, 1.0), SineTerm(-0.25, 3.0)),
    ),
}

RHS_CHOICES = ("manufactured-m2", "manufactured-m3", "ones")


def right_hand_side(name: str) -> Tuple[Callable[[np.ndarray, np.ndarray], np.ndarray],
                                        Optional[ManufacturedSolution]]:
    """Load function for `name` and the exact solution behind it, if any."""
    if name == "ones":
        return (lambda x, y: np.ones(np.broadcast(x, y).shape)), None
    if name not in SOLUTIONS:
        raise ConfigurationError(f"unknown right-hand side '{name}', expected one of {RHS_CHOICES}")
    solution = SOLUTIONS[name]
    return solution.rhs, solution
