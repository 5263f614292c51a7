"""Step-size selection along a fixed direction, J(eta) = L(x + eta d)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import BracketInvalid, MaxIters, NonPositiveCurvature, NotDescentDirection
from .linalg import as_vector
from .objective import QuadraticForm

PHI = (1.0 + np.sqrt(5.0)) / 2.0
SECANT_EPS = 1e-8
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITERS = 200


class FunctionObjective:
    """Wrap plain callables as an objective; ``grad`` may be omitted."""

    def __init__(self, f: Callable, grad: Callable | None = None, dim: int = 1):
        self._f = f
        self._g = grad
        self.dim = dim

    @property
    def has_gradient(self) -> bool:
        return self._g is not None

    def value(self, x) -> float:
        return float(self._f(as_vector(x)))

    def gradient(self, x) -> np.ndarray:
        if self._g is None:
            raise NotImplementedError("no gradient supplied")
        return as_vector(self._g(as_vector(x)))

    def hessian(self, x=None):
        return None


@dataclass(frozen=True)
class RaySlice:
    """The one-dimensional function J(eta) = L(x + eta d)."""

    objective: object
    x: np.ndarray
    d: np.ndarray
    use_gradient: bool = True

    def __post_init__(self):
        object.__setattr__(self, "x", as_vector(self.x))
        object.__setattr__(self, "d", as_vector(self.d))
        has_grad = getattr(self.objective, "has_gradient", True)
        object.__setattr__(self, "use_gradient", bool(self.use_gradient and has_grad))

    def __call__(self, eta: float) -> float:
        return self.objective.value(self.x + eta * self.d)

    def derivative(self, eta: float) -> float:
        """J'(eta): exact via the gradient, else a forward secant."""
        if self.use_gradient:
            return float(self.d @ self.objective.gradient(self.x + eta * self.d))
        return (self(eta + SECANT_EPS) - self(eta)) / SECANT_EPS


@dataclass(frozen=True)
class ArmijoConfig:
    s: float = 1.0
    alpha: float = 0.1
    beta: float = 0.5
    max_iters: int = 50

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError("s must be positive")
        if not 0 < self.alpha < 1 or not 0 < self.beta < 1:
            raise ValueError("alpha and beta must lie in (0, 1)")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")


def exact_quadratic_step(q: QuadraticForm, x, d) -> float:
    """Minimizer of L(x + eta d) on a quadratic: -d^T g / d^T A d."""
    x = as_vector(x)
    d = as_vector(d)
    curv = float(d @ q.sym_h @ d)
    if curv <= 1e-14:
        raise NonPositiveCurvature(f"d^T A d = {curv:.3e}")
    return -float(d @ q.gradient(x)) / curv


def bisection_step(s: RaySlice, a: float, b: float) -> tuple[float, float]:
    """One halving of the bracket [a, b] by the sign of J' at the midpoint."""
    m = 0.5 * (a + b)
    dm = s.derivative(m)
    if dm > 0:
        return a, m
    if dm < 0:
        return m, b
    return m, m


def bisection(s: RaySlice, eta_max: float, tol: float = DEFAULT_TOL,
              max_iters: int = DEFAULT_MAX_ITERS) -> float:
    """Binary search for J'(eta) = 0 on [0, eta_max].

    Requires J'(0) < 0 < J'(eta_max).  Returns the midpoint of the final
    bracket, whose width is at most ``tol``.
    """
    a, b = 0.0, float(eta_max)
    if not (s.derivative(a) < 0 and s.derivative(b) > 0):
        raise BracketInvalid("bisection needs J'(0) < 0 < J'(eta_max)")
    it = 0
    while b - a > tol:
        if it >= max_iters:
            raise MaxIters(f"bisection exceeded {max_iters} iterations")
        a, b = bisection_step(s, a, b)
        it += 1
    return 0.5 * (a + b)


def golden_section_step(s: RaySlice, a: float, b: float) -> tuple[float, float]:
    """Shrink [a, b] by 1/phi using the four points a < c1 < c2 < b."""
    c1 = b - (b - a) / PHI
    c2 = a + (b - a) / PHI
    vals = [s(a), s(c1), s(c2), s(b)]
    k = int(np.argmin(vals))  # first minimum wins, i.e. ties keep the left interval
    if k <= 1:
        return a, c2
    return c1, b


def golden_section(s: RaySlice, eta_max: float, tol: float = DEFAULT_TOL,
                   max_iters: int = DEFAULT_MAX_ITERS) -> float:
    """Golden-section search for the minimizer of a unimodal J on [0, eta_max]."""
    a, b = 0.0, float(eta_max)
    it = 0
    while b - a > tol:
        if it >= max_iters:
            raise MaxIters(f"golden section exceeded {max_iters} iterations")
        a, b = golden_section_step(s, a, b)
        it += 1
    return 0.5 * (a + b)


def armijo(s: RaySlice, cfg: ArmijoConfig = ArmijoConfig()) -> float:
    """Backtracking: first eta = s * beta^k with J(eta) - J(0) <= alpha eta J'(0)."""
    slope = s.derivative(0.0)
    if not slope < 0:
        raise NotDescentDirection(f"d^T grad = {slope:.3e} is not negative")
    j0 = s(0.0)
    for k in range(cfg.max_iters + 1):
        eta = cfg.s * cfg.beta ** k
        if s(eta) - j0 <= cfg.alpha * eta * slope:
            return eta
    raise MaxIters(f"Armijo rule failed after {cfg.max_iters} reductions")


def find_eta_max(s: RaySlice, start: float = 1.0, max_doublings: int = 60) -> float:
    """Double eta until J stops decreasing there (range-doubling heuristic)."""
    eta = float(start)
    for _ in range(max_doublings):
        if s.derivative(eta) > 0 or s(eta) > s(0.0):
            return eta
        eta *= 2.0
    raise MaxIters("could not bracket a minimizer by doubling")


def steepest_descent(q: QuadraticForm, x1, steps: int) -> list[np.ndarray]:
    """Steepest descent with exact line search; returns x_1 ... x_{steps+1}."""
    xs = [as_vector(x1).copy()]
    for _ in range(steps):
        x = xs[-1]
        g = q.gradient(x)
        if not np.any(g):
            break
        xs.append(x + exact_quadratic_step(q, x, -g) * -g)
    return xs
