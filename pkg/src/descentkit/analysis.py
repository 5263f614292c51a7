"""Closed-form convergence predictors for gradient methods on quadratics."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NotSpd
from .linalg import as_vector, eig2x2, spectral
from .objective import QuadraticForm


@dataclass(frozen=True)
class RatePrediction:
    per_mode_factors: np.ndarray
    overall_rate: float
    converges: bool

    @classmethod
    def from_factors(cls, factors) -> "RatePrediction":
        f = np.asarray(factors, dtype=float)
        rate = float(np.max(np.abs(f))) if f.size else 0.0
        return cls(f, rate, rate < 1.0)


def _spd_spectrum(q: QuadraticForm):
    dec = spectral(q.sym_h)
    if not dec.lam[-1] > 0:
        raise NotSpd(f"smallest eigenvalue {dec.lam[-1]:.3e} is not positive")
    return dec


def vanilla_gd_closed_form(q: QuadraticForm, x1, eta: float, t: int) -> np.ndarray:
    """x_{t+1} = x_star + Q (I - eta Lambda)^t Q^T (x_1 - x_star)."""
    dec = _spd_spectrum(q)
    xstar = dec.q @ ((dec.q.T @ q.b) / dec.lam)
    y1 = dec.q.T @ (as_vector(x1) - xstar)
    return xstar + dec.q @ ((1.0 - eta * dec.lam) ** int(t) * y1)


def vanilla_gd_rate(eta: float, lambdas) -> RatePrediction:
    """Per-mode factors 1 - eta lambda_i of plain gradient descent."""
    return RatePrediction.from_factors(1.0 - eta * np.asarray(lambdas, dtype=float))


def vanilla_gd_optimal(q: QuadraticForm) -> tuple[float, float]:
    """eta = 2 / (lambda_1 + lambda_d) and rate (kappa - 1) / (kappa + 1)."""
    lam = _spd_spectrum(q).lam
    l1, ld = float(lam[0]), float(lam[-1])
    kappa = l1 / ld
    return 2.0 / (l1 + ld), (kappa - 1.0) / (kappa + 1.0)


def momentum_matrix(eta: float, rho: float, lam: float) -> np.ndarray:
    return np.array([[rho, -eta * lam], [rho, 1.0 - eta * lam]])


def momentum_rate(eta: float, rho: float, lambdas) -> RatePrediction:
    """Spectral radius of the per-mode momentum iteration matrix."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    if not 0 <= rho <= 1:
        raise ValueError("rho must lie in [0, 1]")
    radii = [eig2x2(momentum_matrix(eta, rho, lam)).spectral_radius for lam in as_vector(lambdas)]
    return RatePrediction.from_factors(radii)


def steepest_rate_2d(kappa: float, sigma2: float) -> float:
    """Per-step energy-norm factor of steepest descent in two dimensions."""
    if kappa < 1:
        raise ValueError("kappa must be at least 1")
    if abs(sigma2) > 1e12:
        return 0.0
    s2 = sigma2 * sigma2
    r2 = 1.0 - (kappa ** 2 + s2) ** 2 / ((kappa ** 3 + s2) * (kappa + s2))
    return math.sqrt(max(0.0, r2))


def ema_period(rho: float) -> float:
    """N with 1 - rho = 2 / (N + 1)."""
    if not 0 <= rho < 1:
        raise ValueError("rho must lie in [0, 1)")
    return 2.0 / (1.0 - rho) - 1.0


def steepest_energy_drop(q: QuadraticForm, x) -> float:
    """Predicted r^2 = ||e_{t+1}||_A^2 / ||e_t||_A^2 for one steepest-descent step."""
    dec = _spd_spectrum(q)
    a = q.sym_h
    x = as_vector(x)
    xstar = dec.q @ ((dec.q.T @ q.b) / dec.lam)
    e = x - xstar
    g = a @ x - q.b
    gg = float(g @ g)
    if gg == 0.0:
        return 0.0
    r2 = 1.0 - gg * gg / (float(g @ a @ g) * float(e @ a @ e))
    return max(0.0, r2)
