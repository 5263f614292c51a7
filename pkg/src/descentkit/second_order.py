"""Hessian-based steps: Newton, damped Newton, Levenberg-Marquardt."""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .errors import NotPositiveDefinite, SingularHessian
from .linalg import as_vector, check_symmetric, cholesky, spectral

ALPHA_MIN = 1e-12
ALPHA_MAX = 1e12
COND_LIMIT = 1e14


def solve_system(m: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``m x = rhs``: Cholesky if ``m`` is PD, else pivoted LU."""
    m = np.asarray(m, dtype=float)
    try:
        return cholesky(m).solve(rhs)
    except NotPositiveDefinite:
        pass
    try:
        if not np.all(np.isfinite(m)) or np.linalg.cond(m) > COND_LIMIT:
            raise SingularHessian("system matrix is singular to working precision")
        x = np.linalg.solve(m, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularHessian(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularHessian("solve produced non-finite values")
    return x


def _hessian_and_grad(objective, x):
    x = as_vector(x)
    h = objective.hessian(x)
    if h is None:
        raise ValueError("objective provides no Hessian")
    return np.asarray(h, dtype=float), objective.gradient(x)


def newton_step(objective, x) -> np.ndarray:
    """dx = -H^{-1} g, computed by a linear solve."""
    h, g = _hessian_and_grad(objective, x)
    return solve_system(h, -g)


def damped_newton_step(objective, x, alpha: float) -> np.ndarray:
    """dx = -(H + alpha I)^{-1} g."""
    h, g = _hessian_and_grad(objective, x)
    return solve_system(h + alpha * np.eye(h.shape[0]), -g)


def lm_step(objective, x, alpha: float) -> np.ndarray:
    """dx = -(H + alpha diag(H))^{-1} g."""
    h, g = _hessian_and_grad(objective, x)
    return solve_system(h + alpha * np.diag(np.diag(h)), -g)


@dataclass(frozen=True)
class DampingController:
    alpha: float = 1.0
    up_factor: float = 10.0
    down_factor: float = 0.1

    def __post_init__(self):
        if not self.up_factor > 1:
            raise ValueError("up_factor must exceed 1")
        if not 0 < self.down_factor < 1:
            raise ValueError("down_factor must lie in (0, 1)")
        object.__setattr__(self, "alpha", float(min(ALPHA_MAX, max(ALPHA_MIN, self.alpha))))


def lm_adapt(ctrl: DampingController, loss_prev: float, loss_new: float) -> DampingController:
    """Grow alpha when the loss went up, shrink it otherwise (ties shrink)."""
    factor = ctrl.up_factor if loss_new > loss_prev else ctrl.down_factor
    return replace(ctrl, alpha=ctrl.alpha * factor)


class CriticalPointKind(enum.Enum):
    LocalMin = "local_min"
    LocalMax = "local_max"
    Saddle = "saddle"
    Degenerate = "degenerate"


def classify_critical_point(h) -> CriticalPointKind:
    """Classify by Hessian eigenvalue signs with tau = 1e-10 max|lambda|."""
    lam = spectral(check_symmetric(h)).lam
    scale = float(np.max(np.abs(lam))) if lam.size else 0.0
    tau = 1e-10 * scale
    if scale == 0.0 or np.any(np.abs(lam) <= tau):
        return CriticalPointKind.Degenerate
    if np.all(lam > tau):
        return CriticalPointKind.LocalMin
    if np.all(lam < -tau):
        return CriticalPointKind.LocalMax
    return CriticalPointKind.Saddle


@dataclass
class SecondOrderRun:
    iterates: list
    losses: list
    alphas: list

    @property
    def x(self) -> np.ndarray:
        return self.iterates[-1]


def newton_method(objective, x1, steps: int = 50, tol: float = 1e-10) -> SecondOrderRun:
    """Repeat full Newton steps until ||g|| <= tol * max(1, ||g_1||)."""
    x = as_vector(x1).copy()
    g0 = float(np.linalg.norm(objective.gradient(x)))
    xs, ls = [x], [objective.value(x)]
    for _ in range(steps):
        if np.linalg.norm(objective.gradient(x)) <= tol * max(1.0, g0):
            break
        x = x + newton_step(objective, x)
        xs.append(x)
        ls.append(objective.value(x))
    return SecondOrderRun(xs, ls, [])


def levenberg_marquardt(objective, x1, ctrl: DampingController = DampingController(),
                        steps: int = 50, tol: float = 1e-10) -> SecondOrderRun:
    """LM iterations; a step that raises the loss is rejected and alpha grows."""
    x = as_vector(x1).copy()
    g0 = float(np.linalg.norm(objective.gradient(x)))
    loss = objective.value(x)
    xs, ls, alphas = [x], [loss], [ctrl.alpha]
    for _ in range(steps):
        if np.linalg.norm(objective.gradient(x)) <= tol * max(1.0, g0):
            break
        cand = x + lm_step(objective, x, ctrl.alpha)
        new_loss = objective.value(cand)
        ctrl = lm_adapt(ctrl, loss, new_loss)
        if new_loss <= loss:
            x, loss = cand, new_loss
        xs.append(x)
        ls.append(loss)
        alphas.append(ctrl.alpha)
    return SecondOrderRun(xs, ls, alphas)
