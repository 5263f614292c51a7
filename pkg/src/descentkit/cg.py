"""Conjugate direction and conjugate gradient solvers.

All quadratic solvers minimize 1/2 x^T A x - b^T x (+ c) for SPD ``A``, which
is the same as solving ``A x = b``.  They stop once
``||g_t|| <= tol * max(1, ||g_1||)`` and never take more than ``d`` steps.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteGradient, NotConjugate, NotPositiveDefinite, NotSpd, Singular
from .linalg import CholeskyFactor, as_square, as_vector, check_symmetric, cholesky, energy_norm
from .linesearch import ArmijoConfig, RaySlice, armijo, exact_quadratic_step, find_eta_max, golden_section
from .objective import QuadraticForm

DEFAULT_TOL = 1e-10


@dataclass
class CgRun:
    """Iterates x_1..x_{k+1}, their gradients, and the k directions/betas/etas."""

    iterates: list = field(default_factory=list)
    gradients: list = field(default_factory=list)
    directions: list = field(default_factory=list)
    betas: list = field(default_factory=list)
    etas: list = field(default_factory=list)
    terminated_at: int = 0
    converged: bool = False

    @property
    def x(self) -> np.ndarray:
        return self.iterates[-1]

    @property
    def iterations(self) -> int:
        return self.terminated_at

    @property
    def grad_norm(self) -> float:
        return float(np.linalg.norm(self.gradients[-1]))

    def to_csv(self, q: QuadraticForm | None = None) -> str:
        """Rows ``t,grad_norm,beta,eta,energy_norm`` for every update t.

        ``energy_norm`` is ||x_t - x_star||_A and is left blank without ``q``.
        """
        xstar = None
        if q is not None:
            xstar = cholesky(q.sym_h).solve(q.b)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "grad_norm", "beta", "eta", "energy_norm"])
        for t in range(self.terminated_at):
            en = "" if xstar is None else repr(energy_norm(self.iterates[t] - xstar, q.sym_h))
            w.writerow([t + 1, repr(float(np.linalg.norm(self.gradients[t]))),
                        repr(float(self.betas[t])), repr(float(self.etas[t])), en])
        return buf.getvalue()


def _spd_check(q: QuadraticForm) -> np.ndarray:
    a = check_symmetric(q.sym_h)
    return a


def _curvature(a, d) -> float:
    curv = float(d @ a @ d)
    if not curv > 0:
        raise NotSpd(f"d^T A d = {curv:.3e}: matrix is not positive definite")
    return curv


def _stop(gnorm: float, g1norm: float, tol: float) -> bool:
    return gnorm <= tol * max(1.0, g1norm)


def conjugate_gram_schmidt(a, vectors) -> list[np.ndarray]:
    """A-orthogonalize ``vectors`` in order (Gram-Schmidt in the A inner product)."""
    a = as_square(a)
    out = []
    for v in vectors:
        u = as_vector(v).copy()
        for p in out:
            u = u - (u @ a @ p) / (p @ a @ p) * p
        out.append(u)
    return out


def cd_solve(q: QuadraticForm, x1, dirs, tol: float = 1e-8) -> CgRun:
    """Exact line search along each of ``d`` mutually A-conjugate directions."""
    a = _spd_check(q)
    try:
        cholesky(a)
    except NotPositiveDefinite as exc:
        raise NotSpd(str(exc)) from exc
    dirs = [as_vector(v) for v in dirs]
    if len(dirs) != q.dim:
        raise NotConjugate(f"need {q.dim} directions, got {len(dirs)}")
    norms = [math.sqrt(max(float(v @ a @ v), 0.0)) for v in dirs]
    for i in range(len(dirs)):
        if norms[i] == 0:
            raise NotConjugate(f"direction {i} is zero")
        for j in range(i):
            if abs(float(dirs[i] @ a @ dirs[j])) > tol * norms[i] * norms[j]:
                raise NotConjugate(f"directions {j} and {i} are not A-conjugate")
    x = as_vector(x1).copy()
    run = CgRun([x], [q.gradient(x)])
    for d in dirs:
        eta = exact_quadratic_step(q, x, d)
        x = x + eta * d
        run.iterates.append(x)
        run.gradients.append(q.gradient(x))
        run.directions.append(d)
        run.betas.append(0.0)
        run.etas.append(eta)
    run.terminated_at = len(dirs)
    run.converged = True
    return run


def cg_practical(q: QuadraticForm, x1, tol: float = DEFAULT_TOL) -> CgRun:
    """CG with beta_t = g_t^T g_t / g_{t-1}^T g_{t-1}."""
    a = _spd_check(q)
    x = as_vector(x1).copy()
    g = q.gradient(x)
    g1 = float(np.linalg.norm(g))
    run = CgRun([x], [g])
    d = None
    gg_prev = None
    for _ in range(q.dim):
        gg = float(g @ g)
        if _stop(math.sqrt(gg), g1, tol) or gg == 0.0:
            break
        beta = 0.0 if d is None else gg / gg_prev
        d = -g if d is None else -g + beta * d
        eta = gg / _curvature(a, d)
        x = x + eta * d
        g = q.gradient(x)
        gg_prev = gg
        run.iterates.append(x)
        run.gradients.append(g)
        run.directions.append(d)
        run.betas.append(beta)
        run.etas.append(eta)
    run.terminated_at = len(run.etas)
    run.converged = _stop(float(np.linalg.norm(g)), g1, tol)
    return run


def cg_vanilla(q: QuadraticForm, x1, tol: float = DEFAULT_TOL) -> CgRun:
    """CG with beta_t = g_t^T A d_{t-1} / d_{t-1}^T A d_{t-1} and eta = -d^T g / d^T A d."""
    a = _spd_check(q)
    x = as_vector(x1).copy()
    g = q.gradient(x)
    g1 = float(np.linalg.norm(g))
    run = CgRun([x], [g])
    d = None
    for _ in range(q.dim):
        if _stop(float(np.linalg.norm(g)), g1, tol) or not np.any(g):
            break
        if d is None:
            beta = 0.0
            d = -g
        else:
            ad = a @ d
            beta = float(g @ ad) / float(d @ ad)
            d = -g + beta * d
        eta = -float(d @ g) / _curvature(a, d)
        x = x + eta * d
        g = q.gradient(x)
        run.iterates.append(x)
        run.gradients.append(g)
        run.directions.append(d)
        run.betas.append(beta)
        run.etas.append(eta)
    run.terminated_at = len(run.etas)
    run.converged = _stop(float(np.linalg.norm(g)), g1, tol)
    return run


def _beta(kind: str, g, g_prev, d_prev) -> float:
    denom = float(g_prev @ g_prev)
    if kind == "FR":
        return float(g @ g) / denom if denom else 0.0
    y = g - g_prev
    if kind == "PR":
        return float(y @ g) / denom if denom else 0.0
    if kind == "HS":
        hs = float(y @ d_prev)
        return float(y @ g) / hs if hs else 0.0
    raise ValueError(f"unknown beta formula {kind!r}")


def cg_general(objective, x1, beta_kind: str = "FR", rate_rule="exact", max_iters: int = 100,
               tol: float = DEFAULT_TOL, armijo_cfg: ArmijoConfig | None = None) -> CgRun:
    """Nonlinear CG with the Fletcher-Reeves, Polak-Ribiere or Hestenes-Stiefel beta.

    Parameters
    ----------
    objective : Objective
    x1 : array_like
    beta_kind : {"FR", "PR", "HS"}
    rate_rule : "exact", "armijo" or a float
        "exact" uses the closed form on quadratics and golden-section search
        otherwise; a float is a fixed step size.
    max_iters : int
    tol : float
        Relative gradient-norm tolerance.

    Notes
    -----
    Whenever the new direction fails the descent condition d^T g < 0 the
    method restarts with d = -g.
    """
    beta_kind = beta_kind.upper()
    if beta_kind not in ("FR", "PR", "HS"):
        raise ValueError(f"unknown beta formula {beta_kind!r}")
    x = as_vector(x1).copy()
    g = objective.gradient(x)
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradient("gradient has non-finite entries")
    g1 = float(np.linalg.norm(g))
    run = CgRun([x], [g])
    d = None
    g_prev = None
    for _ in range(max_iters):
        if _stop(float(np.linalg.norm(g)), g1, tol) or not np.any(g):
            break
        if d is None:
            beta = 0.0
            d = -g
        else:
            beta = _beta(beta_kind, g, g_prev, d)
            d = -g + beta * d
            if float(d @ g) >= 0:
                d = -g
        if rate_rule == "exact":
            if isinstance(objective, QuadraticForm):
                eta = exact_quadratic_step(objective, x, d)
            else:
                ray = RaySlice(objective, x, d)
                eta = golden_section(ray, find_eta_max(ray))
        elif rate_rule == "armijo":
            eta = armijo(RaySlice(objective, x, d), armijo_cfg or ArmijoConfig())
        else:
            eta = float(rate_rule)
        x = x + eta * d
        g_prev = g
        g = objective.gradient(x)
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient("gradient has non-finite entries")
        run.iterates.append(x)
        run.gradients.append(g)
        run.directions.append(d)
        run.betas.append(beta)
        run.etas.append(eta)
    run.terminated_at = len(run.etas)
    run.converged = _stop(float(np.linalg.norm(g)), g1, tol)
    return run


# ---------------------------------------------------------------- preconditioning


@dataclass(frozen=True)
class Preconditioner:
    """An SPD matrix M held through its Cholesky factor; M^{-1} r is two triangular solves."""

    kind: str
    factor: CholeskyFactor

    @property
    def m(self) -> np.ndarray:
        return self.factor.reconstruct()

    def apply_inverse(self, r) -> np.ndarray:
        return self.factor.solve(r)

    @classmethod
    def custom(cls, m, kind: str = "custom") -> "Preconditioner":
        try:
            return cls(kind, cholesky(m))
        except NotPositiveDefinite as exc:
            raise NotSpd(f"preconditioner is not SPD: {exc}") from exc

    @classmethod
    def identity(cls, d: int) -> "Preconditioner":
        return cls.custom(np.eye(d), "identity")

    @classmethod
    def diagonal(cls, a) -> "Preconditioner":
        a = as_square(a)
        return cls.custom(np.diag(np.diag(a)), "diagonal")

    @classmethod
    def perfect(cls, a) -> "Preconditioner":
        return cls.custom(a, "perfect")


def pcg_untransformed(q: QuadraticForm, x1, m: Preconditioner, tol: float = DEFAULT_TOL) -> CgRun:
    """Preconditioned CG working directly on x with z = M^{-1} g."""
    a = _spd_check(q)
    x = as_vector(x1).copy()
    g = q.gradient(x)
    g1 = float(np.linalg.norm(g))
    run = CgRun([x], [g])
    d = None
    gz_prev = None
    for _ in range(q.dim):
        if _stop(float(np.linalg.norm(g)), g1, tol):
            break
        z = m.apply_inverse(g)
        gz = float(g @ z)
        if gz == 0.0:
            break
        beta = 0.0 if d is None else gz / gz_prev
        d = -z if d is None else -z + beta * d
        eta = gz / _curvature(a, d)
        x = x + eta * d
        g = q.gradient(x)
        gz_prev = gz
        run.iterates.append(x)
        run.gradients.append(g)
        run.directions.append(d)
        run.betas.append(beta)
        run.etas.append(eta)
    run.terminated_at = len(run.etas)
    run.converged = _stop(float(np.linalg.norm(g)), g1, tol)
    return run


def pcg_transformed(q: QuadraticForm, x1, p, tol: float = DEFAULT_TOL) -> CgRun:
    """Run practical CG on P^{-T} A P^{-1} in x_hat = P x and map back with x = P^{-1} x_hat.

    Directions in the returned run are mapped back as P^{-1} d_hat.
    """
    p = as_square(p)
    if p.shape[0] != q.dim:
        raise ValueError("P has the wrong size")
    try:
        if not np.all(np.isfinite(p)) or np.linalg.cond(p) > 1e14:
            raise Singular("P is singular to working precision")
        p_inv = np.linalg.solve(p, np.eye(q.dim))
    except np.linalg.LinAlgError as exc:
        raise Singular(str(exc)) from exc
    a_hat = p_inv.T @ q.sym_h @ p_inv
    a_hat = 0.5 * (a_hat + a_hat.T)
    q_hat = QuadraticForm(a_hat, p_inv.T @ q.b, q.c)
    inner = cg_practical(q_hat, p @ as_vector(x1), tol)
    xs = [p_inv @ xh for xh in inner.iterates]
    return CgRun(
        iterates=xs,
        gradients=[q.gradient(x) for x in xs],
        directions=[p_inv @ dh for dh in inner.directions],
        betas=list(inner.betas),
        etas=list(inner.etas),
        terminated_at=inner.terminated_at,
        converged=inner.converged,
    )


def chebyshev_bound(kappa: float, t: int) -> float:
    """2 ((sqrt(kappa) - 1) / (sqrt(kappa) + 1)) ** t."""
    if kappa < 1:
        raise ValueError("kappa must be at least 1")
    if t < 0:
        raise ValueError("t must be nonnegative")
    s = math.sqrt(kappa)
    return 2.0 * ((s - 1.0) / (s + 1.0)) ** t
