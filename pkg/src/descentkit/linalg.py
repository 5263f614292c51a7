"""Dense vector/matrix kernels, Cholesky factorization and a Jacobi eigensolver.

Vectors and matrices are ``numpy.ndarray`` of dtype float64.  Nothing here
mutates its inputs.

Complexity notes (flop counts for the naive kernels):

* inner product of two n-vectors: 2n - 1 flops
* (m x n) @ (n x k) product: mk(2n - 1) flops
* Cholesky of an n x n matrix: about n^3 / 3 flops
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    NegativeQuadraticForm,
    NoConvergence,
    NonSymmetric,
    NotPositiveDefinite,
    Singular,
)

SYM_TOL = 1e-12
PIVOT_TOL = 1e-14
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


def as_vector(x) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise DimensionMismatch(f"expected a 1-d vector, got shape {v.shape}")
    return v


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise DimensionMismatch(f"expected a 2-d matrix, got shape {m.shape}")
    return m


def as_square(a) -> np.ndarray:
    m = as_matrix(a)
    if m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    return m


def is_symmetric(a, tol: float = SYM_TOL) -> bool:
    m = as_square(a)
    if m.size == 0:
        return True
    scale = max(1.0, float(np.max(np.abs(m))))
    return float(np.max(np.abs(m - m.T))) <= tol * scale


def check_symmetric(a, tol: float = SYM_TOL) -> np.ndarray:
    """Return ``a`` as a float matrix, raising NonSymmetric if it is not."""
    m = as_square(a)
    if not is_symmetric(m, tol):
        raise NonSymmetric("matrix is not symmetric within tolerance")
    return m


def inner(u, v) -> float:
    """Inner product sum(u_i v_i)."""
    u = as_vector(u)
    v = as_vector(v)
    if u.shape != v.shape:
        raise DimensionMismatch(f"inner: {u.shape} vs {v.shape}")
    return float(u @ v)


def matmul(a, b) -> np.ndarray:
    """Matrix product; ``b`` may be a vector."""
    a = as_matrix(a)
    b = np.asarray(b, dtype=float)
    if b.ndim not in (1, 2) or a.shape[1] != b.shape[0]:
        raise DimensionMismatch(f"matmul: {a.shape} @ {b.shape}")
    return a @ b


@dataclass(frozen=True)
class CholeskyFactor:
    """Upper-triangular ``r`` with positive diagonal and ``r.T @ r == a``."""

    r: np.ndarray

    @property
    def dim(self) -> int:
        return self.r.shape[0]

    def reconstruct(self) -> np.ndarray:
        return self.r.T @ self.r

    def solve(self, rhs) -> np.ndarray:
        """Solve ``a x = rhs`` with one forward and one backward substitution."""
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.dim:
            raise DimensionMismatch(f"solve: rhs of length {rhs.shape[0]} for d={self.dim}")
        y = forward_substitution(self.r.T, rhs)
        return back_substitution(self.r, y)


def forward_substitution(lower: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    n = lower.shape[0]
    y = np.zeros_like(rhs, dtype=float)
    for i in range(n):
        y[i] = (rhs[i] - lower[i, :i] @ y[:i]) / lower[i, i]
    return y


def back_substitution(upper: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    n = upper.shape[0]
    x = np.zeros_like(rhs, dtype=float)
    for i in range(n - 1, -1, -1):
        x[i] = (rhs[i] - upper[i, i + 1:] @ x[i + 1:]) / upper[i, i]
    return x


def cholesky(a) -> CholeskyFactor:
    """Factor a symmetric positive definite matrix as ``R^T R``.

    Parameters
    ----------
    a : array_like, shape (d, d)
        Symmetric matrix.

    Returns
    -------
    CholeskyFactor

    Raises
    ------
    NonSymmetric
        If ``a`` is not symmetric.
    NotPositiveDefinite
        If a pivot falls to 1e-14 or below.
    """
    a = check_symmetric(a)
    n = a.shape[0]
    r = np.zeros((n, n))
    for j in range(n):
        col = r[:j, j]
        pivot = a[j, j] - col @ col
        if not pivot > PIVOT_TOL:
            raise NotPositiveDefinite(f"pivot {pivot:.3e} at index {j}")
        r[j, j] = np.sqrt(pivot)
        r[j, j + 1:] = (a[j, j + 1:] - col @ r[:j, j + 1:]) / r[j, j]
    return CholeskyFactor(r)


def is_positive_definite(a) -> bool:
    try:
        cholesky(a)
    except (NotPositiveDefinite, NonSymmetric):
        return False
    return True


@dataclass(frozen=True)
class SpectralDecomposition:
    """``a = q @ diag(lam) @ q.T`` with eigenvalues in descending order."""

    q: np.ndarray
    lam: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.q * self.lam) @ self.q.T

    def rank(self, tol: float = 1e-10) -> int:
        return int(np.sum(np.abs(self.lam) > tol))


def _off_norm(m: np.ndarray) -> float:
    off = m - np.diag(np.diag(m))
    return float(np.sqrt(np.sum(off * off)))


def spectral(a, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS) -> SpectralDecomposition:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps stop once the off-diagonal Frobenius norm drops to
    ``tol * ||a||_F``.  Eigenvectors are normalized so that their
    largest-magnitude entry is nonnegative.
    """
    a = check_symmetric(a)
    n = a.shape[0]
    m = 0.5 * (a + a.T)
    v = np.eye(n)
    target = tol * float(np.linalg.norm(m))
    for _ in range(max_sweeps + 1):
        if _off_norm(m) <= target:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = m[p, q]
                if apq == 0.0:
                    continue
                tau = (m[q, q] - m[p, p]) / (2.0 * apq)
                if abs(tau) > 1e150:
                    t = 0.5 / tau
                else:
                    t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + np.hypot(1.0, tau))
                c = 1.0 / np.hypot(1.0, t)
                s = t * c
                mp = m[:, p].copy()
                mq = m[:, q].copy()
                m[:, p] = c * mp - s * mq
                m[:, q] = s * mp + c * mq
                mp = m[p, :].copy()
                mq = m[q, :].copy()
                m[p, :] = c * mp - s * mq
                m[q, :] = s * mp + c * mq
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise NoConvergence(f"Jacobi did not converge in {max_sweeps} sweeps")

    lam = np.diag(m).copy()
    order = np.argsort(-lam, kind="stable")
    lam = lam[order]
    v = v[:, order]
    for j in range(n):
        k = int(np.argmax(np.abs(v[:, j])))
        if v[k, j] < 0:
            v[:, j] = -v[:, j]
    return SpectralDecomposition(v, lam)


@dataclass(frozen=True)
class Eigenpair2x2:
    alpha: complex
    beta: complex

    @property
    def spectral_radius(self) -> float:
        return max(abs(self.alpha), abs(self.beta))


def eig2x2(b) -> Eigenpair2x2:
    """Eigenvalues of a real 2x2 matrix from the characteristic quadratic."""
    b = as_matrix(b)
    if b.shape != (2, 2):
        raise DimensionMismatch(f"eig2x2 needs a 2x2 matrix, got {b.shape}")
    half = 0.5 * (b[0, 0] + b[1, 1])
    det = b[0, 0] * b[1, 1] - b[0, 1] * b[1, 0]
    disc = half * half - det
    if disc >= 0:
        root = np.sqrt(disc)
        # larger-magnitude root first, the other via det/alpha (no cancellation)
        alpha = half + root if half >= 0 else half - root
        beta = det / alpha if alpha != 0 else 2.0 * half - alpha
        return Eigenpair2x2(complex(alpha), complex(beta))
    root = np.sqrt(-disc)
    return Eigenpair2x2(complex(half, root), complex(half, -root))


def condition_number(a) -> float:
    """lambda_max / lambda_min of a symmetric positive definite matrix."""
    lam = spectral(a).lam
    lmax, lmin = lam[0], lam[-1]
    if not lmin > 1e-12 * lmax:
        raise Singular(f"lambda_min={lmin:.3e} is not positive relative to lambda_max={lmax:.3e}")
    return float(lmax / lmin)


def energy_norm(e, a) -> float:
    """sqrt(e^T A e)."""
    e = as_vector(e)
    a = as_square(a)
    if a.shape[0] != e.shape[0]:
        raise DimensionMismatch(f"energy_norm: {e.shape} vs {a.shape}")
    val = float(e @ a @ e)
    if val < -1e-12:
        raise NegativeQuadraticForm(f"e^T A e = {val:.3e}")
    return float(np.sqrt(max(val, 0.0)))


def matrix_power(a, m: int) -> np.ndarray:
    """m-th power of a symmetric matrix via Q diag(lam^m) Q^T."""
    a = check_symmetric(a)
    if m < 0 or int(m) != m:
        raise ValueError("matrix_power needs a nonnegative integer exponent")
    if m == 0:
        return np.eye(a.shape[0])
    if m == 1:
        return a.copy()
    dec = spectral(a)
    return (dec.q * dec.lam ** int(m)) @ dec.q.T
