"""Objective functions: the quadratic testbed and a small softmax MLP task."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import DimensionMismatch, EmptyBatch, NotPositiveDefinite, Singular
from .linalg import as_square, as_vector, cholesky


@runtime_checkable
class Objective(Protocol):
    """Anything with ``value``, ``gradient``, ``hessian`` and ``dim``."""

    dim: int

    def value(self, x: np.ndarray) -> float: ...

    def gradient(self, x: np.ndarray) -> np.ndarray: ...

    def hessian(self, x: np.ndarray) -> np.ndarray | None: ...


# ---------------------------------------------------------------- quadratic


@dataclass(frozen=True)
class QuadraticForm:
    """L(x) = 1/2 x^T A x - b^T x + c.

    ``sym_h`` caches the symmetric part 1/2 (A + A^T), which is the Hessian
    whether or not ``a`` itself is symmetric.
    """

    a: np.ndarray
    b: np.ndarray
    c: float = 0.0
    sym_h: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        a = as_square(self.a).copy()
        b = as_vector(self.b).copy()
        if a.shape[0] != b.shape[0]:
            raise DimensionMismatch(f"A is {a.shape} but b has length {b.shape[0]}")
        a.setflags(write=False)
        b.setflags(write=False)
        h = 0.5 * (a + a.T)
        h.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "sym_h", h)

    @classmethod
    def from_matrix(cls, a, b=None, c: float = 0.0) -> "QuadraticForm":
        a = as_square(a)
        if b is None:
            b = np.zeros(a.shape[0])
        return cls(a, b, c)

    @property
    def dim(self) -> int:
        return self.b.shape[0]

    def _check(self, x) -> np.ndarray:
        x = as_vector(x)
        if x.shape[0] != self.dim:
            raise DimensionMismatch(f"x has length {x.shape[0]}, expected {self.dim}")
        return x

    def value(self, x) -> float:
        x = self._check(x)
        return float(0.5 * (x @ self.a @ x) - self.b @ x + self.c)

    def gradient(self, x) -> np.ndarray:
        x = self._check(x)
        return self.sym_h @ x - self.b

    def hessian(self, x=None) -> np.ndarray:
        return np.array(self.sym_h)

    def minimizer(self) -> np.ndarray:
        return quad_minimizer(self)


def quad_value(q: QuadraticForm, x) -> float:
    return q.value(x)


def quad_grad(q: QuadraticForm, x) -> np.ndarray:
    return q.gradient(x)


def quad_minimizer(q: QuadraticForm) -> np.ndarray:
    """Solve 1/2 (A + A^T) x = b by Cholesky.

    Raises
    ------
    Singular
        If the symmetric part is not positive definite.
    """
    try:
        fac = cholesky(q.sym_h)
    except NotPositiveDefinite as exc:
        raise Singular(f"quadratic has no unique minimizer: {exc}") from exc
    return fac.solve(q.b)


def residual(q: QuadraticForm, x) -> np.ndarray:
    """r = b - A x."""
    x = q._check(x)
    return q.b - q.a @ x


def project_l2_ball(x, cap: float) -> np.ndarray:
    """Project onto {x : x^T x <= cap}."""
    if not cap > 0:
        raise ValueError("cap must be positive")
    x = as_vector(x)
    sq = float(x @ x)
    if sq <= cap:
        return x.copy()
    return x * (np.sqrt(cap) / np.sqrt(sq))


def finite_difference_gradient(f, x, h: float = 1e-5) -> np.ndarray:
    """Central differences of a scalar function."""
    x = as_vector(x)
    g = np.zeros_like(x)
    for i in range(x.shape[0]):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


# ---------------------------------------------------------------- MLP task


@dataclass(frozen=True)
class MiniBatch:
    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        object.__setattr__(self, "indices", idx)

    @property
    def size(self) -> int:
        return int(self.indices.shape[0])


@dataclass(frozen=True)
class MlpTask:
    """input -> hidden (ReLU) -> dropout -> softmax classifier.

    Weights live in one flat vector laid out as W1 (dim x hidden, row-major),
    b1, W2 (hidden x classes, row-major), b2.
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    hidden_width: int = 16
    dropout_rate: float = 0.5
    rng_seed: int = 0

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        labels = np.asarray(self.labels, dtype=np.int64)
        if feats.ndim != 2 or labels.shape != (feats.shape[0],):
            raise DimensionMismatch("features must be (n, dim) with one label per row")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValueError("labels out of range")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    @property
    def dim(self) -> int:
        d, h, k = self.input_dim, self.hidden_width, self.num_classes
        return d * h + h + h * k + k

    def unpack(self, w):
        w = as_vector(w)
        if w.shape[0] != self.dim:
            raise DimensionMismatch(f"weights have length {w.shape[0]}, expected {self.dim}")
        d, h, k = self.input_dim, self.hidden_width, self.num_classes
        i = 0
        w1 = w[i:i + d * h].reshape(d, h)
        i += d * h
        b1 = w[i:i + h]
        i += h
        w2 = w[i:i + h * k].reshape(h, k)
        i += h * k
        b2 = w[i:i + k]
        return w1, b1, w2, b2

    def init_weights(self, seed: int | None = None) -> np.ndarray:
        """Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer."""
        rng = np.random.default_rng(self.rng_seed if seed is None else seed)
        d, h, k = self.input_dim, self.hidden_width, self.num_classes
        r1 = 1.0 / np.sqrt(d)
        r2 = 1.0 / np.sqrt(h)
        return np.concatenate([
            rng.uniform(-r1, r1, d * h),
            rng.uniform(-r1, r1, h),
            rng.uniform(-r2, r2, h * k),
            rng.uniform(-r2, r2, k),
        ])

    def full_batch(self) -> MiniBatch:
        return MiniBatch(np.arange(self.n_samples))

    def loss_and_grad(self, w, batch: MiniBatch | None = None, train_mode: bool = False,
                      rng: np.random.Generator | None = None):
        return mlp_loss_and_grad(self, w, self.full_batch() if batch is None else batch,
                                 train_mode, rng)

    # Objective interface (eval mode, full dataset)
    def value(self, w) -> float:
        return self.loss_and_grad(w)[0]

    def gradient(self, w) -> np.ndarray:
        return self.loss_and_grad(w)[1]

    def hessian(self, w=None):
        return None

    def predict(self, w) -> np.ndarray:
        w1, b1, w2, b2 = self.unpack(w)
        hidden = np.maximum(self.features @ w1 + b1, 0.0)
        return np.argmax(hidden @ w2 + b2, axis=1)

    def accuracy(self, w) -> float:
        return float(np.mean(self.predict(w) == self.labels))


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def mlp_loss_and_grad(task: MlpTask, weights, batch: MiniBatch, train_mode: bool = False,
                      rng: np.random.Generator | None = None):
    """Mean cross-entropy over ``batch`` and its exact gradient.

    Parameters
    ----------
    task : MlpTask
    weights : array_like, shape (task.dim,)
    batch : MiniBatch
    train_mode : bool
        Apply inverted dropout after the ReLU.  The mask is drawn from
        ``rng`` (a fresh generator seeded with ``task.rng_seed`` if omitted).

    Returns
    -------
    loss : float
    grad : ndarray, shape (task.dim,)
    """
    if batch.size == 0:
        raise EmptyBatch("mini-batch is empty")
    w1, b1, w2, b2 = task.unpack(weights)
    x = task.features[batch.indices]
    y = task.labels[batch.indices]
    n = x.shape[0]

    pre = x @ w1 + b1
    act = np.maximum(pre, 0.0)
    if train_mode and task.dropout_rate > 0:
        if rng is None:
            rng = np.random.default_rng(task.rng_seed)
        keep = 1.0 - task.dropout_rate
        mask = (rng.random(act.shape) < keep) / keep
    else:
        mask = None
    hid = act * mask if mask is not None else act
    probs = softmax(hid @ w2 + b2)
    # an underflowed probability gives loss inf, which train() flags as divergence
    with np.errstate(divide="ignore"):
        loss = float(-np.mean(np.log(probs[np.arange(n), y])))

    dz = probs.copy()
    dz[np.arange(n), y] -= 1.0
    dz /= n
    gw2 = hid.T @ dz
    gb2 = dz.sum(axis=0)
    dhid = dz @ w2.T
    if mask is not None:
        dhid = dhid * mask
    dpre = dhid * (pre > 0)
    gw1 = x.T @ dpre
    gb1 = dpre.sum(axis=0)
    grad = np.concatenate([gw1.ravel(), gb1, gw2.ravel(), gb2])
    return loss, grad


def make_synthetic_task(num_classes: int, per_class: int, dim: int, seed: int,
                        hidden_width: int = 16, dropout_rate: float = 0.5) -> MlpTask:
    """Gaussian blobs with unit variance and class centers 4 apart.

    With ``dim >= num_classes`` the centers are (4/sqrt(2)) e_k, so every
    pair is exactly 4 apart; otherwise they sit 4 apart along the first axis.
    """
    if min(num_classes, per_class, dim) <= 0:
        raise ValueError("num_classes, per_class and dim must be positive")
    rng = np.random.default_rng(seed)
    centers = np.zeros((num_classes, dim))
    if dim >= num_classes:
        for k in range(num_classes):
            centers[k, k] = 4.0 / np.sqrt(2.0)
    else:
        centers[:, 0] = 4.0 * np.arange(num_classes)
    labels = np.repeat(np.arange(num_classes), per_class)
    features = centers[labels] + rng.standard_normal((labels.size, dim))
    return MlpTask(features, labels, num_classes, hidden_width, dropout_rate, seed)


class Batcher:
    """Seeded mini-batch source; its generator also drives dropout masks."""

    def __init__(self, n_samples: int, batch_size: int, seed: int = 0, shuffle: bool = True):
        if n_samples <= 0 or batch_size <= 0:
            raise ValueError("n_samples and batch_size must be positive")
        self.n_samples = n_samples
        self.batch_size = batch_size
        self.shuffle = shuffle
        self.rng = np.random.default_rng(seed)

    @property
    def batches_per_epoch(self) -> int:
        return -(-self.n_samples // self.batch_size)

    def epoch(self):
        order = self.rng.permutation(self.n_samples) if self.shuffle else np.arange(self.n_samples)
        for start in range(0, self.n_samples, self.batch_size):
            yield MiniBatch(order[start:start + self.batch_size])


def save_dataset_csv(task: MlpTask, path) -> None:
    """Feature columns then an integer label column, with a header row."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{i}" for i in range(task.input_dim)] + ["label"])
        for row, lab in zip(task.features, task.labels):
            w.writerow([repr(float(v)) for v in row] + [int(lab)])


def load_dataset_csv(path, hidden_width: int = 16, dropout_rate: float = 0.5,
                     seed: int = 0, num_classes: int | None = None) -> MlpTask:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    body = rows[1:] if rows and rows[0] and rows[0][-1] == "label" else rows
    feats = np.array([[float(v) for v in r[:-1]] for r in body])
    labels = np.array([int(r[-1]) for r in body])
    k = int(labels.max()) + 1 if num_classes is None else num_classes
    return MlpTask(feats, labels, k, hidden_width, dropout_rate, seed)
