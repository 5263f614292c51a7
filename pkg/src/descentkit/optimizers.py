"""First-order update rules, their per-dimension state, and a training loop.

A rule is a frozen spec dataclass; its mutable-looking state is an immutable
``OptimizerState`` value.  ``step(spec, state, g, eta)`` returns a new state
and the update ``dx``; the caller evaluates ``g`` at ``eval_point(...)``,
which differs from ``x`` only for the Nesterov-style rules.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import ConfigError, NonFiniteGradient
from .linalg import as_vector
from .schedulers import rate_at

DIVERGENCE_THRESHOLD = 1e12
DEFAULT_WINDOW_CAP = 64


def _decay(name, v, allow_one=False):
    hi_ok = v <= 1 if allow_one else v < 1
    if not (v >= 0 and hi_ok):
        bound = "[0, 1]" if allow_one else "[0, 1)"
        raise ValueError(f"{name} must lie in {bound}, got {v}")


def _eps(v):
    if not v > 0:
        raise ValueError(f"eps must be positive, got {v}")


# ---------------------------------------------------------------- specs


@dataclass(frozen=True)
class Sgd:
    pass


@dataclass(frozen=True)
class Momentum:
    """dx = rho dx_prev - eta g.  rho = 1 is allowed for stability studies."""

    rho: float = 0.9

    def __post_init__(self):
        _decay("rho", self.rho, allow_one=True)


@dataclass(frozen=True)
class Nag(Momentum):
    """Momentum with the gradient taken at x + rho dx_prev."""


@dataclass(frozen=True)
class AdaGrad:
    eps: float = 1e-8

    def __post_init__(self):
        _eps(self.eps)


@dataclass(frozen=True)
class RmsProp:
    rho: float = 0.9
    eps: float = 1e-6

    def __post_init__(self):
        _decay("rho", self.rho)
        _eps(self.eps)


@dataclass(frozen=True)
class RmsPropNesterov:
    rho: float = 0.9
    alpha: float = 0.9
    eps: float = 1e-6

    def __post_init__(self):
        _decay("rho", self.rho)
        _decay("alpha", self.alpha)
        _eps(self.eps)


@dataclass(frozen=True)
class AdaDelta:
    rho: float = 0.9
    eps: float = 1e-6

    def __post_init__(self):
        _decay("rho", self.rho)
        _eps(self.eps)


@dataclass(frozen=True)
class AdaSmooth:
    """RMSProp with an effective-ratio driven smoothing constant.

    ``rho1 == rho2`` is accepted and reduces to RMSProp with
    rho = 1 - (1 - rho2)^2.
    """

    rho1: float = 0.5
    rho2: float = 0.99
    eps: float = 1e-6

    def __post_init__(self):
        _decay("rho1", self.rho1)
        _decay("rho2", self.rho2)
        if self.rho1 > self.rho2:
            raise ValueError("rho1 must not exceed rho2")
        _eps(self.eps)


@dataclass(frozen=True)
class AdaSmoothDelta(AdaSmooth):
    pass


@dataclass(frozen=True)
class Adam:
    rho1: float = 0.9
    rho2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        _decay("rho1", self.rho1)
        _decay("rho2", self.rho2)
        _eps(self.eps)


@dataclass(frozen=True)
class AdaMax:
    rho1: float = 0.9
    rho2: float = 0.999

    def __post_init__(self):
        _decay("rho1", self.rho1)
        _decay("rho2", self.rho2)


@dataclass(frozen=True)
class Nadam(Adam):
    pass


@dataclass(frozen=True)
class NadamPrime(Adam):
    pass


@dataclass(frozen=True)
class NoisySgd:
    """dx = -eta g + N(0, sigma^2) noise from a generator keyed by (seed, step)."""

    sigma: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError("sigma must be nonnegative")


OPTIMIZERS = {
    "sgd": Sgd,
    "momentum": Momentum,
    "nag": Nag,
    "adagrad": AdaGrad,
    "rmsprop": RmsProp,
    "rmsprop_nesterov": RmsPropNesterov,
    "adadelta": AdaDelta,
    "adasmooth": AdaSmooth,
    "adasmooth_delta": AdaSmoothDelta,
    "adam": Adam,
    "adamax": AdaMax,
    "nadam": Nadam,
    "nadam_prime": NadamPrime,
    "noisy_sgd": NoisySgd,
}

# suggested global learning rates
DEFAULT_ETA = {
    "sgd": 0.01, "momentum": 0.01, "nag": 0.01, "adagrad": 0.01, "rmsprop": 0.001,
    "rmsprop_nesterov": 0.001, "adadelta": 1.0, "adasmooth": 0.001, "adasmooth_delta": 0.5,
    "adam": 0.001, "adamax": 0.002, "nadam": 0.001, "nadam_prime": 0.001, "noisy_sgd": 0.01,
}


def optimizer_name(spec) -> str:
    return next(k for k, v in OPTIMIZERS.items() if type(spec) is v)


def optimizer_from_dict(obj: dict):
    """Build a spec from e.g. ``{"type": "adam", "rho1": 0.9}``; unknown keys are rejected."""
    if not isinstance(obj, dict) or "type" not in obj:
        raise ConfigError("optimizer: expected an object with a 'type' field")
    kind = obj["type"]
    cls = OPTIMIZERS.get(kind)
    if cls is None:
        raise ConfigError(f"optimizer.type: unknown optimizer '{kind}' (known: {', '.join(OPTIMIZERS)})")
    params = {k: v for k, v in obj.items() if k != "type"}
    unknown = sorted(set(params) - {f.name for f in fields(cls)})
    if unknown:
        raise ConfigError(f"optimizer: unknown key(s) {unknown} for type '{kind}'")
    try:
        return cls(**params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"optimizer ({kind}): {exc}") from exc


def optimizer_to_dict(spec) -> dict:
    out = {"type": optimizer_name(spec)}
    out.update({f.name: getattr(spec, f.name) for f in fields(spec)})
    return out


# ---------------------------------------------------------------- state


@dataclass(frozen=True)
class OptimizerState:
    prev_delta: np.ndarray
    accum_sq: np.ndarray
    accum_dx_sq: np.ndarray
    first_moment: np.ndarray
    inf_norm: np.ndarray
    er_signal_accum: np.ndarray
    er_noise_accum: np.ndarray
    step_count: int = 0
    window: tuple = field(default=(), repr=False)
    window_cap: int | None = DEFAULT_WINDOW_CAP
    # bias-corrected first moment of the previous step (Nadam' bookkeeping, diagnostics)
    m_hat: np.ndarray | None = None
    v_hat: np.ndarray | None = None

    @property
    def window_len(self) -> int:
        return len(self.window)

    @property
    def dim(self) -> int:
        return self.prev_delta.shape[0]


def init_state(spec, d: int, window_cap: int | None = DEFAULT_WINDOW_CAP) -> OptimizerState:
    z = np.zeros(d)
    return OptimizerState(z, z, z, z, z, z, z, 0, (), window_cap)


def record_delta(state: OptimizerState, dx) -> OptimizerState:
    """Append ``dx`` to the ER window and make it the previous delta."""
    dx = as_vector(dx)
    window = state.window + (dx,)
    if state.window_cap is not None and len(window) > state.window_cap:
        window = window[-state.window_cap:]
    stack = np.array(window)
    return replace(state, prev_delta=dx, window=window,
                   er_signal_accum=stack.sum(axis=0), er_noise_accum=np.abs(stack).sum(axis=0))


def reset_window(state: OptimizerState) -> OptimizerState:
    """Start a new epoch window holding only the previous delta (M = 1)."""
    if state.step_count == 0:
        z = np.zeros(state.dim)
        return replace(state, window=(), er_signal_accum=z, er_noise_accum=z)
    p = state.prev_delta
    return replace(state, window=(p,), er_signal_accum=p.copy(), er_noise_accum=np.abs(p))


def effective_ratio(state: OptimizerState) -> np.ndarray:
    """|sum of window deltas| / sum of |window deltas|, 0 where nothing moved."""
    noise = state.er_noise_accum
    signal = np.abs(state.er_signal_accum)
    out = np.zeros_like(noise)
    np.divide(signal, noise, out=out, where=noise > 0)
    return np.minimum(out, 1.0)


def scaled_smoothing(spec, e) -> np.ndarray:
    """c = (rho2 - rho1) e + (1 - rho2)."""
    return (spec.rho2 - spec.rho1) * np.asarray(e, dtype=float) + (1.0 - spec.rho2)


def eval_point(spec, state: OptimizerState, x) -> np.ndarray:
    """Where the gradient for the next step must be evaluated."""
    x = as_vector(x)
    if isinstance(spec, Nag):
        return x + spec.rho * state.prev_delta
    if isinstance(spec, RmsPropNesterov):
        return x + spec.alpha * state.prev_delta
    return x


def _corrected(prev, term, rho, t):
    """rho prev / (1 - rho^t) + ((1 - rho) / (1 - rho^t)) term.

    Written this way so the first step returns ``term`` exactly.
    """
    denom = 1.0 - rho ** t
    return rho * prev / denom + ((1.0 - rho) / denom) * term


def adam_moments(spec, state: OptimizerState, g):
    """(m_t, v_t, m_hat_t, v_hat_t) for Adam-family rules at the next step."""
    g = as_vector(g)
    t = state.step_count + 1
    m = spec.rho1 * state.first_moment + (1.0 - spec.rho1) * g
    v = spec.rho2 * state.accum_sq + (1.0 - spec.rho2) * g * g
    m_hat = _corrected(state.first_moment, g, spec.rho1, t)
    v_hat = _corrected(state.accum_sq, g * g, spec.rho2, t)
    return m, v, m_hat, v_hat


def step(spec, state: OptimizerState, g, eta: float):
    """Apply one update.

    Parameters
    ----------
    spec : optimizer spec
    state : OptimizerState
    g : array_like
        Gradient at ``eval_point(spec, state, x)``.
    eta : float
        Global learning rate for this step.

    Returns
    -------
    new_state : OptimizerState
    dx : ndarray
    """
    g = as_vector(g)
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradient("gradient has non-finite entries")
    t = state.step_count + 1
    upd = {}

    if isinstance(spec, Sgd):
        dx = -eta * g
    elif isinstance(spec, Momentum):  # also Nag
        dx = spec.rho * state.prev_delta - eta * g
    elif isinstance(spec, AdaGrad):
        acc = state.accum_sq + g * g
        dx = -eta * g / np.sqrt(acc + spec.eps)
        upd["accum_sq"] = acc
    elif isinstance(spec, RmsProp):
        acc = spec.rho * state.accum_sq + (1.0 - spec.rho) * g * g
        dx = -eta * g / np.sqrt(acc + spec.eps)
        upd["accum_sq"] = acc
    elif isinstance(spec, RmsPropNesterov):
        acc = spec.rho * state.accum_sq + (1.0 - spec.rho) * g * g
        dx = spec.alpha * state.prev_delta - eta * g / np.sqrt(acc + spec.eps)
        upd["accum_sq"] = acc
    elif isinstance(spec, AdaDelta):
        acc = spec.rho * state.accum_sq + (1.0 - spec.rho) * g * g
        dx = -eta * np.sqrt(state.accum_dx_sq + spec.eps) / np.sqrt(acc + spec.eps) * g
        upd["accum_sq"] = acc
        upd["accum_dx_sq"] = spec.rho * state.accum_dx_sq + (1.0 - spec.rho) * dx * dx
    elif isinstance(spec, AdaSmoothDelta):
        c2 = scaled_smoothing(spec, effective_ratio(state)) ** 2
        acc = c2 * g * g + (1.0 - c2) * state.accum_sq
        dx = -eta * np.sqrt(state.accum_dx_sq + spec.eps) / np.sqrt(acc + spec.eps) * g
        upd["accum_sq"] = acc
        upd["accum_dx_sq"] = (1.0 - c2) * dx * dx + c2 * state.accum_dx_sq
    elif isinstance(spec, AdaSmooth):
        c2 = scaled_smoothing(spec, effective_ratio(state)) ** 2
        acc = c2 * g * g + (1.0 - c2) * state.accum_sq
        dx = -eta * g / np.sqrt(acc + spec.eps)
        upd["accum_sq"] = acc
    elif isinstance(spec, AdaMax):
        m = spec.rho1 * state.first_moment + (1.0 - spec.rho1) * g
        m_hat = _corrected(state.first_moment, g, spec.rho1, t)
        u = np.maximum(spec.rho2 * state.inf_norm, np.abs(g))
        dx = np.zeros_like(g)
        np.divide(-eta * m_hat, u, out=dx, where=u > 0)
        upd.update(first_moment=m, inf_norm=u, m_hat=m_hat)
    elif isinstance(spec, Adam):  # Adam, Nadam, NadamPrime
        m, v, m_hat, v_hat = adam_moments(spec, state, g)
        if isinstance(spec, Nadam):
            m_dir = spec.rho1 * m / (1.0 - spec.rho1 ** (t + 1)) \
                + ((1.0 - spec.rho1) / (1.0 - spec.rho1 ** t)) * g
        elif isinstance(spec, NadamPrime):
            m_dir = spec.rho1 * m_hat + ((1.0 - spec.rho1) / (1.0 - spec.rho1 ** t)) * g
        else:
            m_dir = m_hat
        dx = -eta * m_dir / (np.sqrt(v_hat) + spec.eps)
        upd.update(first_moment=m, accum_sq=v, m_hat=m_hat, v_hat=v_hat)
    elif isinstance(spec, NoisySgd):
        noise = np.random.default_rng((spec.seed, t)).normal(0.0, spec.sigma, g.shape[0])
        dx = -eta * g + noise
    else:
        raise TypeError(f"unknown optimizer spec {spec!r}")

    new = replace(state, step_count=t, **upd)
    return record_delta(new, dx), dx


# ---------------------------------------------------------------- training loop


@dataclass(frozen=True)
class Record:
    t: int
    loss: float
    grad_norm: float
    eta: float
    x: np.ndarray | None = None


@dataclass
class TrainTrajectory:
    records: list
    diverged: bool
    final_x: np.ndarray
    final_loss: float
    state: OptimizerState | None = None

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])

    @property
    def iterates(self) -> np.ndarray:
        return np.array([r.x for r in self.records] + [self.final_x])

    def to_csv(self, include_x: bool = False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        dim = self.final_x.shape[0]
        header = ["t", "loss", "grad_norm", "eta"]
        if include_x:
            header += [f"x{i}" for i in range(dim)]
        w.writerow(header)
        for r in self.records:
            row = [r.t, repr(float(r.loss)), repr(float(r.grad_norm)), repr(float(r.eta))]
            if include_x:
                row += [repr(float(v)) for v in r.x]
            w.writerow(row)
        return buf.getvalue()


def _bad(loss, g, threshold):
    return not math.isfinite(loss) or loss > threshold or not np.all(np.isfinite(g))


def train(objective, spec, schedule, x1, steps: int, batcher=None, record_x: bool = False,
          window_cap: int | None = DEFAULT_WINDOW_CAP,
          threshold: float = DIVERGENCE_THRESHOLD) -> TrainTrajectory:
    """Run ``x_{t+1} = x_t + dx_t``.

    Without a batcher, ``steps`` is the number of updates on the full
    objective and each record holds L(x_t).  With a batcher, ``steps`` is the
    number of epochs; each record holds the mini-batch loss, and the ER
    window restarts at every epoch.  The t-th update (1-based) uses
    ``rate_at(schedule, t)``.  The run stops early, flagged as diverged,
    on a non-finite value or a loss above ``threshold``.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    x = as_vector(x1).copy()
    if batcher is not None:
        window_cap = None
    state = init_state(spec, x.shape[0], window_cap)
    records = []
    diverged = False
    t = 0

    def one(loss, g):
        nonlocal state, x, diverged, t
        t += 1
        eta = rate_at(schedule, t)
        gnorm = float(np.linalg.norm(g))
        records.append(Record(t, float(loss), gnorm, eta, x.copy() if record_x else None))
        if _bad(loss, g, threshold):
            diverged = True
            return False
        state, dx = step(spec, state, g, eta)
        x = x + dx
        return True

    if batcher is None:
        for _ in range(steps):
            g = objective.gradient(eval_point(spec, state, x))
            if not one(objective.value(x), g):
                break
    else:
        for _ in range(steps):
            state = reset_window(state)
            ok = True
            for batch in batcher.epoch():
                loss, g = objective.loss_and_grad(eval_point(spec, state, x), batch,
                                                  train_mode=True, rng=batcher.rng)
                if not (ok := one(loss, g)):
                    break
            if not ok:
                break

    final_loss = float(objective.value(x)) if np.all(np.isfinite(x)) else math.inf
    if not math.isfinite(final_loss) or final_loss > threshold:
        diverged = True
    return TrainTrajectory(records, diverged, x, final_loss, state)
