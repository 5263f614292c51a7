"""Learning-rate schedules as pure functions of a nonnegative step index.

Each schedule is a frozen dataclass with a ``rate(t)`` method; ``rate_at``
dispatches on it.  ``schedule_from_dict`` builds one from a JSON object such
as ``{"type": "step_decay", "eta0": 0.1, "d": 0.5, "n": 10}``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields

from .errors import ConfigError


def _positive(name, v):
    if not v > 0:
        raise ValueError(f"{name} must be positive, got {v}")


def _positive_int(name, v):
    if int(v) != v or v <= 0:
        raise ValueError(f"{name} must be a positive integer, got {v}")


def _unit(name, v):
    if not 0 < v <= 1:
        raise ValueError(f"{name} must lie in (0, 1], got {v}")


@dataclass(frozen=True)
class Constant:
    eta: float

    def __post_init__(self):
        _positive("eta", self.eta)

    def rate(self, t: int) -> float:
        return float(self.eta)


@dataclass(frozen=True)
class StepDecay:
    """eta0 * d ** floor(t / n)."""

    eta0: float
    d: float
    n: int

    def __post_init__(self):
        _positive("eta0", self.eta0)
        _unit("d", self.d)
        _positive_int("n", self.n)

    def rate(self, t: int) -> float:
        return self.eta0 * self.d ** (t // self.n)


@dataclass(frozen=True)
class MultiStep:
    """eta0 * d ** s with s the number of milestones already reached."""

    eta0: float
    d: float
    milestones: tuple

    def __post_init__(self):
        _positive("eta0", self.eta0)
        _unit("d", self.d)
        ms = tuple(int(m) for m in self.milestones)
        if any(m < 0 for m in ms) or list(ms) != sorted(ms):
            raise ValueError("milestones must be nonnegative and non-decreasing")
        object.__setattr__(self, "milestones", ms)

    def rate(self, t: int) -> float:
        s = sum(1 for m in self.milestones if t >= m)
        return self.eta0 * self.d ** s


@dataclass(frozen=True)
class Exponential:
    eta0: float
    k: float

    def __post_init__(self):
        _positive("eta0", self.eta0)
        _positive("k", self.k)

    def rate(self, t: int) -> float:
        return self.eta0 * math.exp(-self.k * t)


@dataclass(frozen=True)
class Inverse:
    eta0: float
    k: float

    def __post_init__(self):
        _positive("eta0", self.eta0)
        _positive("k", self.k)

    def rate(self, t: int) -> float:
        return self.eta0 / (1.0 + self.k * t)


@dataclass(frozen=True)
class InverseSqrt:
    """Flat at eta0 for t < w, then eta0 * sqrt(w / t)."""

    eta0: float
    w: int

    def __post_init__(self):
        _positive("eta0", self.eta0)
        _positive("w", self.w)

    def rate(self, t: int) -> float:
        return self.eta0 * math.sqrt(self.w) / math.sqrt(max(t, self.w))


@dataclass(frozen=True)
class AnnealingPoly:
    """(eta0 - eta_end) * (1 - min(t, m) / m) ** p + eta_end.

    Reaches eta_end at t = m and stays there.
    """

    m: int
    eta0: float = 0.001
    eta_end: float = 1e-10
    p: float = 2.0

    def __post_init__(self):
        _positive_int("m", self.m)
        _positive("eta0", self.eta0)
        if self.eta_end < 0 or self.eta_end > self.eta0:
            raise ValueError("eta_end must lie in [0, eta0]")
        if self.p < 0:
            raise ValueError("p must be nonnegative")

    def rate(self, t: int) -> float:
        frac = min(t, self.m) / self.m
        return (self.eta0 - self.eta_end) * (1.0 - frac) ** self.p + self.eta_end


@dataclass(frozen=True)
class Stlr:
    """Slanted triangular: linear ramp for ceil(t_total * frac) steps, then linear decay."""

    t_total: int
    eta_max: float = 0.01
    frac: float = 0.1
    ratio: float = 32.0

    def __post_init__(self):
        _positive_int("t_total", self.t_total)
        _positive("eta_max", self.eta_max)
        if not 0 < self.frac < 1:
            raise ValueError("frac must lie in (0, 1)")
        if not self.ratio >= 1:
            raise ValueError("ratio must be at least 1")

    @property
    def cut(self) -> int:
        # round first so that e.g. 30 * 0.1 = 3.0000000000000004 gives 3
        return max(1, math.ceil(round(self.t_total * self.frac, 9)))

    def rate(self, t: int) -> float:
        cut = self.cut
        if t < cut:
            p = t / cut
        else:
            p = 1.0 - (t - cut) / (cut * (1.0 / self.frac - 1.0))
        p = min(1.0, max(0.0, p))
        return self.eta_max * (1.0 + p * (self.ratio - 1.0)) / self.ratio


def _noam_core(t: int, w: float) -> float:
    if t <= 0:
        return 0.0
    return min(1.0 / math.sqrt(t), t / w ** 1.5)


@dataclass(frozen=True)
class Noam:
    """alpha / sqrt(d_model) * min(1/sqrt(t), t / w^1.5); zero at t = 0."""

    alpha: float = 1.0
    d_model: int = 512
    w: int = 4000

    def __post_init__(self):
        _positive("alpha", self.alpha)
        _positive("d_model", self.d_model)
        _positive("w", self.w)

    def rate(self, t: int) -> float:
        return self.alpha / math.sqrt(self.d_model) * _noam_core(t, self.w)


@dataclass(frozen=True)
class WarmupNoam:
    """Noam with the model size replaced by the warmup length."""

    alpha: float = 1.0
    w: int = 4000

    def __post_init__(self):
        _positive("alpha", self.alpha)
        _positive("w", self.w)

    def rate(self, t: int) -> float:
        return self.alpha / math.sqrt(self.w) * _noam_core(t, self.w)


def _triangle(t: int, s: int) -> tuple[int, float]:
    """Return (cycle, max(0, 1 - x)) using integer arithmetic."""
    cycle = 1 + t // (2 * s)
    x = abs(t - (2 * cycle - 1) * s) / s
    return cycle, max(0.0, 1.0 - x)


@dataclass(frozen=True)
class Triangular:
    eta0: float
    eta_max: float
    s: int

    def __post_init__(self):
        _positive("eta0", self.eta0)
        if not self.eta_max >= self.eta0:
            raise ValueError("eta_max must be >= eta0")
        _positive_int("s", self.s)

    def rate(self, t: int) -> float:
        _, h = _triangle(t, self.s)
        return self.eta0 + (self.eta_max - self.eta0) * h


@dataclass(frozen=True)
class Triangular2(Triangular):
    """Triangular with the amplitude halved every cycle."""

    def rate(self, t: int) -> float:
        cycle, h = _triangle(t, self.s)
        return self.eta0 + (self.eta_max - self.eta0) * h / 2.0 ** (cycle - 1)


@dataclass(frozen=True)
class ExpRange(Triangular):
    """Triangular with the amplitude scaled by gamma ** t."""

    gamma: float = 1.0

    def __post_init__(self):
        super().__post_init__()
        _unit("gamma", self.gamma)

    def rate(self, t: int) -> float:
        _, h = _triangle(t, self.s)
        return self.eta0 + (self.eta_max - self.eta0) * h * self.gamma ** t


@dataclass(frozen=True)
class CyclicalCosine:
    """Cosine annealing from eta0 towards 0, restarted every ceil(t_total / cycles) steps."""

    eta0: float
    t_total: int
    cycles: int

    def __post_init__(self):
        _positive("eta0", self.eta0)
        _positive_int("t_total", self.t_total)
        _positive_int("cycles", self.cycles)

    @property
    def period(self) -> int:
        return -(-self.t_total // self.cycles)

    def rate(self, t: int) -> float:
        p = self.period
        return self.eta0 / 2.0 * (math.cos(math.pi * ((t - 1) % p) / p) + 1.0)


@dataclass(frozen=True)
class CyclicalStep:
    """eta_max - (t mod m) * eta_min."""

    eta_min: float = 0.1
    eta_max: float = 0.5
    m: int = 5

    def __post_init__(self):
        _positive("eta_min", self.eta_min)
        _positive("eta_max", self.eta_max)
        _positive_int("m", self.m)
        if (self.m - 1) * self.eta_min > self.eta_max * (1 + 1e-12):
            raise ValueError("(m - 1) * eta_min must not exceed eta_max")

    def rate(self, t: int) -> float:
        return max(0.0, self.eta_max - (t % self.m) * self.eta_min)


CYCLICAL_POLY_EPS = 1e-10


@dataclass(frozen=True)
class CyclicalPoly:
    """Polynomial decay restarted every m steps."""

    eta0: float
    eta_end: float
    m: int
    p: float = 2.0

    def __post_init__(self):
        _positive("eta0", self.eta0)
        if self.eta_end < 0 or self.eta_end > self.eta0:
            raise ValueError("eta_end must lie in [0, eta0]")
        _positive_int("m", self.m)
        if self.p < 0:
            raise ValueError("p must be nonnegative")

    def rate(self, t: int) -> float:
        decay_batch = self.m * (-(-t // self.m))
        return (self.eta0 - self.eta_end) * (1.0 - t / (decay_batch + CYCLICAL_POLY_EPS)) ** self.p \
            + self.eta_end


SCHEDULES = {
    "constant": Constant,
    "step_decay": StepDecay,
    "multi_step": MultiStep,
    "exponential": Exponential,
    "inverse": Inverse,
    "inverse_sqrt": InverseSqrt,
    "annealing_poly": AnnealingPoly,
    "stlr": Stlr,
    "noam": Noam,
    "warmup_noam": WarmupNoam,
    "triangular": Triangular,
    "triangular2": Triangular2,
    "exp_range": ExpRange,
    "cyclical_cosine": CyclicalCosine,
    "cyclical_step": CyclicalStep,
    "cyclical_poly": CyclicalPoly,
}

ScheduleSpec = (Constant | StepDecay | MultiStep | Exponential | Inverse | InverseSqrt
                | AnnealingPoly | Stlr | Noam | WarmupNoam | Triangular | Triangular2
                | ExpRange | CyclicalCosine | CyclicalStep | CyclicalPoly)


def rate_at(spec, t: int) -> float:
    if t < 0:
        raise ValueError("t must be nonnegative")
    return float(spec.rate(int(t)))


def schedule_table(spec, t_max: int) -> list[tuple[int, float]]:
    """[(t, rate_at(spec, t)) for t = 0 .. t_max]."""
    if t_max < 1:
        raise ValueError("t_max must be at least 1")
    return [(t, rate_at(spec, t)) for t in range(t_max + 1)]


def table_to_csv(table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "eta"])
    for t, eta in table:
        w.writerow([t, repr(eta)])
    return buf.getvalue()


def schedule_from_dict(obj: dict, t_max: int | None = None):
    """Build a schedule from its JSON form, rejecting unknown keys.

    ``annealing_poly`` without ``m`` uses max(1, t_max // 2) when ``t_max``
    is known.
    """
    if not isinstance(obj, dict) or "type" not in obj:
        raise ConfigError("schedule: expected an object with a 'type' field")
    kind = obj["type"]
    cls = SCHEDULES.get(kind)
    if cls is None:
        raise ConfigError(f"schedule.type: unknown schedule '{kind}' (known: {', '.join(SCHEDULES)})")
    allowed = {f.name for f in fields(cls)}
    params = {k: v for k, v in obj.items() if k != "type"}
    unknown = sorted(set(params) - allowed)
    if unknown:
        raise ConfigError(f"schedule: unknown key(s) {unknown} for type '{kind}'")
    if cls is AnnealingPoly and "m" not in params and t_max is not None:
        params["m"] = max(1, t_max // 2)
    if cls is MultiStep and "milestones" in params:
        params["milestones"] = tuple(params["milestones"])
    try:
        return cls(**params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"schedule ({kind}): {exc}") from exc


def schedule_to_dict(spec) -> dict:
    name = next(k for k, v in SCHEDULES.items() if type(spec) is v)
    out = {"type": name}
    for f in fields(spec):
        v = getattr(spec, f.name)
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out
