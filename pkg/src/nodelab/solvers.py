"""Explicit Runge-Kutta integration with function-evaluation counting.

Two methods are provided: classic fixed-step RK4 and adaptive Dormand-Prince
5(4) with first-same-as-last reuse.  Both integrate in either time direction;
a negative span simply flips the sign of the step.  Dense output is produced
by stepping exactly onto every requested time, never by interpolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Field = Callable[[float, np.ndarray], np.ndarray]


class SolverError(RuntimeError):
    pass


class NonConvergenceError(SolverError):
    pass


class InstabilityError(SolverError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    method: str = "dopri5"
    rtol: float = 1e-6
    atol: float = 1e-6
    h_init: float | None = None
    h_min: float = 1e-12
    max_steps: int = 200_000

    def __post_init__(self):
        if self.method not in ("rk4", "dopri5"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("rtol and atol must be positive")
        if self.h_min <= 0 or self.max_steps <= 0:
            raise ValueError("h_min and max_steps must be positive")
        if self.h_init is not None and self.h_init <= 0:
            raise ValueError("h_init must be positive")
        if self.method == "rk4" and self.h_init is None:
            object.__setattr__(self, "h_init", 0.05)

    @classmethod
    def rk4(cls, h: float) -> "SolverConfig":
        return cls(method="rk4", h_init=h)

    @classmethod
    def tight(cls, tol: float = 1e-9) -> "SolverConfig":
        return cls(method="dopri5", rtol=tol, atol=tol)


TRAINING = SolverConfig()
GROUND_TRUTH = SolverConfig.tight(1e-9)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    nfe: int = 0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.states = np.asarray(self.states, dtype=np.float64)
        if len(self.times) != len(self.states):
            raise ValueError("times and states differ in length")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")


@dataclass
class _Counter:
    nfe: int = 0
    steps: int = 0
    rejected: int = 0


def _evaluate(fn: Field, t: float, y: np.ndarray, counter: _Counter) -> np.ndarray:
    # overflow surfaces as InstabilityError below, so numpy's warning adds nothing
    with np.errstate(over="ignore", invalid="ignore"):
        out = fn(t, y)
    counter.nfe += 1
    if not np.all(np.isfinite(out)):
        raise InstabilityError(f"non-finite vector field at t={t:.6g}")
    return out


def rk4_steps(span: float, h: float) -> int:
    return max(1, math.ceil(abs(span) / h - 1e-9))


def _rk4(fn, y, t0, t1, cfg, counter):
    n = rk4_steps(t1 - t0, cfg.h_init)
    if n > cfg.max_steps:
        raise NonConvergenceError(f"{n} rk4 steps exceed max_steps={cfg.max_steps}")
    h = (t1 - t0) / n
    t = t0
    for i in range(n):
        k1 = _evaluate(fn, t, y, counter)
        k2 = _evaluate(fn, t + h / 2, y + h / 2 * k1, counter)
        k3 = _evaluate(fn, t + h / 2, y + h / 2 * k2, counter)
        k4 = _evaluate(fn, t + h, y + h * k3, counter)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t0 + (i + 1) * h
        counter.steps += 1
    return y


# Dormand-Prince 5(4) tableau.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_E = np.array([
    71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40,
])
_SAFETY, _SHRINK, _GROW = 0.9, 0.2, 10.0


@dataclass
class _DopriState:
    t: float
    y: np.ndarray
    k1: np.ndarray
    h: float  # unsigned proposal for the next step


def _initial_step(y, f0, span, cfg):
    scale = cfg.atol + cfg.rtol * np.abs(y)
    d0 = float(np.sqrt(np.mean((y / scale) ** 2))) if y.size else 0.0
    d1 = float(np.sqrt(np.mean((f0 / scale) ** 2))) if y.size else 0.0
    h = 0.01 * d0 / d1 if d0 > 1e-5 and d1 > 1e-5 else 1e-6
    return min(max(h, cfg.h_min), abs(span))


def _dopri_advance(fn, st: _DopriState, t_end, cfg, counter, error_log=None):
    direction = 1.0 if t_end >= st.t else -1.0
    while (t_end - st.t) * direction > 0:
        if counter.steps + counter.rejected >= cfg.max_steps:
            raise NonConvergenceError(f"exceeded max_steps={cfg.max_steps}")
        remaining = abs(t_end - st.t)
        h_abs = min(st.h, remaining)
        last = h_abs >= remaining * (1 - 1e-12)
        if last:
            h_abs = remaining
        h = direction * h_abs
        k = [st.k1]
        for i in range(1, 7):
            yi = st.y + h * sum(a * kj for a, kj in zip(_A[i], k) if a != 0.0)
            k.append(_evaluate(fn, st.t + _C[i] * h, yi, counter))
        y_new = st.y + h * sum(a * kj for a, kj in zip(_A[6], k[:6]) if a != 0.0)
        err_vec = h * sum(e * kj for e, kj in zip(_E, k) if e != 0.0)
        tol = cfg.atol + cfg.rtol * np.maximum(np.abs(st.y), np.abs(y_new))
        err = float(np.max(np.abs(err_vec) / tol)) if err_vec.size else 0.0
        factor = _GROW if err == 0.0 else min(_GROW, max(_SHRINK, _SAFETY * err ** -0.2))
        if err <= 1.0:
            if error_log is not None:
                error_log.append(err)
            st.t = t_end if last else st.t + h
            st.y = y_new
            st.k1 = k[6]
            counter.steps += 1
            if not last or factor < 1.0:
                st.h = h_abs * factor
        else:
            counter.rejected += 1
            st.h = h_abs * factor
            if st.h < cfg.h_min:
                raise NonConvergenceError(f"step size {st.h:.3e} fell below h_min at t={st.t:.6g}")
    return st


def integrate(fn: Field, z0, t0: float, t1: float, cfg: SolverConfig = TRAINING,
              *, error_log: list | None = None) -> tuple[np.ndarray, int]:
    """Integrate ``dz/dt = fn(t, z)`` from ``t0`` to ``t1``; returns ``(z(t1), nfe)``.

    ``t1 < t0`` integrates backward in time.
    """
    y0 = np.asarray(z0, dtype=np.float64)
    if not np.all(np.isfinite(y0)):
        raise InstabilityError("initial state is not finite")
    counter = _Counter()
    if t1 == t0:
        return y0.copy(), 0
    y = _run(fn, y0, [float(t0), float(t1)], cfg, counter, error_log)[-1]
    return y, counter.nfe


def integrate_dense(fn: Field, z0, times, cfg: SolverConfig = TRAINING,
                    *, error_log: list | None = None) -> Trajectory:
    """States at every entry of ascending ``times``; ``times[0]`` is the start."""
    times = np.asarray(times, dtype=np.float64)
    if times.ndim != 1 or len(times) == 0:
        raise ValueError("times must be a non-empty 1-D array")
    if len(times) > 1 and not np.all(np.diff(times) > 0):
        raise ValueError("times must be strictly increasing")
    y0 = np.asarray(z0, dtype=np.float64)
    if not np.all(np.isfinite(y0)):
        raise InstabilityError("initial state is not finite")
    counter = _Counter()
    states = _run(fn, y0, times, cfg, counter, error_log)
    return Trajectory(times, np.stack(states), counter.nfe)


def _run(fn, y0, times, cfg, counter, error_log=None):
    states = [y0.copy()]
    if len(times) == 1:
        return states
    if cfg.method == "rk4":
        y = y0
        for a, b in zip(times[:-1], times[1:]):
            y = _rk4(fn, y, float(a), float(b), cfg, counter)
            states.append(y)
        return states
    f0 = _evaluate(fn, float(times[0]), y0, counter)
    h0 = cfg.h_init if cfg.h_init is not None else _initial_step(y0, f0, times[-1] - times[0], cfg)
    st = _DopriState(float(times[0]), y0, f0, h0)
    for b in times[1:]:
        _dopri_advance(fn, st, float(b), cfg, counter, error_log)
        states.append(st.y.copy())
    return states


@dataclass
class SolveStats:
    """Step bookkeeping for a single integration, used by the instrumentation tests."""
    nfe: int = 0
    steps: int = 0
    rejected: int = 0
    errors: list = field(default_factory=list)


def integrate_with_stats(fn: Field, z0, times, cfg: SolverConfig = TRAINING):
    times = np.asarray(times, dtype=np.float64)
    counter = _Counter()
    errors: list = []
    states = _run(fn, np.asarray(z0, dtype=np.float64), times, cfg, counter, errors)
    return np.stack(states), SolveStats(counter.nfe, counter.steps, counter.rejected, errors)
