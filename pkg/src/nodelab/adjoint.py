"""Gradient engines for phase-space models.

* :func:`grad_coupled` - first-order adjoint on the phase state (any model kind).
* :func:`grad_second_order` - second-order adjoint ``[r, r']`` for SONODEs.
* :func:`grad_backprop_solver` - exact reverse sweep through fixed-step RK4.
* :func:`grad_finite_diff` - central differences, the independent oracle.

A loss is any callable ``loss(states) -> (value, cotangent)`` where
``states`` has shape ``(T, N, phase_dim)`` (phase states at the observation
times) and ``cotangent`` is ``dL/dstates`` of the same shape.  Observation
times double as segment boundaries for the backward sweeps: cotangents are
added to the adjoint as each boundary is crossed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .models import ModelSpec, _rows
from .solvers import GROUND_TRUTH, SolverConfig, integrate, rk4_steps

Loss = Callable[[np.ndarray], tuple[float, np.ndarray]]
GROUPS = ("theta_f", "theta_g", "theta_s")


class MemoryCapError(MemoryError):
    pass


@dataclass
class Counters:
    vjp_calls: int = 0
    field_evals: int = 0
    enabled: bool = True

    def vjp(self, n: int = 1):
        if self.enabled:
            self.vjp_calls += n

    def field(self, n: int = 1):
        if self.enabled:
            self.field_evals += n


@dataclass
class GradResult:
    d_theta_f: np.ndarray
    d_theta_g: np.ndarray
    d_theta_s: np.ndarray
    loss: float = 0.0
    counters: Counters = field(default_factory=Counters)
    forward_nfe: int = 0
    adjoint_samples: dict = field(default_factory=dict)

    def group(self, name: str) -> np.ndarray:
        return {"theta_f": self.d_theta_f, "theta_g": self.d_theta_g, "theta_s": self.d_theta_s}[name]

    def flat(self) -> np.ndarray:
        return np.concatenate([self.d_theta_f, self.d_theta_g, self.d_theta_s])


def rel_err(a, b) -> float:
    """Norm-wise relative difference; 0 when both vectors vanish."""
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - b) / scale)


def _check_times(times):
    times = np.asarray(times, dtype=np.float64)
    if times.ndim != 1 or len(times) < 1 or np.any(np.diff(times) <= 0):
        raise ValueError("observation times must be strictly increasing")
    return times


def _split_result(model, dg, ds, gth, L, counters, nfe, samples):
    return GradResult(np.asarray(gth, dtype=np.float64), np.asarray(dg), np.asarray(ds),
                      float(L), counters, nfe, samples)


# ---------------------------------------------------------------------------
# first-order adjoint on the phase state


def grad_coupled(model: ModelSpec, X0, times, loss: Loss, cfg: SolverConfig = GROUND_TRUTH,
                 instrument: bool = True) -> GradResult:
    """Adjoint of the coupled first-order system ``z' = f(z, t)``.

    The backward pass carries ``[z, lambda, dL/dtheta_f]``; ``z`` is reset to
    the forward value at every observation time.  ``adjoint_samples`` maps
    each observation index to ``lambda`` there (after its cotangent jump).
    """
    times = _check_times(times)
    X0 = _rows(X0)
    counters = Counters(enabled=instrument)
    traj = model.solve(X0, times, cfg)
    L, cot = loss(traj.states)
    n, p = traj.states.shape[1:]
    nth = model.field.n_params
    lam = cot[-1].copy()
    gth = np.zeros(nth)
    samples = {len(times) - 1: lam.copy()}

    def rhs(t, y):
        z = y[:n * p].reshape(n, p)
        a = y[n * p:2 * n * p].reshape(n, p)
        counters.field()
        counters.vjp()
        dz = model.field_eval(z, t)
        gz, gt = model.field_vjp(z, t, a)
        return np.concatenate([dz.ravel(), -gz.ravel(), -gt])

    for i in range(len(times) - 1, 0, -1):
        y0 = np.concatenate([traj.states[i].ravel(), lam.ravel(), gth])
        y1, _ = integrate(rhs, y0, times[i], times[i - 1], cfg)
        lam = y1[n * p:2 * n * p].reshape(n, p) + cot[i - 1]
        gth = y1[2 * n * p:]
        samples[i - 1] = lam.copy()
    dg, ds = model.lift_vjp(X0, lam)
    return _split_result(model, dg, ds, gth, L, counters, traj.nfe, samples)


# ---------------------------------------------------------------------------
# second-order adjoint

DIRECTIONAL_STEP = 1e-4


def _vjp_v(model, z, t, c, counters):
    counters.vjp()
    gz, _ = model.acceleration_vjp(z, t, c)
    return gz[:, model.d:]


def grad_second_order(model: ModelSpec, X0, times, loss: Loss, cfg: SolverConfig = GROUND_TRUTH,
                      instrument: bool = True) -> GradResult:
    """Second-order adjoint for a SONODE.

    Integrates ``[x, v, r, r', dL/dtheta_f]`` backward with
    ``r'' = r^T f_x - r'^T f_v - r^T d/dt(f_v)``.  The last term is a
    central difference of ``r^T f_v`` along ``(v, f, 1)`` with ``r`` frozen.
    Terminal (and per-observation jump) conditions are
    ``r = dL/dv`` and ``r' = -dL/dx - (dL/dv)^T f_v``.
    """
    if model.kind != "sonode":
        raise ValueError(f"second-order adjoint needs a sonode model, got {model.kind}")
    times = _check_times(times)
    X0 = _rows(X0)
    counters = Counters(enabled=instrument)
    d = model.d
    traj = model.solve(X0, times, cfg)
    L, cot = loss(traj.states)
    n = traj.states.shape[1]
    nd = n * d
    nth = model.field.n_params

    def jump(z, t, c):
        cx, cv = c[:, :d], c[:, d:]
        return cv.copy(), -cx - _vjp_v(model, z, t, cv, counters)

    def rhs(t, y):
        x = y[:nd].reshape(n, d)
        v = y[nd:2 * nd].reshape(n, d)
        r = y[2 * nd:3 * nd].reshape(n, d)
        rd = y[3 * nd:4 * nd].reshape(n, d)
        z = np.hstack([x, v])
        counters.field()
        f = model.field.forward(z, t)
        counters.vjp()
        gz_r, gt = model.acceleration_vjp(z, t, r)
        rd_fv = _vjp_v(model, z, t, rd, counters)
        eps = DIRECTIONAL_STEP * (1.0 + float(np.max(np.abs(z))))
        w = np.hstack([v, f])
        ddt = (_vjp_v(model, z + eps * w, t + eps, r, counters)
               - _vjp_v(model, z - eps * w, t - eps, r, counters)) / (2 * eps)
        rdd = gz_r[:, :d] - rd_fv - ddt
        return np.concatenate([v.ravel(), f.ravel(), rd.ravel(), rdd.ravel(), -gt])

    r, rd = jump(traj.states[-1], times[-1], cot[-1])
    gth = np.zeros(nth)
    samples = {len(times) - 1: r.copy()}
    for i in range(len(times) - 1, 0, -1):
        zi = traj.states[i]
        y0 = np.concatenate([zi[:, :d].ravel(), zi[:, d:].ravel(), r.ravel(), rd.ravel(), gth])
        y1, _ = integrate(rhs, y0, times[i], times[i - 1], cfg)
        r = y1[2 * nd:3 * nd].reshape(n, d)
        rd = y1[3 * nd:4 * nd].reshape(n, d)
        gth = y1[4 * nd:]
        jr, jrd = jump(traj.states[i - 1], times[i - 1], cot[i - 1])
        r, rd = r + jr, rd + jrd
        samples[i - 1] = r.copy()
    # recover the position block of the phase adjoint: r^A = -r' - f_v^T r
    z0 = traj.states[0]
    rA = -rd - _vjp_v(model, z0, times[0], r, counters)
    dg, ds = model.lift_vjp(X0, np.hstack([rA, r]))
    return _split_result(model, dg, ds, gth, L, counters, traj.nfe, samples)


def second_order_terminal(model: ModelSpec, z, t, cotangent):
    """``(r, r')`` at a terminal time for a cotangent on ``[x, v]``."""
    c = _rows(cotangent)
    d = model.d
    gz, _ = model.acceleration_vjp(_rows(z), t, c[:, d:])
    return c[:, d:].copy(), -c[:, :d] - gz[:, d:]


# ---------------------------------------------------------------------------
# discretise-then-optimise


def grad_backprop_solver(model: ModelSpec, X0, times, loss: Loss, n_steps: int = 20,
                         instrument: bool = True, max_floats: int = 50_000_000) -> GradResult:
    """Exact gradient of fixed-step RK4 (``n_steps`` per observation interval)."""
    times = _check_times(times)
    X0 = _rows(X0)
    counters = Counters(enabled=instrument)
    z = model.lift(X0)
    n, p = z.shape
    n_total = n_steps * (len(times) - 1)
    if 4 * n_total * z.size > max_floats:
        raise MemoryCapError(f"storing {n_total} RK4 steps needs more than {max_floats} floats")
    tape = []
    states = [z]
    nfe = 0
    for a, b in zip(times[:-1], times[1:]):
        h = (b - a) / n_steps
        for j in range(n_steps):
            t = a + j * h
            k1 = model.field_eval(z, t)
            u2 = z + h / 2 * k1
            k2 = model.field_eval(u2, t + h / 2)
            u3 = z + h / 2 * k2
            k3 = model.field_eval(u3, t + h / 2)
            u4 = z + h * k3
            k4 = model.field_eval(u4, t + h)
            counters.field(4)
            nfe += 4
            tape.append((t, h, z, u2, u3, u4))
            z = z + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        states.append(z)
    states = np.stack(states)
    L, cot = loss(states)
    zbar = cot[-1].copy()
    gth = np.zeros(model.field.n_params)
    step = len(tape)
    for i in range(len(times) - 1, 0, -1):
        for _ in range(n_steps):
            step -= 1
            t, h, y, u2, u3, u4 = tape[step]
            k1b, k2b, k3b, k4b = h / 6 * zbar, h / 3 * zbar, h / 3 * zbar, h / 6 * zbar
            ybar = zbar.copy()
            gu, gt = model.field_vjp(u4, t + h, k4b)
            gth += gt
            ybar += gu
            k3b = k3b + h * gu
            gu, gt = model.field_vjp(u3, t + h / 2, k3b)
            gth += gt
            ybar += gu
            k2b = k2b + h / 2 * gu
            gu, gt = model.field_vjp(u2, t + h / 2, k2b)
            gth += gt
            ybar += gu
            k1b = k1b + h / 2 * gu
            gu, gt = model.field_vjp(y, t, k1b)
            gth += gt
            counters.vjp(4)
            zbar = ybar + gu
        zbar = zbar + cot[i - 1]
    dg, ds = model.lift_vjp(X0, zbar)
    return _split_result(model, dg, ds, gth, L, counters, nfe, {})


# ---------------------------------------------------------------------------
# finite differences


def loss_value(model: ModelSpec, X0, times, loss: Loss, cfg: SolverConfig = GROUND_TRUTH) -> float:
    return float(loss(model.solve(X0, times, cfg).states)[0])


def grad_finite_diff(model: ModelSpec, X0, times, loss: Loss, h: float = 1e-4,
                     cfg: SolverConfig = GROUND_TRUTH) -> GradResult:
    """Central differences over every scalar parameter."""
    if h <= 0:
        raise ValueError("h must be positive")
    times = _check_times(times)
    theta = model.flat()
    grad = np.zeros_like(theta)
    for i in range(len(theta)):
        e = np.zeros_like(theta)
        e[i] = h
        grad[i] = (loss_value(model.with_flat(theta + e), X0, times, loss, cfg)
                   - loss_value(model.with_flat(theta - e), X0, times, loss, cfg)) / (2 * h)
    nf, ng, _ = model.sizes()
    return GradResult(grad[:nf], grad[nf:nf + ng], grad[nf + ng:],
                      loss_value(model, X0, times, loss, cfg), Counters(enabled=False))


ENGINES = {
    "coupled": grad_coupled,
    "second_order": grad_second_order,
    "backprop": grad_backprop_solver,
}


def count_ops(engine: str, model: ModelSpec, X0, times, loss: Loss, cfg: SolverConfig = GROUND_TRUTH,
              instrument: bool = True) -> Counters:
    if engine == "backprop":
        steps = rk4_steps(times[-1] - times[0], cfg.h_init or 0.05)
        return grad_backprop_solver(model, X0, times, loss, max(1, steps // max(1, len(times) - 1)),
                                    instrument=instrument).counters
    return ENGINES[engine](model, X0, times, loss, cfg, instrument=instrument).counters


# ---------------------------------------------------------------------------
# grad-check report

REPORT_COLUMNS = ["engine_a", "engine_b", "param_group", "rel_err", "vjp_calls_a", "vjp_calls_b"]


def grad_check_rows(results: dict[str, GradResult]) -> list[dict]:
    """Pairwise comparison rows for every pair of engines in ``results``."""
    names = list(results)
    rows = []
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            for grp in GROUPS:
                rows.append({
                    "engine_a": a, "engine_b": b, "param_group": grp,
                    "rel_err": rel_err(results[a].group(grp), results[b].group(grp)),
                    "vjp_calls_a": results[a].counters.vjp_calls,
                    "vjp_calls_b": results[b].counters.vjp_calls,
                })
    return rows


def write_grad_check_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({**row, "rel_err": f"{row['rel_err']:.6e}"})
