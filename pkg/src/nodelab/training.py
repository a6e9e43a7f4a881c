"""Full-batch Adam training with MSE and endpoint cross-entropy losses."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .adjoint import ENGINES, grad_backprop_solver
from .datasets import LabeledPoints, TimeSeries
from .models import ModelSpec
from .solvers import TRAINING, SolverConfig, Trajectory, rk4_steps

LOSSES = ("mse_states", "mse_state_and_velocity", "cross_entropy_endpoint")


@dataclass(frozen=True)
class TrainConfig:
    iters: int = 100
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    loss: str = "mse_states"
    engine: str = "coupled"
    seed: int = 0
    record_time: bool = False

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.iters < 0:
            raise ValueError("iters must be non-negative")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.engine not in ENGINES:
            raise ValueError(f"unknown engine {self.engine!r}")


LOG_COLUMNS = ["iter", "loss", "nfe_forward", "wall_ms"]


@dataclass
class TrainLog:
    rows: list[dict] = field(default_factory=list)
    readout: tuple[np.ndarray, float] | None = None

    @property
    def losses(self) -> np.ndarray:
        return np.array([r["loss"] for r in self.rows])

    def first_below(self, threshold: float) -> int | None:
        """Index of the first logged iteration with loss under ``threshold``."""
        for r in self.rows:
            if r["loss"] < threshold:
                return r["iter"]
        return None

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOG_COLUMNS)
            for r in self.rows:
                w.writerow([r["iter"], repr(r["loss"]), r["nfe_forward"], repr(r["wall_ms"])])


# ---------------------------------------------------------------------------
# losses


class MseLoss:
    """Mean squared error of the first ``m`` phase coordinates.

    ``target`` has shape ``(T, N, m)``; ``mask`` selects the observation
    times that count (endpoint tasks only score the final time).
    """

    def __init__(self, target, mask=None):
        self.target = np.asarray(target, dtype=np.float64)
        if self.target.ndim != 3:
            raise ValueError("target must have shape (T, N, m)")
        T = self.target.shape[0]
        self.mask = np.ones(T, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        if self.mask.shape != (T,) or not self.mask.any():
            raise ValueError("mask must select at least one of the target times")
        self.count = int(self.mask.sum()) * self.target.shape[1] * self.target.shape[2]

    def __call__(self, states):
        states = np.asarray(states)
        m = self.target.shape[2]
        if states.shape[:2] != self.target.shape[:2] or states.shape[2] < m:
            raise ValueError(f"prediction shape {states.shape} does not cover target {self.target.shape}")
        diff = (states[:, :, :m] - self.target) * self.mask[:, None, None]
        cot = np.zeros_like(states)
        cot[:, :, :m] = 2.0 * diff / self.count
        return float(np.sum(diff ** 2) / self.count), cot


def mse_loss(pred, target) -> tuple[float, np.ndarray]:
    """MSE between a predicted trajectory and observed values.

    ``pred`` is a :class:`Trajectory` or a ``(T, N, P)`` array; ``target`` a
    :class:`TimeSeries` or ``(T, N, m)`` array.  Times must agree when both
    carry them.
    """
    states = pred.states if isinstance(pred, Trajectory) else np.asarray(pred, dtype=np.float64)
    values = target.values if isinstance(target, TimeSeries) else np.asarray(target, dtype=np.float64)
    if isinstance(pred, Trajectory) and isinstance(target, TimeSeries):
        if len(pred.times) != len(target.times) or not np.allclose(pred.times, target.times, rtol=0, atol=1e-12):
            raise ValueError("prediction and target times are misaligned")
    if states.ndim == 2:
        states = states[:, None, :]
    if values.ndim == 2:
        values = values[:, None, :]
    if len(states) != len(values):
        raise ValueError("prediction and target times are misaligned")
    return MseLoss(values)(states)


def _sigmoid(s):
    return np.where(s >= 0, 1.0 / (1.0 + np.exp(-np.abs(s))), np.exp(-np.abs(s)) / (1.0 + np.exp(-np.abs(s))))


def xent_endpoint_loss(final_states, labels, readout) -> tuple[float, np.ndarray, np.ndarray, float]:
    """Logistic cross-entropy of an affine readout ``x @ w + b``.

    Returns ``(loss, d/d final_states, d/dw, d/db)``.
    """
    x = np.asarray(final_states, dtype=np.float64)
    y = np.asarray(labels)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    w, b = readout
    w = np.asarray(w, dtype=np.float64)
    s = x @ w + b
    n = len(y)
    L = float(np.mean(np.logaddexp(0.0, s) - y * s))
    ds = (_sigmoid(s) - y) / n
    return L, np.outer(ds, w), x.T @ ds, float(ds.sum())


class XentLoss:
    """Endpoint cross-entropy on the real coordinates; keeps the readout gradient."""

    def __init__(self, labels, d: int, readout):
        self.labels = np.asarray(labels)
        self.d = d
        self.readout = (np.asarray(readout[0], dtype=np.float64), float(readout[1]))
        self.grad_readout = (np.zeros(d), 0.0)

    def __call__(self, states):
        L, cx, dw, db = xent_endpoint_loss(states[-1][:, :self.d], self.labels, self.readout)
        cot = np.zeros_like(states)
        cot[-1][:, :self.d] = cx
        self.grad_readout = (dw, db)
        return L, cot


def accuracy(final_states, labels, readout) -> float:
    w, b = readout
    pred = (np.asarray(final_states) @ w + b) > 0
    return float(np.mean(pred == (np.asarray(labels) == 1)))


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n))


def adam_step(params, grads, state: AdamState, cfg: TrainConfig) -> tuple[np.ndarray, AdamState]:
    """Bias-corrected Adam update; returns new parameters and moments."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError("params, grads and moments must have equal length")
    t = state.t + 1
    m = cfg.beta1 * state.m + (1 - cfg.beta1) * grads
    v = cfg.beta2 * state.v + (1 - cfg.beta2) * grads ** 2
    m_hat = m / (1 - cfg.beta1 ** t)
    v_hat = v / (1 - cfg.beta2 ** t)
    return params - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps_adam), AdamState(m, v, t)


# ---------------------------------------------------------------------------
# problem assembly


@dataclass
class Problem:
    X0: np.ndarray
    times: np.ndarray
    loss: MseLoss | XentLoss


def build_problem(model: ModelSpec, data, cfg: TrainConfig, readout=None) -> Problem:
    """Initial states, observation times and loss for the training split.

    For a :class:`TimeSeries` the initial real state is the first ``d``
    observed channels at the first time.  ``mse_states`` scores the first
    ``d`` phase coordinates; ``mse_state_and_velocity`` scores every observed
    channel against the leading phase coordinates (position then velocity).
    """
    if isinstance(data, TimeSeries):
        tr = data.train()
        if cfg.loss == "cross_entropy_endpoint":
            raise ValueError("cross-entropy needs labelled endpoint data")
        values = tr.values if cfg.loss == "mse_state_and_velocity" else tr.values[:, :, :model.d]
        if values.shape[2] > model.phase_dim:
            raise ValueError("more observed channels than phase coordinates")
        return Problem(tr.values[0][:, :model.d], tr.times, MseLoss(values))
    if isinstance(data, LabeledPoints):
        times = np.array(data.t_span, dtype=np.float64)
        if cfg.loss == "cross_entropy_endpoint":
            if readout is None:
                rng = np.random.default_rng(cfg.seed)
                readout = (0.1 * rng.normal(size=model.d), 0.0)
            return Problem(data.inputs, times, XentLoss(data.targets, model.d, readout))
        target = np.asarray(data.targets, dtype=np.float64)
        full = np.stack([np.zeros_like(target), target])
        return Problem(data.inputs, times, MseLoss(full, mask=[False, True]))
    raise TypeError(f"unsupported dataset type {type(data).__name__}")


def compute_gradient(model: ModelSpec, problem: Problem, engine: str, solver: SolverConfig):
    if engine == "backprop":
        steps = rk4_steps(problem.times[-1] - problem.times[0], solver.h_init or 0.05)
        n = max(1, -(-steps // max(1, len(problem.times) - 1)))
        return grad_backprop_solver(model, problem.X0, problem.times, problem.loss, n, instrument=False)
    return ENGINES[engine](model, problem.X0, problem.times, problem.loss, solver, instrument=False)


def train(model: ModelSpec, data, cfg: TrainConfig, solver: SolverConfig = TRAINING,
          readout=None, until=None) -> tuple[ModelSpec, TrainLog]:
    """Run ``cfg.iters`` full-batch Adam steps.

    Each log row holds the loss and forward NFE at the parameters *before*
    that iteration's update.  ``wall_ms`` is zero unless ``record_time`` is
    set, so logs are reproducible byte for byte.

    ``until(loss) -> bool`` ends the run at the first logged loss for which
    it holds (the model returned is the one that produced that loss).  The
    log is then a prefix of the full-budget log; it exists for measuring
    iterations-to-threshold cheaply, and presets never set it.
    """
    problem = build_problem(model, data, cfg, readout)
    xent = isinstance(problem.loss, XentLoss)
    theta = model.flat()
    n_model = len(theta)
    if xent:
        w, b = problem.loss.readout
        theta = np.concatenate([theta, w, [b]])
    state = AdamState.zeros(len(theta))
    log = TrainLog()
    for it in range(cfg.iters):
        start = time.perf_counter()
        res = compute_gradient(model, problem, cfg.engine, solver)
        if until is not None and until(res.loss):
            wall = (time.perf_counter() - start) * 1e3 if cfg.record_time else 0.0
            log.rows.append({"iter": it, "loss": res.loss, "nfe_forward": int(res.forward_nfe), "wall_ms": wall})
            break
        grad = res.flat()
        if xent:
            dw, db = problem.loss.grad_readout
            grad = np.concatenate([grad, dw, [db]])
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite gradient at iteration {it}")
        theta, state = adam_step(theta, grad, state, cfg)
        model = model.with_flat(theta[:n_model])
        if xent:
            problem.loss.readout = (theta[n_model:-1].copy(), float(theta[-1]))
        wall = (time.perf_counter() - start) * 1e3 if cfg.record_time else 0.0
        log.rows.append({"iter": it, "loss": res.loss, "nfe_forward": int(res.forward_nfe), "wall_ms": wall})
    if xent:
        log.readout = problem.loss.readout
    return model, log


def evaluate(model: ModelSpec, data, cfg: TrainConfig, solver: SolverConfig = TRAINING, readout=None) -> float:
    """Loss of ``model`` on the training split without updating anything."""
    problem = build_problem(model, data, cfg, readout)
    states = model.solve(problem.X0, problem.times, solver).states
    return problem.loss(states)[0]


def holdout_mse(model: ModelSpec, data: TimeSeries, solver: SolverConfig = TRAINING, channels: int | None = None) -> float:
    """MSE on the test split, integrating from the first training sample."""
    n_train, n_test = data.split
    if n_test == 0:
        raise ValueError("dataset has no test split")
    m = channels or model.d
    X0 = data.values[0][:, :model.d]
    states = model.solve(X0, data.times[:n_train + n_test], solver).states
    pred = states[n_train:, :, :m]
    return float(np.mean((pred - data.values[n_train:n_train + n_test, :, :m]) ** 2))
