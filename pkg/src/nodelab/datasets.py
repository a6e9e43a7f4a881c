"""Ground-truth generators and CSV ingestion."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .solvers import SolverConfig, integrate_dense


class SchemaError(ValueError):
    pass


class ParseError(ValueError):
    pass


@dataclass
class TimeSeries:
    """Observed trajectories.

    ``values`` has shape ``(T, N, m)``: ``N`` trajectories of ``m`` observed
    channels.  ``control`` (``(T, c)``) holds sampled forcing inputs.
    """

    times: np.ndarray
    values: np.ndarray
    control: np.ndarray | None = None
    split: tuple[int, int] | None = None
    velocities: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 1:
            v = v[:, None, None]
        elif v.ndim == 2:
            v = v[:, None, :]
        self.values = v
        if len(self.times) != len(v):
            raise ValueError("times and values are not aligned")
        if self.control is not None:
            self.control = np.asarray(self.control, dtype=np.float64).reshape(len(self.times), -1)
        if self.velocities is not None:
            self.velocities = np.asarray(self.velocities, dtype=np.float64).reshape(v.shape[0], v.shape[1], -1)
        if self.split is None:
            self.split = (len(self.times), 0)
        n_train, n_test = self.split
        if n_train + n_test > len(self.times) or n_train < 1:
            raise ValueError(f"split {self.split} does not fit {len(self.times)} samples")

    def train(self) -> "TimeSeries":
        return self._slice(slice(0, self.split[0]), (self.split[0], 0))

    def test(self) -> "TimeSeries":
        n, m = self.split
        return self._slice(slice(n, n + m), (m, 0))

    def _slice(self, sl, split):
        return TimeSeries(self.times[sl], self.values[sl],
                          None if self.control is None else self.control[sl], split,
                          None if self.velocities is None else self.velocities[sl], dict(self.metadata))


@dataclass
class LabeledPoints:
    """Endpoint-task data: targets are points (regression) or 0/1 labels."""

    inputs: np.ndarray
    targets: np.ndarray
    t_span: tuple[float, float] = (0.0, 1.0)
    split: tuple[int, int] | None = None

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets)
        if len(self.inputs) == 0:
            raise ValueError("no points")
        if self.split is None:
            self.split = (len(self.inputs), 0)

    def train(self) -> "LabeledPoints":
        n = self.split[0]
        return LabeledPoints(self.inputs[:n], self.targets[:n], self.t_span)

    def test(self) -> "LabeledPoints":
        n, m = self.split
        return LabeledPoints(self.inputs[n:n + m], self.targets[n:n + m], self.t_span)


# ---------------------------------------------------------------------------
# endpoint tasks


def gen_parity(D: int, n_train: int = 50, n_test: int = 10, seed: int = 0, fixed: bool = False) -> LabeledPoints:
    """Points in ``[-1, 1]^D`` mapped to their negation.

    ``fixed`` with ``D == 1`` gives the two-point problem ``{1, -1}``.
    """
    if D < 1:
        raise ValueError("D must be >= 1")
    if fixed:
        if D != 1:
            raise ValueError("the fixed variant is one-dimensional")
        x = np.array([[1.0], [-1.0]])
        return LabeledPoints(x, -x, (0.0, 1.0), (2, 0))
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, (n_train + n_test, D))
    return LabeledPoints(x, -x, (0.0, 1.0), (n_train, n_test))


def _uniform_ball(rng, n, D, r_lo, r_hi):
    u = rng.normal(size=(n, D))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    # radius density proportional to r^(D-1) on [r_lo, r_hi]
    r = (r_lo ** D + rng.uniform(size=n) * (r_hi ** D - r_lo ** D)) ** (1.0 / D)
    return u * r[:, None]


def gen_nested_spheres(D: int = 2, n: int = 100, r_inner: float = 0.5,
                       r_shell: tuple[float, float] = (1.0, 1.5), seed: int = 0) -> LabeledPoints:
    """Class 0 inside radius ``r_inner``, class 1 in the surrounding shell."""
    if not 0 < r_inner < r_shell[0] < r_shell[1]:
        raise ValueError("need 0 < r_inner < shell inner radius < shell outer radius")
    rng = np.random.default_rng(seed)
    n0 = n // 2
    inner = _uniform_ball(rng, n0, D, 0.0, r_inner)
    outer = _uniform_ball(rng, n - n0, D, *r_shell)
    x = np.vstack([inner, outer])
    y = np.concatenate([np.zeros(n0, dtype=int), np.ones(n - n0, dtype=int)])
    return LabeledPoints(x, y, (0.0, 1.0), (n, 0))


# ---------------------------------------------------------------------------
# closed-form oscillators


def damped_osc_closed_form(omega, gamma, x0, v0, t):
    """``x(t), v(t)`` for ``x'' = -(omega^2 + gamma^2) x - 2 gamma x'``."""
    t = np.asarray(t, dtype=np.float64)[:, None]
    x0, v0 = np.atleast_1d(x0)[None, :], np.atleast_1d(v0)[None, :]
    A = (v0 + gamma * x0) / omega
    B = x0
    e = np.exp(-gamma * t)
    s, c = np.sin(omega * t), np.cos(omega * t)
    x = e * (A * s + B * c)
    v = e * ((A * omega - gamma * B) * c - (B * omega + gamma * A) * s)
    return x, v


def gen_damped_osc(omega: float, gamma: float, x0, v0, times) -> TimeSeries:
    if omega <= 0:
        raise ValueError("omega must be positive")
    x, v = damped_osc_closed_form(omega, gamma, x0, v0, times)
    return TimeSeries(times, x[:, :, None], velocities=v[:, :, None],
                      metadata={"omega": omega, "gamma": gamma})


def oscillator_experiment(n_traj: int = 30, seed: int = 0, omega: float = 1.0, gamma: float = 0.1,
                          t_end: float = 10.0, n_times: int = 100) -> TimeSeries:
    """Random ``(x0, v0)`` in ``[-1, 1]^2``; values carry both position and velocity."""
    rng = np.random.default_rng(seed)
    x0, v0 = rng.uniform(-1.0, 1.0, (2, n_traj))
    times = np.linspace(0.0, t_end, n_times)
    x, v = damped_osc_closed_form(omega, gamma, x0, v0, times)
    values = np.stack([x, v], axis=-1)
    return TimeSeries(times, values, velocities=v[:, :, None],
                      metadata={"omega": omega, "gamma": gamma, "x0": x0.tolist(), "v0": v0.tolist()})


TWO_D = {"omega_x": 1.0, "gamma_x": 0.1, "omega_y": 1.2, "gamma_y": 0.3,
         "x0": (1.0, -5.0), "v0": (2.9, 3.9)}


def gen_2d_ode(times) -> TimeSeries:
    """Two uncoupled damped oscillators with fixed closed forms."""
    t = np.asarray(times, dtype=np.float64)
    ex, ey = np.exp(-0.1 * t), np.exp(-0.3 * t)
    x = ex * (3 * np.sin(t) + np.cos(t))
    y = ey * (2 * np.sin(1.2 * t) - 5 * np.cos(1.2 * t))
    vx = -0.1 * x + ex * (3 * np.cos(t) - np.sin(t))
    vy = -0.3 * y + ey * (2.4 * np.cos(1.2 * t) + 6 * np.sin(1.2 * t))
    values = np.stack([x, y], axis=-1)[:, None, :]
    vel = np.stack([vx, vy], axis=-1)[:, None, :]
    return TimeSeries(t, values, velocities=vel, metadata=dict(TWO_D))


def two_d_acceleration(x, v):
    """True right-hand side of the 2-D system, rows ``[x, y]`` and ``[x', y']``."""
    p = TWO_D
    kx, ky = p["omega_x"] ** 2 + p["gamma_x"] ** 2, p["omega_y"] ** 2 + p["gamma_y"] ** 2
    k = np.array([kx, ky])
    c = np.array([2 * p["gamma_x"], 2 * p["gamma_y"]])
    return -k * x - c * v


def gen_sine_noise(sigma: float, seed: int = 0, n_train: int = 50, n_test: int = 10) -> TimeSeries:
    """Noisy ``sin(t)`` on ``[0, 10]`` for training, clean samples on ``(10, 15]`` for testing."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    rng = np.random.default_rng(seed)
    t_train = np.linspace(0.0, 10.0, n_train)
    t_test = np.linspace(10.0, 15.0, n_test + 1)[1:]
    y_train = np.sin(t_train) + sigma * rng.normal(size=n_train)
    times = np.concatenate([t_train, t_test])
    values = np.concatenate([y_train, np.sin(t_test)])
    return TimeSeries(times, values, split=(n_train, n_test), metadata={"sigma": sigma, "seed": seed})


VDP = {"mu": 8.53, "amp": 1.2, "freq": 0.2 * np.pi, "x0": 0.1, "v0": 0.0}


def vdp_rhs(t, z):
    x, v = z[..., 0], z[..., 1]
    a = VDP["mu"] * (1 - x ** 2) * v - x + VDP["amp"] * np.cos(VDP["freq"] * t)
    return np.stack([v, a], axis=-1)


def gen_vdp(times=None, tol: float = 1e-10, n_train: int = 70) -> TimeSeries:
    """Forced Van der Pol oscillator; default 200 samples with step 0.1."""
    times = np.arange(200) * 0.1 if times is None else np.asarray(times, dtype=np.float64)
    traj = integrate_dense(vdp_rhs, np.array([VDP["x0"], VDP["v0"]]), times, SolverConfig.tight(tol))
    n_train = min(n_train, len(times))
    return TimeSeries(times, traj.states[:, None, :1], split=(n_train, len(times) - n_train),
                      velocities=traj.states[:, None, 1:], metadata=dict(VDP))


EXP_RATE = 0.1667


def gen_exponential(times) -> TimeSeries:
    t = np.asarray(times, dtype=np.float64)
    return TimeSeries(t, np.exp(EXP_RATE * t), metadata={"rate": EXP_RATE})


THIRD_ORDER = {"c2": 0.5, "c1": 1.07, "c0": 0.303, "x0": (1.0, 0.0, -0.5)}


def gen_third_order(times, tol: float = 1e-10) -> TimeSeries:
    """``x''' = -c2 x'' - c1 x' - c0 x`` (poles -0.3 and -0.1 +- 1.0i)."""
    p = THIRD_ORDER
    times = np.asarray(times, dtype=np.float64)

    def rhs(t, z):
        return np.array([z[1], z[2], -p["c2"] * z[2] - p["c1"] * z[1] - p["c0"] * z[0]])

    traj = integrate_dense(rhs, np.array(p["x0"]), times, SolverConfig.tight(tol))
    return TimeSeries(times, traj.states[:, None, :1], velocities=traj.states[:, None, 1:2],
                      metadata=dict(p))


# ---------------------------------------------------------------------------
# Duffing model for the measurement-style fixtures

DUFFING = {"a": -0.2, "b": -1.0, "c": -0.5, "d": 0.8}


def duffing_forcing(t):
    return 1.2 * np.sin(0.9 * t) + 0.8 * np.sin(1.7 * t + 0.3)


def interp_forcing(times, samples):
    """Piecewise-linear forcing through sampled control values."""
    times = np.asarray(times, dtype=np.float64)
    samples = np.asarray(samples, dtype=np.float64).reshape(len(times), -1)

    def u(t):
        return np.array([np.interp(t, times, samples[:, j]) for j in range(samples.shape[1])])

    return u


def gen_duffing(times, coefficients=None, x0=0.0, v0=0.0, tol: float = 1e-10) -> TimeSeries:
    """``x'' = a x' + b x + c x^3 + d u(t)`` driven by the sampled forcing.

    The forcing is sampled on ``times`` and linearly interpolated, which is
    exactly what a model fed from the control column sees.
    """
    p = dict(DUFFING if coefficients is None else coefficients)
    times = np.asarray(times, dtype=np.float64)
    u_samples = duffing_forcing(times)
    u = interp_forcing(times, u_samples)

    def rhs(t, z):
        return np.array([z[1], p["a"] * z[1] + p["b"] * z[0] + p["c"] * z[0] ** 3 + p["d"] * u(t)[0]])

    traj = integrate_dense(rhs, np.array([x0, v0]), times, SolverConfig.tight(tol))
    return TimeSeries(times, traj.states[:, None, :1], control=u_samples,
                      velocities=traj.states[:, None, 1:], metadata=p)


# ---------------------------------------------------------------------------
# CSV

SILVERBOX_SCHEMA = {"time_col": "t", "value_cols": ["V2"], "control_cols": ["V1"]}
AIRPLANE_SCHEMA = {"time_col": "t", "value_cols": ["a2"], "control_cols": ["a1"]}


def load_csv(path, schema: dict, split: tuple[int, int] = (1000, 4000)) -> TimeSeries:
    """Read a headed, comma-separated file into a single-trajectory series.

    The split is clamped to the rows available.  Data rows are numbered from
    1 in error messages.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        wanted = [schema["time_col"], *schema["value_cols"], *schema.get("control_cols", [])]
        missing = [c for c in wanted if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {missing}")
        idx = [header.index(c) for c in wanted]
        rows = []
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(row[i]) for i in idx])
            except (ValueError, IndexError):
                raise ParseError(f"{path}: row {lineno} is not numeric: {row}") from None
    data = np.array(rows, dtype=np.float64).reshape(-1, len(wanted))
    nv = len(schema["value_cols"])
    n_train = min(split[0], len(data))
    n_test = min(split[1], len(data) - n_train)
    control = data[:, 1 + nv:] if schema.get("control_cols") else None
    return TimeSeries(data[:, 0], data[:, 1:1 + nv], control=control, split=(n_train, n_test),
                      metadata={"source": str(path), "schema": schema})


def write_csv(ts: TimeSeries, path, schema: dict, trajectory: int = 0) -> None:
    cols = [schema["time_col"], *schema["value_cols"], *schema.get("control_cols", [])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for i, t in enumerate(ts.times):
            row = [t, *ts.values[i, trajectory]]
            if schema.get("control_cols"):
                row += list(ts.control[i])
            w.writerow([repr(float(v)) for v in row])


def write_manifest(path, name: str, schema: dict, split) -> None:
    Path(path).write_text(json.dumps({"name": name, "schema": schema, "split": list(split)}, indent=1))


def fixture_path(name: str) -> Path:
    return Path(__file__).parent / "data" / f"{name}_fixture.csv"


FIXTURE_ROWS = 400
FIXTURE_DT = 0.1
FIXTURE_SPLIT = (100, 300)


def write_fixtures(directory) -> list[Path]:
    """Regenerate the shipped Duffing fixtures in both measurement schemas."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ts = gen_duffing(np.arange(FIXTURE_ROWS) * FIXTURE_DT)
    written = []
    for name, schema in (("silverbox", SILVERBOX_SCHEMA), ("airplane", AIRPLANE_SCHEMA)):
        path = directory / f"{name}_fixture.csv"
        write_csv(ts, path, schema)
        write_manifest(directory / f"{name}_fixture.manifest.json", f"{name}_fixture", schema, FIXTURE_SPLIT)
        written.append(path)
    return written
