"""Vector fields and initial-condition maps for NODE, ANODE, SONODE and k-th order models.

Every model is integrated as a first-order system on a *phase state* whose
first ``d`` coordinates are the real (observed) state:

=========  ==================  =========================================
kind       phase state         dynamics
=========  ==================  =========================================
node       ``x``               ``x' = f(x, t)``
anode      ``[x, a]``          ``z' = f(z, t)``
sonode     ``[x, v]``          ``[v, f(x, v, t)]``
kth_order  ``[x, x', ...]``    shift blocks, last block ``f(z, t)``
=========  ==================  =========================================

The initial phase state is ``[s(X0), g(s(X0))]`` where ``s`` is an optional
state network (identity by default) and ``g`` supplies the lifted block:
augmented coordinates, initial velocity, or higher initial derivatives.
Projection back to real space is plain coordinate selection.

Batched states have shape ``(N, phase_dim)``; every network acts row-wise and
parameter gradients are summed over the batch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .linalg import ACTIVATIONS, DimensionError
from .solvers import SolverConfig, TRAINING, Trajectory, integrate_dense

KINDS = ("node", "anode", "sonode", "kth_order")


def _rows(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[None, :] if x.ndim == 1 else x


# ---------------------------------------------------------------------------
# networks


@dataclass(frozen=True)
class MlpParams:
    """Fully connected network; ``layers`` holds ``(W[out, in], b[out])`` pairs.

    With ``time_input`` the time is appended as the last input feature, so the
    first layer has one more column than :attr:`in_dim`.
    """

    layers: tuple
    hidden_activation: str = "elu"
    output_activation: str = "none"
    time_input: bool = False

    def __post_init__(self):
        layers = tuple((np.asarray(W, dtype=np.float64), np.asarray(b, dtype=np.float64))
                       for W, b in self.layers)
        if not layers:
            raise DimensionError("an MLP needs at least one layer")
        for (W, b), (W_next, _) in zip(layers, layers[1:]):
            if W_next.shape[1] != W.shape[0]:
                raise DimensionError(f"layer sizes do not chain: {W.shape} -> {W_next.shape}")
        for W, b in layers:
            if W.ndim != 2 or b.shape != (W.shape[0],):
                raise DimensionError(f"bad layer shapes {W.shape}, {b.shape}")
        if self.hidden_activation not in ACTIVATIONS or self.output_activation not in ("none", "tanh"):
            raise ValueError("unsupported activation")
        object.__setattr__(self, "layers", layers)

    @classmethod
    def init(cls, sizes: Sequence[int], rng: np.random.Generator, hidden_activation="elu",
             output_activation="none", time_input=False) -> "MlpParams":
        """Weights and biases uniform in +-1/sqrt(fan_in) (the usual dense-layer default)."""
        sizes = list(sizes)
        fan = [sizes[0] + int(time_input)] + sizes[1:-1]
        layers = []
        for fan_in, n_out in zip(fan, sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            W = rng.uniform(-bound, bound, (n_out, fan_in))
            layers.append((W, rng.uniform(-bound, bound, n_out)))
        return cls(tuple(layers), hidden_activation, output_activation, time_input)

    @classmethod
    def affine(cls, W, b=None, time_input=False) -> "MlpParams":
        W = np.atleast_2d(np.asarray(W, dtype=np.float64))
        b = np.zeros(W.shape[0]) if b is None else b
        return cls(((W, b),), "none", "none", time_input)

    @property
    def in_dim(self) -> int:
        return self.layers[0][0].shape[1] - int(self.time_input)

    @property
    def out_dim(self) -> int:
        return self.layers[-1][0].shape[0]

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in self.layers)

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in self.layers])

    def with_flat(self, theta) -> "MlpParams":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise DimensionError(f"expected {self.n_params} parameters, got {theta.shape}")
        layers, i = [], 0
        for W, b in self.layers:
            Wn = theta[i:i + W.size].reshape(W.shape)
            i += W.size
            layers.append((Wn, theta[i:i + b.size].copy()))
            i += b.size
        return replace(self, layers=tuple(layers))

    def _input(self, x, t):
        x = _rows(x)
        if x.shape[1] != self.in_dim:
            raise DimensionError(f"input width {x.shape[1]} != {self.in_dim}")
        if self.time_input:
            x = np.hstack([x, np.full((x.shape[0], 1), float(t))])
        return x

    def _act(self, i):
        last = i == len(self.layers) - 1
        return ACTIVATIONS[self.output_activation if last else self.hidden_activation]

    def forward(self, x, t: float = 0.0) -> np.ndarray:
        squeeze = np.ndim(x) == 1
        h = self._input(x, t)
        for i, (W, b) in enumerate(self.layers):
            h = self._act(i)[0](h @ W.T + b)
        return h[0] if squeeze else h

    def vjp(self, x, t: float, cotangent) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(cot @ d out/d x, cot @ d out/d theta)``; the latter summed over rows."""
        squeeze = np.ndim(x) == 1
        h = self._input(x, t)
        g = _rows(cotangent)
        if g.shape != (h.shape[0], self.out_dim):
            raise DimensionError(f"cotangent shape {g.shape} != {(h.shape[0], self.out_dim)}")
        inputs, pre = [], []
        for i, (W, b) in enumerate(self.layers):
            inputs.append(h)
            a = h @ W.T + b
            pre.append(a)
            h = self._act(i)[0](a)
        grads = []
        for i in range(len(self.layers) - 1, -1, -1):
            W, _ = self.layers[i]
            g = g * self._act(i)[1](pre[i])
            grads.append((g.T @ inputs[i], g.sum(axis=0)))
            g = g @ W
        flat = np.concatenate([np.concatenate([gW.ravel(), gb]) for gW, gb in reversed(grads)])
        gx = g[:, :self.in_dim]
        return (gx[0] if squeeze else gx), flat

    def to_json(self) -> dict:
        sizes = [self.in_dim] + [W.shape[0] for W, _ in self.layers]
        return {"type": "mlp", "sizes": sizes, "hidden_activation": self.hidden_activation,
                "output_activation": self.output_activation, "time_input": self.time_input}


def deep_mlp(n_in, n_out, rng, activation="elu", time_input=False, width=20) -> MlpParams:
    """Two hidden layers of ``width``."""
    return MlpParams.init([n_in, width, width, n_out], rng, activation, "none", time_input)


def coefficient_mlp(n_in, n_out, rng=None, time_input=False) -> MlpParams:
    """Single affine layer; zero-initialised when no generator is given."""
    if rng is None:
        return MlpParams.affine(np.zeros((n_out, n_in + int(time_input))), time_input=time_input)
    return MlpParams.init([n_in, n_out], rng, "none", "none", time_input)


_TEMPLATES = {
    "linear_osc": ("k", "c"),
    "duffing": ("a", "b", "c", "d"),
    "vdp_forced": ("mu", "k", "amp", "freq"),
}


def _affine_names(d):
    return tuple([f"Ax_{i}_{j}" for i in range(d) for j in range(d)]
                 + [f"Av_{i}_{j}" for i in range(d) for j in range(d)]
                 + [f"b_{i}" for i in range(d)])


@dataclass(frozen=True)
class ClosedForm:
    """Parametric acceleration ``f(x, v, t)`` with named, trainable coefficients.

    Templates (``x`` and ``v`` are the position and velocity blocks):

    * ``linear_osc``: ``k x + c v``
    * ``duffing``: ``a v + b x + c x^3 + d u(t)``, ``u`` given by ``forcing``
    * ``vdp_forced``: ``mu (1 - x^2) v + k x + amp cos(freq t)``
    * ``custom_affine``: ``Ax x + Av v + b`` with full ``d x d`` matrices
    """

    template: str
    coefficients: dict
    d: int = 1
    forcing: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        names = self.names
        if set(self.coefficients) != set(names):
            raise ValueError(f"{self.template} expects coefficients {names}, got {sorted(self.coefficients)}")
        if self.template == "duffing" and self.forcing is None:
            raise ValueError("duffing template needs a forcing callable")
        object.__setattr__(self, "coefficients", {k: float(self.coefficients[k]) for k in names})

    @property
    def names(self) -> tuple:
        if self.template == "custom_affine":
            return _affine_names(self.d)
        if self.template not in _TEMPLATES:
            raise ValueError(f"unknown template {self.template!r}")
        return _TEMPLATES[self.template]

    @classmethod
    def zeros(cls, template, d=1, forcing=None) -> "ClosedForm":
        names = _affine_names(d) if template == "custom_affine" else _TEMPLATES[template]
        return cls(template, dict.fromkeys(names, 0.0), d, forcing)

    @classmethod
    def damped_oscillator(cls, omega, gamma, d=1) -> "ClosedForm":
        return cls("linear_osc", {"k": -(omega ** 2 + gamma ** 2), "c": -2 * gamma}, d)

    in_dim = property(lambda self: 2 * self.d)
    out_dim = property(lambda self: self.d)
    n_params = property(lambda self: len(self.coefficients))
    time_input = property(lambda self: self.template in ("duffing", "vdp_forced"))

    def flat(self) -> np.ndarray:
        return np.array([self.coefficients[k] for k in self.names])

    def with_flat(self, theta) -> "ClosedForm":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise DimensionError(f"expected {self.n_params} coefficients, got {theta.shape}")
        return replace(self, coefficients=dict(zip(self.names, theta.tolist())))

    def _u(self, t):
        return np.asarray(self.forcing(t), dtype=np.float64)

    def forward(self, z, t: float = 0.0) -> np.ndarray:
        squeeze = np.ndim(z) == 1
        z = _rows(z)
        if z.shape[1] != self.in_dim:
            raise DimensionError(f"input width {z.shape[1]} != {self.in_dim}")
        x, v = z[:, :self.d], z[:, self.d:]
        c = self.coefficients
        if self.template == "linear_osc":
            out = c["k"] * x + c["c"] * v
        elif self.template == "duffing":
            out = c["a"] * v + c["b"] * x + c["c"] * x ** 3 + c["d"] * self._u(t)
        elif self.template == "vdp_forced":
            out = c["mu"] * (1 - x ** 2) * v + c["k"] * x + c["amp"] * np.cos(c["freq"] * t)
        else:
            Ax, Av, b = self._affine()
            out = x @ Ax.T + v @ Av.T + b
        return out[0] if squeeze else out

    def _affine(self):
        th, d = self.flat(), self.d
        return th[:d * d].reshape(d, d), th[d * d:2 * d * d].reshape(d, d), th[2 * d * d:]

    def vjp(self, z, t: float, cotangent) -> tuple[np.ndarray, np.ndarray]:
        squeeze = np.ndim(z) == 1
        z = _rows(z)
        g = _rows(cotangent)
        x, v = z[:, :self.d], z[:, self.d:]
        c = self.coefficients
        if self.template == "linear_osc":
            gz = np.hstack([c["k"] * g, c["c"] * g])
            gth = np.array([np.sum(g * x), np.sum(g * v)])
        elif self.template == "duffing":
            u = np.broadcast_to(self._u(t), x.shape)
            gz = np.hstack([(c["b"] + 3 * c["c"] * x ** 2) * g, c["a"] * g])
            gth = np.array([np.sum(g * v), np.sum(g * x), np.sum(g * x ** 3), np.sum(g * u)])
        elif self.template == "vdp_forced":
            ct = np.cos(c["freq"] * t)
            gz = np.hstack([(-2 * c["mu"] * x * v + c["k"]) * g, c["mu"] * (1 - x ** 2) * g])
            gth = np.array([np.sum(g * (1 - x ** 2) * v), np.sum(g * x), np.sum(g) * ct,
                            -np.sum(g) * c["amp"] * t * np.sin(c["freq"] * t)])
        else:
            Ax, Av, _ = self._affine()
            gz = np.hstack([g @ Ax, g @ Av])
            gth = np.concatenate([(g.T @ x).ravel(), (g.T @ v).ravel(), g.sum(axis=0)])
        return (gz[0] if squeeze else gz), gth

    def to_json(self) -> dict:
        return {"type": "closed_form", "template": self.template, "d": self.d,
                "names": list(self.names), "forcing": None if self.forcing is None else "external"}


Network = MlpParams | ClosedForm


# ---------------------------------------------------------------------------
# model specification


@dataclass(frozen=True)
class ModelSpec:
    """Model family plus all of its parameters.

    ``init_velocity`` (``g``) is an MLP of the initial real state, a fixed
    array (shared ``(lift,)`` or per-sample ``(N, lift)``), or ``None`` for a
    zero lifted block.  ``init_state`` (``s``) is an MLP or ``None`` for the
    identity.
    """

    kind: str
    d: int
    field: Network
    init_velocity: MlpParams | np.ndarray | None = None
    init_state: MlpParams | None = None
    aug_dim: int = 0
    order: int = 1
    learn_aug_init: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == "sonode" and self.order != 2:
            object.__setattr__(self, "order", 2)
        if self.kind == "kth_order" and self.order < 1:
            raise ValueError("order must be >= 1")
        if self.kind in ("node", "anode"):
            object.__setattr__(self, "order", 1)
        if self.kind != "anode" and self.aug_dim:
            raise ValueError("aug_dim only applies to anode models")
        if self.kind == "anode" and not self.learn_aug_init and self.init_velocity is not None:
            raise ValueError("anode with a(t0)=0 must not carry an initial-condition network")
        if self.kind == "node" and self.init_velocity is not None:
            raise ValueError("node models have no lifted block")
        if isinstance(self.init_velocity, (list, tuple, np.ndarray)):
            object.__setattr__(self, "init_velocity", np.asarray(self.init_velocity, dtype=np.float64))
        n_in = self.phase_dim
        if self.field.in_dim != n_in or self.field.out_dim != self.field_out_dim:
            raise DimensionError(
                f"{self.kind} field must map {n_in} -> {self.field_out_dim}, "
                f"got {self.field.in_dim} -> {self.field.out_dim}")
        g = self.init_velocity
        if isinstance(g, MlpParams) and (g.in_dim != self.d or g.out_dim != self.lift_dim):
            raise DimensionError(f"initial-condition network must map {self.d} -> {self.lift_dim}")
        if isinstance(g, np.ndarray) and g.shape[-1] != self.lift_dim:
            raise DimensionError(f"fixed initial block must have width {self.lift_dim}")
        s = self.init_state
        if s is not None and (s.in_dim != self.d or s.out_dim != self.d):
            raise DimensionError("state network must map d -> d")

    @property
    def phase_dim(self) -> int:
        if self.kind == "node":
            return self.d
        if self.kind == "anode":
            return self.d + self.aug_dim
        return self.order * self.d

    @property
    def lift_dim(self) -> int:
        return self.phase_dim - self.d

    @property
    def field_out_dim(self) -> int:
        return self.phase_dim if self.kind in ("node", "anode") else self.d

    # parameter groups --------------------------------------------------
    @property
    def theta_f(self) -> np.ndarray:
        return self.field.flat()

    @property
    def theta_g(self) -> np.ndarray:
        g = self.init_velocity
        return g.flat() if isinstance(g, MlpParams) else np.zeros(0)

    @property
    def theta_s(self) -> np.ndarray:
        return self.init_state.flat() if self.init_state is not None else np.zeros(0)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.theta_f, self.theta_g, self.theta_s])

    def sizes(self) -> tuple[int, int, int]:
        return len(self.theta_f), len(self.theta_g), len(self.theta_s)

    def with_groups(self, f=None, g=None, s=None) -> "ModelSpec":
        new = self
        if f is not None:
            new = replace(new, field=self.field.with_flat(f))
        if g is not None and len(g):
            new = replace(new, init_velocity=self.init_velocity.with_flat(g))
        if s is not None and len(s):
            new = replace(new, init_state=self.init_state.with_flat(s))
        return new

    def with_flat(self, theta) -> "ModelSpec":
        nf, ng, ns = self.sizes()
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (nf + ng + ns,):
            raise DimensionError(f"expected {nf + ng + ns} parameters, got {theta.shape}")
        return self.with_groups(theta[:nf], theta[nf:nf + ng], theta[nf + ng:])

    # dynamics ----------------------------------------------------------
    def lift(self, X0) -> np.ndarray:
        """Initial phase state ``[s(X0), g(s(X0))]`` with shape ``(N, phase_dim)``."""
        X0 = _rows(X0)
        if X0.shape[1] != self.d:
            raise DimensionError(f"initial states must have width {self.d}")
        x0 = X0 if self.init_state is None else self.init_state.forward(X0)
        g = self.init_velocity
        if self.lift_dim == 0:
            return x0.copy()
        if isinstance(g, MlpParams):
            tail = g.forward(x0)
        elif isinstance(g, np.ndarray):
            tail = np.broadcast_to(g, (x0.shape[0], self.lift_dim))
        else:
            tail = np.zeros((x0.shape[0], self.lift_dim))
        return np.hstack([x0, tail])

    def lift_vjp(self, X0, cotangent) -> tuple[np.ndarray, np.ndarray]:
        """Pull a cotangent on the initial phase state back to ``(d theta_g, d theta_s)``."""
        X0 = _rows(X0)
        cot = _rows(cotangent)
        x0 = X0 if self.init_state is None else self.init_state.forward(X0)
        cx = cot[:, :self.d].copy()
        dg = np.zeros(0)
        if isinstance(self.init_velocity, MlpParams):
            gx, dg = self.init_velocity.vjp(x0, 0.0, cot[:, self.d:])
            cx += gx
        ds = self.init_state.vjp(X0, 0.0, cx)[1] if self.init_state is not None else np.zeros(0)
        return dg, ds

    def field_eval(self, z, t: float) -> np.ndarray:
        """Phase-space vector field for a batch ``z`` of shape ``(N, phase_dim)``."""
        squeeze = np.ndim(z) == 1
        z = _rows(z)
        out = self.field.forward(z, t)
        if self.kind in ("sonode", "kth_order"):
            out = np.hstack([z[:, self.d:], out])
        return out[0] if squeeze else out

    def field_vjp(self, z, t: float, cotangent) -> tuple[np.ndarray, np.ndarray]:
        """``(c^T d field/d z, c^T d field/d theta_f)`` using one network VJP."""
        squeeze = np.ndim(z) == 1
        z = _rows(z)
        c = _rows(cotangent)
        if self.kind in ("sonode", "kth_order"):
            gz, gth = self.field.vjp(z, t, c[:, -self.d:])
            gz = gz.copy()
            gz[:, self.d:] += c[:, :-self.d]
        else:
            gz, gth = self.field.vjp(z, t, c)
        return (gz[0] if squeeze else gz), gth

    def acceleration_vjp(self, z, t, cotangent):
        """VJP of the last-block network only (``f`` of a second-order model)."""
        return self.field.vjp(_rows(z), t, _rows(cotangent))

    def solve(self, X0, times, cfg: SolverConfig = TRAINING) -> Trajectory:
        """Phase-space trajectory, ``states`` shaped ``(T, N, phase_dim)``."""
        z0 = self.lift(X0)
        n = z0.shape[0]

        def rhs(t, y):
            return self.field_eval(y.reshape(n, -1), t).ravel()

        traj = integrate_dense(rhs, z0.ravel(), times, cfg)
        return Trajectory(traj.times, traj.states.reshape(len(traj.times), n, -1), traj.nfe)


# ---------------------------------------------------------------------------
# functional surface


def mlp_forward(p: MlpParams, x, t=0.0):
    return p.forward(x, t)


def mlp_vjp(p: MlpParams, x, cotangent, t=0.0):
    return p.vjp(x, t, cotangent)


def _require(spec, *kinds):
    if spec.kind not in kinds:
        raise ValueError(f"expected a {'/'.join(kinds)} model, got {spec.kind}")


def sonode_field(spec: ModelSpec, z, t=0.0):
    _require(spec, "sonode")
    return spec.field_eval(z, t)


def anode_lift(spec: ModelSpec, X0):
    _require(spec, "anode", "node")
    return spec.lift(X0)


def anode_field(spec: ModelSpec, z, t=0.0):
    _require(spec, "anode", "node")
    return spec.field_eval(z, t)


def kth_order_field(spec: ModelSpec, z, t=0.0):
    _require(spec, "kth_order", "sonode")
    return spec.field_eval(z, t)


def forward_model(spec: ModelSpec, X0, times, cfg: SolverConfig = TRAINING) -> Trajectory:
    """Trajectory projected onto the real coordinates, states ``(T, N, d)``."""
    traj = spec.solve(X0, times, cfg)
    return Trajectory(traj.times, project(spec, traj.states), traj.nfe)


def project(spec: ModelSpec, states) -> np.ndarray:
    return np.asarray(states)[..., :spec.d]


# ---------------------------------------------------------------------------
# constructors


def make_node(d, rng, config="deep", time_input=False) -> ModelSpec:
    f = deep_mlp(d, d, rng, time_input=time_input) if config == "deep" else coefficient_mlp(d, d, rng, time_input)
    return ModelSpec("node", d, f)


def make_anode(d, aug, rng, config="deep", learn_aug_init=False, time_input=False) -> ModelSpec:
    n = d + aug
    f = deep_mlp(n, n, rng, time_input=time_input) if config == "deep" else coefficient_mlp(n, n, rng, time_input)
    g = None
    if learn_aug_init:
        g = MlpParams.init([d, 20, 20, aug], rng, "tanh") if config == "deep" else coefficient_mlp(d, aug, rng)
    return ModelSpec("anode", d, f, g, aug_dim=aug, learn_aug_init=learn_aug_init)


def make_sonode(d, rng, config="deep", velocity="learned", time_input=False) -> ModelSpec:
    """``velocity`` is ``"learned"``, ``"zero"`` or a fixed array."""
    if config == "deep":
        f = deep_mlp(2 * d, d, rng, time_input=time_input)
    else:
        f = coefficient_mlp(2 * d, d, rng, time_input)
    if isinstance(velocity, str) and velocity == "learned":
        g = MlpParams.init([d, 20, 20, d], rng, "tanh") if config == "deep" else coefficient_mlp(d, d, rng)
    elif isinstance(velocity, str) and velocity == "zero":
        g = None
    else:
        g = np.asarray(velocity, dtype=np.float64)
    return ModelSpec("sonode", d, f, g, order=2)


def make_kth_order(d, k, rng, config="deep", time_input=False) -> ModelSpec:
    if config == "deep":
        f = deep_mlp(k * d, d, rng, time_input=time_input)
        g = MlpParams.init([d, 20, 20, (k - 1) * d], rng, "tanh") if k > 1 else None
    else:
        f = coefficient_mlp(k * d, d, rng, time_input)
        g = coefficient_mlp(d, (k - 1) * d, rng) if k > 1 else None
    return ModelSpec("kth_order", d, f, g, order=k)


# ---------------------------------------------------------------------------
# checkpoints
#
# JSON layout: {"format": "nodelab-model/1", "kind", "d", "aug_dim", "order",
# "learn_aug_init", "field": <net>, "init_velocity": <net|fixed|null>,
# "init_state": <net|null>, "theta": [theta_f..., theta_g..., theta_s...]}
# with each <net> an architecture record (see ``to_json``) and
# fixed blocks stored as {"type": "fixed", "values": nested list}.


def _arch_from_json(rec, forcing=None):
    if rec is None:
        return None
    if rec["type"] == "fixed":
        return np.asarray(rec["values"], dtype=np.float64)
    if rec["type"] == "closed_form":
        return ClosedForm.zeros(rec["template"], rec["d"], forcing)
    sizes = rec["sizes"]
    layers = []
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        a = a + int(rec["time_input"]) if i == 0 else a
        layers.append((np.zeros((b, a)), np.zeros(b)))
    return MlpParams(tuple(layers), rec["hidden_activation"], rec["output_activation"], rec["time_input"])


def _arch_to_json(net):
    if net is None:
        return None
    if isinstance(net, np.ndarray):
        return {"type": "fixed", "values": net.tolist()}
    return net.to_json()


def model_to_json(spec: ModelSpec) -> dict:
    return {
        "format": "nodelab-model/1",
        "kind": spec.kind, "d": spec.d, "aug_dim": spec.aug_dim, "order": spec.order,
        "learn_aug_init": spec.learn_aug_init,
        "field": _arch_to_json(spec.field),
        "init_velocity": _arch_to_json(spec.init_velocity),
        "init_state": _arch_to_json(spec.init_state),
        "theta": spec.flat().tolist(),
    }


def model_from_json(rec: dict, forcing=None) -> ModelSpec:
    spec = ModelSpec(rec["kind"], rec["d"], _arch_from_json(rec["field"], forcing),
                     _arch_from_json(rec["init_velocity"]), _arch_from_json(rec["init_state"]),
                     rec["aug_dim"], rec["order"], rec["learn_aug_init"])
    return spec.with_flat(rec["theta"])


def save_model(spec: ModelSpec, path) -> None:
    Path(path).write_text(json.dumps(model_to_json(spec), indent=1))


def load_model(path, forcing=None) -> ModelSpec:
    return model_from_json(json.loads(Path(path).read_text()), forcing)
