"""Experiment configurations, training presets and figure reproductions.

Budgets (iterations, solver steps, dataset sizes) are choices made here and
are recorded in each config.  Every output is CSV or JSON with ``repr``
floats and sorted keys, so reruns with the same seed are byte-identical.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import analysis, datasets
from .adjoint import (REPORT_COLUMNS, grad_backprop_solver, grad_check_rows, grad_coupled,
                      grad_finite_diff, grad_second_order)
from .models import ClosedForm, MlpParams, ModelSpec, make_anode, make_kth_order, make_node, make_sonode, model_to_json
from .solvers import GROUND_TRUTH, SolverConfig, SolverError
from .training import MseLoss, TrainConfig, TrainLog, holdout_mse, train


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Declarative description of one experiment.

    ``model`` names a builder (``{"kind": "sonode", "config": "deep"}``),
    ``dataset`` a generator with parameters or a CSV path, ``solver`` and
    ``trainer`` hold keyword overrides for :class:`SolverConfig` and
    :class:`TrainConfig`.  ``options`` carries preset-specific knobs.
    """

    name: str
    model: dict = field(default_factory=dict)
    dataset: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    trainer: dict = field(default_factory=dict)
    repeats: int = 3
    seed: int = 0
    output_dir: str = "runs"
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")

    @classmethod
    def from_dict(cls, rec: dict) -> "ExperimentConfig":
        unknown = set(rec) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        if "name" not in rec:
            raise ConfigError("config needs a name")
        return cls(**rec)

    def merged(self, other: dict) -> "ExperimentConfig":
        """Copy with ``other``'s entries layered over this config's."""
        new = replace(self)
        for key, value in other.items():
            if key not in self.__dataclass_fields__:
                raise ConfigError(f"unknown config key {key!r}")
            if isinstance(value, dict):
                setattr(new, key, {**getattr(self, key), **value})
            else:
                setattr(new, key, value)
        return new

    def solver_config(self) -> SolverConfig:
        try:
            return SolverConfig(**self.solver)
        except TypeError as exc:
            raise ConfigError(f"bad solver config: {exc}") from None

    def train_config(self, seed: int) -> TrainConfig:
        try:
            return TrainConfig(**{**self.trainer, "seed": seed})
        except TypeError as exc:
            raise ConfigError(f"bad trainer config: {exc}") from None

    def seeds(self) -> list[int]:
        return [self.seed + r for r in range(self.repeats)]


# ---------------------------------------------------------------------------
# datasets


def _exp_sections(params, seed):
    lo, hi = params.get("sections", [[0.0, 3.0], [7.0, 10.0]])
    n = params.get("points_per_section", 10)
    times = np.concatenate([np.linspace(*lo, n), np.linspace(*hi, n)])
    return datasets.gen_exponential(times)


def _fixture(params, seed):
    path = params.get("path") or datasets.fixture_path(params.get("kind", "silverbox"))
    schema = params.get("schema") or (datasets.AIRPLANE_SCHEMA if params.get("kind") == "airplane"
                                      else datasets.SILVERBOX_SCHEMA)
    return datasets.load_csv(path, schema, tuple(params.get("split", (100, 300))))


GENERATORS = {
    "parity": lambda p, s: datasets.gen_parity(p.get("D", 1), p.get("n_train", 50), p.get("n_test", 10),
                                               p.get("seed", s), p.get("fixed", False)),
    "nested_spheres": lambda p, s: datasets.gen_nested_spheres(p.get("D", 2), p.get("n", 200),
                                                               p.get("r_inner", 0.5),
                                                               tuple(p.get("r_shell", (1.0, 1.5))),
                                                               p.get("seed", s)),
    "oscillator": lambda p, s: datasets.oscillator_experiment(p.get("n_traj", 30), p.get("seed", s),
                                                              p.get("omega", 1.0), p.get("gamma", 0.1),
                                                              p.get("t_end", 10.0), p.get("n_times", 100)),
    "sine_noise": lambda p, s: datasets.gen_sine_noise(p.get("sigma", 0.0), p.get("seed", s)),
    "two_d": lambda p, s: datasets.gen_2d_ode(np.linspace(0.0, p.get("t_end", 10.0), p.get("n_times", 51))),
    "vdp": lambda p, s: datasets.gen_vdp(n_train=p.get("n_train", 70)),
    "exponential": _exp_sections,
    "third_order": lambda p, s: datasets.gen_third_order(np.linspace(0.0, p.get("t_end", 5.0),
                                                                     p.get("n_times", 26))),
    "damped_osc": lambda p, s: datasets.gen_damped_osc(p.get("omega", 1.0), p.get("gamma", 0.1),
                                                       p.get("x0", 1.0), p.get("v0", 0.0),
                                                       np.linspace(0.0, p.get("t_end", 10.0), p.get("n_times", 100))),
    "fixture": _fixture,
}


def build_dataset(spec: dict, seed: int):
    if "csv" in spec:
        return _fixture({"path": spec["csv"], "schema": spec.get("schema"), "split": spec.get("split", (1000, 4000))},
                        seed)
    name = spec.get("generator")
    if name not in GENERATORS:
        raise ConfigError(f"unknown dataset generator {name!r}")
    return GENERATORS[name](spec.get("params", {}), seed)


# ---------------------------------------------------------------------------
# models


def _data_dim(data) -> int:
    if isinstance(data, datasets.LabeledPoints):
        return data.inputs.shape[1]
    return data.values.shape[2]


def build_model(spec: dict, data, seed: int) -> ModelSpec:
    """Instantiate a model for ``data``; ``kind`` picks the family.

    ``sonode_given_velocity`` takes the second observed channel as a fixed
    per-trajectory initial velocity; ``duffing``/``linear_osc`` are
    closed-form SONODEs started from zero coefficients.
    """
    rng = np.random.default_rng(seed)
    kind = spec.get("kind")
    config = spec.get("config", "deep")
    time_input = spec.get("time_input", False)
    d = spec.get("d") or _data_dim(data)
    if kind == "node":
        return make_node(d, rng, config, time_input)
    if kind == "anode":
        return make_anode(d, spec.get("aug", 1), rng, config, spec.get("learn_aug_init", False), time_input)
    if kind == "sonode":
        return make_sonode(d, rng, config, spec.get("velocity", "learned"), time_input)
    if kind == "sonode_given_velocity":
        return make_sonode(1, rng, config, data.values[0][:, 1:2], time_input)
    if kind == "kth_order":
        return make_kth_order(d, spec.get("order", 3), rng, config, time_input)
    if kind == "linear_osc":
        return ModelSpec("sonode", 1, ClosedForm.zeros("linear_osc"), data.values[0][:, 1:2], order=2)
    if kind == "duffing":
        u = datasets.interp_forcing(data.times, data.control)
        return ModelSpec("sonode", 1, ClosedForm.zeros("duffing", forcing=u), None, order=2)
    raise ConfigError(f"unknown model kind {kind!r}")


# ---------------------------------------------------------------------------
# training presets

TRAIN_PRESETS: dict[str, dict] = {}


def _preset(name, dataset, model, trainer, solver, **options):
    TRAIN_PRESETS[name] = {"name": name, "dataset": dataset, "model": model, "trainer": trainer,
                           "solver": solver, "options": options}


_RK4 = {"method": "rk4"}
for _kind, _model in (("node", {"kind": "node"}), ("anode", {"kind": "anode", "aug": 1}),
                      ("sonode", {"kind": "sonode"})):
    _preset(f"parity1d-{_kind}", {"generator": "parity", "params": {"D": 1, "fixed": True}}, _model,
            {"iters": 2000}, {**_RK4, "h_init": 0.1})
    _preset(f"spheres-{_kind}", {"generator": "nested_spheres", "params": {"n": 200, "seed": 0}}, _model,
            {"iters": 500, "loss": "cross_entropy_endpoint"}, {**_RK4, "h_init": 0.1})
    _preset(f"sine-{_kind}", {"generator": "sine_noise", "params": {"sigma": 0.5}}, _model,
            {"iters": 500}, {**_RK4, "h_init": 0.25})
    _preset(f"exponential-{_kind}", {"generator": "exponential"}, _model, {"iters": 300}, {**_RK4, "h_init": 0.2})

_preset("osc-node", {"generator": "oscillator", "params": {"seed": 0}}, {"kind": "node"},
        {"iters": 300, "loss": "mse_state_and_velocity"}, {**_RK4, "h_init": 0.125})
_preset("osc-anode", {"generator": "oscillator", "params": {"seed": 0}}, {"kind": "anode", "aug": 1},
        {"iters": 300, "loss": "mse_state_and_velocity"}, {**_RK4, "h_init": 0.125})
_preset("osc-sonode", {"generator": "oscillator", "params": {"seed": 0}}, {"kind": "sonode_given_velocity"},
        {"iters": 300, "loss": "mse_state_and_velocity"}, {**_RK4, "h_init": 0.125})
_preset("coef-osc", {"generator": "oscillator", "params": {"seed": 0, "t_end": 3.0, "n_times": 31}},
        {"kind": "linear_osc"}, {"iters": 600, "loss": "mse_state_and_velocity"}, {**_RK4, "h_init": 0.1})
_preset("coef-duffing", {"generator": "fixture", "params": {"kind": "silverbox"}}, {"kind": "duffing"},
        {"iters": 400}, {**_RK4, "h_init": 0.1}, curriculum=[15, 30, 60])
_preset("twod-anode1", {"generator": "two_d"}, {"kind": "anode", "aug": 1}, {"iters": 1000}, {**_RK4, "h_init": 0.2})
_preset("twod-anode2", {"generator": "two_d"}, {"kind": "anode", "aug": 2}, {"iters": 1000}, {**_RK4, "h_init": 0.2})
_preset("twod-sonode", {"generator": "two_d"}, {"kind": "sonode"}, {"iters": 1000}, {**_RK4, "h_init": 0.2})
_preset("tonode", {"generator": "third_order"}, {"kind": "kth_order", "order": 3}, {"iters": 300},
        {**_RK4, "h_init": 0.2})
_preset("vdp-anode", {"generator": "vdp"}, {"kind": "anode", "aug": 1, "config": "linear", "learn_aug_init": True,
                                            "time_input": True}, {"iters": 300}, {**_RK4, "h_init": 0.1})
_preset("vdp-sonode", {"generator": "vdp"}, {"kind": "sonode", "config": "linear", "time_input": True},
        {"iters": 300}, {**_RK4, "h_init": 0.1})


def preset_config(name: str, **overrides) -> ExperimentConfig:
    if name not in TRAIN_PRESETS:
        raise ConfigError(f"unknown preset {name!r}")
    cfg = ExperimentConfig.from_dict({k: v for k, v in TRAIN_PRESETS[name].items()})
    return cfg.merged(overrides) if overrides else cfg


@dataclass
class RunResult:
    seed: int
    model: ModelSpec
    init_model: ModelSpec
    log: TrainLog
    data: object


def run_training(cfg: ExperimentConfig, seed: int, until=None) -> RunResult:
    """One seeded training run.  A ``curriculum`` option trains on growing prefixes."""
    data = build_dataset(cfg.dataset, seed)
    model = build_model(cfg.model, data, seed)
    init = model
    tcfg = cfg.train_config(seed)
    solver = cfg.solver_config()
    windows = cfg.options.get("curriculum")
    if windows:
        log = TrainLog()
        full_split = data.split
        for w in windows:
            data.split = (min(w, len(data.times)), 0)
            model, part = train(model, data, tcfg, solver, until=until)
            offset = len(log.rows)
            log.rows += [{**r, "iter": r["iter"] + offset} for r in part.rows]
        data.split = full_split
    else:
        model, log = train(model, data, tcfg, solver, until=until)
    return RunResult(seed, model, init, log, data)


def run_repeats(cfg: ExperimentConfig, until=None) -> list[RunResult]:
    return [run_training(cfg, s, until) for s in cfg.seeds()]


# ---------------------------------------------------------------------------
# output helpers


def write_rows(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(obj), indent=1, sort_keys=True) + "\n")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def write_trajectory(path, times, states, labels) -> None:
    """``states`` shaped ``(T, N, P)``; one column per (trajectory, coordinate)."""
    T, N, P = states.shape
    header = ["t"] + [f"{labels[k]}_{n}" for n in range(N) for k in range(P)]
    rows = [[float(times[i])] + [float(v) for v in states[i].ravel()] for i in range(T)]
    write_rows(path, header, rows)


def summarize(values) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    return {"mean": float(arr.mean()), "std": float(arr.std()), "values": arr.tolist()}


def save_run(out: Path, tag: str, run: RunResult) -> None:
    run.log.write_csv(out / f"{tag}_seed{run.seed}_log.csv")
    write_json(out / f"{tag}_seed{run.seed}_model.json", model_to_json(run.model))


def state_labels(model: ModelSpec) -> list[str]:
    d = model.d
    if model.kind == "anode":
        return [f"x{i}" for i in range(d)] + [f"a{i}" for i in range(model.aug_dim)]
    if model.kind == "node":
        return [f"x{i}" for i in range(d)]
    names = []
    for k in range(model.order):
        names += [f"x{i}" + "'" * k for i in range(d)]
    return names


# ---------------------------------------------------------------------------
# reproductions


def _endpoint_losses(runs):
    return [float(r.log.losses[-1]) if r.log.rows else float("nan") for r in runs]


def fig1_parity(cfg: ExperimentConfig, out: Path | None) -> dict:
    """NODE, ANODE(1) and SONODE on the two-point parity problem."""
    summary = {}
    dense = np.linspace(0.0, 1.0, 21)
    for kind in ("node", "anode", "sonode"):
        pc = preset_config(f"parity1d-{kind}").merged(_common(cfg))
        runs = run_repeats(pc)
        summary[kind] = summarize(_endpoint_losses(runs))
        if out is not None:
            for r in runs:
                save_run(out, kind, r)
            first = runs[0]
            traj = first.model.solve(first.data.inputs, dense, pc.solver_config())
            write_trajectory(out / f"trajectories_{kind}.csv", dense, traj.states, state_labels(first.model))
    return summary


def fig2_parity_dims(cfg: ExperimentConfig, out: Path | None) -> dict:
    """Final training loss of each model family against the parity dimension."""
    dims = cfg.options.get("dims", [1, 2, 3, 4])
    rows, summary = [], {}
    for D in dims:
        for kind in ("node", "anode", "sonode"):
            pc = preset_config(f"parity1d-{kind}").merged(_common(cfg)).merged(
                {"dataset": {"generator": "parity", "params": {"D": D}}})
            if "iters" not in cfg.trainer:
                pc = pc.merged({"trainer": {"iters": 200}})
            losses = _endpoint_losses(run_repeats(pc))
            s = summarize(losses)
            summary[f"{kind}_D{D}"] = s
            rows.append([D, kind, s["mean"], s["std"]])
    if out is not None:
        write_rows(out / "loss_vs_dim.csv", ["D", "model", "loss_mean", "loss_std"], rows)
    return summary


def fig3_twofunc(cfg: ExperimentConfig, out: Path | None) -> dict:
    """One ANODE(1) with shared parameters on two and on three functions."""
    iters = cfg.trainer.get("iters", 1000)
    summary = {}
    for n in (2, 3):
        rep = analysis.anode_multifunc_fit(n, iters=iters, seed=cfg.seed)
        summary[f"{n}_functions"] = {"mse": rep["mse"], "final_loss": rep["final_loss"]}
        if out is not None:
            series = analysis.multifunc_series(n)
            write_trajectory(out / f"anode_{n}func.csv", series.times, rep["states"], ["x", "a"])
    return summary


def fig4_minaug(cfg: ExperimentConfig, out: Path | None) -> dict:
    """ANODE(1) learning the 2-D second-order system."""
    pc = preset_config("twod-anode1").merged(_common(cfg))
    runs = run_repeats(pc)
    summary = {"anode1": summarize(_endpoint_losses(runs))}
    if out is not None:
        for r in runs:
            save_run(out, "anode1", r)
        first = runs[0]
        traj = first.model.solve(first.data.values[0], first.data.times, pc.solver_config())
        write_trajectory(out / "trajectory_anode1.csv", first.data.times, traj.states, state_labels(first.model))
        write_trajectory(out / "truth.csv", first.data.times, first.data.values, ["x", "y"])
    return summary


def fig5_interp(cfg: ExperimentConfig, out: Path | None) -> dict:
    """Interpretability metrics of SONODE and ANODE(2) on the 2-D system."""
    truth = datasets.gen_2d_ode(np.linspace(0.0, 10.0, 51))
    summary, rows = {}, []
    for kind in ("sonode", "anode2"):
        pc = preset_config(f"twod-{kind}").merged(_common(cfg))
        for r in run_repeats(pc):
            m = analysis.interpretability_metrics(r.model, truth)
            summary[f"{kind}_seed{r.seed}"] = m
            rows.append([kind, r.seed] + [m[k] for k in sorted(m)])
            if out is not None:
                save_run(out, kind, r)
    if out is not None:
        keys = sorted(analysis.interpretability_metrics(analysis.planted_two_d_sonode(), truth))
        write_rows(out / "metrics.csv", ["model", "seed"] + keys, rows)
    return summary


def fig6_osc(cfg: ExperimentConfig, out: Path | None, threshold: float = 1e-2) -> dict:
    """Loss curves and iterations-to-threshold on the 30-trajectory oscillator."""
    summary, rows = {}, []
    for kind in ("node", "anode", "sonode"):
        pc = preset_config(f"osc-{kind}").merged(_common(cfg))
        for r in run_repeats(pc):
            hit = r.log.first_below(threshold)
            rows.append([kind, r.seed, -1 if hit is None else hit, float(r.log.losses[-1])])
            summary[f"{kind}_seed{r.seed}"] = hit
            if out is not None:
                save_run(out, kind, r)
    if out is not None:
        write_rows(out / "iterations_to_threshold.csv", ["model", "seed", "iters_to_1e-2", "final_loss"], rows)
    return summary


def fig7_noise(cfg: ExperimentConfig, out: Path | None) -> dict:
    """Test MSE of SONODE and ANODE(1) across noise levels."""
    sigmas = cfg.options.get("sigmas", [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7])
    summary, rows = {}, []
    for sigma in sigmas:
        for kind in ("sonode", "anode"):
            pc = preset_config(f"sine-{kind}").merged(_common(cfg)).merged(
                {"dataset": {"generator": "sine_noise", "params": {"sigma": sigma}}})
            errs = []
            for r in run_repeats(pc):
                errs.append(holdout_mse(r.model, r.data, pc.solver_config()))
            s = summarize(errs)
            summary[f"{kind}_sigma{sigma}"] = s
            rows.append([sigma, kind, s["mean"], s["std"]])
    if out is not None:
        write_rows(out / "test_mse_vs_sigma.csv", ["sigma", "model", "test_mse_mean", "test_mse_std"], rows)
    return summary


def fig8_silverbox(cfg: ExperimentConfig, out: Path | None) -> dict:
    """Closed-form Duffing SONODE on the measurement CSV (shipped fixture by default)."""
    pc = preset_config("coef-duffing").merged(_common(cfg))
    label = "fixture"
    if cfg.options.get("data"):
        label = "data"
        pc = pc.merged({"dataset": {"generator": "fixture", "params": {"path": cfg.options["data"],
                                                                       "split": cfg.options.get("split",
                                                                                                (1000, 4000))}}})
    runs = run_repeats(pc)
    summary = {"label": label}
    rows = []
    for r in runs:
        coeffs = r.model.field.coefficients
        summary[f"seed{r.seed}"] = coeffs
        rows.append([r.seed] + [coeffs[k] for k in ("a", "b", "c", "d")])
        if out is not None:
            save_run(out, f"{label}_duffing", r)
    if out is not None:
        write_rows(out / f"{label}_coefficients.csv", ["seed", "a", "b", "c", "d"], rows)
        first = runs[0]
        data = first.data
        n = sum(data.split)
        try:
            traj = first.model.solve(data.values[0][:, :1], data.times[:n], pc.solver_config())
        except SolverError:
            # an under-trained cubic coefficient can blow up over the long horizon
            summary["prediction"] = "diverged"
        else:
            write_rows(out / f"{label}_prediction.csv", ["t", "observed", "predicted"],
                       [[data.times[i], data.values[i, 0, 0], traj.states[i, 0, 0]] for i in range(n)])
    return summary


def vdp(cfg: ExperimentConfig, out: Path | None) -> dict:
    """Linear ANODE(1) and SONODE trained on the first 70 samples of the forced oscillator."""
    summary, rows = {}, []
    for kind in ("anode", "sonode"):
        pc = preset_config(f"vdp-{kind}").merged(_common(cfg))
        for r in run_repeats(pc):
            solver = pc.solver_config()
            tr = float(r.log.losses[-1])
            te = holdout_mse(r.model, r.data, solver)
            summary[f"{kind}_seed{r.seed}"] = {"train_loss": tr, "test_mse": te}
            rows.append([kind, r.seed, tr, te])
            if out is not None:
                save_run(out, kind, r)
    if out is not None:
        write_rows(out / "vdp_errors.csv", ["model", "seed", "train_loss", "test_mse"], rows)
    return summary


def exponential(cfg: ExperimentConfig, out: Path | None) -> dict:
    """All three families interpolating an exponential between two observed sections."""
    dense = np.linspace(0.0, 10.0, 101)
    truth = np.exp(datasets.EXP_RATE * dense)
    summary = {}
    for kind in ("node", "anode", "sonode"):
        pc = preset_config(f"exponential-{kind}").merged(_common(cfg))
        errs = []
        for r in run_repeats(pc):
            traj = r.model.solve(r.data.values[0][:, :1], dense, pc.solver_config())
            errs.append(float(np.mean((traj.states[:, 0, 0] - truth) ** 2)))
            if out is not None:
                save_run(out, kind, r)
                write_trajectory(out / f"{kind}_seed{r.seed}_dense.csv", dense, traj.states,
                                 state_labels(r.model))
        summary[kind] = summarize(errs)
    return summary


def tonode(cfg: ExperimentConfig, out: Path | None) -> dict:
    """Third-order model on a synthetic third-order linear series."""
    pc = preset_config("tonode").merged(_common(cfg))
    runs = run_repeats(pc)
    if out is not None:
        for r in runs:
            save_run(out, "tonode", r)
    return {"tonode": summarize(_endpoint_losses(runs))}


def _common(cfg: ExperimentConfig) -> dict:
    """Overrides that flow from a reproduction config into its training presets."""
    over = {"repeats": cfg.repeats, "seed": cfg.seed}
    trainer = {k: v for k, v in cfg.trainer.items() if k in ("iters", "engine")}
    if trainer:
        over["trainer"] = trainer
    return over


REPRODUCTIONS = {
    "fig1-parity": fig1_parity,
    "fig2-parity-dims": fig2_parity_dims,
    "fig3-twofunc": fig3_twofunc,
    "fig4-minaug": fig4_minaug,
    "fig5-interp": fig5_interp,
    "fig6-osc": fig6_osc,
    "fig7-noise": fig7_noise,
    "fig8-silverbox-fixture": fig8_silverbox,
    "vdp": vdp,
    "exponential": exponential,
    "tonode": tonode,
}


def reproduce(name: str, cfg: ExperimentConfig | None = None, out: Path | None = None) -> dict:
    if name not in REPRODUCTIONS:
        raise ConfigError(f"unknown reproduction {name!r}")
    cfg = cfg or ExperimentConfig(name)
    summary = REPRODUCTIONS[name](cfg, out)
    if out is not None:
        write_json(out / "summary.json", {"name": name, "seed": cfg.seed, "repeats": cfg.repeats,
                                          "results": summary})
    return summary


# ---------------------------------------------------------------------------
# gradient check over a family of random SONODEs


def random_sonode_case(seed: int, max_width: int = 16):
    """A random SONODE (``d`` in 1..3) with data and an MSE loss on both coordinates."""
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 4))
    width = int(rng.integers(4, max_width + 1))
    f = MlpParams.init([2 * d, width, d], rng, "elu", time_input=bool(rng.integers(0, 2)))
    g = MlpParams.init([d, width, d], rng, "tanh")
    s = MlpParams.init([d, d], rng, "tanh") if rng.integers(0, 2) else None
    model = ModelSpec("sonode", d, f, g, s, order=2)
    n = int(rng.integers(1, 4))
    X0 = rng.uniform(-1, 1, (n, d))
    times = np.concatenate([[0.0], np.sort(rng.uniform(0.1, 1.0, int(rng.integers(1, 4))))])
    target = rng.normal(size=(len(times), n, 2 * d))
    return model, X0, times, MseLoss(target)


def grad_check_family(seeds, engines=("coupled", "second_order", "backprop"), fd: bool = True,
                      cfg: SolverConfig = GROUND_TRUTH, backprop_steps: int = 200) -> list[dict]:
    """Pairwise engine comparison rows (with ``case`` and ``d`` columns) for every seed."""
    out = []
    for seed in seeds:
        model, X0, times, loss = random_sonode_case(seed)
        results = {}
        for name in engines:
            if name == "coupled":
                results[name] = grad_coupled(model, X0, times, loss, cfg)
            elif name == "second_order":
                results[name] = grad_second_order(model, X0, times, loss, cfg)
            elif name == "backprop":
                results[name] = grad_backprop_solver(model, X0, times, loss, backprop_steps)
        if fd:
            results["finite_diff"] = grad_finite_diff(model, X0, times, loss, cfg=cfg)
        for row in grad_check_rows(results):
            out.append({"case": seed, "d": model.d, **row})
    return out


GRAD_CHECK_COLUMNS = ["case", "d"] + REPORT_COLUMNS


def engine_tolerance(a: str, b: str) -> float:
    """Agreement threshold for an engine pair: adjoint pairs 1e-4, anything involving FD or backprop 1e-3."""
    return 1e-4 if {a, b} == {"coupled", "second_order"} else 1e-3
