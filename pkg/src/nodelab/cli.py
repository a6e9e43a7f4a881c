"""Command-line entry point.

    nodelab <gen-data|train|grad-check|analyze|reproduce> [--config FILE] [overrides]

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 IO error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, datasets, presets
from .adjoint import MemoryCapError
from .linalg import SingularMatrixError
from .models import model_to_json
from .presets import ConfigError, ExperimentConfig
from .solvers import SolverError, Trajectory
from .training import evaluate

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class RefusedError(OSError):
    pass


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        rec = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(rec, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return rec


def _overrides(args) -> dict:
    over = {}
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    if getattr(args, "repeats", None) is not None:
        over["repeats"] = args.repeats
    trainer = {}
    if getattr(args, "iters", None) is not None:
        trainer["iters"] = args.iters
    if getattr(args, "engine", None) is not None:
        trainer["engine"] = args.engine
    if trainer:
        over["trainer"] = trainer
    return over


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    out = Path(args.out) if args.out else Path(cfg.output_dir) / cfg.name
    if out.exists() and any(out.iterdir()) and not args.force:
        raise RefusedError(f"{out} is not empty; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(args) -> int:
    rec = _load_config(args.config)
    spec = dict(rec.get("dataset", {}))
    if args.generator:
        spec["generator"] = args.generator
    if args.params:
        spec["params"] = {**spec.get("params", {}), **json.loads(args.params)}
    seed = args.seed if args.seed is not None else rec.get("seed", 0)
    data = presets.build_dataset(spec, seed)
    name = args.name or rec.get("name") or spec.get("generator", "dataset")
    out = Path(args.out or rec.get("output_dir", "data"))
    path = out / f"{name}.csv"
    if path.exists() and not args.force:
        raise RefusedError(f"{path} exists; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(data, datasets.LabeledPoints):
        D = data.inputs.shape[1]
        targets = np.asarray(data.targets)
        tcols = [f"y{i}" for i in range(D)] if targets.ndim == 2 else ["label"]
        rows = [list(data.inputs[i]) + list(np.atleast_1d(targets[i])) for i in range(len(targets))]
        presets.write_rows(path, [f"x{i}" for i in range(D)] + tcols,
                           [[float(v) if k < D or targets.ndim == 2 else int(v) for k, v in enumerate(r)]
                            for r in rows])
        schema = {"input_cols": [f"x{i}" for i in range(D)], "target_cols": tcols}
    else:
        T, N, m = data.values.shape
        value_cols = [f"x{k}" if N == 1 else f"x{k}_{n}" for n in range(N) for k in range(m)]
        control_cols = [] if data.control is None else [f"u{j}" for j in range(data.control.shape[1])]
        rows = []
        for i in range(T):
            row = [float(data.times[i])] + [float(v) for v in data.values[i].ravel()]
            if data.control is not None:
                row += [float(v) for v in data.control[i]]
            rows.append(row)
        presets.write_rows(path, ["t"] + value_cols + control_cols, rows)
        schema = {"time_col": "t", "value_cols": value_cols, "control_cols": control_cols}
    datasets.write_manifest(out / f"{name}.manifest.json", name, schema, data.split)
    print(f"wrote {path} ({len(rows)} rows)")
    return EXIT_OK


def _train_config(args) -> ExperimentConfig:
    rec = _load_config(args.config)
    if args.preset:
        cfg = presets.preset_config(args.preset)
        if rec:
            cfg = cfg.merged(rec)
    elif rec:
        cfg = ExperimentConfig.from_dict(rec)
    else:
        raise ConfigError("train needs --preset or --config")
    return cfg.merged(_overrides(args))


def cmd_train(args) -> int:
    cfg = _train_config(args)
    out = _out_dir(args, cfg)
    finals = []
    for seed in cfg.seeds():
        run = presets.run_training(cfg, seed)
        run.log.write_csv(out / f"log_seed{seed}.csv")
        presets.write_json(out / f"model_seed{seed}.json", model_to_json(run.model))
        final = evaluate(run.model, run.data, cfg.train_config(seed), cfg.solver_config(), run.log.readout)
        finals.append(final)
        print(f"seed {seed}: final loss {final:.6e}")
    presets.write_json(out / "summary.json", {"name": cfg.name, "final_loss": presets.summarize(finals)})
    return EXIT_OK


def cmd_grad_check(args) -> int:
    seeds = range(args.seed or 0, (args.seed or 0) + args.cases)
    rows = presets.grad_check_family(seeds, fd=not args.no_fd)
    out = Path(args.out)
    presets.write_rows(out, presets.GRAD_CHECK_COLUMNS,
                       [[r[c] for c in presets.GRAD_CHECK_COLUMNS] for r in rows])
    worst = {}
    for r in rows:
        key = (r["engine_a"], r["engine_b"])
        worst[key] = max(worst.get(key, 0.0), r["rel_err"])
    for (a, b), e in sorted(worst.items()):
        tol = presets.engine_tolerance(a, b)
        print(f"{a:>12} vs {b:<12} max rel_err {e:.2e} (threshold {tol:.0e}) {'ok' if e <= tol else 'FAIL'}")
    return EXIT_OK


def analysis_report(out: Path | None = None) -> dict:
    """Theory checks as one JSON-able report; grid dumps go to ``out``."""
    rng = np.random.default_rng(0)
    omega, gamma = 1.0, 0.1667
    pair = analysis.damped_pair(1.2, omega, gamma)
    f_acc = analysis.damped_acceleration(omega, gamma)
    grid = rng.uniform([-2, -2, 0], [2, 2, 10], (100, 3))
    g_err = max(abs(analysis.compute_G(pair.F, f_acc, [x], [a], t)[0] - pair.G(x, a, t)[0]) for x, a, t in grid)
    times = np.linspace(0.0, 10.0, 201)
    base = pair.integrate([0.0], [0.0], times)
    real_gap, aug_gap = [], []
    for alpha in rng.uniform(-1, 1, 5):
        tr = analysis.gauge_transform(pair, analysis.GaugeSpec.build(alpha, [0.0]), f_acc).integrate(
            [0.0], [0.0], times)
        real_gap.append(float(np.max(np.abs(tr.states[:, 0] - base.states[:, 0]))))
        aug_gap.append(float(np.max(np.abs(tr.states[:, 1] - base.states[:, 1]))))
    tp = np.linspace(0.0, 1.0, 21)
    parity = analysis.crossing_check(Trajectory(tp, (1 - 2 * tp)[:, None]), Trajectory(tp, (-1 + 2 * tp)[:, None]),
                                     "real", d=1)
    report = {
        "compute_G_pair_max_abs_err": float(g_err),
        "gauge_real_max_gap": max(real_gap),
        "gauge_aug_min_gap": min(aug_gap),
        "parity_real_crossings": [c.point for c in parity],
        "homeo_counterexample": analysis.homeo_counterexample(),
        "identifiability": analysis.linear_family_identifiable((-1.01, -0.2), (-1.01, -0.2), times),
    }
    if out is not None:
        presets.write_rows(out / "pair_G_grid.csv", ["x", "a", "t", "G"],
                           [[x, a, t, float(pair.G(x, a, t)[0])] for x, a, t in grid])
        presets.write_trajectory(out / "pair_trajectory.csv", times, base.states[:, None, :], ["x", "a"])
    return report


def cmd_analyze(args) -> int:
    out = Path(args.out) if args.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    report = analysis_report(out)
    text = json.dumps(presets._plain(report), indent=1, sort_keys=True)
    if out is not None:
        (out / "analysis.json").write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_reproduce(args) -> int:
    if args.name not in presets.REPRODUCTIONS:
        raise ConfigError(f"unknown reproduction {args.name!r}; choose from {sorted(presets.REPRODUCTIONS)}")
    rec = _load_config(args.config)
    cfg = ExperimentConfig.from_dict({"name": args.name, **rec}).merged(_overrides(args))
    if args.data:
        cfg = cfg.merged({"options": {"data": args.data}})
    out = _out_dir(args, cfg)
    summary = presets.reproduce(args.name, cfg, out)
    print(json.dumps(presets._plain(summary), indent=1, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nodelab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, training=True):
        sp.add_argument("--config", help="JSON config file (flags override it)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory or file")
        sp.add_argument("--force", action="store_true", help="overwrite existing outputs")
        if training:
            sp.add_argument("--iters", type=int)
            sp.add_argument("--engine", choices=["coupled", "second_order", "backprop"])
            sp.add_argument("--repeats", type=int)

    g = sub.add_parser("gen-data", help="write a dataset CSV and manifest")
    common(g, training=False)
    g.add_argument("--generator", choices=sorted(presets.GENERATORS))
    g.add_argument("--params", help="generator parameters as a JSON object")
    g.add_argument("--name")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a preset or configured model")
    common(t)
    t.add_argument("--preset", help=f"one of {', '.join(sorted(presets.TRAIN_PRESETS))}")
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("grad-check", help="compare gradient engines on random SONODEs")
    c.add_argument("--cases", type=int, default=5)
    c.add_argument("--seed", type=int)
    c.add_argument("--no-fd", action="store_true", help="skip the finite-difference oracle")
    c.add_argument("--out", default="grad_check.csv")
    c.set_defaults(func=cmd_grad_check)

    a = sub.add_parser("analyze", help="run the functional-form and geometry checks")
    a.add_argument("--out")
    a.set_defaults(func=cmd_analyze)

    r = sub.add_parser("reproduce", help="run one named experiment end to end")
    common(r)
    r.add_argument("name", help=", ".join(presets.REPRODUCTIONS))
    r.add_argument("--data", help="measurement CSV for the silverbox preset (default: shipped fixture)")
    r.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, SingularMatrixError, FloatingPointError, MemoryCapError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
