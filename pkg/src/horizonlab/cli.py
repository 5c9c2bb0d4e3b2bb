"""Command-line entry point: ``horizonlab <subcommand> ...``.

Subcommands: simulate, ingest, train, curriculum, sweep, probe, schedule,
lyapunov.  Experiments read a JSON config (see ``DEFAULTS`` for every key);
command-line flags override it.  Each run writes its CSV results plus a
``manifest.json`` echoing the resolved config, which can be passed back as
``--config`` to reproduce the run.

Exit codes: 0 ok, 2 usage/config error, 3 numeric divergence, 4 ingestion
error.  ``HORIZONLAB_THREADS`` caps sweep workers (0 = auto).
"""

from __future__ import annotations

import argparse
import copy
import importlib
import json
import logging
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, dynamics, landscape
from .arloss import evaluate_horizons, mechanistic_loss
from .errors import BasinMismatchError, ConfigError, IndeterminateRatioError, IngestionError, NumericError
from .net import MlpConfig, ParamVector
from .optimize import (
    Budget,
    SweepBase,
    SweepGrid,
    TrainConfig,
    curriculum_train,
    split_trajectory,
    sweep,
    train,
)
from .scheduler import SchedulerConfig, run_scheduler
from .storage import read_trajectory, write_json, write_table, write_trajectory

log = logging.getLogger("horizonlab")

EXIT_OK, EXIT_USAGE, EXIT_DIVERGENCE, EXIT_INGESTION = 0, 2, 3, 4

DEFAULTS = {
    "seed": 0,
    "data": {
        "system": "limit_cycle",
        "params": None,
        "dt": None,
        "n_samples": 1000,
        "method": "dopri5",
        "noise_sigma": 0.0,
        "normalize": True,
        "path": None,
        "plugin": None,
        "dim": None,
        "hopf_normal_form": True,
        "printed_trophic_sign": False,
    },
    "model": {
        "width_factor": 4,
        "n_blocks": 2,
        "residual": True,
        "activation": "relu",
        "softplus_beta": 1.0,
        "ln_epsilon": 1e-5,
    },
    "train": {
        "T": 1,
        "optimizer": "adam",
        "eta": 1e-3,
        "batch_size": 512,
        "budget": "epochs:100",
        "gamma": 1.5e-4,
        "val_fraction": 0.2,
        "norm_mode": "squared",
        "val_horizon": None,
        "clip_norm": None,
        "eval_horizons": [1, 5, 10],
    },
    "curriculum": {"T_max": 5},
    "sweep": {"T": [1, 2], "eta": [1e-3], "sigma": [0.0], "size": [[4, 2]], "workers": None},
    "schedule": {
        "eta0": 1e-3,
        "gamma": 1.5e-4,
        "lookahead_epochs": 20,
        "wall_limit": 60.0,
        "trend_fit": "exponential",
        "improve_delta": 1e-3,
        "eta_min": 1e-8,
        "min_shrink": 2.0,
        "T_cap": 32,
        "val_horizon": 1,
    },
    "probe": {
        "kind": "grad_ratio",
        "T_list": [1, 2, 4, 8],
        "T_l": 1,
        "n_probes": 100,
        "fd_step": 1e-4,
        "n_points": None,
        "flat_tol": 1e-9,
        "delta_pair": 0.05,
        "refine": True,
        "epsilon": 0.1,
        "n_directions": 8,
        "n_states": 20,
        "dims": [0],
        "ranges": [[5.0, 15.0]],
        "n_per_dim": 101,
        "scan_T": 10,
        "integrator": "rk4",
    },
    "lyapunov": {"n_steps": 5000, "discard": 500, "method": "rk4"},
}

PROBE_KINDS = ("grad_ratio", "roughness", "hessian_ratio", "gen_ratio", "eps_check", "scan")

_NUM = {"type": "number"}
_OPT_NUM = {"type": ["number", "null"]}
_INT = {"type": "integer"}
_OPT_INT = {"type": ["integer", "null"]}
_BOOL = {"type": "boolean"}
_INT_LIST = {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1}
_NUM_LIST = {"type": "array", "items": _NUM, "minItems": 1}


def _section(props: dict) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False}


SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "data": _section(
            {
                "system": {"enum": list(dynamics.KINDS)},
                "params": {"type": ["array", "null"], "items": _NUM},
                "dt": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "n_samples": {"type": "integer", "minimum": 2},
                "method": {"enum": ["rk4", "dopri5"]},
                "noise_sigma": {"type": "number", "minimum": 0},
                "normalize": _BOOL,
                "path": {"type": ["string", "null"]},
                "plugin": {"type": ["string", "null"]},
                "dim": _OPT_INT,
                "hopf_normal_form": _BOOL,
                "printed_trophic_sign": _BOOL,
            }
        ),
        "model": _section(
            {
                "width_factor": {"type": "integer", "minimum": 1},
                "n_blocks": {"type": "integer", "minimum": 0},
                "residual": _BOOL,
                "activation": {"enum": ["relu", "softplus"]},
                "softplus_beta": {"type": "number", "exclusiveMinimum": 0},
                "ln_epsilon": {"type": "number", "exclusiveMinimum": 0},
            }
        ),
        "train": _section(
            {
                "T": {"type": "integer", "minimum": 1},
                "optimizer": {"enum": ["sgd", "adam"]},
                "eta": {"type": "number", "minimum": 0},
                "batch_size": {"type": "integer", "minimum": 1},
                "budget": {"type": "string", "pattern": "^(epochs|wall):"},
                "gamma": {"type": "number", "minimum": 0},
                "val_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "norm_mode": {"enum": ["euclidean", "squared"]},
                "val_horizon": _OPT_INT,
                "clip_norm": _OPT_NUM,
                "eval_horizons": _INT_LIST,
            }
        ),
        "curriculum": _section({"T_max": {"type": "integer", "minimum": 1}}),
        "sweep": _section(
            {
                "T": _INT_LIST,
                "eta": _NUM_LIST,
                "sigma": _NUM_LIST,
                "size": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"type": "array", "items": _INT, "minItems": 2, "maxItems": 2},
                },
                "workers": _OPT_INT,
            }
        ),
        "schedule": _section(
            {
                "eta0": _NUM,
                "gamma": _NUM,
                "lookahead_epochs": _INT,
                "wall_limit": _NUM,
                "trend_fit": {"enum": ["exponential", "linear"]},
                "improve_delta": _NUM,
                "eta_min": _NUM,
                "min_shrink": _NUM,
                "T_cap": _INT,
                "val_horizon": {"type": "integer", "minimum": 1},
            }
        ),
        "probe": _section(
            {
                "kind": {"enum": list(PROBE_KINDS)},
                "T_list": _INT_LIST,
                "T_l": {"type": "integer", "minimum": 1},
                "n_probes": {"type": "integer", "minimum": 1},
                "fd_step": _NUM,
                "n_points": _OPT_INT,
                "flat_tol": _NUM,
                "delta_pair": _NUM,
                "refine": _BOOL,
                "epsilon": _NUM,
                "n_directions": {"type": "integer", "minimum": 1},
                "n_states": {"type": "integer", "minimum": 1},
                "dims": {"type": "array", "items": _INT, "minItems": 1, "maxItems": 2},
                "ranges": {"type": "array", "items": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}},
                "n_per_dim": {"type": "integer", "minimum": 3},
                "scan_T": {"type": "integer", "minimum": 1},
                "integrator": {"enum": ["rk4", "dopri5"]},
            }
        ),
        "lyapunov": _section(
            {
                "n_steps": {"type": "integer", "minimum": 1},
                "discard": {"type": "integer", "minimum": 0},
                "method": {"enum": ["rk4", "dopri5"]},
            }
        ),
    },
}


# ---------------------------------------------------------------------------
# config handling


def validate_config(cfg: dict) -> None:
    """Check ``cfg`` against the schema, naming every offending key.

    Raises:
        ConfigError: unknown keys or values of the wrong type/range.
    """
    problems = []
    for err in jsonschema.Draft202012Validator(SCHEMA).iter_errors(cfg):
        where = ".".join(str(p) for p in err.absolute_path)
        if err.validator == "additionalProperties":
            allowed = set(err.schema.get("properties", {}))
            for key in sorted(set(err.instance) - allowed):
                problems.append(f"{where + '.' if where else ''}{key}: unknown key")
        else:
            problems.append(f"{where or '<root>'}: {err.message}")
    if problems:
        raise ConfigError("invalid config: " + "; ".join(sorted(problems)))


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path) -> dict:
    """Read a config (or a previous run's manifest) and fill in defaults."""
    user = {}
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if isinstance(user, dict) and "tool" in user and "config" in user:
            user = user["config"]  # a manifest from an earlier run
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
    validate_config(user)
    return _merge(DEFAULTS, user)


def _set(cfg: dict, dotted: str, value) -> None:
    if value is None:
        return
    *head, last = dotted.split(".")
    node = cfg
    for key in head:
        node = node[key]
    node[last] = value


def _load_plugin(ref: str):
    module, sep, attr = ref.partition(":")
    if not sep or not module or not attr:
        raise ConfigError(f"plugin must look like 'module:function', got {ref!r}")
    try:
        return getattr(importlib.import_module(module), attr)
    except (ImportError, AttributeError) as exc:
        raise ConfigError(f"cannot load plugin {ref!r}: {exc}") from exc


def system_from_config(data: dict) -> dynamics.SystemSpec:
    if data["system"] == "external":
        if not data["plugin"] or not data["dim"]:
            raise ConfigError("system 'external' needs data.plugin ('module:function') and data.dim")
        return dynamics.external_system(
            _load_plugin(data["plugin"]), int(data["dim"]), data["params"] or (), data["dt"] or 0.1
        )
    flags = {}
    if data["system"] == "limit_cycle":
        flags["hopf_normal_form"] = data["hopf_normal_form"]
    if data["system"] == "food_web":
        flags["printed_trophic_sign"] = data["printed_trophic_sign"]
    try:
        return dynamics.make_system(data["system"], data["params"], data["dt"], **flags)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def data_from_config(cfg: dict) -> dynamics.Trajectory:
    """Load ``data.path`` or simulate ``data.system``; noise then z-scoring as configured."""
    data = cfg["data"]
    if data["path"]:
        traj = read_trajectory(data["path"])
    else:
        spec = system_from_config(data)
        traj = dynamics.simulate(spec, data["n_samples"], seed=cfg["seed"], dt=data["dt"], method=data["method"])
        traj = dynamics.add_observation_noise(traj, data["noise_sigma"], cfg["seed"])
    if data["normalize"] and traj.normalization is None:
        traj = dynamics.normalize(traj)
    return traj


def model_from_config(cfg: dict, dim: int) -> MlpConfig:
    return MlpConfig(input_dim=dim, seed=cfg["seed"], **cfg["model"])


def train_config_from(cfg: dict) -> TrainConfig:
    t = dict(cfg["train"])
    for key in ("T", "eval_horizons"):
        t.pop(key)
    try:
        return TrainConfig(seed=cfg["seed"], **{**t, "budget": Budget.parse(t["budget"])})
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# outputs


def write_manifest(out: Path, command: str, cfg: dict, status: str = "ok", **extra) -> None:
    manifest = {"tool": "horizonlab", "version": __version__, "command": command, "config": cfg, "status": status}
    manifest.update(extra)
    write_json(out / "manifest.json", manifest)


def save_checkpoint(out: Path, model: MlpConfig, params: ParamVector, traj: dynamics.Trajectory) -> None:
    """``params.bin``/``params.json`` + ``model.json`` + the training data, all in ``out``."""
    params.save(out / "params")
    write_json(out / "model.json", model.__dict__)
    write_trajectory(traj, out / "data.csv")


def load_checkpoint(path) -> tuple:
    path = Path(path)
    try:
        model = MlpConfig(**json.loads((path / "model.json").read_text()))
        params = ParamVector.load(path / "params")
    except (OSError, TypeError, ValueError) as exc:
        raise ConfigError(f"cannot load checkpoint {path}: {exc}") from exc
    return model, params, read_trajectory(path / "data.csv")


def _write_train_curves(out: Path, report, prefix: str = "") -> None:
    write_table(
        out / f"{prefix}loss_curve.csv",
        ("step", "loss", "grad_norm"),
        [(k + 1, float(l), float(g)) for k, (l, g) in enumerate(zip(report.loss_curve, report.grad_norm_curve))],
    )
    write_table(out / f"{prefix}val_curve.csv", ("epoch", "val_loss"), [(k, float(v)) for k, v in enumerate(report.val_curve)])


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    data = dict(DEFAULTS["data"])
    data.update(system=args.system, dt=args.dt, method=args.method, plugin=args.plugin, dim=args.dim)
    if args.params is not None:
        data["params"] = [float(v) for v in args.params.split(",")]
    spec = system_from_config(data)
    traj = dynamics.simulate(spec, args.steps, seed=args.seed, dt=args.dt, method=args.method)
    traj = dynamics.add_observation_noise(traj, args.noise, args.seed)
    write_trajectory(traj, args.out)
    return EXIT_OK


def cmd_ingest(args) -> int:
    traj = read_trajectory(args.input)
    if args.normalize:
        traj = dynamics.normalize(traj)
    write_trajectory(traj, args.out)
    return EXIT_OK


def cmd_train(args, cfg: dict, out: Path) -> dict:
    traj = data_from_config(cfg)
    model = model_from_config(cfg, traj.dim)
    report = train(model, traj, cfg["train"]["T"], train_config_from(cfg))
    _write_train_curves(out, report)
    save_checkpoint(out, model, report.best_params, traj)
    val = split_trajectory(traj, cfg["train"]["val_fraction"])[1]
    horizons = [h for h in cfg["train"]["eval_horizons"] if h < val.M]
    scores = evaluate_horizons(model, report.best_params, val, horizons) if horizons else {}
    write_table(out / "eval.csv", ("horizon", "mse"), [(h, scores[h]) for h in horizons])
    return {"stop_reason": report.stop_reason, "steps": report.steps, "best_val_loss": report.best_val_loss}


def cmd_curriculum(args, cfg: dict, out: Path) -> dict:
    traj = data_from_config(cfg)
    model = model_from_config(cfg, traj.dim)
    tcfg = train_config_from(cfg)
    reports = curriculum_train(model, traj, cfg["curriculum"]["T_max"], tcfg.budget, tcfg)
    for r in reports:
        _write_train_curves(out, r, prefix=f"T{r.T}_")
    write_table(
        out / "curriculum.csv",
        ("T", "best_val_loss", "stop_reason", "steps"),
        [(r.T, r.best_val_loss, r.stop_reason, r.steps) for r in reports],
    )
    save_checkpoint(out, model, reports[-1].final_params, traj)
    diverged = reports[-1].stop_reason == "divergence"
    return {"phases": len(reports), "status": "partial" if diverged else "ok"}


def cmd_sweep(args, cfg: dict, out: Path) -> dict:
    if cfg["data"]["path"]:
        raise ConfigError("sweep regenerates data per noise level; data.path is not supported")
    s = cfg["sweep"]
    grid = SweepGrid(tuple(s["T"]), tuple(s["eta"]), tuple(s["sigma"]), tuple(tuple(v) for v in s["size"]))
    spec = system_from_config(cfg["data"])
    base = SweepBase(
        spec=spec,
        model=model_from_config(cfg, spec.dim),
        train=train_config_from(cfg),
        n_samples=cfg["data"]["n_samples"],
        dt=cfg["data"]["dt"],
        seed=cfg["seed"],
        data_method=cfg["data"]["method"],
    )
    rows = sweep(grid, base, workers=s["workers"], out_csv=out / "sweep.csv")
    failed = [r for r in rows if str(r["stop_reason"]).startswith("error:")]
    return {"cells": len(rows), "failed_cells": len(failed), "status": "partial" if failed else "ok"}


def cmd_probe(args, cfg: dict, out: Path) -> dict:
    p = cfg["probe"]
    kind = p["kind"]
    if kind == "scan":
        spec = system_from_config(cfg["data"])
        traj = dynamics.simulate(spec, cfg["data"]["n_samples"], seed=cfg["seed"], dt=cfg["data"]["dt"], method="rk4")
        probe = landscape.param_scan(
            lambda th: mechanistic_loss(spec, th, traj, p["scan_T"], integrator=p["integrator"]),
            np.array(spec.theta),
            p["dims"],
            [tuple(r) for r in p["ranges"]],
            p["n_per_dim"],
        )
        probe.to_csv(out / f"{probe.kind}.csv")
        return {"rows": len(probe.values)}
    if args.checkpoint is None:
        raise ConfigError(f"probe kind {kind!r} needs --checkpoint")
    model, params, traj = load_checkpoint(args.checkpoint)
    tcfg = train_config_from(cfg)
    if kind == "grad_ratio":
        probe = landscape.gradient_ratio(model, params, traj, p["T_list"], tcfg.norm_mode)
    elif kind == "roughness":
        if args.checkpoint2 is None:
            raise ConfigError("probe kind 'roughness' needs --checkpoint2 (second segment end)")
        other = load_checkpoint(args.checkpoint2)[1]
        n = p["n_points"]
        rows = []
        for T in p["T_list"]:
            loss = landscape.mlp_loss_fn(model, params, traj, T, tcfg.norm_mode)
            z = landscape.segment_roughness(loss, params.values, other.values, n, p["flat_tol"])
            n_used = n or max(3, int(np.ceil(landscape.DEFAULT_POINTS_PER_UNIT * np.linalg.norm(other.values - params.values))))
            rows.append((T, z, n_used))
        probe = landscape.LandscapeProbe("roughness", {"T_list": p["T_list"]}, rows, seed=cfg["seed"])
    elif kind == "hessian_ratio":
        train_split = split_trajectory(traj, tcfg.val_fraction)[0]
        minima = {T: landscape.train_minimum(model, traj, T, tcfg, params, p["refine"]) for T in sorted(set(p["T_list"]) | {1})}
        probe = landscape.hessian_ratio(
            model, train_split, minima, p["T_list"], tcfg.gamma, p["n_probes"], p["fd_step"], cfg["seed"]
        )
    elif kind == "gen_ratio":
        val = split_trajectory(traj, tcfg.val_fraction)[1]
        rows = []
        for T_h in p["T_list"]:
            try:
                tl, th = landscape.paired_minima(model, traj, p["T_l"], T_h, tcfg, p["delta_pair"], p["refine"], params)
                r = landscape.generalization_ratio(model, val, tl, th, p["T_l"], T_h, tcfg.norm_mode)
            except (BasinMismatchError, IndeterminateRatioError) as exc:
                log.warning("T_h=%d: %s", T_h, exc)
                r = float("nan")
            rows.append((p["T_l"], T_h, r, cfg["seed"]))
        probe = landscape.LandscapeProbe("gen_ratio", {"T_l": p["T_l"], "T_list": p["T_list"]}, rows, seed=cfg["seed"])
    elif kind == "eps_check":
        if traj.system is None or traj.system == "external":
            raise ConfigError("eps_check needs a checkpoint trained on a built-in system")
        spec = dynamics.make_system(traj.system, traj.params, traj.dt)
        raw = traj.raw_states()
        idx = np.linspace(0, raw.shape[0] - 1, min(p["n_states"], raw.shape[0])).astype(int)
        dev, ok = landscape.epsilon_region_check(
            model, params, spec, raw[idx], p["epsilon"], p["n_directions"], cfg["seed"], traj.dt, traj.normalization
        )
        probe = landscape.LandscapeProbe("eps_check", {"epsilon": p["epsilon"]}, [(p["epsilon"], dev, float(ok))])
    else:  # pragma: no cover - schema rejects other kinds
        raise ConfigError(f"unknown probe kind {kind!r}")
    probe.to_csv(out / f"{probe.kind}.csv")
    return {"rows": len(probe.values)}


def cmd_schedule(args, cfg: dict, out: Path) -> dict:
    traj = data_from_config(cfg)
    model = model_from_config(cfg, traj.dim)
    scfg = SchedulerConfig(**cfg["schedule"])
    best, trace = run_scheduler(model, traj, scfg, train_config_from(cfg))
    trace.to_csv(out / "schedule.csv")
    save_checkpoint(out, model, best, traj)
    return {"events": len(trace.events), "final_T": trace.events[-1].T}


def cmd_lyapunov(args, cfg: dict, out: Path) -> dict:
    spec = system_from_config(cfg["data"])
    ly = cfg["lyapunov"]
    dt = cfg["data"]["dt"] or spec.default_dt
    x0 = dynamics.simulate(spec, 2, seed=cfg["seed"], dt=dt, method="rk4").states[-1]
    spectrum = dynamics.lyapunov_spectrum(spec, x0, dt, ly["n_steps"], ly["discard"], ly["method"])
    write_table(out / "lyapunov.csv", ("index", "exponent"), [(k, float(v)) for k, v in enumerate(spectrum)])
    return {"lambda_max": float(spectrum[0])}


EXPERIMENTS = {
    "train": cmd_train,
    "curriculum": cmd_curriculum,
    "sweep": cmd_sweep,
    "probe": cmd_probe,
    "schedule": cmd_schedule,
    "lyapunov": cmd_lyapunov,
}


# ---------------------------------------------------------------------------
# argument parsing


def _int_list(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="horizonlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"horizonlab {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate a system and write a trajectory CSV")
    p.add_argument("--system", required=True, choices=dynamics.KINDS)
    p.add_argument("--steps", type=int, required=True, help="number of samples written (after the transient)")
    p.add_argument("--dt", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--params", help="comma-separated parameter vector")
    p.add_argument("--method", choices=("rk4", "dopri5"), default="dopri5")
    p.add_argument("--noise", type=float, default=0.0, help="observation noise std")
    p.add_argument("--plugin", help="vector field 'module:function' for --system external")
    p.add_argument("--dim", type=int, help="state dimension for --system external")
    p.add_argument("--out", required=True)

    p = sub.add_parser("ingest", help="validate (and optionally z-score) a trajectory CSV")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--normalize", action="store_true")

    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run a {name} experiment from a JSON config")
        p.add_argument("--config", help="JSON config or earlier manifest.json")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--system", choices=dynamics.KINDS)
        p.add_argument("--data", help="trajectory CSV instead of simulating")
        if name in ("train", "curriculum", "sweep", "probe", "schedule"):
            p.add_argument("--budget", help="'epochs:N' or 'wall:SECONDS'")
            p.add_argument("--eta", type=float)
        if name == "train":
            p.add_argument("--T", type=int)
        if name == "curriculum":
            p.add_argument("--T-max", dest="T_max", type=int)
        if name == "probe":
            p.add_argument("--kind", choices=PROBE_KINDS)
            p.add_argument("--checkpoint", help="directory written by train/curriculum/schedule")
            p.add_argument("--checkpoint2", help="second checkpoint (roughness segment end)")
            p.add_argument("--T", dest="T_list", type=_int_list, help="comma-separated horizons")
        if name == "schedule":
            p.add_argument("--wall-limit", dest="wall_limit", type=float)
        if name == "lyapunov":
            p.add_argument("--dt", type=float)
            p.add_argument("--steps", type=int)
    return parser


OVERRIDES = {
    "seed": "seed",
    "system": "data.system",
    "data": "data.path",
    "budget": "train.budget",
    "eta": "train.eta",
    "T": "train.T",
    "T_max": "curriculum.T_max",
    "kind": "probe.kind",
    "T_list": "probe.T_list",
    "wall_limit": "schedule.wall_limit",
    "dt": "data.dt",
    "steps": "lyapunov.n_steps",
}


def run_experiment(args) -> int:
    cfg = load_config(args.config)
    for attr, dotted in OVERRIDES.items():
        _set(cfg, dotted, getattr(args, attr, None))
    validate_config(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        result = EXPERIMENTS[args.command](args, cfg, out) or {}
    except BaseException as exc:
        write_manifest(out, args.command, cfg, status="failed", error=f"{type(exc).__name__}: {exc}")
        raise
    status = result.pop("status", "ok")
    write_manifest(out, args.command, cfg, status=status, result=result, wall_seconds=time.perf_counter() - t0)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "ingest":
            return cmd_ingest(args)
        return run_experiment(args)
    except IngestionError as exc:
        print(f"horizonlab: ingestion error: {exc}", file=sys.stderr)
        return EXIT_INGESTION
    except NumericError as exc:
        print(f"horizonlab: numeric divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ConfigError, ValueError) as exc:
        print(f"horizonlab: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
