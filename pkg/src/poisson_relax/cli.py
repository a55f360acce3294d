"""Command-line entry point.

Every subcommand writes one tidy table (CSV by default, JSON with
``--format json``) and a sidecar ``<output>.manifest.json`` holding the
fully resolved configuration, the seed, the library version, and the
wall-clock time.  ``run --config <file>`` replays a config file or a
previously written manifest; explicit flags on a named subcommand
override values from ``--config``.

Exit codes: 0 success, 2 configuration error (unknown key, bad value,
missing file), 3 numerical failure during the run.  Outputs default to
``$POISSON_RELAX_OUTDIR`` (or the working directory) as
``<command>.<format>``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from ._io import load_data, rows_to_csv, rows_to_json, save_checkpoint
from .fidelity import fidelity_sweep
from .gradstats import grad_quality_sweep
from .indicators import CUBIC, HARD, SIGMOID
from .moments import moment_factors
from .pvae import TrainConfig, init_model, synth_data, train
from .regbench import DEFAULT_TAU_GRID, mae_sweep

_INDICATORS = {"hard": HARD, "sigmoid": SIGMOID, "cubic": CUBIC}


class CliError(Exception):
    """Configuration-level failure with its exit code."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


# Flag grammar shared by the named subcommands and config files.  Each
# entry is (key, kind, default, help); kind drives coercion of both
# command-line strings and JSON values.
_COMMON = (
    ("out", "str", None, "output file (default $POISSON_RELAX_OUTDIR/<command>.<format>)"),
    ("format", "str", "csv", "output format: csv or json"),
)

_SPECS = {
    "moments": (
        ("tau_grid", "floats", (0.1, 0.5, 1.0), "comma list of temperatures"),
        ("indicators", "strs", ("sigmoid", "cubic"), "comma list from hard,sigmoid,cubic"),
    ),
    "fidelity": (
        ("methods", "strs", ("eat-sigmoid", "eat-cubic"), "comma list of sampler ids"),
        ("rates", "floats", (100.0,), "comma list of Poisson rates"),
        ("taus", "floats", (0.5,), "comma list of temperatures"),
        ("n_samples", "int", 50_000, "draws per trial"),
        ("trials", "int", 20, "independent trials per cell"),
        ("seed", "int", 0, "master seed"),
    ),
    "gradsweep": (
        ("methods", "strs", ("eat-sigmoid", "eat-cubic", "gsm", "score"), "comma list of estimators"),
        ("rates", "floats", (20.0,), "comma list of latent rates"),
        ("taus", "floats", (0.02, 0.1, 0.5), "comma list of temperatures"),
        ("n_samples", "int", 100, "gradient draws per data item"),
        ("batch", "int", 16, "data items per cell"),
        ("inputs", "int", 64, "observation dimension"),
        ("latents", "int", 64, "latent dimension"),
        ("model_seed", "int", 0, "seed for the random model"),
        ("score_baseline", "str", "batch", "score reward centering: batch or zero"),
        ("seed", "int", 0, "master seed"),
    ),
    "train-pvae": (
        ("method", "str", "eat-cubic", "gradient estimator"),
        ("epochs", "int", 300, "training epochs"),
        ("warmup_epochs", "int", 10, "linear LR warmup epochs"),
        ("batch_size", "int", 256, "mini-batch size"),
        ("lr", "float", 0.005, "peak learning rate"),
        ("grad_clip_norm", "float", 500.0, "global gradient-norm clip"),
        ("tau_start", "float", 1.0, "anneal start temperature"),
        ("tau_stop", "float", 0.1, "anneal end temperature"),
        ("anneal_fraction", "float", 0.5, "fraction of epochs spent annealing"),
        ("mc_samples", "int", 1, "Monte Carlo draws per item"),
        ("kl_beta", "float", 1.0, "KL weight"),
        ("score_baseline", "str", "ema", "score baseline: ema or batch"),
        ("val_fraction", "float", 0.2, "tail fraction held out for validation"),
        ("seed", "int", 0, "training seed (batch order and MC draws)"),
        ("inputs", "int", 64, "observation dimension for synthetic data"),
        ("latents", "int", 128, "latent dimension"),
        ("n_data", "int", 1280, "synthetic dataset size"),
        ("sparsity", "float", 0.1, "synthetic code density"),
        ("noise_sd", "float", 0.1, "synthetic observation noise"),
        ("data_seed", "int", 0, "synthetic data seed"),
        ("model_seed", "int", 0, "model init seed"),
        ("data", "str", None, "load data matrix from .npy/.csv instead of synthesizing"),
        ("checkpoint", "str", None, "write final model to this .npz path"),
    ),
    "bench-regression": (
        ("function", "str", "z", "test function id"),
        ("methods", "strs", ("score", "eat-sigmoid", "eat-cubic"), "comma list of estimators"),
        ("rates", "floats", (5.0,), "comma list of rates"),
        ("taus", "floats", DEFAULT_TAU_GRID, "comma list of temperatures"),
        ("n_mc", "int", 100, "Monte Carlo draws per estimate"),
        ("repeats", "int", 20, "independent estimates per cell"),
        ("seed", "int", 0, "master seed"),
    ),
}


def _coerce(kind: str, value, key: str):
    try:
        if kind == "int":
            if isinstance(value, bool) or (isinstance(value, float) and value != int(value)):
                raise ValueError
            return int(value)
        if kind == "float":
            if isinstance(value, bool):
                raise ValueError
            return float(value)
        if kind == "str":
            if value is None:
                return None
            return str(value)
        if kind == "floats":
            parts = value.split(",") if isinstance(value, str) else list(value)
            out = tuple(float(p) for p in parts)
        else:  # strs
            parts = value.split(",") if isinstance(value, str) else list(value)
            out = tuple(str(p).strip() for p in parts)
        if not out:
            raise ValueError
        return out
    except (TypeError, ValueError):
        raise CliError(2, f"invalid value for '{key}': {value!r}") from None


def _load_config(path: str) -> dict:
    if not os.path.exists(path):
        raise CliError(2, f"config file not found: {path}")
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CliError(2, f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise CliError(2, f"config file {path} must hold a JSON object")
    # A manifest nests the flat config under "config"; unwrap it.
    if isinstance(obj.get("config"), dict):
        inner = dict(obj["config"])
        inner.setdefault("command", obj.get("command"))
        obj = inner
    return obj


def _resolve(command: str, file_cfg: dict, flags: dict) -> dict:
    spec = _SPECS[command] + _COMMON
    kinds = {key: kind for key, kind, _, _ in spec}
    cfg = {key: default for key, _, default, _ in spec}

    file_cfg = dict(file_cfg)
    file_command = file_cfg.pop("command", None)
    if file_command is not None and file_command != command:
        raise CliError(2, f"config file is for command '{file_command}', not '{command}'")
    for key, value in file_cfg.items():
        if key not in kinds:
            raise CliError(2, f"unknown config key '{key}' for command '{command}'")
        cfg[key] = None if value is None else _coerce(kinds[key], value, key)

    for key, value in flags.items():
        if value is not None:
            cfg[key] = _coerce(kinds[key], value, key)
    return cfg


def _cmd_moments(cfg: dict) -> list[dict]:
    rows = []
    for name in cfg["indicators"]:
        if name not in _INDICATORS:
            raise CliError(2, f"unknown indicator '{name}' (choose from hard, sigmoid, cubic)")
        for tau in cfg["tau_grid"]:
            mf = moment_factors(_INDICATORS[name], tau)
            rows.append({"indicator": name, "tau": tau, "c": mf.c, "v": mf.v, "fano": mf.fano})
    return rows


def _cmd_fidelity(cfg: dict) -> list:
    return fidelity_sweep(
        cfg["methods"],
        cfg["rates"],
        cfg["taus"],
        n_samples=cfg["n_samples"],
        n_trials=cfg["trials"],
        seed=cfg["seed"],
    )


def _cmd_gradsweep(cfg: dict) -> list:
    model = init_model(cfg["inputs"], cfg["latents"], cfg["model_seed"])
    return grad_quality_sweep(
        model,
        cfg["methods"],
        cfg["rates"],
        cfg["taus"],
        n_samples=cfg["n_samples"],
        batch=cfg["batch"],
        seed=cfg["seed"],
        score_baseline=cfg["score_baseline"],
    )


def _cmd_train(cfg: dict) -> list[dict]:
    if cfg["data"] is not None:
        data = load_data(cfg["data"])
    else:
        data, _ = synth_data(
            cfg["inputs"],
            cfg["latents"],
            cfg["n_data"],
            cfg["sparsity"],
            cfg["noise_sd"],
            cfg["data_seed"],
        )
    model = init_model(data.shape[1], cfg["latents"], cfg["model_seed"])
    tc = TrainConfig(
        epochs=cfg["epochs"],
        warmup_epochs=cfg["warmup_epochs"],
        batch_size=cfg["batch_size"],
        lr=cfg["lr"],
        grad_clip_norm=cfg["grad_clip_norm"],
        tau_start=cfg["tau_start"],
        tau_stop=cfg["tau_stop"],
        anneal_fraction=cfg["anneal_fraction"],
        method=cfg["method"],
        mc_samples=cfg["mc_samples"],
        seed=cfg["seed"],
        kl_beta=cfg["kl_beta"],
        score_baseline=cfg["score_baseline"],
        val_fraction=cfg["val_fraction"],
    )
    trace = train(model, data, tc)
    rows = [
        {
            "epoch": e + 1,
            "train_elbo": trace.train_elbo[e],
            "val_elbo": trace.val_elbo[e],
            "tau": trace.tau[e],
            "lr": trace.lr[e],
        }
        for e in range(len(trace.train_elbo))
    ]
    if cfg["checkpoint"] is not None:
        save_checkpoint(trace.model, cfg["checkpoint"])
    return rows


def _cmd_bench(cfg: dict) -> list:
    return mae_sweep(
        cfg["function"],
        cfg["rates"],
        cfg["taus"],
        cfg["methods"],
        n_mc=cfg["n_mc"],
        n_repeats=cfg["repeats"],
        seed=cfg["seed"],
    )


_EXEC = {
    "moments": _cmd_moments,
    "fidelity": _cmd_fidelity,
    "gradsweep": _cmd_gradsweep,
    "train-pvae": _cmd_train,
    "bench-regression": _cmd_bench,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poisson-relax",
        description="Relaxed Poisson sampling: moments, fidelity, gradients, training.",
    )
    parser.add_argument("--version", action="version", version=f"poisson-relax {__version__}")
    sub = parser.add_subparsers(dest="command")
    for command, spec in _SPECS.items():
        p = sub.add_parser(command, help=f"run the {command} table")
        p.add_argument("--config", default=None, help="JSON config or manifest to start from")
        for key, _, _, helptext in spec + _COMMON:
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None, help=helptext)
    runp = sub.add_parser("run", help="replay a config file or manifest")
    runp.add_argument("--config", required=True, help="JSON config or manifest with a 'command' key")
    return parser


def _flag_values(command: str, args) -> dict:
    return {key: getattr(args, key) for key, _, _, _ in _SPECS[command] + _COMMON}


def _write_output(command: str, cfg: dict, rows: list, started: float) -> str:
    fmt = cfg["format"]
    if fmt not in ("csv", "json"):
        raise CliError(2, f"invalid value for 'format': {fmt!r} (csv or json)")
    out = cfg["out"]
    if out is None:
        outdir = os.environ.get("POISSON_RELAX_OUTDIR", ".")
        os.makedirs(outdir, exist_ok=True)
        out = os.path.join(outdir, f"{command}.{fmt}")
    else:
        parent = os.path.dirname(out)
        if parent:
            os.makedirs(parent, exist_ok=True)
    cfg["out"] = out
    if fmt == "csv":
        rows_to_csv(rows, out)
    else:
        rows_to_json(rows, out)

    manifest = {
        "command": command,
        "config": cfg,
        "seed": cfg.get("seed"),
        "library_version": __version__,
        "wall_clock_seconds": time.monotonic() - started,
    }
    with open(out + ".manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return out


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command is None:
        print("error: no command given (see --help)", file=sys.stderr)
        return 2
    command = args.command
    try:
        if command == "run":
            file_cfg = _load_config(args.config)
            command = file_cfg.get("command")
            if command not in _SPECS:
                raise CliError(2, f"config file must name a command, got {command!r}")
            cfg = _resolve(command, file_cfg, {})
        else:
            file_cfg = _load_config(args.config) if args.config else {}
            cfg = _resolve(command, file_cfg, _flag_values(command, args))
        started = time.monotonic()
        rows = _EXEC[command](cfg)
        out = _write_output(command, cfg, rows, started)
    except CliError as exc:
        print(f"error: {exc.message}", file=sys.stderr)
        return exc.code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure in '{command}': {exc}", file=sys.stderr)
        return 3
    print(f"wrote {len(rows)} rows to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
