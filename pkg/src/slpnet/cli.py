"""Command-line interface: reproducible runs over datasets, solver, training.

Commands
--------
``gen-data``   sample a fading dataset and write it as an SLPD file.
``solve``      run the max-min solver (optionally the bisection oracle) on
               one channel or on every channel of a dataset.
``train``      train (or resume) an EPNN, writing an SLPW checkpoint, an
               Adam sidecar, and a per-epoch loss-trace CSV.
``eval-ser``   Monte Carlo SER sweep for any subset of backends.
``bench``      wall-clock timing benchmark over a list of user counts.

Every command accepts ``--config FILE`` with ``key = value`` lines (``#``
comments allowed); command-line flags override config values, which
override defaults.  Unknown config keys are rejected.  All randomness
derives from the single ``seed`` value.

Exit codes: 0 success, 2 usage/configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys

import numpy as np

from . import __version__
from .channels import (
    DatasetFormatError,
    load_dataset,
    sample_rayleigh,
    sample_rician,
    save_dataset,
)
from .constellation import make_constellation
from .evaluate import (
    BlpBackend,
    NeuralBackend,
    SolverBackend,
    ser_sweep,
    timing_bench,
    write_ser_csv,
    write_ser_json,
    write_timing_csv,
)
from .maxmin import SolveConfig, oracle_solve, solve_maxmin
from .network import (
    NetworkSpec,
    TrainConfig,
    load_checkpoint,
    load_train_state,
    save_checkpoint,
    save_train_state,
    train,
)

__all__ = ["main"]


class UsageError(Exception):
    """Bad arguments or configuration; exits with code 2."""


class NumericalError(Exception):
    """A run failed numerically (divergence, non-finite output); exit code 3."""


def _parse_bool(text: str) -> bool:
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_floats(text: str) -> list[float]:
    return [float(x) for x in str(text).split(",") if x.strip()]


def _parse_ints(text: str) -> list[int]:
    return [int(x) for x in str(text).split(",") if x.strip()]


def _parse_names(text: str) -> list[str]:
    return [x.strip() for x in str(text).split(",") if x.strip()]


def load_config_file(path) -> dict[str, str]:
    """Read a ``key = value`` config file; ``#`` starts a comment."""
    entries: dict[str, str] = {}
    try:
        with open(path) as f:
            for lineno, raw in enumerate(f, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
                key, value = line.split("=", 1)
                entries[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    return entries


def _resolve(ns: argparse.Namespace, schema: dict) -> dict:
    """Merge defaults, config-file entries, and explicit flags (in that order)."""
    resolved = {name: default for name, (_, default, _) in schema.items()}
    if getattr(ns, "config", None):
        entries = load_config_file(ns.config)
        for key, raw in entries.items():
            if key not in schema:
                raise UsageError(
                    f"unknown config key {key!r}; known keys: {', '.join(sorted(schema))}"
                )
            conv = schema[key][0]
            try:
                resolved[key] = conv(raw)
            except ValueError as exc:
                raise UsageError(f"config key {key!r}: {exc}") from exc
    for key in schema:
        flag_value = getattr(ns, key, None)
        if flag_value is not None:
            resolved[key] = flag_value
    missing = [k for k, (_, _, required) in schema.items() if required and resolved[k] is None]
    if missing:
        raise UsageError(f"missing required option(s): {', '.join('--' + m.replace('_', '-') for m in missing)}")
    return resolved


def _jsonable(value):
    if isinstance(value, (list, tuple)):
        return list(value)
    return value


def _emit_summary(payload: dict, path):
    text = json.dumps(payload, indent=2, sort_keys=True)
    if path:
        with open(path, "w") as f:
            f.write(text + "\n")
    else:
        print(text)


def _load_channels(path):
    try:
        return load_dataset(path)
    except FileNotFoundError as exc:
        raise UsageError(f"dataset not found: {path}") from exc
    except DatasetFormatError as exc:
        raise UsageError(f"invalid dataset {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# gen-data


_GEN_SCHEMA = {
    "users": (int, None, True),
    "antennas": (int, None, True),
    "count": (int, None, True),
    "seed": (int, 0, False),
    "fading": (str, "rayleigh", False),
    "k_factor": (float, 3.0, False),
    "out": (str, None, True),
}


def cmd_gen_data(ns) -> int:
    opts = _resolve(ns, _GEN_SCHEMA)
    if opts["count"] < 1:
        raise UsageError(f"count must be >= 1, got {opts['count']}")
    if opts["users"] < 1 or opts["antennas"] < 1:
        raise UsageError("users and antennas must be >= 1")
    if opts["fading"] == "rayleigh":
        ds = sample_rayleigh(opts["users"], opts["antennas"], opts["count"], seed=opts["seed"])
    elif opts["fading"] == "rician":
        ds = sample_rician(
            opts["users"], opts["antennas"], opts["count"],
            k_factor=opts["k_factor"], seed=opts["seed"],
        )
    else:
        raise UsageError(f"fading must be 'rayleigh' or 'rician', got {opts['fading']!r}")
    save_dataset(ds, opts["out"])
    _emit_summary(
        {
            "version": __version__,
            "command": "gen-data",
            "config": {k: _jsonable(v) for k, v in opts.items()},
            "written": opts["out"],
            "count": ds.count,
        },
        getattr(ns, "summary", None),
    )
    return 0


# ---------------------------------------------------------------------------
# solve


_SOLVE_SCHEMA = {
    "dataset": (str, None, True),
    "index": (str, "0", False),  # integer or "all"
    "order": (int, 4, False),
    "power": (float, 1.0, False),
    "tol": (float, 1e-5, False),
    "max_iters": (int, 5000, False),
    "smoothing": (float, 0.25, False),
    "restarts": (int, 2, False),
    "seed": (int, 0, False),
    "oracle": (_parse_bool, False, False),
    "out": (str, None, False),
}


def cmd_solve(ns) -> int:
    opts = _resolve(ns, _SOLVE_SCHEMA)
    ds = _load_channels(opts["dataset"])
    c = make_constellation(opts["order"])
    cfg = SolveConfig(
        power_budget=opts["power"],
        tol=opts["tol"],
        max_iters=opts["max_iters"],
        smoothing=opts["smoothing"],
        restarts=opts["restarts"],
        seed=opts["seed"],
    )
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    if opts["index"] == "all":
        indices = list(range(ds.count))
    else:
        try:
            indices = [int(opts["index"])]
        except ValueError as exc:
            raise UsageError(f"index must be an integer or 'all', got {opts['index']!r}") from exc
        if not 0 <= indices[0] < ds.count:
            raise UsageError(f"index {indices[0]} out of range for {ds.count} channels")

    precoders = []
    values = []
    statuses = []
    oracle_values = []
    for i in indices:
        result = solve_maxmin(ds.channels[i], c, cfg)
        if not np.all(np.isfinite(result.X)) or not np.isfinite(result.t):
            raise NumericalError(f"solver produced non-finite output on channel {i}")
        precoders.append(result.X)
        values.append(result.t)
        statuses.append(result.status)
        if opts["oracle"]:
            oracle_values.append(oracle_solve(ds.channels[i], c, cfg).t)

    if opts["out"]:
        arrays = {
            "X": np.stack(precoders),
            "t": np.array(values),
            "indices": np.array(indices, dtype=np.int64),
        }
        if opts["oracle"]:
            arrays["t_oracle"] = np.array(oracle_values)
        np.savez(opts["out"], **arrays)

    summary = {
        "version": __version__,
        "command": "solve",
        "config": {k: _jsonable(v) for k, v in opts.items()},
        "count": len(indices),
        "t": values if len(values) > 1 else values[0],
        "status": statuses if len(statuses) > 1 else statuses[0],
    }
    if opts["oracle"]:
        gaps = [
            abs(a - b) / max(abs(a), abs(b), 1e-12)
            for a, b in zip(values, oracle_values)
        ]
        summary["t_oracle"] = oracle_values if len(oracle_values) > 1 else oracle_values[0]
        summary["max_rel_gap"] = max(gaps)
    _emit_summary(summary, getattr(ns, "summary", None))
    return 0


# ---------------------------------------------------------------------------
# train


_TRAIN_SCHEMA = {
    "dataset": (str, None, True),
    "order": (int, 4, False),
    "power": (float, 1.0, False),
    "mode": (str, "unsupervised", False),
    "labels": (str, None, False),
    "epochs": (int, 60, False),
    "batch_size": (int, 1024, False),
    "learning_rate": (float, 0.001, False),
    "decay_factor": (float, 0.1, False),
    "decay_every": (int, 20, False),
    "lambda_reg": (float, 0.2, False),
    "seed": (int, 0, False),
    "width": (int, 256, False),
    "conv_filters": (int, 64, False),
    "scaling": (str, "paper", False),
    "out": (str, None, True),
    "trace": (str, None, False),
    "resume": (_parse_bool, False, False),
}


def cmd_train(ns) -> int:
    opts = _resolve(ns, _TRAIN_SCHEMA)
    ds = _load_channels(opts["dataset"])
    spec = NetworkSpec.desk(
        ds.users,
        ds.antennas,
        opts["order"],
        power_budget=opts["power"],
        conv_filters=opts["conv_filters"],
        width=opts["width"],
        scaling_mode=opts["scaling"],
    )
    cfg = TrainConfig(
        learning_rate=opts["learning_rate"],
        decay_factor=opts["decay_factor"],
        decay_every=opts["decay_every"],
        epochs=opts["epochs"],
        batch_size=opts["batch_size"],
        lambda_reg=opts["lambda_reg"],
        seed=opts["seed"],
        mode=opts["mode"],
    )
    try:
        cfg.validate()
        spec.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    labels = None
    if cfg.mode == "supervised":
        if not opts["labels"]:
            raise UsageError("supervised mode requires --labels (npz with array 'X')")
        try:
            with np.load(opts["labels"]) as payload:
                labels = np.asarray(payload["X"], dtype=np.complex128)
        except (OSError, KeyError) as exc:
            raise UsageError(f"cannot read labels from {opts['labels']}: {exc}") from exc

    model = None
    adam_state = None
    start_epoch = 0
    trace: list[float] = []
    sidecar = opts["out"] + ".adam"
    if opts["resume"]:
        try:
            model = load_checkpoint(opts["out"])
            adam_state, start_epoch, trace = load_train_state(sidecar)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot resume from {opts['out']}: {exc}") from exc
        if model.spec != spec:
            raise UsageError("checkpoint spec differs from the requested configuration")

    try:
        result = train(
            ds,
            spec,
            cfg,
            labels=labels,
            model=model,
            adam_state=adam_state,
            start_epoch=start_epoch,
            loss_trace=trace,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    save_checkpoint(opts["out"], result.model)
    save_train_state(sidecar, result.adam_state, result.epochs_run, result.loss_trace)
    if opts["trace"]:
        with open(opts["trace"], "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "loss"])
            for epoch, loss in enumerate(result.loss_trace):
                writer.writerow([epoch, f"{loss:.12e}"])
    _emit_summary(
        {
            "version": __version__,
            "command": "train",
            "config": {k: _jsonable(v) for k, v in opts.items()},
            "status": result.status,
            "epochs_run": result.epochs_run,
            "final_loss": result.loss_trace[-1] if result.loss_trace else None,
        },
        getattr(ns, "summary", None),
    )
    if result.status != "ok":
        raise NumericalError("training diverged; last finite checkpoint written")
    return 0


# ---------------------------------------------------------------------------
# eval-ser


_EVAL_SCHEMA = {
    "dataset": (str, None, True),
    "order": (int, 4, False),
    "power": (float, 1.0, False),
    "backends": (_parse_names, ["solver", "blp"], False),
    "checkpoint": (str, None, False),
    "snrs": (_parse_floats, None, True),
    "symbols_per_channel": (int, 100, False),
    "seed": (int, 0, False),
    "out": (str, None, True),
    "json_out": (str, None, False),
}


def cmd_eval_ser(ns) -> int:
    opts = _resolve(ns, _EVAL_SCHEMA)
    ds = _load_channels(opts["dataset"])
    c = make_constellation(opts["order"])
    if opts["symbols_per_channel"] < 1:
        raise UsageError("symbols-per-channel must be >= 1")

    backends = []
    for name in opts["backends"]:
        if name == "solver":
            backends.append(SolverBackend(c, SolveConfig(power_budget=opts["power"], seed=opts["seed"])))
        elif name == "blp":
            backends.append(BlpBackend(c, power_budget=opts["power"]))
        elif name == "epnn":
            if not opts["checkpoint"]:
                raise UsageError("backend 'epnn' requires --checkpoint")
            try:
                model = load_checkpoint(opts["checkpoint"])
            except (OSError, ValueError) as exc:
                raise UsageError(f"cannot load checkpoint {opts['checkpoint']}: {exc}") from exc
            backends.append(NeuralBackend(model))
        else:
            raise UsageError(f"unknown backend {name!r}; choose from solver, blp, epnn")

    results = {}
    for backend in backends:
        sweep = ser_sweep(
            backend,
            ds,
            c,
            opts["snrs"],
            symbols_per_channel=opts["symbols_per_channel"],
            seed=opts["seed"],
            power_budget=opts["power"],
        )
        if sweep.skipped == ds.count:
            raise NumericalError(f"backend {backend.name!r} failed on every channel")
        results[backend.name] = sweep

    write_ser_csv(opts["out"], results, ds.users, ds.antennas)
    config_payload = {k: _jsonable(v) for k, v in opts.items()}
    config_payload["version"] = __version__
    if opts["json_out"]:
        write_ser_json(opts["json_out"], results, ds.users, ds.antennas, config=config_payload)
    _emit_summary(
        {
            "version": __version__,
            "command": "eval-ser",
            "config": config_payload,
            "skipped": {name: sweep.skipped for name, sweep in results.items()},
            "written": opts["out"],
        },
        getattr(ns, "summary", None),
    )
    return 0


# ---------------------------------------------------------------------------
# bench


_BENCH_SCHEMA = {
    "users_list": (_parse_ints, [2, 3, 4, 5], False),
    "antennas": (int, 8, False),
    "order": (int, 4, False),
    "power": (float, 1.0, False),
    "count": (int, 4, False),
    "repetitions": (int, 10, False),
    "seed": (int, 0, False),
    "backends": (_parse_names, ["solver", "epnn"], False),
    "width": (int, 256, False),
    "conv_filters": (int, 64, False),
    "out": (str, None, True),
}


def cmd_bench(ns) -> int:
    opts = _resolve(ns, _BENCH_SCHEMA)
    if opts["repetitions"] < 10:
        raise UsageError(f"repetitions must be >= 10, got {opts['repetitions']}")
    if any(k < 1 for k in opts["users_list"]):
        raise UsageError("user counts must be >= 1")
    if max(opts["users_list"]) > opts["antennas"]:
        raise UsageError("bench requires antennas >= every benched user count")
    c = make_constellation(opts["order"])
    from .network import EPNN

    records = []
    for users in opts["users_list"]:
        ds = sample_rayleigh(users, opts["antennas"], opts["count"], seed=opts["seed"])
        for name in opts["backends"]:
            if name == "solver":
                backend = SolverBackend(c, SolveConfig(power_budget=opts["power"], seed=opts["seed"]))
            elif name == "blp":
                backend = BlpBackend(c, power_budget=opts["power"])
            elif name == "epnn":
                spec = NetworkSpec.desk(
                    users,
                    opts["antennas"],
                    opts["order"],
                    power_budget=opts["power"],
                    conv_filters=opts["conv_filters"],
                    width=opts["width"],
                )
                backend = NeuralBackend(EPNN(spec, init_seed=opts["seed"]))
            else:
                raise UsageError(f"unknown backend {name!r}; choose from solver, blp, epnn")
            records.append(timing_bench(backend, ds, repetitions=opts["repetitions"]))
    write_timing_csv(opts["out"], records)
    _emit_summary(
        {
            "version": __version__,
            "command": "bench",
            "config": {k: _jsonable(v) for k, v in opts.items()},
            "rows": [dataclasses.asdict(r) for r in records],
        },
        getattr(ns, "summary", None),
    )
    return 0


# ---------------------------------------------------------------------------
# parser wiring


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slpnet",
        description="Symbol-level precoding: datasets, solver, training, evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, schema, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--summary", help="write the JSON run summary here instead of stdout")
        for key, (conv, default, required) in schema.items():
            flag = "--" + key.replace("_", "-")
            kwargs = {"default": None, "help": f"default: {default!r}" if not required else "required"}
            if conv is _parse_bool:
                kwargs["nargs"] = "?"
                kwargs["const"] = True
                kwargs["type"] = _parse_bool
            else:
                kwargs["type"] = conv
            p.add_argument(flag, dest=key, **kwargs)
        p.set_defaults(func=func)
        return p

    add("gen-data", cmd_gen_data, _GEN_SCHEMA, "sample a fading dataset into an SLPD file")
    add("solve", cmd_solve, _SOLVE_SCHEMA, "run the max-min solver on dataset channels")
    add("train", cmd_train, _TRAIN_SCHEMA, "train an EPNN and write an SLPW checkpoint")
    add("eval-ser", cmd_eval_ser, _EVAL_SCHEMA, "Monte Carlo SER sweep over backends")
    add("bench", cmd_bench, _BENCH_SCHEMA, "wall-clock timing benchmark")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return ns.func(ns)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
