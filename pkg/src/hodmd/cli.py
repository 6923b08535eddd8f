"""Command-line pipeline: simulate, fit, predict, eval, sweep, reproduce.

Every command accepts ``--config FILE`` (a JSON object keyed by option name,
dashes or underscores); explicit flags override it. Exit codes: 0 success,
2 usage or validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__, circuit, experiments
from .dmd import fit, load_model, predict, save_model, with_offset
from .errors import HodmdError, InvalidInput, NumericalError, ValidationError
from .metrics import Stopwatch, compare, write_report
from .snapshots import SnapshotSet, load_csv, make_embedded_pair, recommend_depth, save_csv

log = logging.getLogger("hodmd")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
THREADS_ENV = "HODMD_NUM_THREADS"

# option name -> default; None means "required or optional without default"
DEFAULTS: dict[str, dict[str, Any]] = {
    "simulate": {"preset": None, "netlist": None, "sections": None, "dt": None,
                 "steps": None, "r_ohm": None, "l_henry": None, "c_farad": None,
                 "out": None, "full_state": False},
    "fit": {"input": None, "out": None, "train_frac": 0.2, "train_steps": None,
            "rank": "auto", "depth": "auto", "threshold": 0.999, "energy_power": 1,
            "fit_amplitudes": "first", "center": False, "ill_conditioned": "warn"},
    "predict": {"model": None, "out": None, "steps": None, "like": None,
                "deembed": "first"},
    "eval": {"reference": None, "candidate": None, "train_steps": None, "out": None},
    "sweep": {"input": None, "out": None, "ranks": "auto", "depths": "auto",
              "train_frac": 0.2, "train_steps": None, "threshold": 0.999,
              "fit_amplitudes": "first", "workers": 1},
    "reproduce": {"experiment": None, "out_dir": ".", "sections": None},
}

REQUIRED = {
    "simulate": ("out",),
    "fit": ("input", "out"),
    "predict": ("model", "out"),
    "eval": ("reference", "candidate"),
    "sweep": ("input", "out"),
    "reproduce": ("experiment",),
}

EXPERIMENTS = ("linear-line", "nltl", "grid-mesh", "cliff")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hodmd", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"hodmd {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def cmd(name, help_):
        p = sub.add_parser(name, help=help_, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON file with option values")
        return p

    p = cmd("simulate", "integrate a preset or netlist and write a waveform CSV")
    p.add_argument("--preset", choices=circuit.PRESETS)
    p.add_argument("--netlist", help="netlist JSON instead of a preset")
    p.add_argument("--sections", type=int, help="section count (grid side for grid-mesh)")
    p.add_argument("--dt", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--r-ohm", type=float)
    p.add_argument("--l-henry", type=float)
    p.add_argument("--c-farad", type=float)
    p.add_argument("--full-state", action="store_true", help="write every unknown, not only outputs")
    p.add_argument("--out", help="output CSV")

    p = cmd("fit", "fit a (higher-order) DMD model on the start of a waveform")
    p.add_argument("--in", dest="input", help="waveform CSV")
    p.add_argument("--out", help="model JSON")
    p.add_argument("--train-frac", type=float)
    p.add_argument("--train-steps", type=int, help="overrides --train-frac")
    p.add_argument("--rank", help="integer or 'auto' (energy rule)")
    p.add_argument("--depth", help="integer or 'auto' (recommended depth)")
    p.add_argument("--threshold", type=float, help="energy fraction for --rank auto")
    p.add_argument("--energy-power", type=int, choices=(1, 2))
    p.add_argument("--fit-amplitudes", choices=("first", "all"))
    p.add_argument("--center", action="store_true", help="remove the training mean first")
    p.add_argument("--ill-conditioned", choices=("warn", "raise"))

    p = cmd("predict", "evaluate a model on a time grid")
    p.add_argument("--model")
    p.add_argument("--out", help="output CSV")
    p.add_argument("--steps", type=int, help="predict t0 + dt*(0..steps)")
    p.add_argument("--like", help="reuse the time grid of this CSV")
    p.add_argument("--deembed", choices=("first", "average"))

    p = cmd("eval", "compare a candidate waveform with a reference")
    p.add_argument("--ref", dest="reference")
    p.add_argument("--cand", dest="candidate")
    p.add_argument("--train-steps", type=int, help="also report train/extrapolation windows")
    p.add_argument("--out", help="report JSON (printed to stdout as well)")

    p = cmd("sweep", "grid over rank and depth")
    p.add_argument("--in", dest="input")
    p.add_argument("--out", help="table CSV")
    p.add_argument("--ranks", help="comma list, or 'auto'")
    p.add_argument("--depths", help="comma list, or 'auto'")
    p.add_argument("--train-frac", type=float)
    p.add_argument("--train-steps", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--fit-amplitudes", choices=("first", "all"))
    p.add_argument("--workers", type=int)

    p = cmd("reproduce", "run a packaged experiment end to end")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--out-dir")
    p.add_argument("--sections", type=int)
    return ap


def _resolve(command: str, ns: argparse.Namespace) -> dict[str, Any]:
    """defaults <- config file <- explicit flags."""
    cfg = dict(DEFAULTS[command])
    flags = {k: v for k, v in vars(ns).items() if k not in ("command", "config", "verbose")}
    path = getattr(ns, "config", None)
    if path:
        try:
            loaded = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidInput(f"cannot read config {path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise InvalidInput(f"config {path} must hold a JSON object")
        aliases = {"in": "input", "ref": "reference", "cand": "candidate"}
        for key, value in loaded.items():
            key = aliases.get(key.replace("-", "_"), key.replace("-", "_"))
            if key not in cfg:
                raise InvalidInput(f"config {path}: unknown option {key!r} for {command}")
            cfg[key] = value
    cfg.update(flags)
    missing = [k for k in REQUIRED[command] if cfg.get(k) is None]
    if missing:
        raise InvalidInput(f"{command}: missing required option(s): "
                           + ", ".join("--" + m.replace("_", "-") for m in missing))
    return cfg


def _sidecar(path) -> Path:
    return Path(str(path) + ".report.json")


def _int_or_auto(value, name: str):
    if value in (None, "auto"):
        return None
    try:
        v = int(value)
    except (TypeError, ValueError):
        raise InvalidInput(f"{name} must be an integer or 'auto', got {value!r}") from None
    if v < 1:
        raise InvalidInput(f"{name} must be >= 1, got {v}")
    return v


def _int_list(value, name: str) -> list[int | None]:
    if isinstance(value, (list, tuple)):
        items = list(value)
    else:
        items = [x for x in str(value).split(",") if x.strip()]
    return [_int_or_auto(str(x).strip(), name) for x in items]


def _n_train(cfg: dict, snaps: SnapshotSet) -> int:
    if cfg.get("train_steps") is not None:
        n = int(cfg["train_steps"])
        if not 2 <= n <= snaps.q:
            raise InvalidInput(f"train steps {n} outside [2, {snaps.q}]")
        return n
    return experiments.train_steps(snaps.q, float(cfg["train_frac"]))


def cmd_simulate(cfg: dict) -> dict:
    watch = Stopwatch()
    if (cfg["preset"] is None) == (cfg["netlist"] is None):
        raise InvalidInput("simulate needs exactly one of --preset or --netlist")
    if cfg["preset"] is not None:
        overrides = {k: cfg[k] for k in ("r_ohm", "l_henry", "c_farad") if cfg[k] is not None}
        if overrides and cfg["preset"] == "grid-mesh":
            raise InvalidInput("element overrides apply to ladder presets only")
        net = circuit.preset(cfg["preset"], cfg["sections"], **overrides)
        dt0, steps0 = circuit.preset_sim_defaults(cfg["preset"])
    else:
        net = circuit.load_netlist(cfg["netlist"])
        dt0 = steps0 = None
    dt = cfg["dt"] if cfg["dt"] is not None else dt0
    steps = cfg["steps"] if cfg["steps"] is not None else steps0
    if dt is None or steps is None:
        raise InvalidInput("--dt and --steps are required with --netlist")
    system = circuit.build(net)
    with watch.section("simulate"):
        res = circuit.transient(system, dt, steps, keep_state=cfg["full_state"])
    snaps = res.snapshots
    if cfg["full_state"]:
        snaps = SnapshotSet(system.unknown_names, dt, res.full_state, snaps.t0)
    save_csv(snaps, cfg["out"])
    metrics = {"ports": list(snaps.ports), "samples": snaps.q + 1}
    if res.newton_iters is not None:
        metrics["newton_max_iter"] = int(res.newton_iters.max())
        metrics["newton_mean_iter"] = float(res.newton_iters.mean())
    return {"config": {**cfg, "dt": dt, "steps": steps, "netlist_resolved": net.to_dict()},
            "metrics": metrics, "timings": watch.timings}


def cmd_fit(cfg: dict) -> dict:
    snaps = load_csv(cfg["input"])
    n_train = _n_train(cfg, snaps)
    train = snaps.window(0, n_train + 1)
    offset = None
    if cfg["center"]:
        train, offset = train.centered()
    rank = _int_or_auto(cfg["rank"], "rank")
    depth = _int_or_auto(cfg["depth"], "depth")
    s = experiments.resolve_depth(depth, snaps.p, n_train)
    model = fit(make_embedded_pair(train, s), rank, threshold=float(cfg["threshold"]),
                energy_power=int(cfg["energy_power"]), amplitudes=cfg["fit_amplitudes"],
                on_ill_conditioned=cfg["ill_conditioned"])
    if offset is not None:
        model = with_offset(model, offset)
    resolved = {**cfg, "train_steps": n_train, "depth_resolved": s}
    save_model(model, cfg["out"], config=resolved)
    sel = model.rank_selection
    metrics = {"r": model.r, "s": model.s, "residual": model.residual,
               "energy_ratio": sel.energy_ratio if sel else None}
    return {"config": resolved, "metrics": metrics, "stdout": metrics}


def cmd_predict(cfg: dict) -> dict:
    model = load_model(cfg["model"])
    if cfg["like"] is not None:
        times = load_csv(cfg["like"]).times
    elif cfg["steps"] is not None:
        if cfg["steps"] < 0:
            raise InvalidInput("--steps must be >= 0")
        times = model.t0 + model.dt * np.arange(cfg["steps"] + 1)
    else:
        raise InvalidInput("predict needs --steps or --like")
    if times.size < 2:
        raise InvalidInput("time range must hold at least two points")
    values, max_imag = predict(model, times, deembed=cfg["deembed"], with_imag=True)
    _write_prediction(cfg["out"], times, values, model.ports)
    return {"config": cfg, "metrics": {"max_imag": max_imag, "samples": int(times.size)}}


def _write_prediction(path, times, values, ports) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", *ports])
        for t, col in zip(times, values.T):
            w.writerow([f"{t:.17g}", *(f"{v:.17g}" for v in col)])


def cmd_eval(cfg: dict) -> dict:
    ref = load_csv(cfg["reference"])
    cand = load_csv(cfg["candidate"])
    if ref.samples.shape != cand.samples.shape:
        raise InvalidInput(f"reference {ref.samples.shape} and candidate "
                           f"{cand.samples.shape} differ in shape")
    n_train = cfg["train_steps"]
    reports = compare(ref.samples, cand.samples, None if n_train is None else n_train + 1)
    metrics = {k: v.as_dict() for k, v in reports.items()}
    return {"config": cfg, "metrics": metrics, "stdout": metrics, "report_path": cfg["out"]}


def _sweep_point(args) -> dict:
    snaps, n_train, r, s, threshold, amps = args
    res = experiments.fit_and_extrapolate(snaps, n_train, r, s, threshold=threshold,
                                          amplitudes=amps)
    e = res.errors
    return {"r": "auto" if r is None else r, "s": res.model.s, "r_effective": res.model.r,
            "l2_full": e["full"].l2_relative, "l2_train": e["train"].l2_relative,
            "l2_extrap": e["extrapolation"].l2_relative, "residual": res.model.residual}


def cmd_sweep(cfg: dict) -> dict:
    snaps = load_csv(cfg["input"])
    n_train = _n_train(cfg, snaps)
    ranks = _int_list(cfg["ranks"], "ranks")
    depths = _int_list(cfg["depths"], "depths")
    if not ranks or not depths:
        raise InvalidInput("sweep grid is empty")
    grid = [(snaps, n_train, r, s, float(cfg["threshold"]), cfg["fit_amplitudes"])
            for s in depths for r in ranks]
    workers = int(cfg["workers"])
    if workers < 1:
        raise InvalidInput("--workers must be >= 1")
    if workers == 1:
        rows = [_sweep_point(g) for g in grid]
    else:
        # map() yields in submission order, so rows follow the grid
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, grid))
    fields = ["r", "s", "r_effective", "l2_full", "l2_train", "l2_extrap", "residual"]
    with Path(cfg["out"]).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for row in rows:
            w.writerow([row[f] if isinstance(row[f], (int, str)) else f"{row[f]:.17g}"
                        for f in fields])
    return {"config": {**cfg, "train_steps": n_train}, "metrics": {"points": len(rows)}}


# experiment -> (train fraction, depth, rank)
_REPRO = {
    "linear-line": (0.1, 60, None),
    "nltl": (0.2, 60, None),
    "grid-mesh": (0.2, "auto", None),
}


def cmd_reproduce(cfg: dict) -> dict:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    name = cfg["experiment"]
    watch = Stopwatch()
    extra: dict[str, Any] = {}
    if name == "cliff":
        snaps = experiments.cliff_dataset()
        n_train = 1000
        s_rec = recommend_depth(snaps.p, n_train)
        depths = sorted({int(0.8 * s_rec), int(0.9 * s_rec), s_rec})
        extra["depth_sweep"] = experiments.depth_sweep(snaps, n_train, depths)
        res = experiments.fit_and_extrapolate(snaps, n_train, None, s_rec, watch=watch)
    else:
        frac, depth, rank = _REPRO[name]
        _, sim = experiments.simulate_preset(name, cfg["sections"], watch=watch)
        snaps = sim.snapshots
        n_train = experiments.train_steps(snaps.q, frac)
        res = experiments.fit_and_extrapolate(snaps, n_train, rank, depth, watch=watch)
        if name == "linear-line":
            extra["rank_sweep"] = experiments.rank_sweep(snaps, n_train, [3, 5, 7, 9, 12], depth)
        if sim.newton_iters is not None:
            extra["newton_max_iter"] = int(sim.newton_iters.max())
        extra["speedup"] = experiments.speedup(watch.timings)
    save_csv(snaps, out / f"{name}.reference.csv")
    _write_prediction(out / f"{name}.prediction.csv", snaps.times, res.prediction, snaps.ports)
    save_model(res.model, out / f"{name}.model.json", config=cfg)
    metrics = {**res.summary(), **extra}
    return {"config": cfg, "metrics": metrics, "timings": watch.timings,
            "report_path": out / f"{name}.report.json", "stdout": metrics}


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "reproduce": cmd_reproduce,
}


def _thread_limit():
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise InvalidInput(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise InvalidInput(f"{THREADS_ENV} must be >= 1")
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(type(o).__name__)


def run(argv: list[str] | None = None) -> int:
    parser = _parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        limiter = _thread_limit()
        cfg = _resolve(ns.command, ns)
        try:
            result = COMMANDS[ns.command](cfg)
        finally:
            if limiter is not None:
                limiter.restore_original_limits()
    except ValidationError as exc:
        print(f"hodmd {ns.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"hodmd {ns.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except HodmdError as exc:
        print(f"hodmd {ns.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"hodmd {ns.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE

    report = {"command": ns.command, "version": __version__, "config": result["config"]}
    for key in ("metrics", "timings"):
        if key in result:
            report[key] = result[key]
    report_path = result.get("report_path")
    if report_path is None and cfg.get("out") is not None and ns.command not in ("fit", "eval"):
        report_path = _sidecar(cfg["out"])
    if report_path is not None:
        write_report(report, report_path)
    if "stdout" in result:
        print(json.dumps(result["stdout"], indent=1, sort_keys=True, default=_jsonable))
    return EXIT_OK


def main(argv: list[str] | None = None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
