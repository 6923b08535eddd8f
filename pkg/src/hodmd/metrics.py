"""Error metrics, window splitting, timers and run reports."""

from __future__ import annotations

import csv
import io
import json
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, TypeVar

import numpy as np

from .errors import InvalidInput, ZeroReference

T = TypeVar("T")
WINDOWS = ("full", "train", "extrapolation")


def _pair(reference, candidate) -> tuple[np.ndarray, np.ndarray]:
    ref = np.atleast_2d(np.asarray(reference, dtype=float))
    cand = np.atleast_2d(np.asarray(candidate, dtype=float))
    if ref.shape != cand.shape:
        raise InvalidInput(f"shape mismatch: reference {ref.shape} vs candidate {cand.shape}")
    if ref.size == 0:
        raise InvalidInput("empty signals")
    return ref, cand


def l2_relative(reference, candidate) -> float:
    """``||ref - cand||_F / ||ref||_F``."""
    ref, cand = _pair(reference, candidate)
    den = np.linalg.norm(ref)
    if den == 0:
        raise ZeroReference("reference signal has zero norm")
    return float(np.linalg.norm(ref - cand) / den)


def max_amplitude_diff(reference, candidate) -> float:
    ref, cand = _pair(reference, candidate)
    return float(np.max(np.abs(ref - cand)))


@dataclass(frozen=True)
class ErrorReport:
    l2_relative: float
    max_abs_diff: float
    window: str
    per_port: tuple[float, ...]
    n_samples: int

    def as_dict(self) -> dict:
        return {
            "window": self.window,
            "l2_relative": self.l2_relative,
            "max_abs_diff": self.max_abs_diff,
            "per_port": list(self.per_port),
            "n_samples": self.n_samples,
        }


def _window_slice(window: str, n: int, n_train: int | None) -> slice:
    if window == "full":
        return slice(0, n)
    if n_train is None:
        raise InvalidInput(f"window {window!r} needs the training length")
    if not 0 < n_train <= n:
        raise InvalidInput(f"training length {n_train} outside (0, {n}]")
    return slice(0, n_train) if window == "train" else slice(n_train, n)


def error_report(reference, candidate, window: str = "full",
                 n_train: int | None = None) -> ErrorReport:
    """Errors over one window; ``n_train`` columns form the training window."""
    if window not in WINDOWS:
        raise InvalidInput(f"window must be one of {WINDOWS}, got {window!r}")
    ref, cand = _pair(reference, candidate)
    sl = _window_slice(window, ref.shape[1], n_train)
    r, c = ref[:, sl], cand[:, sl]
    if r.shape[1] == 0:
        raise InvalidInput(f"window {window!r} is empty")
    per_port = []
    for k in range(r.shape[0]):
        nrm = np.linalg.norm(r[k])
        per_port.append(float(np.linalg.norm(r[k] - c[k]) / nrm) if nrm > 0 else float("nan"))
    return ErrorReport(
        l2_relative=l2_relative(r, c),
        max_abs_diff=max_amplitude_diff(r, c),
        window=window,
        per_port=tuple(per_port),
        n_samples=r.shape[1],
    )


def compare(reference, candidate, n_train: int | None = None) -> dict[str, ErrorReport]:
    """Reports for the full window and, given ``n_train``, both sub-windows."""
    out = {"full": error_report(reference, candidate, "full")}
    n = np.atleast_2d(np.asarray(reference)).shape[1]
    if n_train is not None and 0 < n_train < n:
        out["train"] = error_report(reference, candidate, "train", n_train)
        out["extrapolation"] = error_report(reference, candidate, "extrapolation", n_train)
    return out


def timed(label: str, thunk: Callable[[], T], log: dict | None = None) -> tuple[T, float]:
    """Run ``thunk`` and return ``(result, seconds)``; also stored in ``log[label]``."""
    start = time.perf_counter()
    result = thunk()
    elapsed = time.perf_counter() - start
    if log is not None:
        log[label] = log.get(label, 0.0) + elapsed
    return result, elapsed


@dataclass
class Stopwatch:
    """Accumulates labelled wall-clock timings for a run report."""

    timings: dict[str, float] = field(default_factory=dict)

    @contextmanager
    def section(self, label: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.timings[label] = self.timings.get(label, 0.0) + time.perf_counter() - start

    def run(self, label: str, thunk: Callable[[], T]) -> T:
        result, _ = timed(label, thunk, self.timings)
        return result


def run_report(command: str, config: dict, metrics: dict | None = None,
               timings: dict | None = None, extra: dict | None = None) -> dict[str, Any]:
    report = {"command": command, "config": config}
    if metrics:
        report["metrics"] = metrics
    if timings:
        report["timings"] = timings
    if extra:
        report.update(extra)
    return report


def write_report(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=1, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def flat_row(report: dict) -> dict[str, Any]:
    """Flatten nested report keys with dots, for CSV aggregation."""
    row: dict[str, Any] = {}

    def walk(prefix, obj):
        if isinstance(obj, dict):
            for k in sorted(obj):
                walk(f"{prefix}.{k}" if prefix else str(k), obj[k])
        elif isinstance(obj, (list, tuple)):
            row[prefix] = json.dumps(obj, default=_jsonable)
        else:
            row[prefix] = obj

    walk("", report)
    return row


def csv_row(report: dict) -> str:
    row = flat_row(report)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(row), lineterminator="\n")
    w.writeheader()
    w.writerow(row)
    return buf.getvalue()
