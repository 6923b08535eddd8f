"""Uniformly sampled waveforms and (delay-embedded) snapshot matrix pairs."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    InsufficientData,
    InvalidEmbeddingDepth,
    InvalidInput,
    NonUniformSampling,
)

TIME_COLUMN_NAMES = ("time", "t")
UNIFORM_JITTER = 1e-6


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SnapshotSet:
    """Multivariate time series ``y_0 .. y_q`` sampled every ``dt`` seconds.

    ``samples`` has one row per port and ``q + 1`` columns; column ``m`` is the
    snapshot at ``t0 + m * dt``.
    """

    ports: tuple[str, ...]
    dt: float
    samples: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[None, :]
        if samples.ndim != 2:
            raise InvalidInput(f"samples must be 2-D, got shape {samples.shape}")
        object.__setattr__(self, "samples", _frozen(samples))
        object.__setattr__(self, "ports", tuple(str(p) for p in self.ports))
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "t0", float(self.t0))
        if len(self.ports) != samples.shape[0]:
            raise InvalidInput(
                f"{len(self.ports)} port names for {samples.shape[0]} sample rows"
            )
        if samples.shape[0] < 1:
            raise InvalidInput("need at least one port")
        if samples.shape[1] < 2:
            raise InsufficientData("need at least two samples")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise InvalidInput(f"dt must be positive and finite, got {self.dt}")
        if not np.all(np.isfinite(samples)):
            raise InvalidInput("samples contain non-finite values")

    @property
    def p(self) -> int:
        return self.samples.shape[0]

    @property
    def q(self) -> int:
        """Index of the last snapshot (number of samples minus one)."""
        return self.samples.shape[1] - 1

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.q + 1)

    def window(self, start: int = 0, stop: int | None = None) -> "SnapshotSet":
        """Columns ``start .. stop-1`` as a new set with shifted ``t0``."""
        cols = self.samples[:, start:stop]
        return SnapshotSet(self.ports, self.dt, cols, self.t0 + start * self.dt)

    def centered(self) -> tuple["SnapshotSet", np.ndarray]:
        """Return the mean-removed set and the per-port means."""
        mean = self.samples.mean(axis=1)
        return SnapshotSet(self.ports, self.dt, self.samples - mean[:, None], self.t0), mean


@dataclass(frozen=True)
class EmbeddedPair:
    """Delay-embedded snapshot matrices ``s1`` and ``s2`` (one step ahead).

    Block row ``i`` (``p`` rows each) carries the signal delayed by ``i``
    samples, oldest on top.
    """

    s: int
    s1: np.ndarray
    s2: np.ndarray
    p: int
    dt: float
    t0: float = 0.0
    ports: tuple[str, ...] = field(default=())

    @property
    def n_cols(self) -> int:
        return self.s1.shape[1]


def _is_float(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv(path, dt_override: float | None = None) -> SnapshotSet:
    """Read a waveform CSV.

    The first row is a header unless every cell of it parses as a number. A
    first column named ``time`` (or ``t``) gives the sample instants, which
    must be strictly increasing and uniform to ``UNIFORM_JITTER`` relative.
    Without a time column ``dt_override`` is required. Headerless files name
    their ports ``y0, y1, ...``.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise InvalidInput(f"{path}: empty file")

    header = [c.strip() for c in rows[0]]
    has_header = not all(_is_float(c) for c in header if c)
    body = rows[1:] if has_header else rows
    if has_header:
        has_time = header[0].lower() in TIME_COLUMN_NAMES
        ports = header[1:] if has_time else header
    else:
        has_time = dt_override is None
        ncols = len(rows[0])
        ports = [f"y{i}" for i in range(ncols - 1 if has_time else ncols)]
    width = len(ports) + (1 if has_time else 0)
    if not ports:
        raise InvalidInput(f"{path}: no data columns")

    data = np.empty((len(body), width))
    for i, row in enumerate(body):
        lineno = i + (2 if has_header else 1)
        if len(row) != width:
            raise InvalidInput(f"{path}: line {lineno} has {len(row)} cells, expected {width}")
        for j, cell in enumerate(row):
            try:
                value = float(cell)
            except ValueError:
                raise InvalidInput(
                    f"{path}: line {lineno}, column {j + 1}: not a number: {cell!r}"
                ) from None
            if not math.isfinite(value):
                raise InvalidInput(f"{path}: line {lineno}, column {j + 1}: non-finite value")
            data[i, j] = value

    if data.shape[0] < 2:
        raise InsufficientData(f"{path}: need at least two samples")

    t0 = 0.0
    if has_time:
        t = data[:, 0]
        t0 = float(t[0])
        if dt_override is None:
            steps = np.diff(t)
            if np.any(steps <= 0):
                bad = int(np.argmax(steps <= 0)) + 1
                raise NonUniformSampling(f"{path}: time not strictly increasing at sample {bad}", bad)
            dt = (t[-1] - t[0]) / (len(t) - 1)
            jitter = np.abs(steps - dt) / dt
            worst = int(np.argmax(jitter))
            if jitter[worst] > UNIFORM_JITTER:
                raise NonUniformSampling(
                    f"{path}: non-uniform time grid, worst step {worst + 1} deviates "
                    f"{jitter[worst]:.3g} relative from dt={dt:.6g}",
                    worst + 1,
                )
        samples = data[:, 1:].T
    else:
        if dt_override is None:
            raise InvalidInput(f"{path}: no time column; pass dt_override")
        samples = data.T
    dt = float(dt_override) if dt_override is not None else float(dt)
    return SnapshotSet(tuple(ports), dt, samples, t0)


def save_csv(snapshots: SnapshotSet, path) -> None:
    """Write ``time,<ports>`` with 17 significant digits (exact round trip)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", *snapshots.ports])
        for t, col in zip(snapshots.times, snapshots.samples.T):
            w.writerow([f"{t:.17g}", *(f"{v:.17g}" for v in col)])


def _embed(snapshots: SnapshotSet, s: int) -> EmbeddedPair:
    y = snapshots.samples
    n = snapshots.q - s + 1
    s1 = np.vstack([y[:, i:i + n] for i in range(s)])
    s2 = np.vstack([y[:, i + 1:i + 1 + n] for i in range(s)])
    return EmbeddedPair(
        s=s, s1=s1, s2=s2, p=snapshots.p, dt=snapshots.dt,
        t0=snapshots.t0, ports=snapshots.ports,
    )


def make_embedded_pair(snapshots: SnapshotSet, s: int) -> EmbeddedPair:
    """Stack ``s`` delayed copies of the snapshots, ``1 <= s <= q - 1``.

    With ``q + 1`` samples the matrices have ``s * p`` rows and ``q - s + 1``
    columns: block row ``i`` of ``s1`` holds ``y_i .. y_{q-s+i}`` and ``s2``
    is the same with every index shifted by one, so ``y_q`` is used and
    ``s = 1`` reproduces :func:`make_pair` exactly.
    """
    q = snapshots.q
    if isinstance(s, bool) or int(s) != s or not 1 <= s <= q - 1:
        raise InvalidEmbeddingDepth(f"embedding depth must be in [1, {q - 1}], got {s}")
    return _embed(snapshots, int(s))


def make_pair(snapshots: SnapshotSet) -> EmbeddedPair:
    """Plain DMD pair: ``S1 = [y_0..y_{q-1}]``, ``S2 = [y_1..y_q]``."""
    if snapshots.q < 1:
        raise InsufficientData("need at least two samples for a snapshot pair")
    return _embed(snapshots, 1)


def recommend_depth(p: int, q_train: int) -> int:
    """Smallest depth ``s`` with ``s * p >= 2 * (q_train - s)``.

    ``q_train`` counts training steps. The closed form ``ceil(2 q / (p + 2))``
    is clamped to ``[1, q_train - 1]``.
    """
    s = -(-2 * int(q_train) // (int(p) + 2))
    return max(1, min(s, int(q_train) - 1))


def damped_sinusoids(
    n_samples: int,
    dt: float,
    decay: Sequence[float],
    omega: Sequence[float],
    amplitude,
    phase,
    t0: float = 0.0,
    ports: Sequence[str] | None = None,
) -> SnapshotSet:
    """Sum of damped cosines ``a[k,i] exp(decay_i t) cos(omega_i t + phase[k,i])``.

    ``amplitude`` and ``phase`` are ``(p, d)`` arrays. Used as a noiseless
    signal with known spectrum ``decay_i +/- 1j*omega_i``.
    """
    decay = np.asarray(decay, dtype=float)
    omega = np.asarray(omega, dtype=float)
    amp = np.atleast_2d(np.asarray(amplitude, dtype=float))
    ph = np.atleast_2d(np.asarray(phase, dtype=float))
    t = dt * np.arange(n_samples)
    if amp.shape != ph.shape or amp.shape[1] != decay.size or decay.size != omega.size:
        raise InvalidInput("amplitude/phase must be (p, d) with d matching decay and omega")
    env = np.exp(np.outer(decay, t))
    y = np.zeros((amp.shape[0], n_samples))
    for k in range(amp.shape[0]):
        y[k] = np.sum(amp[k, :, None] * env * np.cos(np.outer(omega, t) + ph[k, :, None]), axis=0)
    if ports is None:
        ports = [f"y{k}" for k in range(y.shape[0])]
    return SnapshotSet(tuple(ports), dt, y, t0)
