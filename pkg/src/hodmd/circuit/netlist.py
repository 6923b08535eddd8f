"""Parametric netlists (ladder lines, RC power-grid mesh), sources and presets."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ..errors import InvalidInput, ParseError, UnknownPreset
from .devices import DEFAULT_I_SAT, DEFAULT_V_THERMAL

_SOURCE_PARAMS = {
    "step": ("v0", "v1", "t_step"),
    "square": ("v_low", "v_high", "t_high", "t_rise", "t_fall", "period", "delay"),
    "sine": ("amplitude", "frequency", "phase", "offset"),
    "table": ("times", "values"),
}
_SOURCE_DEFAULTS = {"delay": 0.0, "phase": 0.0, "offset": 0.0}


@dataclass(frozen=True)
class SourceWaveform:
    """Independent source waveform; ``params`` depends on ``kind``.

    * step: ``v0`` before ``t_step``, ``v1`` from ``t_step`` on
    * square: trapezoid pulse train (rise, high, fall, then low) with ``period``
    * sine: ``offset + amplitude * sin(2 pi frequency t + phase)``
    * table: piecewise-linear through ``(times, values)``, held at the ends
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _SOURCE_PARAMS:
            raise InvalidInput(f"unknown source kind {self.kind!r}")
        names = _SOURCE_PARAMS[self.kind]
        params = {k: _SOURCE_DEFAULTS[k] for k in names if k in _SOURCE_DEFAULTS}
        params.update(self.params)
        extra = set(params) - set(names)
        missing = set(names) - set(params)
        if extra or missing:
            raise InvalidInput(
                f"{self.kind} source: missing {sorted(missing)}, unexpected {sorted(extra)}"
            )
        if self.kind == "table":
            t = np.asarray(params["times"], dtype=float)
            v = np.asarray(params["values"], dtype=float)
            if t.ndim != 1 or t.shape != v.shape or t.size < 1:
                raise InvalidInput("table source needs equal-length times and values")
            if np.any(np.diff(t) <= 0):
                raise InvalidInput("table times must be strictly increasing")
            if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
                raise InvalidInput("table source has non-finite entries")
            params["times"] = [float(x) for x in t]
            params["values"] = [float(x) for x in v]
        else:
            for k in names:
                params[k] = float(params[k])
                if not math.isfinite(params[k]):
                    raise InvalidInput(f"{self.kind} source: {k} is not finite")
        if self.kind == "square":
            for k in ("t_high", "t_rise", "t_fall"):
                if params[k] < 0:
                    raise InvalidInput(f"square source: {k} must be >= 0")
            if not params["period"] > params["t_rise"] + params["t_fall"] + params["t_high"]:
                raise InvalidInput("square source: period must exceed t_rise + t_fall + t_high")
        object.__setattr__(self, "params", params)

    @classmethod
    def step(cls, v0: float = 0.0, v1: float = 1.0, t_step: float = 0.0) -> "SourceWaveform":
        return cls("step", {"v0": v0, "v1": v1, "t_step": t_step})

    @classmethod
    def dc(cls, value: float) -> "SourceWaveform":
        return cls.step(value, value, 0.0)

    @classmethod
    def square(cls, v_low: float, v_high: float, t_high: float, t_rise: float,
               t_fall: float, period: float, delay: float = 0.0) -> "SourceWaveform":
        return cls("square", {"v_low": v_low, "v_high": v_high, "t_high": t_high,
                              "t_rise": t_rise, "t_fall": t_fall, "period": period,
                              "delay": delay})

    @classmethod
    def sine(cls, amplitude: float, frequency: float, phase: float = 0.0,
             offset: float = 0.0) -> "SourceWaveform":
        return cls("sine", {"amplitude": amplitude, "frequency": frequency,
                            "phase": phase, "offset": offset})

    @classmethod
    def table(cls, times, values) -> "SourceWaveform":
        return cls("table", {"times": list(times), "values": list(values)})

    def value(self, t):
        """Source value at time(s) ``t``."""
        p = self.params
        t = np.asarray(t, dtype=float)
        if self.kind == "step":
            out = np.where(t >= p["t_step"], p["v1"], p["v0"])
        elif self.kind == "sine":
            out = p["offset"] + p["amplitude"] * np.sin(2 * math.pi * p["frequency"] * t + p["phase"])
        elif self.kind == "table":
            out = np.interp(t, p["times"], p["values"])
        else:
            lo, hi = p["v_low"], p["v_high"]
            tr, th, tf = p["t_rise"], p["t_high"], p["t_fall"]
            tau = t - p["delay"]
            ph = np.mod(tau, p["period"])
            rise = lo + (hi - lo) * ph / tr if tr > 0 else np.full_like(ph, hi)
            fall = hi - (hi - lo) * (ph - tr - th) / tf if tf > 0 else np.full_like(ph, lo)
            out = np.select(
                [tau < 0, ph < tr, ph < tr + th, ph < tr + th + tf],
                [lo, rise, hi, fall],
                default=lo,
            )
        return float(out) if out.ndim == 0 else out

    def initial_value(self) -> float:
        """Value the source held before any activity (used for DC start-up)."""
        p = self.params
        if self.kind == "step":
            return p["v0"]
        if self.kind == "square":
            return p["v_low"]
        if self.kind == "table":
            return p["values"][0]
        return self.value(0.0)

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}

    @classmethod
    def from_dict(cls, d: dict) -> "SourceWaveform":
        d = dict(d)
        try:
            kind = d.pop("kind")
        except KeyError:
            raise ParseError("source entry lacks 'kind'") from None
        return cls(kind, d)


@dataclass(frozen=True)
class DiodeModel:
    i_sat: float = DEFAULT_I_SAT
    v_thermal: float = DEFAULT_V_THERMAL

    def __post_init__(self):
        for name in ("i_sat", "v_thermal"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InvalidInput(f"diode {name} must be positive, got {v}")


def _positive(owner: str, **values):
    for name, v in values.items():
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            raise InvalidInput(f"{owner}: {name} must be positive and finite, got {v!r}")


@dataclass(frozen=True)
class LadderNetlist:
    """``n_sections`` identical series-R, series-L, shunt-C cells driven by a
    voltage source, each cell optionally shunted by a diode (anode at the
    capacitor node, cathode at ground).

    ``output_node`` indexes the capacitor nodes ``n1..nk`` (0-based); the
    default is the far end of the line.
    """

    n_sections: int
    r_ohm: float
    l_henry: float
    c_farad: float
    source: SourceWaveform
    diode: DiodeModel | None = None
    output_node: int | None = None

    def __post_init__(self):
        if isinstance(self.n_sections, bool) or int(self.n_sections) != self.n_sections \
                or self.n_sections < 1:
            raise InvalidInput(f"n_sections must be a positive integer, got {self.n_sections}")
        _positive("ladder", r_ohm=self.r_ohm, l_henry=self.l_henry, c_farad=self.c_farad)
        if self.output_node is not None and not 0 <= self.output_node < self.n_sections:
            raise InvalidInput(f"output_node {self.output_node} outside [0, {self.n_sections})")

    @property
    def output_index(self) -> int:
        return self.n_sections - 1 if self.output_node is None else self.output_node

    def to_dict(self) -> dict:
        return {
            "type": "ladder",
            "n_sections": self.n_sections,
            "r_ohm": self.r_ohm,
            "l_henry": self.l_henry,
            "c_farad": self.c_farad,
            "source": self.source.to_dict(),
            "diode": None if self.diode is None else asdict(self.diode),
            "output_node": self.output_node,
        }


@dataclass(frozen=True)
class CurrentLoad:
    """Current drawn from grid node ``(row, col)`` to ground."""

    row: int
    col: int
    waveform: SourceWaveform


@dataclass(frozen=True)
class MeshNetlist:
    """``size x size`` RC power-grid mesh.

    Neighbouring nodes are joined by ``r_seg``; every node has ``c_node`` to
    ground. The four corners connect through a pad (``r_pad`` in series with
    ``l_pad``) to a shared supply ``vdd``. Loads draw current from interior
    nodes; ``outputs`` lists the observed nodes as ``(row, col)``.
    """

    size: int
    r_seg: float
    c_node: float
    r_pad: float
    l_pad: float
    vdd: float
    loads: tuple[CurrentLoad, ...]
    outputs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if isinstance(self.size, bool) or int(self.size) != self.size or self.size < 2:
            raise InvalidInput(f"mesh size must be an integer >= 2, got {self.size}")
        _positive("mesh", r_seg=self.r_seg, c_node=self.c_node, r_pad=self.r_pad,
                  l_pad=self.l_pad)
        if not math.isfinite(self.vdd):
            raise InvalidInput("vdd must be finite")
        if not self.outputs:
            raise InvalidInput("mesh needs at least one output node")
        for rc in [*self.outputs, *((ld.row, ld.col) for ld in self.loads)]:
            if not (0 <= rc[0] < self.size and 0 <= rc[1] < self.size):
                raise InvalidInput(f"mesh node {rc} outside {self.size}x{self.size} grid")

    def to_dict(self) -> dict:
        return {
            "type": "mesh",
            "size": self.size,
            "r_seg": self.r_seg,
            "c_node": self.c_node,
            "r_pad": self.r_pad,
            "l_pad": self.l_pad,
            "vdd": self.vdd,
            "loads": [{"row": ld.row, "col": ld.col, "waveform": ld.waveform.to_dict()}
                      for ld in self.loads],
            "outputs": [list(o) for o in self.outputs],
        }


Netlist = LadderNetlist | MeshNetlist


def netlist_from_dict(d: dict[str, Any]) -> Netlist:
    try:
        kind = d.get("type", "ladder")
        if kind == "ladder":
            diode = d.get("diode")
            return LadderNetlist(
                n_sections=int(d["n_sections"]),
                r_ohm=float(d["r_ohm"]),
                l_henry=float(d["l_henry"]),
                c_farad=float(d["c_farad"]),
                source=SourceWaveform.from_dict(d["source"]),
                diode=None if diode is None else DiodeModel(**diode),
                output_node=d.get("output_node"),
            )
        if kind == "mesh":
            return MeshNetlist(
                size=int(d["size"]),
                r_seg=float(d["r_seg"]),
                c_node=float(d["c_node"]),
                r_pad=float(d["r_pad"]),
                l_pad=float(d["l_pad"]),
                vdd=float(d["vdd"]),
                loads=tuple(CurrentLoad(int(ld["row"]), int(ld["col"]),
                                        SourceWaveform.from_dict(ld["waveform"]))
                            for ld in d.get("loads", [])),
                outputs=tuple(tuple(int(v) for v in o) for o in d["outputs"]),
            )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InvalidInput):
            raise
        raise ParseError(f"malformed netlist: {exc}") from exc
    raise ParseError(f"unknown netlist type {kind!r}")


def save_netlist(netlist: Netlist, path) -> None:
    Path(path).write_text(json.dumps(netlist.to_dict(), indent=1) + "\n")


def load_netlist(path) -> Netlist:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(d, dict):
        raise ParseError(f"{path}: expected a JSON object")
    return netlist_from_dict(d)


# Element values are not given for any of the experiments, so these are ours.
# dt/steps are the simulation defaults each preset was tuned with.
PRESET_DEFAULTS: dict[str, dict[str, Any]] = {
    "linear-line": {
        "r_ohm": 0.25, "l_henry": 1e-9, "c_farad": 1e-12,
        "v0": 0.0, "v1": 5.0, "t_step": 0.0,
        "dt": 2.5e-9, "steps": 4000, "sections": 1000,
    },
    "nltl": {
        "r_ohm": 3.0, "l_henry": 20e-12, "c_farad": 20e-15,
        "i_sat": DEFAULT_I_SAT, "v_thermal": DEFAULT_V_THERMAL,
        "v_low": 0.0, "v_high": 5.0, "t_rise": 0.1e-9, "t_fall": 0.1e-9,
        "t_high": 1e-9, "period": 2e-9,
        "dt": 5e-11, "steps": 2000, "sections": 100,
    },
    "grid-mesh": {
        "r_seg": 0.05, "c_node": 1e-12, "r_pad": 0.02, "l_pad": 0.5e-9, "vdd": 1.8,
        "i_load": 0.05, "t_load": 0.0,
        "dt": 1e-11, "steps": 5000, "sections": 20,
    },
}

PRESETS = tuple(PRESET_DEFAULTS)


def preset(name: str, scale: int | None = None, **overrides) -> Netlist:
    """Netlist for a named experiment.

    ``scale`` is the section count for the lines and the grid side for
    ``grid-mesh``. Keyword overrides replace element defaults by name.
    """
    if name not in PRESET_DEFAULTS:
        raise UnknownPreset(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    cfg = dict(PRESET_DEFAULTS[name])
    unknown = set(overrides) - set(cfg)
    if unknown:
        raise InvalidInput(f"preset {name}: unknown parameter(s) {sorted(unknown)}")
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    n = cfg["sections"] if scale is None else scale
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise InvalidInput(f"scale must be a positive integer, got {n}")
    n = int(n)

    if name == "linear-line":
        return LadderNetlist(
            n, cfg["r_ohm"], cfg["l_henry"], cfg["c_farad"],
            SourceWaveform.step(cfg["v0"], cfg["v1"], cfg["t_step"]),
        )
    if name == "nltl":
        return LadderNetlist(
            n, cfg["r_ohm"], cfg["l_henry"], cfg["c_farad"],
            SourceWaveform.square(cfg["v_low"], cfg["v_high"], cfg["t_high"],
                                  cfg["t_rise"], cfg["t_fall"], cfg["period"]),
            diode=DiodeModel(cfg["i_sat"], cfg["v_thermal"]),
        )
    # grid-mesh: side length n (at least 2), loads in the middle of each quadrant
    size = max(n, 2)
    quarter, three = size // 4, (3 * size) // 4
    spots = sorted({(quarter, quarter), (quarter, three), (three, quarter), (three, three)})
    loads = tuple(
        CurrentLoad(r, c, SourceWaveform.step(0.0, cfg["i_load"] * (1 + 0.25 * k), cfg["t_load"]))
        for k, (r, c) in enumerate(spots)
    )
    return MeshNetlist(
        size=size, r_seg=cfg["r_seg"], c_node=cfg["c_node"], r_pad=cfg["r_pad"],
        l_pad=cfg["l_pad"], vdd=cfg["vdd"], loads=loads,
        outputs=((size // 2, size // 2),),
    )


def preset_sim_defaults(name: str) -> tuple[float, int]:
    """``(dt, steps)`` recommended for a preset."""
    if name not in PRESET_DEFAULTS:
        raise UnknownPreset(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    cfg = PRESET_DEFAULTS[name]
    return cfg["dt"], cfg["steps"]
