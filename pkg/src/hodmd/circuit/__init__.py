"""Circuit data generator: netlists, MNA assembly and transient simulation."""

from .devices import critical_voltage, diode_current, pnjlim
from .mna import DiodeBank, MnaSystem, Stamper, build, build_ladder, build_mesh
from .netlist import (
    PRESET_DEFAULTS,
    PRESETS,
    CurrentLoad,
    DiodeModel,
    LadderNetlist,
    MeshNetlist,
    SourceWaveform,
    load_netlist,
    netlist_from_dict,
    preset,
    preset_sim_defaults,
    save_netlist,
)
from .transient import (
    TransientResult,
    consistent_state,
    dc_operating_point,
    simulate,
    transient,
)

__all__ = [
    "PRESET_DEFAULTS", "PRESETS", "CurrentLoad", "DiodeBank", "DiodeModel",
    "LadderNetlist", "MeshNetlist", "MnaSystem", "SourceWaveform", "Stamper",
    "TransientResult", "build", "build_ladder", "build_mesh", "consistent_state",
    "critical_voltage", "dc_operating_point", "diode_current", "load_netlist",
    "netlist_from_dict", "pnjlim", "preset", "preset_sim_defaults", "save_netlist",
    "simulate", "transient",
]
