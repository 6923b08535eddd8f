"""Diode model with SPICE-style overflow clamping and junction limiting."""

from __future__ import annotations

import math

import numpy as np

EXP_CLAMP = 80.0
DEFAULT_I_SAT = 1e-14
DEFAULT_V_THERMAL = 0.02585


def diode_current(v, i_sat: float = DEFAULT_I_SAT, v_thermal: float = DEFAULT_V_THERMAL,
                  clamp: float = EXP_CLAMP):
    """Shockley current and conductance ``(I, dI/dv)``.

    Above ``v / v_thermal = clamp`` the exponential is continued linearly so
    that neither value overflows.
    """
    v = np.asarray(v, dtype=float)
    a = v / v_thermal
    e = np.exp(np.minimum(a, clamp))
    i = np.where(a > clamp, i_sat * (e * (1.0 + a - clamp) - 1.0), i_sat * (e - 1.0))
    g = i_sat * e / v_thermal
    if i.ndim == 0:
        return float(i), float(g)
    return i, g


def critical_voltage(i_sat: float = DEFAULT_I_SAT, v_thermal: float = DEFAULT_V_THERMAL) -> float:
    """Voltage where the diode curve has unit radius of curvature."""
    return v_thermal * math.log(v_thermal / (math.sqrt(2.0) * i_sat))


def pnjlim(v_new, v_old, v_thermal: float, v_crit: float):
    """Limit a Newton update of junction voltages (SPICE ``pnjlim``).

    Returns ``(limited, active)`` where ``active`` flags the entries that were
    changed. Large forward steps are replaced by a logarithmic step so the
    exponential cannot run away between iterations.
    """
    v_new = np.asarray(v_new, dtype=float)
    v_old = np.asarray(v_old, dtype=float)
    v_thermal = np.broadcast_to(np.asarray(v_thermal, dtype=float), v_new.shape)
    v_crit = np.broadcast_to(np.asarray(v_crit, dtype=float), v_new.shape)
    out = v_new.copy()
    active = (v_new > v_crit) & (np.abs(v_new - v_old) > 2.0 * v_thermal)
    if not np.any(active):
        return out, active
    arg = 1.0 + (v_new - v_old) / v_thermal
    fwd = active & (v_old > 0)
    ok = fwd & (arg > 0)
    out[ok] = v_old[ok] + v_thermal[ok] * np.log(arg[ok])
    hit = fwd & ~(arg > 0)
    out[hit] = v_crit[hit]
    cold = active & ~(v_old > 0)
    out[cold] = v_thermal[cold] * np.log(v_new[cold] / v_thermal[cold])
    return out, active
