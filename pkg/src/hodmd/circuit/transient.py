"""Fixed-step trapezoidal integration of MNA systems."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import InvalidInput, NewtonDivergence, SingularSystem
from ..snapshots import SnapshotSet
from .mna import MnaSystem, build
from .netlist import preset_sim_defaults

NEWTON_TOL = 1e-9
NEWTON_MAX_ITER = 50


@dataclass(frozen=True)
class TransientResult:
    snapshots: SnapshotSet
    dt: float
    full_state: np.ndarray | None = None
    newton_iters: np.ndarray | None = None
    # per step, the infinity norms of successive Newton updates
    newton_updates: list[np.ndarray] | None = field(default=None, repr=False)

    @property
    def steps(self) -> int:
        return self.snapshots.q


def _factor(m: sp.spmatrix, what: str):
    try:
        lu = spla.splu(sp.csc_matrix(m))
    except RuntimeError as exc:
        raise SingularSystem(f"{what} is singular: {exc}") from exc
    return lu


def _solve(lu, rhs: np.ndarray, what: str) -> np.ndarray:
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise SingularSystem(f"{what} produced a non-finite solution")
    return x


def _newton(jac_base, rhs, x_start, bank, step, what, tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER):
    """Solve ``jac_base x + F(x) = rhs`` with junction-limited Newton.

    Converged when the update is below ``tol * (1 + |x|_inf)`` and no junction
    was limited. Returns ``(x, iterations, update_norms)``.
    """
    d = bank.incidence
    x = x_start.copy()
    v_prev = d @ x
    norms = []
    for it in range(1, max_iter + 1):
        v = d @ x
        if it == 1:
            v_lim, active = v, np.zeros(v.shape, bool)
        else:
            v_lim, active = bank.limit(v, v_prev)
        i, g = bank.currents(v_lim)
        jac = jac_base + (d.T @ sp.diags(g) @ d)
        # companion model: i(v) ~ i(v_lim) + g (v - v_lim)
        new = _solve(_factor(jac, what), rhs - d.T @ (i - g * v_lim), what)
        delta = float(np.max(np.abs(new - x)))
        norms.append(delta)
        x, v_prev = new, v_lim
        if delta <= tol * (1.0 + float(np.max(np.abs(x)))) and not np.any(active):
            return x, it, np.array(norms)
    raise NewtonDivergence(
        f"Newton did not converge at step {step} after {max_iter} iterations "
        f"(last update {norms[-1]:.3g}, |x| {float(np.max(np.abs(x))):.3g})",
        step=step, norm=float(np.max(np.abs(x))),
    )


def consistent_state(system: MnaSystem, x: np.ndarray, t: float) -> np.ndarray:
    """Re-solve the storage-free unknowns so the algebraic equations hold at ``t``.

    Capacitor voltages and inductor currents in ``x`` are kept.
    """
    alg = system.algebraic_indices()
    if alg.size == 0:
        return x.copy()
    dyn = np.setdiff1d(np.arange(system.n), alg)
    g = system.g_mat.tocsr()
    g_aa = g[alg][:, alg].tocsc()
    rhs = system.b_mat[alg] @ system.u(t) - g[alg][:, dyn] @ x[dyn]
    out = x.copy()
    bank = system.nonlinear
    touches = bank is not None and bank.incidence[:, alg].nnz > 0
    if not touches:
        if bank is not None:
            f, _ = bank.evaluate(x)
            rhs = rhs - f[alg]
        out[alg] = _solve(_factor(g_aa, "algebraic subsystem"), rhs, "algebraic subsystem")
        return out
    out, _, _ = _newton_rows(system, g_aa, rhs, out, alg)
    return out


def _newton_rows(system, g_aa, rhs, x, rows):
    # restricted Newton: only the F rows that belong to the algebraic block matter
    bank = system.nonlinear
    d_full = bank.incidence
    d_a = d_full[:, rows]
    fixed = np.setdiff1d(np.arange(system.n), rows)
    v_fixed = d_full[:, fixed] @ x[fixed]
    sub = x[rows].copy()
    v_prev = d_a @ sub + v_fixed
    for it in range(1, NEWTON_MAX_ITER + 1):
        v = d_a @ sub + v_fixed
        if it == 1:
            v_lim, active = v, np.zeros(v.shape, bool)
        else:
            v_lim, active = bank.limit(v, v_prev)
        i, g = bank.currents(v_lim)
        jac = g_aa + d_a.T @ sp.diags(g) @ d_a
        b = rhs - d_a.T @ (i - g * (v_lim - v_fixed))
        new = _solve(_factor(jac, "algebraic subsystem"), b, "algebraic subsystem")
        delta = float(np.max(np.abs(new - sub)))
        sub, v_prev = new, v_lim
        if delta <= NEWTON_TOL * (1.0 + float(np.max(np.abs(sub)))) and not np.any(active):
            out = x.copy()
            out[rows] = sub
            return out, it, delta
    raise NewtonDivergence("initial-condition Newton did not converge", step=0,
                           norm=float(np.max(np.abs(sub))))


def dc_operating_point(system: MnaSystem, u: np.ndarray | None = None) -> np.ndarray:
    """Steady state ``G x + F(x) = B u`` (capacitors open, inductors shorted)."""
    u = system.u_initial() if u is None else np.asarray(u, dtype=float)
    rhs = system.b_mat @ u
    g = system.g_mat.tocsc()
    if system.nonlinear is None:
        return _solve(_factor(g, "DC system"), rhs, "DC system")
    x, _, _ = _newton(g, rhs, np.zeros(system.n), system.nonlinear, 0, "DC system")
    return x


def transient(
    system: MnaSystem,
    dt: float,
    steps: int,
    x0: np.ndarray | None = None,
    *,
    t0: float = 0.0,
    consistent: bool = True,
    keep_state: bool = False,
    keep_updates: bool = False,
) -> TransientResult:
    """Integrate ``C x' + G x + F(x) = B u`` with the trapezoidal rule.

    ``x0`` defaults to zero (or the DC operating point for systems flagged
    ``start_from_dc``). With ``consistent`` the storage-free unknowns of the
    start vector are re-solved at ``t0`` so sources switching at ``t0`` do
    not inject a spurious alternating component.
    """
    if not (math.isfinite(dt) and dt > 0):
        raise InvalidInput(f"dt must be positive, got {dt}")
    if isinstance(steps, bool) or int(steps) != steps or steps < 1:
        raise InvalidInput(f"steps must be a positive integer, got {steps}")
    steps = int(steps)
    n = system.n
    if x0 is None:
        x = dc_operating_point(system) if system.start_from_dc else np.zeros(n)
    else:
        x = np.asarray(x0, dtype=float).copy()
        if x.shape != (n,):
            raise InvalidInput(f"x0 must have length {n}")
    if consistent:
        x = consistent_state(system, x, t0)

    c = system.c_mat
    g = system.g_mat
    a_lhs = ((2.0 / dt) * c + g).tocsc()
    a_rhs = ((2.0 / dt) * c - g).tocsr()
    bmat = system.b_mat
    bank = system.nonlinear

    ys = np.empty((system.a_mat.shape[0], steps + 1))
    ys[:, 0] = system.a_mat @ x
    states = np.empty((n, steps + 1)) if keep_state else None
    if states is not None:
        states[:, 0] = x
    iters = np.zeros(steps, dtype=int) if bank is not None else None
    updates = [] if (bank is not None and keep_updates) else None

    u_prev = system.u(t0)
    if bank is None:
        lu = _factor(a_lhs, "trapezoidal iteration matrix")
        for m in range(steps):
            u = system.u(t0 + (m + 1) * dt)
            x = _solve(lu, a_rhs @ x + bmat @ (u + u_prev), "trapezoidal step")
            u_prev = u
            ys[:, m + 1] = system.a_mat @ x
            if states is not None:
                states[:, m + 1] = x
    else:
        f_prev, _ = bank.evaluate(x)
        for m in range(steps):
            u = system.u(t0 + (m + 1) * dt)
            rhs = a_rhs @ x - f_prev + bmat @ (u + u_prev)
            x, it, norms = _newton(a_lhs, rhs, x, bank, m + 1, "trapezoidal Newton matrix")
            iters[m] = it
            if updates is not None:
                updates.append(norms)
            f_prev, _ = bank.evaluate(x)
            u_prev = u
            ys[:, m + 1] = system.a_mat @ x
            if states is not None:
                states[:, m + 1] = x

    if not np.all(np.isfinite(ys)):
        raise SingularSystem("transient produced non-finite values")
    snaps = SnapshotSet(system.output_names, dt, ys, t0)
    return TransientResult(snaps, dt, states, iters, updates)


def simulate(netlist, dt: float | None = None, steps: int | None = None,
             preset_name: str | None = None, **kwargs) -> TransientResult:
    """Build and integrate a netlist; missing ``dt``/``steps`` come from the preset."""
    if dt is None or steps is None:
        if preset_name is None:
            raise InvalidInput("dt and steps are required without a preset")
        d_dt, d_steps = preset_sim_defaults(preset_name)
        dt = d_dt if dt is None else dt
        steps = d_steps if steps is None else steps
    return transient(build(netlist), dt, steps, **kwargs)
