"""Modified nodal analysis assembly.

Unknowns are ordered node voltages, then inductor currents, then voltage
source currents. The system is ``C x' + G x + F(x) = B u(t)`` with output
``y = A x``; ``G`` has the block form ``[[N, E], [-E^T, 0]]`` where ``E``
carries the +/-1 branch incidences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..errors import InvalidInput
from .devices import critical_voltage, diode_current, pnjlim
from .netlist import DiodeModel, LadderNetlist, MeshNetlist, SourceWaveform

GROUND = "0"


@dataclass(frozen=True)
class DiodeBank:
    """All diodes of a circuit, evaluated together.

    ``anode``/``cathode`` hold unknown indices, ``-1`` for ground.
    """

    anode: np.ndarray
    cathode: np.ndarray
    i_sat: np.ndarray
    v_thermal: np.ndarray
    n: int
    incidence: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        rows, cols, vals = [], [], []
        for k, (a, c) in enumerate(zip(self.anode, self.cathode)):
            if a >= 0:
                rows.append(k), cols.append(a), vals.append(1.0)
            if c >= 0:
                rows.append(k), cols.append(c), vals.append(-1.0)
        d = sp.csr_matrix((vals, (rows, cols)), shape=(self.anode.size, self.n))
        object.__setattr__(self, "incidence", d)

    @property
    def v_crit(self) -> np.ndarray:
        return np.array([critical_voltage(i, v) for i, v in zip(self.i_sat, self.v_thermal)])

    def voltages(self, x: np.ndarray) -> np.ndarray:
        return self.incidence @ x

    def currents(self, v: np.ndarray):
        return diode_current(v, self.i_sat, self.v_thermal)

    def evaluate(self, x: np.ndarray):
        """``F(x)`` and its Jacobian as a sparse matrix."""
        i, g = self.currents(self.voltages(x))
        d = self.incidence
        return d.T @ i, (d.T @ sp.diags(g) @ d).tocsc()

    def limit(self, v_new: np.ndarray, v_old: np.ndarray):
        return pnjlim(v_new, v_old, self.v_thermal, self.v_crit)


@dataclass(frozen=True)
class MnaSystem:
    c_mat: sp.csc_matrix
    g_mat: sp.csc_matrix
    b_mat: np.ndarray
    a_mat: np.ndarray
    inputs: tuple[SourceWaveform, ...]
    node_names: tuple[str, ...]
    unknown_names: tuple[str, ...]
    output_names: tuple[str, ...]
    nonlinear: DiodeBank | None = None
    start_from_dc: bool = False

    @property
    def n(self) -> int:
        return self.g_mat.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.b_mat.shape[1]

    def u(self, t: float) -> np.ndarray:
        return np.array([w.value(t) for w in self.inputs], dtype=float)

    def u_initial(self) -> np.ndarray:
        return np.array([w.initial_value() for w in self.inputs], dtype=float)

    def algebraic_indices(self) -> np.ndarray:
        """Unknowns with no storage term (zero row and column of ``C``)."""
        c = abs(self.c_mat).tocsr()
        row = np.asarray(c.sum(axis=1)).ravel()
        col = np.asarray(c.sum(axis=0)).ravel()
        return np.flatnonzero((row == 0) & (col == 0))


class Stamper:
    """Incremental netlist-to-MNA assembler."""

    def __init__(self):
        self._nodes: dict[str, int] = {}
        self._res: list[tuple[str, str, float]] = []
        self._cap: list[tuple[str, str, float]] = []
        self._ind: list[tuple[str, str, float, str]] = []
        self._vsrc: list[tuple[str, str, int, str]] = []
        self._isrc: list[tuple[str, str, int]] = []
        self._diodes: list[tuple[str, str, DiodeModel]] = []
        self._inputs: list[SourceWaveform] = []

    def node(self, name: str) -> str:
        if name != GROUND and name not in self._nodes:
            self._nodes[name] = len(self._nodes)
        return name

    def _input(self, w: SourceWaveform) -> int:
        self._inputs.append(w)
        return len(self._inputs) - 1

    @staticmethod
    def _check(kind: str, value: float):
        if not (np.isfinite(value) and value > 0):
            raise InvalidInput(f"{kind} value must be positive, got {value}")

    def resistor(self, a: str, b: str, ohms: float):
        self._check("resistor", ohms)
        self._res.append((self.node(a), self.node(b), ohms))

    def capacitor(self, a: str, b: str, farads: float):
        self._check("capacitor", farads)
        self._cap.append((self.node(a), self.node(b), farads))

    def inductor(self, a: str, b: str, henries: float, name: str | None = None):
        self._check("inductor", henries)
        self._ind.append((self.node(a), self.node(b), henries, name or f"L{len(self._ind)}"))

    def voltage_source(self, a: str, b: str, waveform: SourceWaveform, name: str | None = None):
        """Source forcing ``v(a) - v(b) = u``."""
        self._vsrc.append((self.node(a), self.node(b), self._input(waveform),
                           name or f"V{len(self._vsrc)}"))

    def current_source(self, a: str, b: str, waveform: SourceWaveform):
        """Current ``u`` flowing from ``a`` through the source into ``b``."""
        self._isrc.append((self.node(a), self.node(b), self._input(waveform)))

    def diode(self, anode: str, cathode: str, model: DiodeModel):
        self._diodes.append((self.node(anode), self.node(cathode), model))

    def build(self, outputs: list[str], start_from_dc: bool = False) -> MnaSystem:
        nn = len(self._nodes)
        n = nn + len(self._ind) + len(self._vsrc)
        idx = self._nodes
        gi, gj, gv = [], [], []
        ci, cj, cv = [], [], []

        def pair(rows, cols, vals, a, b, val):
            for r, sr in ((a, 1.0), (b, -1.0)):
                for c, sc in ((a, 1.0), (b, -1.0)):
                    if r != GROUND and c != GROUND:
                        rows.append(idx[r]), cols.append(idx[c]), vals.append(sr * sc * val)

        for a, b, ohms in self._res:
            pair(gi, gj, gv, a, b, 1.0 / ohms)
        for a, b, farads in self._cap:
            pair(ci, cj, cv, a, b, farads)

        def branch(k, a, b):
            # KCL: branch current leaves a, enters b; branch row: -v(a) + v(b)
            for node, sign in ((a, 1.0), (b, -1.0)):
                if node != GROUND:
                    gi.extend((idx[node], k)), gj.extend((k, idx[node]))
                    gv.extend((sign, -sign))

        for j, (a, b, henries, _) in enumerate(self._ind):
            k = nn + j
            branch(k, a, b)
            ci.append(k), cj.append(k), cv.append(henries)

        b_mat = np.zeros((n, len(self._inputs)))
        for j, (a, b, src, _) in enumerate(self._vsrc):
            k = nn + len(self._ind) + j
            branch(k, a, b)
            # branch row reads -v(a) + v(b) = -u
            b_mat[k, src] = -1.0
        for a, b, src in self._isrc:
            if a != GROUND:
                b_mat[idx[a], src] -= 1.0
            if b != GROUND:
                b_mat[idx[b], src] += 1.0

        g_mat = sp.csc_matrix((gv, (gi, gj)), shape=(n, n))
        c_mat = sp.csc_matrix((cv, (ci, cj)), shape=(n, n))
        g_mat.sum_duplicates()
        c_mat.sum_duplicates()

        node_names = tuple(idx)
        unknown_names = (
            tuple(f"v({nm})" for nm in node_names)
            + tuple(f"i({nm})" for *_, nm in self._ind)
            + tuple(f"i({nm})" for *_, nm in self._vsrc)
        )
        a_mat = np.zeros((len(outputs), n))
        for r, name in enumerate(outputs):
            if name not in idx:
                raise InvalidInput(f"output node {name!r} does not exist")
            a_mat[r, idx[name]] = 1.0

        bank = None
        if self._diodes:
            bank = DiodeBank(
                anode=np.array([idx[a] if a != GROUND else -1 for a, _, _ in self._diodes]),
                cathode=np.array([idx[c] if c != GROUND else -1 for _, c, _ in self._diodes]),
                i_sat=np.array([m.i_sat for *_, m in self._diodes]),
                v_thermal=np.array([m.v_thermal for *_, m in self._diodes]),
                n=n,
            )
        return MnaSystem(
            c_mat=c_mat, g_mat=g_mat, b_mat=b_mat, a_mat=a_mat,
            inputs=tuple(self._inputs), node_names=node_names,
            unknown_names=unknown_names, output_names=tuple(outputs),
            nonlinear=bank, start_from_dc=start_from_dc,
        )


def build_ladder(netlist: LadderNetlist) -> MnaSystem:
    """Source node ``in``; cell ``j`` is ``R: n{j-1} -> m{j}``, ``L: m{j} -> n{j}``,
    ``C: n{j} -> ground`` (with ``n0 = in``) plus the optional shunt diode."""
    st = Stamper()
    st.node("in")
    for j in range(1, netlist.n_sections + 1):
        prev = "in" if j == 1 else f"n{j - 1}"
        st.resistor(prev, f"m{j}", netlist.r_ohm)
        st.inductor(f"m{j}", f"n{j}", netlist.l_henry, name=f"L{j}")
        st.capacitor(f"n{j}", GROUND, netlist.c_farad)
        if netlist.diode is not None:
            st.diode(f"n{j}", GROUND, netlist.diode)
    st.voltage_source("in", GROUND, netlist.source, name="Vin")
    return st.build([f"n{netlist.output_index + 1}"])


def build_mesh(netlist: MeshNetlist) -> MnaSystem:
    st = Stamper()
    size = netlist.size

    def g(r, c):
        return f"g{r}_{c}"

    for r in range(size):
        for c in range(size):
            st.node(g(r, c))
    for r in range(size):
        for c in range(size):
            if c + 1 < size:
                st.resistor(g(r, c), g(r, c + 1), netlist.r_seg)
            if r + 1 < size:
                st.resistor(g(r, c), g(r + 1, c), netlist.r_seg)
            st.capacitor(g(r, c), GROUND, netlist.c_node)
    corners = [(0, 0), (0, size - 1), (size - 1, 0), (size - 1, size - 1)]
    for k, (r, c) in enumerate(corners):
        st.resistor("vdd", f"pad{k}", netlist.r_pad)
        st.inductor(f"pad{k}", g(r, c), netlist.l_pad, name=f"Lpad{k}")
    st.voltage_source("vdd", GROUND, SourceWaveform.dc(netlist.vdd), name="Vdd")
    for ld in netlist.loads:
        st.current_source(g(ld.row, ld.col), GROUND, ld.waveform)
    return st.build([g(r, c) for r, c in netlist.outputs], start_from_dc=True)


def build(netlist) -> MnaSystem:
    if isinstance(netlist, LadderNetlist):
        return build_ladder(netlist)
    if isinstance(netlist, MeshNetlist):
        return build_mesh(netlist)
    raise InvalidInput(f"cannot build {type(netlist).__name__}")
