import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from hodmd import circuit
from hodmd.circuit import (
    DiodeModel,
    LadderNetlist,
    SourceWaveform,
    Stamper,
    build,
    build_ladder,
    dc_operating_point,
    diode_current,
    pnjlim,
    preset,
    transient,
)
from hodmd.circuit.transient import _newton
from hodmd.dmd import fit
from hodmd.errors import (
    InvalidInput,
    NewtonDivergence,
    ParseError,
    SingularSystem,
    UnknownPreset,
)
from hodmd.snapshots import SnapshotSet, make_embedded_pair

VT = 0.02585
ISAT = 1e-14


# diode model

def test_diode_zero_bias():
    assert diode_current(0.0, ISAT, VT)[0] == 0.0


def test_diode_unit_saturation():
    i, _ = diode_current(VT * math.log(2), ISAT, VT)
    assert i == pytest.approx(ISAT, rel=1e-12)


@pytest.mark.parametrize("v", [-0.5, 0.0, 0.3, 0.6, 0.8, 2.1, 5.0])
def test_diode_derivative_matches_finite_difference(v):
    h = 1e-7
    fd = (diode_current(v + h, ISAT, VT)[0] - diode_current(v - h, ISAT, VT)[0]) / (2 * h)
    assert diode_current(v, ISAT, VT)[1] == pytest.approx(fd, rel=1e-6)


def test_diode_clamp_is_finite_and_continuous():
    v_edge = 80 * VT
    lo = diode_current(v_edge * (1 - 1e-12), ISAT, VT)[0]
    hi = diode_current(v_edge * (1 + 1e-12), ISAT, VT)[0]
    assert hi == pytest.approx(lo, rel=1e-9)
    i, g = diode_current(1e3, ISAT, VT)
    assert np.isfinite(i) and np.isfinite(g)


def test_pnjlim_limits_large_forward_steps():
    vcrit = circuit.critical_voltage(ISAT, VT)
    out, active = pnjlim(np.array([5.0, 0.1, 0.75]), np.array([0.7, 0.09, 0.74]), VT, vcrit)
    assert active.tolist() == [True, False, False]
    assert 0.7 < out[0] < 0.9
    assert out[1] == 0.1 and out[2] == 0.75


# sources

def test_step_source_switches_at_t_step():
    w = SourceWaveform.step(0.0, 5.0, 1e-3)
    assert w.value(0.0) == 0.0 and w.value(1e-3) == 5.0 and w.initial_value() == 0.0


def test_square_source_shape():
    w = SourceWaveform.square(0.0, 5.0, t_high=1e-9, t_rise=0.1e-9, t_fall=0.1e-9, period=2e-9)
    t = np.array([0.0, 0.05e-9, 0.5e-9, 1.15e-9, 1.5e-9, 2.05e-9])
    np.testing.assert_allclose(w.value(t), [0.0, 2.5, 5.0, 2.5, 0.0, 2.5], atol=1e-9)


def test_square_source_needs_room_in_period():
    with pytest.raises(InvalidInput):
        SourceWaveform.square(0, 1, t_high=1.0, t_rise=0.5, t_fall=0.5, period=2.0)


def test_table_and_sine_sources():
    tab = SourceWaveform.table([0.0, 1.0, 2.0], [0.0, 2.0, 0.0])
    assert tab.value(0.5) == 1.0 and tab.value(5.0) == 0.0
    with pytest.raises(InvalidInput):
        SourceWaveform.table([0.0, 0.0], [1.0, 2.0])
    sine = SourceWaveform.sine(2.0, 0.25, offset=1.0)
    assert sine.value(1.0) == pytest.approx(3.0)


def test_source_round_trip():
    w = SourceWaveform.square(0.0, 5.0, 1e-9, 1e-10, 1e-10, 2e-9)
    assert SourceWaveform.from_dict(w.to_dict()) == w


# assembly

def test_one_section_ladder_stamps():
    net = LadderNetlist(1, 1.0, 1.0, 1.0, SourceWaveform.step(0.0, 1.0))
    sys_ = build_ladder(net)
    assert sys_.n == 5
    assert sys_.unknown_names == ("v(in)", "v(m1)", "v(n1)", "i(L1)", "i(Vin)")
    # hand-assembled: rows in, m1, n1 (KCL), L1 branch, Vin branch
    g = np.array([
        [1, -1, 0, 0, 1],
        [-1, 1, 0, 1, 0],
        [0, 0, 0, -1, 0],
        [0, -1, 1, 0, 0],
        [-1, 0, 0, 0, 0],
    ], dtype=float)
    c = np.diag([0, 0, 1, 1, 0]).astype(float)
    np.testing.assert_array_equal(sys_.g_mat.toarray(), g)
    np.testing.assert_array_equal(sys_.c_mat.toarray(), c)
    np.testing.assert_array_equal(sys_.b_mat[:, 0], [0, 0, 0, 0, -1])
    np.testing.assert_array_equal(sys_.a_mat, [[0, 0, 1, 0, 0]])


def test_two_section_storage_stamps():
    sys_ = build_ladder(LadderNetlist(2, 1.0, 2e-9, 3e-12, SourceWaveform.dc(1.0)))
    assert sys_.n == 2 * 2 + 1 + 2 + 1
    diag = sys_.c_mat.diagonal()
    assert np.sum(diag == 3e-12) == 2 and np.sum(diag == 2e-9) == 2
    assert sys_.c_mat.nnz == 4


def test_incidence_block_structure():
    sys_ = build_ladder(LadderNetlist(3, 2.0, 1.0, 1.0, SourceWaveform.dc(1.0)))
    g = sys_.g_mat.toarray()
    nv = 2 * 3 + 1
    e = g[:nv, nv:]
    np.testing.assert_array_equal(g[nv:, :nv], -e.T)
    assert set(np.unique(e)) <= {-1.0, 0.0, 1.0}
    np.testing.assert_array_equal(g[nv:, nv:], 0)


def test_kcl_with_equal_node_voltages():
    # equal node voltages and zero branch currents: resistor stamps cancel
    sys_ = build_ladder(LadderNetlist(4, 1.0, 1.0, 1.0, SourceWaveform.dc(1.0)))
    x = np.zeros(sys_.n)
    x[: 2 * 4 + 1] = 1.7
    np.testing.assert_allclose((sys_.g_mat @ x)[: 2 * 4 + 1], 0.0, atol=1e-15)


def test_diode_stamp_direction():
    st_ = Stamper()
    st_.voltage_source("a", "0", SourceWaveform.dc(0.7))
    st_.diode("a", "k", DiodeModel())
    st_.resistor("k", "0", 1.0)
    sys_ = st_.build(["k"])
    f, jac = sys_.nonlinear.evaluate(np.array([0.7, 0.0, 0.0]))
    i = diode_current(0.7, ISAT, VT)[0]
    np.testing.assert_allclose(f, [i, -i, 0.0])
    assert jac[0, 0] > 0 and jac[0, 1] < 0


# transient

def rc_system():
    st_ = Stamper()
    st_.voltage_source("in", "0", SourceWaveform.step(0.0, 1.0, 0.0))
    st_.resistor("in", "out", 1.0)
    st_.capacitor("out", "0", 1.0)
    return st_.build(["out"])


def rc_error(dt):
    res = transient(rc_system(), dt, round(1.0 / dt))
    t = res.snapshots.times
    y = res.snapshots.samples[0]
    return np.max(np.abs(y - (1 - np.exp(-t)))), abs(y[-1] - (1 - math.exp(-1)))


def test_rc_analytic():
    _, end = rc_error(1e-3)
    assert end <= 1e-6


def test_rc_second_order():
    e1, _ = rc_error(1e-3)
    e2, _ = rc_error(5e-4)
    assert 3.5 <= e1 / e2 <= 4.5


def test_zero_input_zero_state():
    net = LadderNetlist(5, 1.0, 1e-9, 1e-12, SourceWaveform.dc(0.0))
    res = transient(build(net), 1e-11, 200)
    assert np.all(res.snapshots.samples == 0.0)


def test_snapshot_count_includes_initial_state():
    res = transient(rc_system(), 0.01, 17, keep_state=True)
    assert res.snapshots.q == 17 and res.full_state.shape == (3, 18)


def test_consistent_start_uses_source_at_t0():
    res = transient(rc_system(), 0.01, 1, keep_state=True)
    assert res.full_state[0, 0] == 1.0  # v(in) follows the step at t = 0
    assert res.full_state[1, 0] == 0.0  # capacitor starts discharged


def test_singular_system():
    st_ = Stamper()
    st_.voltage_source("a", "0", SourceWaveform.dc(1.0))
    st_.voltage_source("a", "0", SourceWaveform.dc(2.0))
    st_.resistor("a", "0", 1.0)
    with pytest.raises(SingularSystem):
        transient(st_.build(["a"]), 1e-3, 5)


def test_newton_divergence_reports_step():
    sys_ = build(preset("nltl", 3))
    a = ((2 / 5e-11) * sys_.c_mat + sys_.g_mat).tocsc()
    rhs = np.zeros(sys_.n)
    rhs[-1] = -10.0  # source row: drive 10 V in one jump
    with pytest.raises(NewtonDivergence) as info:
        _newton(a, rhs, np.zeros(sys_.n), sys_.nonlinear, 7, "test", max_iter=2)
    assert info.value.step == 7


def test_transient_argument_checks():
    with pytest.raises(InvalidInput):
        transient(rc_system(), -1.0, 10)
    with pytest.raises(InvalidInput):
        transient(rc_system(), 1e-3, 0)
    with pytest.raises(InvalidInput):
        transient(rc_system(), 1e-3, 3, x0=np.zeros(2))


def stored_energy(sys_, states):
    # 1/2 x^T C x covers both capacitor charge and inductor flux
    c = sys_.c_mat
    return 0.5 * np.einsum("ij,ij->j", states, c @ states)


def test_energy_non_increasing_with_zero_source():
    net = LadderNetlist(6, 0.5, 1e-9, 1e-12, SourceWaveform.dc(0.0))
    sys_ = build(net)
    x0 = np.zeros(sys_.n)
    caps = [sys_.unknown_names.index(f"v(n{j})") for j in range(1, 7)]
    x0[caps] = np.linspace(1.0, -0.5, 6)
    res = transient(sys_, 2e-12, 3000, x0, keep_state=True)
    e = stored_energy(sys_, res.full_state)
    assert np.all(np.diff(e) <= 1e-9 * e[:-1])
    assert e[-1] < 0.5 * e[0]


def test_passivity_linear_line():
    net = preset("linear-line", 60)
    res = transient(build(net), 2e-10, 1500)
    # the open far end reflects the step (up to 2x) and the lumped cells ring
    # on top of that, so allow an overshoot factor of 1.5 over the source
    assert np.max(np.abs(res.snapshots.samples)) <= 5.0 * (1 + 1.5)


def test_fitted_modes_do_not_grow_on_desk_scale_line():
    dt, steps = circuit.preset_sim_defaults("linear-line")
    y = transient(build(preset("linear-line", 1000)), dt, steps).snapshots
    model = fit(make_embedded_pair(y.window(0, 401), 60))
    assert np.max(np.abs(model.lam)) <= 1 + 1e-6


def test_newton_quadratic_tail():
    res = transient(build(preset("nltl", 20)), 5e-11, 300, keep_updates=True)
    assert res.newton_iters.max() <= 20
    checked = 0
    for norms in res.newton_updates:
        # only the pure-Newton tail: skip steps that converged in under 4 updates
        # and updates already at round-off level
        tail = norms[norms > 1e-13]
        if tail.size < 4:
            continue
        first = tail[1] / tail[0]
        last = tail[-1] / tail[-2]
        assert last <= 10 * first**2 or last <= 1e-2
        checked += 1
    assert checked > 0


def test_dc_operating_point_mesh():
    net = preset("grid-mesh", 6)
    sys_ = build(net)
    x = dc_operating_point(sys_)
    nodes = [i for i, n in enumerate(sys_.unknown_names) if n.startswith("v(g")]
    np.testing.assert_allclose(x[nodes], net.vdd, atol=1e-12)


# presets

def test_preset_linear_line():
    net = preset("linear-line", 1000)
    assert net.n_sections == 1000 and net.diode is None
    assert net.source.kind == "step"
    assert net.source.params["v0"] == 0.0 and net.source.params["v1"] == 5.0


def test_preset_nltl():
    net = preset("nltl", 100)
    p = net.source.params
    assert net.source.kind == "square" and net.diode is not None
    assert p["t_rise"] == p["t_fall"] == pytest.approx(0.1e-9)
    assert p["period"] == pytest.approx(2e-9) and p["v_high"] == 5.0


def test_preset_grid_mesh():
    net = preset("grid-mesh", 50)
    assert isinstance(net, circuit.MeshNetlist)
    assert len(net.outputs) == 1 and len(net.loads) >= 1
    assert all(ld.waveform.kind == "step" for ld in net.loads)
    assert build(net).a_mat.shape[0] == 1


def test_preset_unknown():
    with pytest.raises(UnknownPreset):
        preset("hspice-deck", 3)


def test_preset_overrides_and_checks():
    assert preset("linear-line", 3, r_ohm=0.1).r_ohm == 0.1
    with pytest.raises(InvalidInput):
        preset("linear-line", 0)
    with pytest.raises(InvalidInput):
        preset("linear-line", 3, bogus=1.0)


@pytest.mark.parametrize("name", ["linear-line", "nltl", "grid-mesh"])
def test_netlist_json_round_trip(tmp_path, name):
    net = preset(name, 4)
    circuit.save_netlist(net, tmp_path / "n.json")
    assert circuit.load_netlist(tmp_path / "n.json") == net


def test_netlist_json_errors(tmp_path):
    (tmp_path / "bad.json").write_text('{"type": "ladder", "n_sections": 2}')
    with pytest.raises(ParseError):
        circuit.load_netlist(tmp_path / "bad.json")
    with pytest.raises(InvalidInput):
        LadderNetlist(2, -1.0, 1.0, 1.0, SourceWaveform.dc(1.0))


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 5), st.floats(0.1, 10.0), st.floats(0.1, 10.0), st.floats(0.1, 10.0))
def test_unknown_count_property(k, r, l, c):
    sys_ = build_ladder(LadderNetlist(k, r, l, c, SourceWaveform.dc(1.0)))
    assert sys_.n == (2 * k + 1) + k + 1


def test_state_space_eigenvalues_match_hodmd():
    net = LadderNetlist(3, 0.5, 1e-9, 1e-12, SourceWaveform.dc(0.0))
    sys_ = build(net)
    w = sla.eig(-sys_.g_mat.toarray(), sys_.c_mat.toarray(), right=False)
    w = w[np.isfinite(w)]
    caps = [sys_.unknown_names.index(f"v(n{j})") for j in range(1, 4)]
    x0 = np.zeros(sys_.n)
    x0[caps] = [1.0, 0.4, -0.3]
    res = transient(sys_, 1e-13, 2000, x0, keep_state=True)
    snaps = SnapshotSet(["a", "b", "c"], 1e-13, res.full_state[caps])
    model = fit(make_embedded_pair(snaps, 4), w.size)
    for ev in w:
        assert np.min(np.abs(model.omega - ev)) / abs(ev) <= 1e-4
