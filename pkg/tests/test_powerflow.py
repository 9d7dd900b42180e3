import math

import numpy as np
import pytest
from scipy import sparse

import elgrid as eg
from elgrid import networks
from elgrid.powerflow import PowerFlowError, newton_raphson

from conftest import power_balance_error

LINE = "NA2XS2Y 1x185 RM/25 12/20 kV"


def two_bus_closed_form(p_pu, x_pu):
    # |V|^4 - |V|^2 + (P x)^2 = 0 for a lossless line and unity power factor
    return math.sqrt((1 + math.sqrt(1 - 4 * (p_pu * x_pu) ** 2)) / 2)


@pytest.mark.parametrize("p_kw,x", [(1000.0, 0.1), (500.0, 0.2), (2000.0, 0.05)])
def test_two_bus_matches_closed_form(p_kw, x):
    net = networks.two_bus(p_load_kw=p_kw, x_pu=x)
    res = eg.runpp(net)
    assert res.converged
    assert res.bus.vm_pu[1] == pytest.approx(two_bus_closed_form(p_kw / 1000.0, x), abs=1e-8)
    delta = math.asin(p_kw / 1000.0 * x / res.bus.vm_pu[1])
    assert math.radians(res.bus.va_degree[1]) == pytest.approx(-delta, abs=1e-8)


def test_two_bus_losses_equal_i2z():
    net = networks.two_bus(x_pu=0.1)
    res = eg.runpp(net)
    i_pu = res.line.i_ka[0] / (1000.0 / (math.sqrt(3) * 10.0)) * 1000.0
    assert res.line.ql_kvar[0] == pytest.approx(i_pu ** 2 * 0.1 * 1000.0, abs=1e-7)
    assert res.line.pl_kw[0] == pytest.approx(0.0, abs=1e-10)


def test_no_load_fixed_point():
    net = eg.create_empty_network()
    b = [eg.create_bus(net, 10.0) for _ in range(4)]
    eg.create_ext_grid(net, b[0], va_degree=12.0)
    for u, v in zip(b, b[1:]):
        eg.create_line_from_parameters(net, u, v, 1.0, 0.1, 0.2, 0.0, 1.0)
    res = eg.runpp(net)
    assert res.iterations == 0
    assert np.all(res.bus.vm_pu == 1.0) and np.all(res.bus.va_degree == 12.0)
    assert res.line.pl_kw.abs().max() == 0.0


def test_slack_voltage_equals_set_point(example_grids):
    for name, net in example_grids.items():
        res = eg.runpp(net)
        for eg_rec in net.ext_grid.values():
            if eg_rec["in_service"]:
                assert res.bus.vm_pu[eg_rec["bus"]] == eg_rec["vm_pu"], name


def test_power_balance_on_examples(example_grids):
    for name, net in example_grids.items():
        res = eg.runpp(net)
        assert res.converged, name
        assert power_balance_error(net) <= 10 * 1e-8 * net.sn_kva, name


def test_non_convergence_is_reported_not_raised():
    net = networks.two_bus(p_load_kw=6000.0, x_pu=0.1)  # beyond the nose of the PV curve
    res = eg.runpp(net)
    assert not res.converged
    assert res.bus.vm_pu.isna().all()


def test_no_slack_is_an_error():
    net = eg.create_empty_network()
    eg.create_bus(net, 10.0)
    with pytest.raises(eg.NetworkError, match="slack"):
        eg.runpp(net)


def test_options_validation():
    with pytest.raises(ValueError):
        eg.PFOptions(tol_pu=0)
    with pytest.raises(ValueError):
        eg.PFOptions(max_iter=0)
    with pytest.raises(ValueError):
        eg.PFOptions(init="warm")
    assert eg.PFOptions().max_iter == 10 and eg.PFOptions(algorithm="bfsw").max_iter == 100


def test_newton_raphson_starts_with_tolerance_check():
    net = networks.mv_feeder()
    res = eg.runpp(net)
    bbm = res.bbm
    pv = np.flatnonzero(bbm.bus_type == eg.bbm.PV)
    pq = np.flatnonzero(bbm.bus_type == eg.bbm.PQ)
    V, ok, it = newton_raphson(bbm.ybus(), bbm.p_pu + 1j * bbm.q_pu,
                               bbm.ip_pu + 1j * bbm.iq_pu, res.V, pv, pq)
    assert ok and it == 0 and np.array_equal(V, res.V)


def test_newton_raphson_sparse_and_dense_paths_agree():
    small = networks.mv_feeder()
    r_small = eg.runpp(small)
    b = r_small.bbm
    pv = np.flatnonzero(b.bus_type == eg.bbm.PV)
    pq = np.flatnonzero(b.bus_type == eg.bbm.PQ)
    V0 = eg.powerflow.initial_voltage(b, r_small.mapping, "flat")
    args = (b.p_pu + 1j * b.q_pu, b.ip_pu + 1j * b.iq_pu, V0, pv, pq)
    Vd, okd, _ = newton_raphson(b.ybus(), *args)
    # force the sparse branch by padding with a disconnected block of isolated buses
    n = b.n_bus
    pad = eg.powerflow.DENSE_LIMIT + 1 - n
    Y = sparse.block_diag([b.ybus(), sparse.identity(pad)], format="csr")
    ext = (np.r_[args[0], np.zeros(pad)], np.r_[args[1], np.zeros(pad)],
           np.r_[V0, np.ones(pad)])
    Vs, oks, _ = newton_raphson(Y, *ext, pv, pq)
    assert okd and oks
    assert np.allclose(Vd, Vs[:n], atol=1e-10)


def test_constant_current_fixed_point():
    # const-I load of 1 pu at a bus held at 0.95 pu by a PV source draws 0.95 pu
    net = eg.create_empty_network(sn_kva=1000.0)
    b0, b1 = eg.create_bus(net, 10.0), eg.create_bus(net, 10.0)
    eg.create_ext_grid(net, b0, vm_pu=0.95)
    eg.create_line_from_parameters(net, b0, b1, 1.0, 0.0, 1e-3, 0.0, 10.0)
    eg.create_load(net, b0, 1000.0, const_i_percent=100.0)
    eg.create_load(net, b1, 10.0)
    res = eg.runpp(net)
    assert res.load.p_kw[0] == pytest.approx(950.0, rel=1e-10)


def test_q_limit_converts_pv_to_pq():
    net = eg.create_empty_network()
    b0, b1 = eg.create_bus(net, 10.0), eg.create_bus(net, 10.0)
    eg.create_ext_grid(net, b0)
    eg.create_line(net, b0, b1, 3.0, LINE)
    eg.create_load(net, b1, 2000.0, 1500.0)
    # PSC: generating reactive power is q < 0, so q_min = 0 forbids it
    g = eg.create_gen(net, b1, -500.0, vm_pu=1.02, q_min_kvar=0.0, q_max_kvar=10000.0)
    free = eg.runpp(net)
    assert free.gen.q_kvar[g] < 0
    assert free.bus.vm_pu[b1] == pytest.approx(1.02, abs=1e-12)
    held = eg.runpp(net, enforce_q_lims=True)
    assert held.converged
    assert held.gen.q_kvar[g] == pytest.approx(0.0, abs=1e-9)
    assert held.bus.vm_pu[b1] < 1.02
    # a low set point needs absorption, which q_max = 0 forbids
    net.load[0]["q_kvar"] = -3000.0
    net.gen[g].update(vm_pu=0.99, q_min_kvar=-10000.0, q_max_kvar=0.0)
    assert eg.runpp(net).gen.q_kvar[g] > 0
    held = eg.runpp(net, enforce_q_lims=True)
    assert held.gen.q_kvar[g] == pytest.approx(0.0, abs=1e-9)
    assert held.bus.vm_pu[b1] > 0.99


def test_q_limits_inside_band_change_nothing():
    net = networks.meshed_ring()
    a = eg.runpp(net).bus.copy()
    for g in net.gen.values():
        g["q_min_kvar"], g["q_max_kvar"] = -1e9, 1e9
    b = eg.runpp(net, enforce_q_lims=True).bus
    assert np.allclose(a.values, b.values, atol=1e-12)


def test_multi_slack_voltages_held():
    net = eg.create_empty_network()
    b = [eg.create_bus(net, 10.0) for _ in range(3)]
    eg.create_ext_grid(net, b[0], vm_pu=1.02)
    eg.create_ext_grid(net, b[2], vm_pu=1.0, va_degree=-1.0)
    eg.create_line(net, b[0], b[1], 2.0, LINE)
    eg.create_line(net, b[1], b[2], 2.0, LINE)
    eg.create_load(net, b[1], 3000.0, 1000.0)
    res = eg.runpp(net)
    assert res.converged
    assert res.bus.vm_pu[b[0]] == 1.02 and res.bus.va_degree[b[2]] == -1.0
    assert res.ext_grid.p_kw.sum() < 0
    assert power_balance_error(net) < 1e-4


@pytest.mark.parametrize("init", ["flat", "dc", "results"])
def test_init_strategies_reach_same_solution(init):
    net = networks.case30()
    ref = eg.runpp(net).bus.copy()
    res = eg.runpp(net, init=init)
    assert res.converged
    assert np.allclose(res.bus.vm_pu, ref.vm_pu, atol=1e-8)
    if init == "results":
        assert res.iterations <= 1


def test_bbm_reuse_is_bit_identical(example_grids):
    net = example_grids["mv_feeder"]
    h = eg.BBMHandle(net)
    a = eg.runpp(net, handle=h).bus.copy()
    b = eg.runpp(net, handle=h).bus.copy()
    c = eg.runpp(net).bus
    assert a.equals(b) and np.array_equal(a.values, c.values)


def test_handle_follows_injection_changes():
    net = networks.mv_feeder()
    h = eg.BBMHandle(net)
    eg.runpp(net, handle=h)
    for ld in net.load.values():
        ld["p_kw"] *= 1.3
    via_handle = eg.runpp(net, handle=h).bus.copy()
    fresh = eg.runpp(net).bus
    assert np.allclose(via_handle.values, fresh.values, atol=1e-12, equal_nan=True)


def test_neglect_angles_same_magnitudes_on_radial():
    for name in ("mv_feeder", "lv_feeder", "switched_feeder"):
        net = getattr(networks, name)()
        a = eg.runpp(net).bus.vm_pu.copy()
        b = eg.runpp(net, neglect_angles=True).bus.vm_pu
        assert np.allclose(a, b, atol=1e-6, equal_nan=True), name


@pytest.mark.parametrize("name", networks.RADIAL_EXAMPLES)
def test_bfsw_matches_newton(name):
    net = getattr(networks, name)()
    nr = eg.runpp(net).bus.copy()
    bf = eg.runpp(net, algorithm="bfsw")
    assert bf.converged
    assert np.allclose(bf.bus.vm_pu, nr.vm_pu, atol=1e-6, equal_nan=True)
    assert np.allclose(bf.bus.va_degree, nr.va_degree, atol=1e-4, equal_nan=True)


def test_bfsw_no_load_single_sweep():
    net = networks.two_bus(p_load_kw=0.0)
    res = eg.runpp(net, algorithm="bfsw")
    assert res.converged and res.iterations == 1


def test_bfsw_rejects_meshed():
    net = eg.create_empty_network()
    b = [eg.create_bus(net, 10.0) for _ in range(3)]
    eg.create_ext_grid(net, b[0])
    for u, v in ((0, 1), (1, 2), (2, 0)):
        eg.create_line(net, b[u], b[v], 1.0, LINE)
    with pytest.raises(PowerFlowError, match="not radial"):
        eg.runpp(net, algorithm="bfsw")


def test_dc_power_flow_two_bus():
    net = networks.two_bus(p_load_kw=1000.0, x_pu=0.1)
    res = eg.run_dc_power_flow(net)
    assert math.radians(res.va_degree[1]) == pytest.approx(-0.1, abs=1e-12)
    assert res.branch_p_kw[("line", 0)] == pytest.approx(1000.0, abs=1e-9)


def test_dc_power_flow_zero_injection_and_radial_shifter():
    net = eg.create_empty_network()
    hv, lv = eg.create_bus(net, 10.0), eg.create_bus(net, 10.0)
    eg.create_ext_grid(net, hv, va_degree=5.0)
    eg.create_transformer_from_parameters(net, hv, lv, 1000.0, 10.0, 10.0, 4.0, 0.0,
                                          shift_degree=30.0)
    res = eg.run_dc_power_flow(net)
    assert res.branch_p_kw[("trafo", 0)] == pytest.approx(0.0, abs=1e-9)
    assert res.va_degree[lv] == pytest.approx(5.0 - 30.0)


def test_dc_power_flow_shifter_loop_circulates():
    net = eg.create_empty_network()
    hv, lv = eg.create_bus(net, 10.0), eg.create_bus(net, 10.0)
    eg.create_ext_grid(net, hv)
    eg.create_transformer_from_parameters(net, hv, lv, 1000.0, 10.0, 10.0, 4.0, 0.0,
                                          shift_degree=1.0)
    eg.create_transformer_from_parameters(net, hv, lv, 1000.0, 10.0, 10.0, 4.0, 0.0)
    res = eg.run_dc_power_flow(net)
    p0, p1 = res.branch_p_kw[("trafo", 0)], res.branch_p_kw[("trafo", 1)]
    assert p0 == pytest.approx(-p1, abs=1e-9) and abs(p0) > 0


def test_dc_power_flow_island_without_reference():
    net = eg.create_empty_network()
    b = [eg.create_bus(net, 10.0) for _ in range(4)]
    eg.create_ext_grid(net, b[0])
    eg.create_line(net, b[0], b[1], 1.0, LINE)
    eg.create_line(net, b[2], b[3], 1.0, LINE)
    res = eg.run_dc_power_flow(net)
    assert math.isnan(res.va_degree[b[2]])


def test_isolated_buses_are_nan_and_match_topology(example_grids):
    net = example_grids["switched_feeder"]
    res = eg.runpp(net)
    iso = set(res.bus.index[res.bus.vm_pu.isna()])
    assert iso == eg.unsupplied_buses(net) and iso


def test_fused_buses_identical_results():
    net = eg.create_empty_network()
    b = [eg.create_bus(net, 10.0) for _ in range(3)]
    eg.create_ext_grid(net, b[0])
    eg.create_line(net, b[0], b[1], 2.0, LINE)
    eg.create_switch(net, b[1], b[2], "bus")
    eg.create_load(net, b[2], 800.0, 200.0)
    res = eg.runpp(net)
    assert res.bus.vm_pu[b[1]] == res.bus.vm_pu[b[2]]
    assert res.bus.va_degree[b[1]] == res.bus.va_degree[b[2]]


def test_open_line_end_current():
    def feeder(c_nf):
        net = eg.create_empty_network()
        b = [eg.create_bus(net, 10.0) for _ in range(3)]
        eg.create_ext_grid(net, b[0])
        eg.create_line(net, b[0], b[1], 1.0, LINE)
        ln = eg.create_line_from_parameters(net, b[1], b[2], 2.0, 0.16, 0.1, c_nf, 0.36)
        eg.create_switch(net, b[2], ln, "line", closed=False)
        eg.create_load(net, b[1], 500.0)
        return net, ln

    net, ln = feeder(0.0)
    res = eg.runpp(net)
    assert res.line.i_to_ka[ln] == 0.0 and res.line.i_from_ka[ln] == 0.0
    net, ln = feeder(300.0)
    res = eg.runpp(net)
    assert res.line.i_to_ka[ln] == 0.0 or res.line.i_to_ka[ln] < res.line.i_from_ka[ln]
    assert res.line.i_from_ka[ln] > 0


def test_loading_definition():
    net = eg.create_empty_network()
    b0, b1 = eg.create_bus(net, 10.0), eg.create_bus(net, 10.0)
    eg.create_ext_grid(net, b0)
    ln = eg.create_line_from_parameters(net, b0, b1, 1.0, 0.1, 0.1, 0.0, 1.0, parallel=2,
                                        df=0.5)
    eg.create_load(net, b1, 3000.0)
    res = eg.runpp(net)
    assert res.line.loading_percent[ln] == pytest.approx(res.line.i_ka[ln] / 1.0 * 100.0)
    assert res.line.i_ka[ln] == max(res.line.i_from_ka[ln], res.line.i_to_ka[ln])


def test_trafo3w_loading_is_max_of_legs(example_grids):
    net = example_grids["three_winding"]
    res = eg.runpp(net)
    assert res.trafo3w.loading_percent.notna().all()
    assert (res.trafo3w.loading_percent > 0).all()


def test_zip_load_powers_at_solution():
    net = networks.lv_feeder()
    res = eg.runpp(net)
    for i, ld in net.load.items():
        v = res.bus.vm_pu[ld["bus"]]
        z, c = ld["const_z_percent"] / 100, ld["const_i_percent"] / 100
        p_nom = ld["p_kw"] * ld["scaling"]
        expected = p_nom * ((1 - z - c) + c * v + z * v * v)
        assert res.load.p_kw[i] == pytest.approx(expected, rel=1e-8)


def test_golden_case_states():
    for name in ("case9", "case14", "case30"):
        net = networks.load_case(name)
        res = eg.runpp(net)
        ref = networks.reference_state(name)
        assert np.max(np.abs(res.bus.vm_pu.values - ref.vm_pu.values)) < 1e-4, name
        assert np.max(np.abs(res.bus.va_degree.values - ref.va_degree.values)) < 1e-3, name
