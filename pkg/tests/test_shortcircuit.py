import math

import numpy as np
import pytest

import elgrid as eg
from elgrid import networks
from elgrid.shortcircuit import SCOptions, default_c, source_internal_impedance

SQ3 = math.sqrt(3)


def grid_source(s_sc=100.0, rx=0.1, vn=10.0, s_min=None):
    net = eg.create_empty_network()
    b = eg.create_bus(net, vn)
    eg.create_ext_grid(net, b, s_sc_max_mva=s_sc, s_sc_min_mva=s_min or s_sc / 2,
                       rx_max=rx, rx_min=rx)
    return net, b


def test_source_bus_hand_formula():
    net, b = grid_source()
    ik = eg.run_short_circuit(net).ikss_ka[b]
    assert ik == pytest.approx(1.1 * 10 / (SQ3 * 1.1), abs=1e-6)
    assert ik == pytest.approx(5.7735, abs=1e-4)


def test_series_reactance_halves_current():
    net, b = grid_source(rx=0.0)
    b2 = eg.create_bus(net, 10.0)
    eg.create_line_from_parameters(net, b, b2, 1.0, 0.0, 1.1, 0.0, 1.0)
    ik = eg.run_short_circuit(net).ikss_ka
    assert ik[b2] == pytest.approx(ik[b] / 2, rel=1e-12)
    assert ik[b2] == pytest.approx(1.1 * 10 / (SQ3 * 2.2), abs=1e-6)


def test_transformer_hand_formula():
    net, hv = grid_source(s_sc=1000.0, rx=0.1, vn=110.0)
    lv = eg.create_bus(net, 10.0)
    eg.create_transformer_from_parameters(net, hv, lv, 25000.0, 110.0, 10.0, 12.0, 0.4)
    ik = eg.run_short_circuit(net).ikss_ka[lv]
    # independent recomputation on the 10 kV side
    zq = 1.1 * 110.0 ** 2 / 1000.0 * (10.0 / 110.0) ** 2
    xq = zq / math.sqrt(1.01)
    z_source = complex(0.1 * xq, xq)
    zt = 0.12 * 10.0 ** 2 / 25.0
    rt = 0.004 * 10.0 ** 2 / 25.0
    xt = math.sqrt(zt ** 2 - rt ** 2)
    k_t = 0.95 * 1.1 / (1 + 0.6 * xt / (10.0 ** 2 / 25.0))
    z = z_source + k_t * complex(rt, xt)
    assert ik == pytest.approx(1.1 * 10.0 / (SQ3 * abs(z)), abs=1e-6)


def test_lv_voltage_factors():
    assert default_c(0.4, "max") == 1.05 and default_c(0.4, "min") == 0.95
    assert default_c(20.0, "max") == 1.1 and default_c(20.0, "min") == 1.0
    net, b = grid_source(vn=0.4, s_sc=10.0, rx=0.0)
    ik = eg.run_short_circuit(net).ikss_ka[b]
    assert ik == pytest.approx(1.05 * 0.4 / (SQ3 * 1.05 * 0.016))


def test_two_phase_ratio_every_bus(example_grids):
    for name in ("mv_feeder", "lv_feeder", "three_winding", "case_study_grid"):
        net = example_grids[name]
        k3 = eg.run_short_circuit(net, fault="3ph").ikss_ka
        k2 = eg.run_short_circuit(net, fault="2ph").ikss_ka
        ok = k3.notna()
        assert np.allclose(k2[ok], SQ3 / 2 * k3[ok], rtol=1e-14, atol=0), name
        assert k2[~ok].isna().all()


def test_min_not_above_max(example_grids):
    for name in ("mv_feeder", "lv_feeder", "switched_feeder", "three_winding",
                 "case_study_grid"):
        net = example_grids[name]
        hi = eg.run_short_circuit(net, case="max").ikss_ka
        lo = eg.run_short_circuit(net, case="min").ikss_ka
        ok = hi.notna()
        assert (lo[ok] <= hi[ok]).all(), name
        assert (hi[ok] > 0).all()


def test_unsupplied_buses_are_nan(example_grids):
    net = example_grids["switched_feeder"]
    ik = eg.run_short_circuit(net).ikss_ka
    assert set(ik.index[ik.isna()]) == eg.unsupplied_buses(net)


def test_monotone_along_radial_feeder():
    net = networks.mv_feeder()
    ik = eg.run_short_circuit(net).ikss_ka
    lv = [b for b, rec in net.bus.items() if rec["vn_kv"] == net.bus[1]["vn_kv"]]
    chain = sorted(lv, key=lambda b: eg.shortest_path_length_km(net, lv[0], b))
    vals = ik[chain].values
    assert np.all(np.diff(vals) <= 1e-12)


def test_source_internal_impedance_examples():
    net, _ = grid_source(rx=0.0)
    opt = SCOptions()
    assert source_internal_impedance(net, "ext_grid", 0, opt) == pytest.approx(1.1j)
    net.ext_grid[0]["rx_max"] = 0.1
    z = source_internal_impedance(net, "ext_grid", 0, opt)
    assert abs(z) == pytest.approx(1.1) and z.real / z.imag == pytest.approx(0.1)


def test_missing_source_data_named():
    net, _ = grid_source()
    net.ext_grid[0]["s_sc_min_mva"] = None
    with pytest.raises(eg.NetworkError, match="ext_grid 0"):
        eg.run_short_circuit(net, case="min")
    net.ext_grid[0]["s_sc_min_mva"] = 50.0
    net.ext_grid[0]["rx_min"] = None
    with pytest.raises(eg.NetworkError, match="rx_min"):
        eg.run_short_circuit(net, case="min")


def test_option_validation():
    with pytest.raises(ValueError):
        SCOptions(c_max=1.3)
    with pytest.raises(ValueError):
        SCOptions(fault="1ph")
    assert SCOptions(fault="threephase").fault == "3ph"


def test_converter_contribution_is_additive():
    net, b = grid_source()
    eg.create_sgen(net, b, -500.0, sc_model="converter", sc_current_ka=0.2)
    with_conv = eg.run_short_circuit(net).ikss_ka[b]
    assert with_conv == pytest.approx(1.1 * 10 / (SQ3 * 1.1) + 0.2, abs=1e-9)


def test_removing_converter_lowers_every_bus_by_its_contribution():
    net = networks.mv_feeder()
    bus = list(net.bus.indices())[-1]
    eg.create_sgen(net, bus, -400.0, sc_model="converter", sc_current_ka=0.05)
    res = eg.run_short_circuit(net)
    with_conv = res.ikss_ka.copy()
    idx = max(net.sgen.indices())
    net.sgen[idx]["in_service"] = False
    without = eg.run_short_circuit(net).ikss_ka
    for b, parts in res.contributions.items():
        assert with_conv[b] - without[b] == pytest.approx(parts[("sgen", idx)], abs=1e-12)
    assert (with_conv >= without).all()
    assert with_conv[bus] - without[bus] == pytest.approx(0.05, abs=1e-12)


def test_generator_source_and_missing_cos_phi():
    net, b = grid_source()
    eg.create_gen(net, b, -1000.0, sn_kva=5000.0, xdss_pu=0.2)
    res = eg.run_short_circuit(net)
    assert any("cos_phi" in d for d in res.diagnostics)
    assert res.ikss_ka[b] > 5.7735


def test_tie_switch_changes_only_affected_feeder():
    net, st = grid_source(s_sc=200.0)
    feeders = []
    for _ in range(2):
        prev, buses = st, []
        for _ in range(3):
            b = eg.create_bus(net, 10.0)
            eg.create_line(net, prev, b, 1.5, "NA2XS2Y 1x185 RM/25 12/20 kV")
            prev = b
            buses.append(b)
        feeders.append(buses)
    tie = eg.create_line(net, feeders[0][-1], feeders[1][-1], 1.0,
                         "NA2XS2Y 1x185 RM/25 12/20 kV")
    sw = eg.create_switch(net, feeders[0][-1], tie, "line", closed=False)
    head = eg.create_switch(net, feeders[0][0], 1, "line")
    base = eg.run_short_circuit(net).ikss_ka
    # move the open point from the tie to the second section of feeder 0
    net.switch[sw]["closed"] = True
    net.switch[head]["closed"] = False
    after = eg.run_short_circuit(net).ikss_ka
    changed = set(after.index[~np.isclose(after, base, rtol=1e-12)])
    assert changed <= set(feeders[0][1:]) | set(feeders[1])
    assert after[st] == pytest.approx(base[st], rel=1e-12)
    assert after[feeders[0][0]] == pytest.approx(base[feeders[0][0]], rel=1e-12)


def test_fault_bus_subset():
    net = networks.mv_feeder()
    full = eg.run_short_circuit(net).ikss_ka
    part = eg.run_short_circuit(net, fault_buses=[2, 3]).ikss_ka
    assert list(part.index) == [2, 3]
    assert np.allclose(part.values, full[[2, 3]].values, rtol=1e-12)
