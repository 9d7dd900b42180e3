import copy

import pytest

import elgrid as eg
from elgrid.network import NetworkError
from elgrid.std_types import BASIC_LINE_TYPES, BASIC_TRAFO_TYPES


def test_empty_network():
    net = eg.create_empty_network("net", 50, 1000)
    assert net.sn_kva == 1000 and net.f_hz == 50
    assert all(len(t) == 0 for t in net.tables.values())
    assert eg.create_empty_network("x", 60, 100000).f_hz == 60
    with pytest.raises(NetworkError, match="f_hz must be positive"):
        eg.create_empty_network("", 0, 1000)
    with pytest.raises(NetworkError):
        eg.create_empty_network("", 50, 0)


def test_add_element_indices_and_references():
    net = eg.create_empty_network()
    assert eg.add_element(net, "bus", {"vn_kv": 10}) == 0
    before = copy.deepcopy(net.bus)
    assert eg.add_element(net, "load", {"bus": 0, "p_kw": 100, "q_kvar": 20}) == 0
    assert net.bus == before
    with pytest.raises(NetworkError, match="bus 7 does not exist"):
        eg.add_element(net, "load", {"bus": 7})


def test_explicit_and_scattered_indices():
    net = eg.create_empty_network()
    eg.create_bus(net, 10.0, index=42)
    eg.create_bus(net, 10.0, index=3)
    b = eg.create_bus(net, 10.0)
    assert b == 43
    assert net.bus.indices() == [3, 42, 43]
    with pytest.raises(NetworkError):
        eg.create_bus(net, 10.0, index=3)


def test_add_then_remove_restores_table():
    net = eg.create_empty_network()
    b0, b1 = eg.create_bus(net, 10.0), eg.create_bus(net, 10.0)
    eg.create_load(net, b1, 10.0)
    snapshot = copy.deepcopy(net.tables)
    i = eg.create_line(net, b0, b1, 1.0, "NAYY 4x150 SE")
    j = eg.create_load(net, b0, 5.0)
    assert net.load[0]["p_kw"] == 10.0  # earlier index untouched
    eg.remove_element(net, "line", i)
    eg.remove_element(net, "load", j)
    assert net.tables == snapshot


def test_removing_a_referenced_bus_leaves_a_diagnostic():
    net = eg.create_empty_network()
    b = eg.create_bus(net, 10.0)
    eg.create_load(net, b, 1.0)
    eg.remove_element(net, "bus", b)
    assert any("does not exist" in d for d in eg.validate_network(net))
    with pytest.raises(NetworkError):
        eg.remove_element(net, "bus", b)


def test_line_from_std_type_copies_registry_values():
    net = eg.create_empty_network()
    b0, b1 = eg.create_bus(net, 0.4), eg.create_bus(net, 0.4)
    i = eg.create_line_from_std_type(net, b0, b1, 1.0, "NAYY 4x150 SE")
    for k, v in BASIC_LINE_TYPES["NAYY 4x150 SE"].items():
        assert net.line[i][k] == v
    assert net.line[i]["r_ohm_per_km"] == 0.208
    with pytest.raises(NetworkError):
        eg.create_line(net, b0, b1, 0.0, "NAYY 4x150 SE")
    with pytest.raises(NetworkError, match="std type not found"):
        eg.create_line(net, b0, b1, 1.0, "no such cable")


def test_trafo_from_std_type_copies_registry_values():
    net = eg.create_empty_network()
    hv, lv = eg.create_bus(net, 110.0), eg.create_bus(net, 10.0)
    i = eg.create_transformer(net, hv, lv, "25 MVA 110/10 kV")
    for k, v in BASIC_TRAFO_TYPES["25 MVA 110/10 kV"].items():
        assert net.trafo[i][k] == v
    assert net.trafo[i]["tp_pos"] == 0


def test_define_std_type_redefinition():
    net = eg.create_empty_network()
    b0, b1 = eg.create_bus(net, 10.0), eg.create_bus(net, 10.0)
    params = {"r_ohm_per_km": 0.3, "x_ohm_per_km": 0.1, "c_nf_per_km": 100.0, "max_i_ka": 0.2}
    eg.define_std_type(net, "line", "mine", params)
    first = eg.create_line(net, b0, b1, 1.0, "mine")
    assert {k: net.line[first][k] for k in params} == params
    eg.define_std_type(net, "line", "mine", dict(params, r_ohm_per_km=0.5))
    second = eg.create_line(net, b0, b1, 1.0, "mine")
    assert net.line[first]["r_ohm_per_km"] == 0.3
    assert net.line[second]["r_ohm_per_km"] == 0.5
    with pytest.raises(NetworkError, match="max_i_ka"):
        eg.define_std_type(net, "line", "broken", {k: v for k, v in params.items()
                                                   if k != "max_i_ka"})


def test_std_type_listing():
    net = eg.create_empty_network()
    assert len(eg.available_std_types(net, "line")) >= 3
    assert len(eg.available_std_types(net, "trafo")) >= 3
    assert eg.load_std_type(net, "NAYY 4x50 SE", "line")["max_i_ka"] == 0.142


def test_validate_network_examples():
    net = eg.create_empty_network()
    b0, b1, b2 = (eg.create_bus(net, 10.0) for _ in range(3))
    eg.create_ext_grid(net, b0)
    ln = eg.create_line(net, b0, b1, 1.0, "NA2XS2Y 1x185 RM/25 12/20 kV")
    assert eg.validate_network(net) == []
    net.tables["switch"]._insert(0, {"name": "", "bus": b2, "element": ln, "et": "line",
                                     "closed": True})
    assert len(eg.validate_network(net)) == 1
    eg.remove_element(net, "switch", 0)
    eg.create_load(net, b1, 10.0)
    net.load[0]["const_z_percent"] = 70.0
    net.load[0]["const_i_percent"] = 40.0
    diags = eg.validate_network(net)
    assert len(diags) == 1 and "100" in diags[0]


def test_validate_every_example_grid(example_grids):
    for name, net in example_grids.items():
        assert eg.validate_network(net) == [], name


def test_absent_values_are_none():
    net = eg.create_empty_network()
    b = eg.create_bus(net, 10.0)
    g = eg.create_gen(net, b, -100.0)
    assert net.gen[g]["q_min_kvar"] is None and net.gen[g]["xdss_pu"] is None
    with pytest.raises(NetworkError):
        eg.create_sgen(net, b, -10.0, sc_model="bogus")


def test_measurement_needs_side_for_branches():
    net = eg.create_empty_network()
    b0, b1 = eg.create_bus(net, 10.0), eg.create_bus(net, 10.0)
    ln = eg.create_line(net, b0, b1, 1.0, "NAYY 4x150 SE")
    with pytest.raises(NetworkError):
        eg.create_measurement(net, "p_branch", "line", ln, 10.0, 1.0)
    eg.create_measurement(net, "p_branch", "line", ln, 10.0, 1.0, side="from")
    with pytest.raises(NetworkError):
        eg.create_measurement(net, "v_bus", "bus", b0, 1.0, 0.0)
