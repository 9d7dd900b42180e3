import math

import networkx as nx
import pytest
from hypothesis import given, settings, strategies as st

import elgrid as eg
from elgrid import networks, topology

from conftest import bfs_unsupplied, random_topology_grid

LINE = "NA2XS2Y 1x185 RM/25 12/20 kV"


def chain(n=3, lengths=None):
    net = eg.create_empty_network()
    b = [eg.create_bus(net, 10.0) for _ in range(n)]
    eg.create_ext_grid(net, b[0])
    lines = [eg.create_line(net, u, v, (lengths or [1.0] * n)[i], LINE)
             for i, (u, v) in enumerate(zip(b, b[1:]))]
    return net, b, lines


def test_three_bus_graph():
    net, b, lines = chain()
    g = eg.to_graph(net)
    assert g.number_of_edges() == 2 and nx.is_connected(g)
    eg.create_switch(net, b[2], lines[1], "line", closed=False)
    g = eg.to_graph(net)
    assert g.number_of_edges() == 1
    assert not g.has_edge(b[1], b[2])
    assert eg.to_graph(net, respect_switches=False).number_of_edges() == 2


def test_edge_keys_and_trafo3w_star():
    net = networks.three_winding()
    g = eg.to_graph(net)
    assert ("trafo3w", 0) in g
    assert {k for *_, k in g.edges(("trafo3w", 0), keys=True)} == {
        ("trafo3w", 0, "hv"), ("trafo3w", 0, "mv"), ("trafo3w", 0, "lv")}


def test_parallel_lines_are_distinct_edges_and_a_loop():
    net, b, _ = chain(2)
    eg.create_line(net, b[0], b[1], 1.0, LINE)
    g = eg.to_graph(net)
    assert g.number_of_edges(b[0], b[1]) == 2
    rad = eg.is_radial(net)
    assert not rad and len(rad.loops) == 1 and len(rad.loops[0]) == 2


def test_graph_options():
    with pytest.raises(ValueError):
        eg.GraphOptions(edge_weight="ohm")
    net, b, lines = chain()
    net.line[lines[0]]["in_service"] = False
    assert eg.to_graph(net).number_of_edges() == 1
    assert eg.to_graph(net, include_out_of_service=True).number_of_edges() == 2
    g = eg.to_graph(net, edge_weight="unit", include_out_of_service=True)
    assert all(d["weight"] == 1.0 for *_, d in g.edges(data=True))


def test_unsupplied_examples():
    net, b, lines = chain(4)
    assert eg.unsupplied_buses(net) == set()
    eg.create_switch(net, b[1], lines[1], "line", closed=False)
    assert eg.unsupplied_buses(net) == {b[2], b[3]}
    net.switch[0]["closed"] = True
    net.line[lines[2]]["in_service"] = False
    assert eg.unsupplied_buses(net) == {b[3]}
    net.bus[b[1]]["in_service"] = False
    assert eg.unsupplied_buses(net) == {b[1], b[2], b[3]}


def test_dcline_does_not_supply():
    net, b, _ = chain(2)
    far = eg.create_bus(net, 10.0)
    eg.create_dcline(net, b[1], far, 100.0)
    assert eg.unsupplied_buses(net) == {far}
    assert far in eg.to_graph(net)[b[1]]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_unsupplied_matches_bfs_property(seed):
    net = random_topology_grid(seed)
    assert eg.unsupplied_buses(net) == bfs_unsupplied(net)


def test_unsupplied_matches_power_flow_isolation(example_grids):
    for name, net in example_grids.items():
        res = eg.runpp(net)
        assert set(res.bus.index[res.bus.vm_pu.isna()]) == eg.unsupplied_buses(net), name


def test_shortest_path():
    net = eg.create_empty_network()
    a, b = eg.create_bus(net, 10.0), eg.create_bus(net, 10.0)
    eg.create_line(net, a, b, 1.5, LINE)
    eg.create_line(net, a, b, 1.0, LINE)
    lone = eg.create_bus(net, 10.0)
    assert eg.shortest_path_length_km(net, a, b) == 1.0
    assert eg.shortest_path_length_km(net, a, a) == 0.0
    assert eg.shortest_path_length_km(net, a, lone) == math.inf
    with pytest.raises(KeyError):
        eg.shortest_path_length_km(net, a, 99)


def test_shortest_path_symmetric_and_triangle(example_grids):
    for name in ("mv_feeder", "meshed_ring", "case14", "case_study_grid"):
        net = example_grids[name]
        g = eg.to_graph(net)
        buses = list(net.bus.indices())[:8]
        d = {(u, v): eg.shortest_path_length_km(net, u, v, g) for u in buses for v in buses}
        for u in buses:
            for v in buses:
                assert d[u, v] == pytest.approx(d[v, u], abs=1e-12)
                for w in buses:
                    assert d[u, w] <= d[u, v] + d[v, w] + 1e-12


def test_radiality_examples():
    net = eg.create_empty_network()
    b = [eg.create_bus(net, 10.0) for _ in range(4)]
    eg.create_ext_grid(net, b[0])
    ring = [eg.create_line(net, b[i], b[(i + 1) % 4], 1.0, LINE) for i in range(4)]
    rad = eg.is_radial(net)
    assert not rad and len(rad.loops) == 1 and len(rad.loops[0]) == 4
    eg.create_switch(net, b[3], ring[3], "line", closed=False)
    assert eg.is_radial(net)


def test_two_infeeds_joined_upstream():
    net, b, _ = chain(3)
    eg.create_ext_grid(net, b[2])
    rad = eg.is_radial(net)
    assert not rad
    assert any(("upstream", b[0]) in loop or ("upstream", b[2]) in loop for loop in rad.loops)


def test_unsupplied_part_ignored_by_radiality():
    net, b, _ = chain(2)
    x, y = eg.create_bus(net, 10.0), eg.create_bus(net, 10.0)
    eg.create_line(net, x, y, 1.0, LINE)
    eg.create_line(net, x, y, 1.0, LINE)
    assert eg.is_radial(net)


def _radial_edge_count_ok(net):
    g = eg.to_graph(net, include_dclines=False)
    sub = g.subgraph(topology.supplied_nodes(net, g))
    comps = nx.number_connected_components(sub)
    return sub.number_of_edges() == sub.number_of_nodes() - comps


def test_radial_edge_count_identity(example_grids):
    for name in networks.RADIAL_EXAMPLES:
        net = example_grids[name]
        assert eg.is_radial(net), name
        assert _radial_edge_count_ok(net), name
    for seed in range(200):
        net = random_topology_grid(seed)
        if eg.is_radial(net):
            assert _radial_edge_count_ok(net), seed


def test_feeders_partition():
    net = eg.create_empty_network()
    st_bus = eg.create_bus(net, 10.0)
    eg.create_ext_grid(net, st_bus)
    members = {}
    for f in range(2):
        prev = st_bus
        for _ in range(3):
            nb = eg.create_bus(net, 10.0)
            ln = eg.create_line(net, prev, nb, 1.0, LINE)
            members.setdefault(f, (ln, []))[1].append(nb)
            prev = nb
    fmap = topology.feeders(net)
    assert fmap[st_bus] == topology.STATION
    for ln, buses in members.values():
        assert {fmap[b] for b in buses} == {("line", ln)}
    assert topology.feeder_of(net, members[0][1][-1]) == ("line", members[0][0])
    lone = eg.create_bus(net, 10.0)
    assert topology.feeder_of(net, lone) is None


def test_component_count():
    net = eg.create_empty_network()
    for _ in range(3):
        a, b = eg.create_bus(net, 10.0), eg.create_bus(net, 10.0)
        eg.create_line(net, a, b, 1.0, LINE)
    assert len(topology.connected_components(eg.to_graph(net))) == 3


def test_edge_list_export(tmp_path):
    net = networks.three_winding()
    path = tmp_path / "edges.csv"
    topology.write_edge_list(eg.to_graph(net), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "bus_a,bus_b,element_kind,element_index,weight"
    assert len(lines) - 1 == eg.to_graph(net).number_of_edges()
    assert sum("trafo3w:0" in line for line in lines[1:]) == 3
