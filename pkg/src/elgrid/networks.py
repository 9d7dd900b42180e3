"""Example grids: small hand-made networks, bundled standard cases and the
ring-main grid used by the reconfiguration case study."""
from __future__ import annotations

from importlib import resources

import pandas as pd

from .network import (Network, create_bus, create_dcline, create_empty_network,
                      create_ext_grid, create_gen, create_impedance, create_line,
                      create_line_from_parameters, create_load, create_sgen, create_shunt,
                      create_switch, create_transformer, create_transformer3w, create_ward,
                      create_xward)

CASES = ("case9", "case14", "case30", "case118")


def data_path(name: str) -> str:
    return str(resources.files("elgrid") / "data" / name)


def load_case(name: str) -> Network:
    """One of the bundled standard cases (``case9``, ``case14``, ``case30``, ``case118``)."""
    from .io.casefile import import_case

    if name not in CASES:
        raise ValueError(f"unknown case {name!r}; choose from {', '.join(CASES)}")
    net = import_case(data_path(f"{name}.m"))
    net.name = name
    return net


def case9():
    return load_case("case9")


def case14():
    return load_case("case14")


def case30():
    return load_case("case30")


def case118():
    return load_case("case118")


def reference_state(name: str) -> pd.DataFrame:
    """Published solved bus voltages of a bundled case, indexed by 0-based bus."""
    df = pd.read_csv(data_path(f"{name}_solved.csv"), comment="#")
    df.index = df.pop("bus") - 1
    return df


def two_bus(p_load_kw: float = 1000.0, x_pu: float = 0.1, r_pu: float = 0.0,
            sn_kva: float = 1000.0, vn_kv: float = 10.0) -> Network:
    """Slack and one PQ bus joined by a line of the given per-unit impedance."""
    net = create_empty_network("two bus", sn_kva=sn_kva)
    b0 = create_bus(net, vn_kv)
    b1 = create_bus(net, vn_kv)
    create_ext_grid(net, b0, s_sc_max_mva=100.0, s_sc_min_mva=80.0, rx_max=0.1, rx_min=0.1)
    zb = vn_kv ** 2 * 1000.0 / sn_kva
    create_line_from_parameters(net, b0, b1, 1.0, r_pu * zb, x_pu * zb, 0.0, 1.0)
    create_load(net, b1, p_load_kw, 0.0)
    return net


def mv_feeder() -> Network:
    """110/10 kV substation with a five-bus radial cable feeder."""
    net = create_empty_network("mv feeder")
    hv = create_bus(net, 110.0)
    lv = create_bus(net, 10.0)
    create_ext_grid(net, hv, vm_pu=1.01, s_sc_max_mva=3000.0, s_sc_min_mva=2000.0, rx_max=0.1,
                    rx_min=0.1)
    create_transformer(net, hv, lv, "25 MVA 110/10 kV")
    prev = lv
    for i in range(5):
        b = create_bus(net, 10.0, name=f"f{i}")
        create_line(net, prev, b, 1.2 + 0.3 * i, "NA2XS2Y 1x185 RM/25 12/20 kV")
        create_load(net, b, 600.0 + 100 * i, 150.0 + 20 * i)
        prev = b
    create_sgen(net, 4, -800.0, 0.0)
    return net


def lv_feeder() -> Network:
    """10/0.4 kV station with a branched low-voltage feeder and ZIP loads."""
    net = create_empty_network("lv feeder", sn_kva=100.0)
    mv = create_bus(net, 10.0)
    lv = create_bus(net, 0.4)
    create_ext_grid(net, mv, s_sc_max_mva=200.0, s_sc_min_mva=150.0, rx_max=0.1, rx_min=0.1)
    create_transformer(net, mv, lv, "0.4 MVA 10/0.4 kV")
    b = [create_bus(net, 0.4) for _ in range(5)]
    create_line(net, lv, b[0], 0.1, "NAYY 4x150 SE")
    create_line(net, b[0], b[1], 0.12, "NAYY 4x150 SE")
    create_line(net, b[1], b[2], 0.08, "NAYY 4x50 SE")
    create_line(net, b[0], b[3], 0.15, "NAYY 4x50 SE")
    create_line(net, b[3], b[4], 0.05, "NAYY 4x50 SE")
    create_load(net, b[1], 40.0, 10.0, const_z_percent=30.0, const_i_percent=30.0)
    create_load(net, b[2], 25.0, 5.0, const_i_percent=100.0)
    create_load(net, b[3], 30.0, 8.0, const_z_percent=100.0)
    create_load(net, b[4], 20.0, 4.0)
    create_sgen(net, b[4], -15.0)
    return net


def switched_feeder() -> Network:
    """Radial feeder with a closed bus-bus coupler and an open line switch at its end."""
    net = create_empty_network("switched feeder")
    b0 = create_bus(net, 20.0)
    create_ext_grid(net, b0, s_sc_max_mva=500.0, s_sc_min_mva=400.0, rx_max=0.1, rx_min=0.1)
    b1 = create_bus(net, 20.0)
    b1a = create_bus(net, 20.0)
    b2 = create_bus(net, 20.0)
    b3 = create_bus(net, 20.0)
    create_line(net, b0, b1, 3.0, "NA2XS2Y 1x240 RM/25 12/20 kV")
    create_switch(net, b1, b1a, "bus", closed=True)
    create_line(net, b1a, b2, 2.0, "NA2XS2Y 1x240 RM/25 12/20 kV")
    far = create_line(net, b2, b3, 1.5, "NA2XS2Y 1x185 RM/25 12/20 kV")
    create_switch(net, b3, far, "line", closed=False)
    create_load(net, b1, 1500.0, 400.0)
    create_load(net, b1a, 500.0, 100.0)
    create_load(net, b2, 800.0, 250.0)
    create_load(net, b3, 300.0, 50.0)
    create_shunt(net, b2, q_kvar=-300.0)
    return net


def three_winding() -> Network:
    """110/20/10 kV three-winding substation supplying two voltage levels."""
    net = create_empty_network("three winding")
    hv = create_bus(net, 110.0)
    mv = create_bus(net, 20.0)
    lv = create_bus(net, 10.0)
    create_ext_grid(net, hv, s_sc_max_mva=3000.0, s_sc_min_mva=2000.0, rx_max=0.1, rx_min=0.1)
    create_transformer3w(net, hv, mv, lv, "63/25/38 MVA 110/20/10 kV")
    m1 = create_bus(net, 20.0)
    l1 = create_bus(net, 10.0)
    create_line(net, mv, m1, 4.0, "NA2XS2Y 1x240 RM/25 12/20 kV")
    create_line(net, lv, l1, 2.0, "NA2XS2Y 1x185 RM/25 12/20 kV")
    create_load(net, m1, 6000.0, 1500.0)
    create_load(net, l1, 4000.0, 1200.0)
    create_load(net, mv, 2000.0, 500.0)
    return net


def meshed_ring() -> Network:
    """Closed 10 kV ring with a PV generator and reactive limits."""
    net = create_empty_network("meshed ring")
    hv = create_bus(net, 110.0)
    s = create_bus(net, 10.0)
    create_ext_grid(net, hv, s_sc_max_mva=3000.0, s_sc_min_mva=2000.0, rx_max=0.1, rx_min=0.1)
    create_transformer(net, hv, s, "25 MVA 110/10 kV", tp_pos=-1)
    ring = [create_bus(net, 10.0) for _ in range(4)]
    nodes = [s] + ring + [s]
    for i, (a, c) in enumerate(zip(nodes, nodes[1:])):
        create_line(net, a, c, 1.0 + 0.4 * i, "NA2XS2Y 1x240 RM/25 12/20 kV")
    for i, b in enumerate(ring):
        create_load(net, b, 1200.0 + 200 * i, 300.0)
    create_gen(net, ring[2], -2000.0, vm_pu=1.0, q_min_kvar=-1500.0, q_max_kvar=800.0,
               sn_kva=5000.0, xdss_pu=0.15, cos_phi=0.85)
    return net


def mixed_elements() -> Network:
    """Every element kind in one grid (for conversion and result tests)."""
    net = create_empty_network("mixed")
    hv = create_bus(net, 110.0)
    mv = create_bus(net, 20.0)
    b2 = create_bus(net, 20.0)
    b3 = create_bus(net, 20.0)
    b4 = create_bus(net, 20.0)
    lvb = create_bus(net, 10.0)
    b6 = create_bus(net, 20.0)
    b7 = create_bus(net, 20.0)
    create_ext_grid(net, hv, vm_pu=1.02, s_sc_max_mva=3000.0, s_sc_min_mva=2000.0,
                    rx_max=0.1, rx_min=0.1)
    create_transformer(net, hv, mv, "40 MVA 110/20 kV", tp_pos=1)
    create_line(net, mv, b2, 2.0, "NA2XS2Y 1x185 RM/25 12/20 kV")
    create_line(net, b2, b3, 2.0, "NA2XS2Y 1x185 RM/25 12/20 kV")
    create_switch(net, b3, b4, "bus", True)
    create_load(net, b4, 3000.0, 1000.0, const_z_percent=30.0, const_i_percent=20.0)
    create_gen(net, b2, -2000.0, vm_pu=1.01, q_min_kvar=-500.0, q_max_kvar=500.0,
               sn_kva=4000.0, xdss_pu=0.2, cos_phi=0.9)
    create_transformer3w(net, hv, b6, lvb, "63/25/38 MVA 110/20/10 kV")
    create_load(net, lvb, 5000.0, 2000.0)
    create_sgen(net, b6, -1000.0, 0.0)
    create_shunt(net, b6, q_kvar=-500.0)
    create_impedance(net, b6, b7, 0.01, 0.05, 10000.0, rtf_pu=0.02, xtf_pu=0.06)
    create_ward(net, b7, 100.0, 50.0, 200.0, 0.0)
    create_xward(net, b3, 100.0, 50.0, 0.0, 0.0, 1.0, 5.0, 1.0)
    create_dcline(net, b6, b3, 1000.0, p_loss_percent=2.0, p_loss_kw=10.0)
    return net


def example_grids() -> dict[str, Network]:
    """All shipped example networks by name."""
    grids = {f.__name__: f() for f in (two_bus, mv_feeder, lv_feeder, switched_feeder,
                                       three_winding, meshed_ring, mixed_elements,
                                       case_study_grid)}
    for name in CASES:
        grids[name] = load_case(name)
    return grids


RADIAL_EXAMPLES = ("two_bus", "mv_feeder", "lv_feeder", "switched_feeder", "three_winding")


# -- case study -------------------------------------------------------------------------------

CS_CABLE = "NA2XS2Y 1x185 RM/25 12/20 kV"


def case_study_grid() -> Network:
    """10 kV ring-main grid with two 110 kV infeeds.

    One station is a two-winding, the other a three-winding transformer.
    Three feeders (paths of 2, 5 and 5 cable sections) meet at a common
    far bus; 10 loads and 4 wind parks hang on the feeder buses. Every one
    of the 12 cables has a switch at both ends, giving 24 tie switches.
    Impedances and powers are typical values chosen for this repository.
    """
    net = create_empty_network("case study ring main")
    hv1 = create_bus(net, 110.0, name="HV1")
    hv2 = create_bus(net, 110.0, name="HV2")
    s1 = create_bus(net, 10.0, name="S1")
    s2 = create_bus(net, 10.0, name="S2")
    mv20 = create_bus(net, 20.0, name="S2 20kV")
    create_ext_grid(net, hv1, vm_pu=1.0, s_sc_max_mva=3000.0, s_sc_min_mva=1500.0, rx_max=0.1,
                    rx_min=0.1)
    create_ext_grid(net, hv2, vm_pu=1.0, s_sc_max_mva=3000.0, s_sc_min_mva=1500.0, rx_max=0.1,
                    rx_min=0.1)
    create_transformer(net, hv1, s1, "25 MVA 110/10 kV", tp_min=-5, tp_max=5,
                       shift_degree=0.0)
    create_transformer3w(net, hv2, mv20, s2, "63/25/38 MVA 110/20/10 kV")
    a = [create_bus(net, 10.0, name="A1")]
    b = [create_bus(net, 10.0, name=f"B{i + 1}") for i in range(4)]
    c = [create_bus(net, 10.0, name=f"C{i + 1}") for i in range(4)]
    x = create_bus(net, 10.0, name="X")
    paths = ([s1] + a + [x], [s1] + b + [x], [s2] + c + [x])
    lengths = ([2.4, 3.2], [4.0, 4.8, 4.0, 5.6, 4.8], [4.8, 4.0, 5.6, 3.2, 4.8])
    for path, lens in zip(paths, lengths):
        for (u, v), km in zip(zip(path, path[1:]), lens):
            ln = create_line(net, u, v, km, CS_CABLE)
            create_switch(net, u, ln, "line", closed=True)
            create_switch(net, v, ln, "line", closed=True)
    feeder_buses = a + b + c + [x]
    for i, bus in enumerate(feeder_buses):
        p = 450.0 + 40.0 * (i % 4)
        create_load(net, bus, p, round(p * 0.33, 1), name=f"load {i}")
    for bus in (b[1], b[3], c[1], c[3]):
        create_sgen(net, bus, -2000.0, 0.0, name="wind")
    return net


def case_study_tie_switches(net: Network) -> list[int]:
    return [idx for idx, sw in net.switch.items() if sw["et"] == "line"]


def case_study_profiles() -> pd.DataFrame:
    from .io.csvfiles import read_profiles

    return read_profiles(data_path("case_study_profiles.csv"))
