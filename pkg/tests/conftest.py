import math

import numpy as np
import pytest

import elgrid as eg
from elgrid import networks


def random_full_network(seed: int) -> eg.Network:
    """Valid network that uses every element kind, with scattered indices and absent values."""
    rng = np.random.default_rng(seed)
    net = eg.create_empty_network(f"random {seed}", f_hz=float(rng.choice([50.0, 60.0])),
                                  sn_kva=float(rng.choice([100.0, 1000.0, 1e5])))
    nb = int(rng.integers(4, 9))
    idx = sorted(rng.choice(1000, nb, replace=False).tolist())
    rng.shuffle(idx)
    buses = []
    vn = float(rng.choice([0.4, 10.0, 20.0, 110.0]))
    for i in idx:
        buses.append(eg.create_bus(net, vn,
                                   name=f"b{i}", in_service=bool(rng.random() > 0.1),
                                   index=int(i)))

    def pick():
        return int(rng.choice(buses))

    def pair():
        a, b = rng.choice(buses, 2, replace=False)
        return int(a), int(b)

    def maybe(x):
        return None if rng.random() < 0.3 else x

    def r(lo=0.0, hi=1.0):
        return float(rng.uniform(lo, hi))

    eg.create_ext_grid(net, buses[0], vm_pu=r(0.95, 1.05), va_degree=r(-10, 10),
                       s_sc_max_mva=maybe(r(100, 5000)), s_sc_min_mva=maybe(r(50, 100)),
                       rx_max=maybe(r(0, 0.5)), rx_min=maybe(r(0, 0.5)))
    for _ in range(int(rng.integers(1, 4))):
        eg.create_load(net, pick(), r(-100, 1000), r(-200, 200), const_z_percent=r(0, 50),
                       const_i_percent=r(0, 50), scaling=r(0.5, 1.5),
                       in_service=bool(rng.random() > 0.2), index=int(rng.integers(0, 10**6)))
    eg.create_sgen(net, pick(), -r(0, 500), r(-50, 50), sc_model="converter",
                   sc_current_ka=r(0.01, 1))
    eg.create_sgen(net, pick(), -r(0, 500))
    eg.create_gen(net, pick(), -r(0, 1000), vm_pu=r(0.98, 1.05), q_min_kvar=maybe(-r(0, 500)),
                  q_max_kvar=maybe(r(0, 500)), sn_kva=maybe(r(500, 5000)),
                  xdss_pu=maybe(r(0.1, 0.3)), cos_phi=maybe(r(0.8, 0.95)))
    eg.create_shunt(net, pick(), r(-500, 500), p_kw=r(0, 10), vn_kv=maybe(r(0.4, 110)),
                    step=int(rng.integers(1, 4)))
    a, b = pair()
    ln = eg.create_line_from_parameters(net, a, b, r(0.1, 5), r(0.01, 1), r(0.01, 1),
                                        r(0, 300), r(0.1, 1), parallel=int(rng.integers(1, 3)),
                                        df=r(0.5, 1), index=int(rng.integers(0, 10**6)))
    eg.create_line(net, *pair(), r(0.1, 3), "NAYY 4x50 SE")
    tr = eg.create_transformer(net, a, b, "0.4 MVA 10/0.4 kV", tp_pos=int(rng.integers(-2, 3)))
    eg.create_transformer_from_parameters(net, *pair(), r(100, 1000), 20.0, 0.4,
                                          r(4, 6), r(0.5, 1.5), pfe_kw=r(0, 2),
                                          i0_percent=r(0, 1), shift_degree=maybe(150.0) or 0.0)
    eg.create_transformer3w(net, *rng.choice(buses, 3, replace=False).tolist(),
                            "63/25/38 MVA 110/20/10 kV")
    eg.create_switch(net, a, ln, "line", closed=bool(rng.random() > 0.5))
    eg.create_switch(net, a, tr, "trafo", closed=True)
    eg.create_switch(net, *pair(), "bus", closed=bool(rng.random() > 0.5))
    eg.create_dcline(net, *pair(), r(0, 1000), p_loss_percent=r(0, 3), p_loss_kw=r(0, 5),
                     q_min_from_kvar=maybe(-r(0, 100)))
    eg.create_impedance(net, *pair(), r(0, 0.1), r(0.01, 0.1), r(100, 1000),
                        rtf_pu=maybe(r(0, 0.1)), xtf_pu=maybe(r(0.01, 0.1)))
    eg.create_ward(net, pick(), r(0, 100), r(0, 50), r(0, 100), r(0, 50))
    eg.create_xward(net, pick(), r(0, 100), r(0, 50), r(0, 100), r(0, 50), r(0, 1), r(0.1, 2),
                    r(0.95, 1.05))
    eg.create_measurement(net, "v_bus", "bus", pick(), r(0.9, 1.1), r(0.001, 0.01))
    eg.create_measurement(net, "p_branch", "line", ln, r(-100, 100), r(1, 10), side="from",
                          in_service=bool(rng.random() > 0.5))
    return net


def random_topology_grid(seed: int) -> eg.Network:
    """Random grid of lines, transformers and switches for graph-search tests."""
    rng = np.random.default_rng(seed)
    net = eg.create_empty_network()
    n = int(rng.integers(5, 30))
    for i in range(n):
        eg.create_bus(net, 10.0, in_service=bool(rng.random() > 0.05))
    for _ in range(int(rng.integers(1, 3))):
        eg.create_ext_grid(net, int(rng.integers(0, n)), in_service=bool(rng.random() > 0.1))
    for _ in range(int(rng.integers(n // 2, 2 * n))):
        a, b = (int(x) for x in rng.choice(n, 2, replace=False))
        kind = rng.random()
        if kind < 0.7:
            e = eg.create_line_from_parameters(net, a, b, float(rng.uniform(0.1, 3)), 0.1, 0.1,
                                               0.0, 1.0, in_service=bool(rng.random() > 0.1))
            if rng.random() < 0.3:
                eg.create_switch(net, a if rng.random() < 0.5 else b, e, "line",
                                 closed=bool(rng.random() > 0.5))
        elif kind < 0.85:
            e = eg.create_transformer_from_parameters(net, a, b, 1000.0, 10.0, 10.0, 4.0, 1.0)
            if rng.random() < 0.3:
                eg.create_switch(net, a, e, "trafo", closed=bool(rng.random() > 0.5))
        else:
            eg.create_switch(net, a, b, "bus", closed=bool(rng.random() > 0.3))
    return net


def bfs_unsupplied(net: eg.Network) -> set:
    """Independent oracle: plain breadth-first search over adjacency lists."""
    alive = {b for b, rec in net.bus.items() if rec["in_service"]}
    opened = {(s["et"], s["element"]) for s in net.switch.values()
              if s["et"] != "bus" and not s["closed"]}
    adj = {b: [] for b in alive}

    def link(a, b):
        if a in alive and b in alive:
            adj[a].append(b)
            adj[b].append(a)

    for i, ln in net.line.items():
        if ln["in_service"] and ("line", i) not in opened:
            link(ln["from_bus"], ln["to_bus"])
    for i, tr in net.trafo.items():
        if tr["in_service"] and ("trafo", i) not in opened:
            link(tr["hv_bus"], tr["lv_bus"])
    for sw in net.switch.values():
        if sw["et"] == "bus" and sw["closed"]:
            link(sw["bus"], sw["element"])
    seen = set()
    todo = [e["bus"] for e in net.ext_grid.values() if e["in_service"] and e["bus"] in alive]
    while todo:
        b = todo.pop()
        if b in seen:
            continue
        seen.add(b)
        todo.extend(adj[b])
    return set(net.bus.indices()) - seen


def power_balance_error(net: eg.Network) -> float:
    """|sum of bus injections + branch losses| in kW/kvar after a power flow.

    Bus results are PSC sums of every element at the bus (a DC line's own
    loss included), so the sum over all buses is the negative of the total
    branch losses.
    """
    res = net.res
    bus = res["bus"].dropna()
    s_bus = complex(bus.p_kw.sum(), bus.q_kvar.sum())
    loss = 0j
    for kind in ("line", "trafo", "trafo3w", "impedance"):
        df = res.get(kind)
        if df is not None and len(df):
            loss += complex(df.pl_kw.fillna(0).sum(), df.ql_kvar.fillna(0).sum())
    return abs(s_bus + loss)


def pf_measurements(net: eg.Network, buses=True, branches=True, current=False,
                    v_std=0.001, s_std=None) -> list:
    """Exact measurements taken from a converged power flow on ``net``."""
    eg.runpp(net)
    res = net.res
    s_std = s_std or 0.01 * net.sn_kva
    out = []
    for b, row in res["bus"].dropna().iterrows():
        out.append(eg.Measurement("v_bus", "bus", int(b), row.vm_pu, v_std))
        if buses:
            out.append(eg.Measurement("p_bus", "bus", int(b), row.p_kw, s_std))
            out.append(eg.Measurement("q_bus", "bus", int(b), row.q_kvar, s_std))
    if branches:
        for kind, sides in (("line", ("from", "to")), ("trafo", ("hv", "lv"))):
            df = res.get(kind)
            if df is None:
                continue
            for i, row in df.iterrows():
                for side, col in zip(("from", "to"), sides):
                    out.append(eg.Measurement("p_branch", kind, int(i), row[f"p_{col}_kw"],
                                              s_std, side))
                    out.append(eg.Measurement("q_branch", kind, int(i), row[f"q_{col}_kvar"],
                                              s_std, side))
                if current:
                    i_std = 0.01 * max(row[f"i_{sides[0]}_ka"], 1e-3)
                    out.append(eg.Measurement("i_branch", kind, int(i),
                                              row[f"i_{sides[0]}_ka"], i_std, "from"))
    return out


@pytest.fixture(scope="session")
def example_grids():
    return networks.example_grids()


def close(a, b, tol):
    return abs(a - b) <= tol or (math.isnan(a) and math.isnan(b))


# -- acceptance report ------------------------------------------------------------------------

_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.when not in ("setup", "call"):
        return
    number, title = mark.args
    ok = rep.passed and _ACCEPTANCE.get(number, (title, True))[1]
    if rep.when == "call" or not rep.passed:
        _ACCEPTANCE[number] = (title, ok)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok = _ACCEPTANCE[number]
        terminalreporter.write_line(f"{number:>2}. {'PASS' if ok else 'FAIL'}  {title}")
