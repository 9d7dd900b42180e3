"""Graph view of a network and the searches built on it.

Nodes are bus indices; a three-winding transformer adds its star point as
node ``("trafo3w", index)``. Edge keys identify the element, e.g.
``("line", 4)`` or ``("trafo3w", 0, "mv")``, so parallel elements stay
distinct.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import networkx as nx

from .network import Network

STATION = "station"


@dataclass
class GraphOptions:
    respect_switches: bool = True
    include_out_of_service: bool = False
    edge_weight: str = "length_km"
    include_dclines: bool = True

    def __post_init__(self):
        if self.edge_weight not in ("length_km", "unit"):
            raise ValueError("edge_weight must be length_km or unit")


def _open_branch_terminals(net: Network) -> set:
    return {(sw["et"], sw["element"]) for sw in net.switch.values()
            if sw["et"] != "bus" and not sw["closed"]}


def to_graph(net: Network, options: GraphOptions | None = None, **kwargs) -> nx.MultiGraph:
    """Translate ``net`` into an undirected multigraph."""
    opt = options or GraphOptions(**kwargs)
    g = nx.MultiGraph()
    keep_oos = opt.include_out_of_service

    def bus_ok(b):
        return keep_oos or net.bus[b]["in_service"]

    for idx, bus in net.bus.items():
        if bus_ok(idx):
            g.add_node(idx)
    opened = _open_branch_terminals(net) if opt.respect_switches else set()

    def weight(km):
        return km if opt.edge_weight == "length_km" else 1.0

    def add(kind, idx, rec, a, b, w, key=None):
        if not (keep_oos or rec.get("in_service", True)):
            return
        if not (a in g and b in g):
            return
        g.add_edge(a, b, key=key or (kind, idx), weight=w, kind=kind, element=idx)

    for idx, ln in net.line.items():
        if ("line", idx) not in opened:
            add("line", idx, ln, ln["from_bus"], ln["to_bus"], weight(ln["length_km"]))
    for idx, tr in net.trafo.items():
        if ("trafo", idx) not in opened:
            add("trafo", idx, tr, tr["hv_bus"], tr["lv_bus"], weight(0.0))
    for idx, imp in net.impedance.items():
        add("impedance", idx, imp, imp["from_bus"], imp["to_bus"], weight(0.0))
    if opt.include_dclines:
        for idx, dc in net.dcline.items():
            add("dcline", idx, dc, dc["from_bus"], dc["to_bus"], weight(0.0))
    for idx, tr in net.trafo3w.items():
        if not (keep_oos or tr["in_service"]):
            continue
        star = ("trafo3w", idx)
        g.add_node(star)
        for leg in ("hv", "mv", "lv"):
            add("trafo3w", idx, tr, star, tr[f"{leg}_bus"], weight(0.0), ("trafo3w", idx, leg))
    for idx, sw in net.switch.items():
        if sw["et"] == "bus" and (sw["closed"] or not opt.respect_switches):
            add("switch", idx, sw, sw["bus"], sw["element"], 0.0)
    return g


def slack_buses(net: Network) -> set[int]:
    return {eg["bus"] for eg in net.ext_grid.values()
            if eg["in_service"] and net.bus[eg["bus"]]["in_service"]}


def supplied_nodes(net: Network, graph: nx.MultiGraph | None = None) -> set:
    if graph is None:
        graph = to_graph(net, include_dclines=False)
    reached = set()
    for s in slack_buses(net):
        if s in graph and s not in reached:
            reached |= nx.node_connected_component(graph, s)
    return reached


def unsupplied_buses(net: Network) -> set[int]:
    """Buses without a galvanic path to an in-service external grid.

    Open switches and out-of-service elements break paths; out-of-service
    buses are always unsupplied. DC lines do not count as a connection.
    """
    reached = supplied_nodes(net)
    return {b for b in net.bus.indices() if b not in reached}


def shortest_path_length_km(net: Network, from_bus: int, to_bus: int,
                            graph: nx.MultiGraph | None = None) -> float:
    """Cable distance between two buses; ``math.inf`` when unreachable."""
    for b in (from_bus, to_bus):
        net.bus[b]  # raises for unknown buses
    g = graph if graph is not None else to_graph(net)
    if from_bus not in g or to_bus not in g:
        return math.inf
    try:
        return float(nx.dijkstra_path_length(g, from_bus, to_bus, weight="weight"))
    except nx.NetworkXNoPath:
        return math.inf


@dataclass
class Radiality:
    radial: bool
    loops: list = field(default_factory=list)

    def __bool__(self):
        return self.radial


UPSTREAM = "upstream grid"


def is_radial(net: Network, graph: nx.MultiGraph | None = None) -> Radiality:
    """Check that the supplied part of the switch-respecting graph is a forest.

    All external-grid buses are treated as joined through the upstream
    grid, so a path between two infeeds counts as a loop. When the grid is
    not radial, ``loops`` holds one fundamental loop (a list of edge keys)
    per chord of a spanning forest; the upstream link is keyed
    ``("upstream", bus)``.
    """
    g = graph if graph is not None else to_graph(net, include_dclines=False)
    supplied = supplied_nodes(net, g)
    sub = g.subgraph(supplied)
    parent: dict = {}

    def find(x):
        while parent.setdefault(x, x) != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    tree = nx.Graph()
    tree.add_nodes_from(sub.nodes)
    loops = []
    sources = sorted(b for b in slack_buses(net) if b in supplied)
    if len(sources) > 1:
        parent[UPSTREAM] = UPSTREAM
        for b in sources:
            parent[find(b)] = UPSTREAM
            tree.add_edge(UPSTREAM, b, key=("upstream", b))
    for u, v, key in sorted(sub.edges(keys=True), key=lambda e: (str(e[2]), str(e[0]))):
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
            tree.add_edge(u, v, key=key)
        else:
            path = nx.shortest_path(tree, u, v)
            loop = [tree.edges[a, b]["key"] for a, b in zip(path, path[1:])]
            loops.append(loop + [key])
    return Radiality(radial=not loops, loops=loops)


def connected_components(graph: nx.MultiGraph) -> list[set]:
    comps = [set(c) for c in nx.connected_components(graph)]
    return sorted(comps, key=lambda c: min(str(n) for n in c))


def station_buses(net: Network) -> set[int]:
    """External-grid buses and transformer low-voltage buses."""
    buses = slack_buses(net)
    buses |= {tr["lv_bus"] for tr in net.trafo.values() if tr["in_service"]}
    for tr in net.trafo3w.values():
        if tr["in_service"]:
            buses |= {tr["mv_bus"], tr["lv_bus"]}
    return buses


def feeders(net: Network, stations: set | None = None,
            graph: nx.MultiGraph | None = None) -> dict:
    """Map every supplied bus to the feeder it hangs on.

    The feeder id is the key of the first edge leaving the station set on
    the path from the station to the bus; station buses map to
    ``"station"``. Buses reachable from no station are left out.
    """
    g = graph if graph is not None else to_graph(net, include_dclines=False)
    stations = station_buses(net) if stations is None else set(stations)
    station_set = set(stations) & set(g.nodes)
    # three-winding star points next to a station belong to it
    for u in list(station_set):
        station_set |= {v for v in g.neighbors(u) if not isinstance(v, int)}
    result = {n: STATION for n in station_set}
    queue = deque(sorted(station_set, key=str))
    while queue:
        u = queue.popleft()
        edges = sorted(g.edges(u, keys=True), key=lambda e: (str(e[2]), str(e[1])))
        for _, v, key in edges:
            if v in result:
                continue
            result[v] = key if result[u] == STATION else result[u]
            queue.append(v)
    return {n: f for n, f in result.items() if isinstance(n, int)}


def feeder_of(net: Network, bus: int, stations: set | None = None):
    """Feeder id of ``bus``, ``"station"`` for station buses, ``None`` if unsupplied."""
    return feeders(net, stations).get(bus)


def write_edge_list(graph: nx.MultiGraph, path) -> None:
    """Plain text edge list: ``bus_a,bus_b,element_kind,element_index,weight``."""
    def label(n):
        return f"{n[0]}:{n[1]}" if isinstance(n, tuple) else str(n)

    lines = ["bus_a,bus_b,element_kind,element_index,weight"]
    for u, v, key, data in sorted(graph.edges(keys=True, data=True), key=lambda e: str(e[2])):
        lines.append(f"{label(u)},{label(v)},{data['kind']},{data['element']},{data['weight']!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
