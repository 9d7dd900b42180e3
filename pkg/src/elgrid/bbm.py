"""Conversion of the element model into a contiguously indexed bus-branch model.

Per-unit system: power base ``net.sn_kva``, voltage base the rated voltage
of each bus. A branch is a two-port with an ideal transformer of complex
ratio ``tap`` at the from side; series and shunt admittances sit behind the
ideal transformer, in the per-unit system of the to bus.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from collections import defaultdict, deque
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .network import Network, NetworkError

logger = logging.getLogger(__name__)

PQ, PV, SLACK, ISOLATED = 1, 2, 3, 4


@dataclass
class BusBranchModel:
    """Arrays describing buses and branches. Treat as immutable."""

    sn_kva: float
    f_hz: float
    base_kv: np.ndarray
    bus_type: np.ndarray
    # constant-power and constant-current (at |V| = 1) consumption, PSC
    p_pu: np.ndarray
    q_pu: np.ndarray
    ip_pu: np.ndarray
    iq_pu: np.ndarray
    # constant-impedance admittance to ground
    y_shunt: np.ndarray
    vm_set: np.ndarray
    va_set: np.ndarray
    f: np.ndarray
    t: np.ndarray
    ys: np.ndarray
    ys_tf: np.ndarray
    y_from: np.ndarray
    y_to: np.ndarray
    tap: np.ndarray
    br_on: np.ndarray
    x_dc: np.ndarray
    # voltage-controlling sources (gen, ext_grid, dcline ends, xward nodes)
    src_bus: np.ndarray
    src_q_min: np.ndarray
    src_q_max: np.ndarray
    _ybranch: object = field(default=None, repr=False, compare=False)
    _ybus: object = field(default=None, repr=False, compare=False)

    @property
    def n_bus(self) -> int:
        return len(self.base_kv)

    @property
    def n_branch(self) -> int:
        return len(self.f)

    def ybus(self):
        """Nodal admittance matrix including bus shunts (cached)."""
        if self._ybus is None:
            if self._ybranch is None:
                self._ybranch = build_admittance_matrix(self, include_shunts=False)
            self._ybus = (self._ybranch + sparse.diags(self.y_shunt, format="csr")).tocsr()
        return self._ybus


@dataclass
class IndexMapping:
    """Relations between element tables and the bus-branch model."""

    bus_lookup: dict[int, int]
    bus_groups: dict[int, list[int]]
    aux_buses: list[tuple[int, tuple[str, int]]]
    branch_map: dict[tuple[str, int, int], int]
    sources: list[tuple[str, int, int]]
    diagnostics: list[str] = field(default_factory=list)

    def element_buses(self, bbm_bus: int) -> list[int]:
        return self.bus_groups.get(bbm_bus, [])


# -- branch parameters -------------------------------------------------------------------------

def z_base_ohm(vn_kv: float, sn_kva: float) -> float:
    return vn_kv ** 2 * 1000.0 / sn_kva


def line_branch_params(line: dict, from_vn_kv: float, sn_kva: float, f_hz: float,
                       to_vn_kv: float | None = None, with_charging: bool = True) -> dict:
    """Pi-equivalent of a line in system per unit."""
    if to_vn_kv is not None and to_vn_kv != from_vn_kv:
        raise NetworkError("line terminal buses have different voltage bases")
    zb = z_base_ohm(from_vn_kv, sn_kva)
    length, par = line["length_km"], line["parallel"]
    z = (line["r_ohm_per_km"] + 1j * line["x_ohm_per_km"]) * length / par / zb
    b = 2 * math.pi * f_hz * line["c_nf_per_km"] * 1e-9 * length * par * zb
    ysh = 0.5j * b if with_charging else 0j
    ys = 1 / z
    return dict(ys=ys, ys_tf=ys, y_from=ysh, y_to=ysh, tap=1 + 0j, x_dc=z.imag, z=z)


def t_to_pi(z_a: complex, z_b: complex, y_m: complex) -> tuple[complex, complex, complex]:
    """Exact star-to-delta conversion of a T two-port.

    Returns ``(ys, y_a, y_b)``: series admittance and the shunt admittances
    at the terminals of ``z_a`` and ``z_b``.
    """
    d = z_a * z_b * y_m + z_a + z_b
    return 1 / d, z_b * y_m / d, z_a * y_m / d


def _two_winding(z_t, ym_t, sn_t, vn_hv, vn_lv, base_hv, base_lv, sn_sys, parallel, model,
                 ratio_factor=1.0, shift_degree=0.0) -> dict:
    # impedance referred to the lv side, then onto the lv bus base
    scale = (vn_lv / base_lv) ** 2 * sn_sys / sn_t / parallel
    z = z_t * scale
    y_m = ym_t / scale
    if model == "t":
        ys, y_from, y_to = t_to_pi(z / 2, z / 2, y_m) if y_m != 0 else (1 / z, 0j, 0j)
    elif model == "pi":
        ys, y_from, y_to = 1 / z, y_m / 2, y_m / 2
    else:
        raise NetworkError(f"unknown transformer model {model!r}")
    n = vn_hv / vn_lv * base_lv / base_hv * ratio_factor
    tap = n * np.exp(1j * math.radians(shift_degree))
    return dict(ys=ys, ys_tf=ys, y_from=y_from, y_to=y_to, tap=complex(tap), x_dc=z.imag, z=z)


def magnetizing_admittance(i0_percent: float, pfe_kw: float, sn_kva: float,
                           diagnostics: list | None = None, label: str = "trafo") -> complex:
    """Magnetizing admittance on the transformer's own base (inductive)."""
    y = i0_percent / 100.0
    g = pfe_kw / sn_kva
    if g > y:
        msg = f"{label}: pfe_kw implies conductance above |y_m| from i0_percent; clamped"
        if diagnostics is not None:
            diagnostics.append(msg)
        logger.warning(msg)
        g = y
    return complex(g, -math.sqrt(max(y * y - g * g, 0.0)))


def tap_ratio_and_shift(trafo: dict) -> tuple[float, float]:
    """Ratio factor and total angle shift (degrees) from the tap changer."""
    shift = trafo.get("shift_degree") or 0.0
    pos = trafo.get("tp_pos")
    if pos is None:
        return 1.0, shift
    steps = pos - (trafo.get("tp_mid") or 0)
    factor = 1.0
    if trafo.get("tp_side") is not None and trafo.get("tp_st_percent"):
        factor = 1 + steps * trafo["tp_st_percent"] / 100.0
        if trafo["tp_side"] == "lv":
            factor = 1 / factor
    if trafo.get("tp_degree_percent"):
        shift += steps * trafo["tp_degree_percent"]
    return factor, shift


def sc_correction_factor(x_t: float, c_max: float) -> float:
    """Network transformer impedance correction K_T."""
    return 0.95 * c_max / (1 + 0.6 * x_t)


def trafo_branch_params(trafo: dict, sn_kva: float, model: str = "t",
                        hv_base_kv: float | None = None, lv_base_kv: float | None = None,
                        neglect_shift: bool = False, sc_c_max: float | None = None,
                        diagnostics: list | None = None) -> dict:
    """Two-winding transformer as a branch in system per unit.

    With ``sc_c_max`` set, the short-circuit variant is produced: correction
    factor applied, magnetizing branch dropped, rated ratio without taps.
    """
    hv_base = trafo["vn_hv_kv"] if hv_base_kv is None else hv_base_kv
    lv_base = trafo["vn_lv_kv"] if lv_base_kv is None else lv_base_kv
    vk, vkr = trafo["v_sc_percent"] / 100, trafo["v_scr_percent"] / 100
    if vkr > vk:
        raise NetworkError("v_scr_percent exceeds v_sc_percent")
    x = math.sqrt(vk * vk - vkr * vkr)
    z_t = complex(vkr, x)
    if sc_c_max is not None:
        z_t *= sc_correction_factor(x, sc_c_max)
        ym_t, factor, shift = 0j, 1.0, 0.0
    else:
        ym_t = magnetizing_admittance(trafo["i0_percent"], trafo["pfe_kw"], trafo["sn_kva"],
                                      diagnostics)
        factor, shift = tap_ratio_and_shift(trafo)
    if neglect_shift:
        shift = 0.0
    return _two_winding(z_t, ym_t, trafo["sn_kva"], trafo["vn_hv_kv"], trafo["vn_lv_kv"],
                        hv_base, lv_base, sn_kva, trafo["parallel"], model, factor, shift)


def star_decomposition(z_hm: complex, z_ml: complex, z_hl: complex):
    """Delta (pairwise) to wye (per winding) impedances."""
    z_h = 0.5 * (z_hm + z_hl - z_ml)
    z_m = 0.5 * (z_hm + z_ml - z_hl)
    z_l = 0.5 * (z_ml + z_hl - z_hm)
    return z_h, z_m, z_l


def trafo3w_to_two_winding(trafo3w: dict, sn_kva: float, sc_c_max: float | None = None,
                           diagnostics: list | None = None) -> list[dict]:
    """Split a three-winding transformer into three star-connected legs.

    Returns one dict per leg (hv, mv, lv) holding the leg impedance on the
    system base (``z_pu``), its magnetizing admittance (``y_m_pu``, hv leg
    only), rated voltages of both leg ends and the rating used for loading.
    The star point is rated at ``vn_hv_kv``.
    """
    g = trafo3w.get
    pairs = (("hv", "mv", "vsc_hv_percent", "vscr_hv_percent"),
             ("mv", "lv", "vsc_mv_percent", "vscr_mv_percent"),
             ("hv", "lv", "vsc_lv_percent", "vscr_lv_percent"))
    z_pair = []
    for a, b, vsc, vscr in pairs:
        vk, vkr = g(vsc) / 100, g(vscr) / 100
        x = math.sqrt(vk * vk - vkr * vkr)
        z = complex(vkr, x)
        if sc_c_max is not None:
            z *= sc_correction_factor(x, sc_c_max)
        z_pair.append(z * sn_kva / min(g(f"sn_{a}_kva"), g(f"sn_{b}_kva")))
    z_h, z_m, z_l = star_decomposition(*z_pair)
    if sc_c_max is None:
        ym = magnetizing_admittance(g("i0_percent"), g("pfe_kw"), g("sn_hv_kva"), diagnostics,
                                    "trafo3w") * g("sn_hv_kva") / sn_kva
    else:
        ym = 0j
    vn_star = g("vn_hv_kv")
    return [
        dict(leg="hv", z_pu=z_h, y_m_pu=ym, vn_from_kv=g("vn_hv_kv"), vn_to_kv=vn_star,
             sn_kva=g("sn_hv_kva")),
        dict(leg="mv", z_pu=z_m, y_m_pu=0j, vn_from_kv=vn_star, vn_to_kv=g("vn_mv_kv"),
             sn_kva=g("sn_mv_kva")),
        dict(leg="lv", z_pu=z_l, y_m_pu=0j, vn_from_kv=vn_star, vn_to_kv=g("vn_lv_kv"),
             sn_kva=g("sn_lv_kva")),
    ]


def impedance_branch_params(imp: dict, sn_kva: float) -> dict:
    scale = sn_kva / imp["sn_kva"]
    z_ft = complex(imp["rft_pu"], imp["xft_pu"]) * scale
    z_tf = complex(imp["rtf_pu"], imp["xtf_pu"]) * scale
    return dict(ys=1 / z_ft, ys_tf=1 / z_tf, y_from=0j, y_to=0j, tap=1 + 0j, x_dc=z_ft.imag,
                z=z_ft)


# -- switches --------------------------------------------------------------------------------

class _UnionFind:
    def __init__(self, items):
        self.parent = {i: i for i in items}

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # smaller index becomes the representative
            lo, hi = min(ra, rb), max(ra, rb)
            self.parent[hi] = lo


def fuse_switch_buses(net: Network):
    """Group buses joined by closed bus-bus switches.

    Returns ``(groups, open_terminals)``: ``groups`` maps every bus to its
    representative bus, ``open_terminals`` lists ``(switch, et, element,
    bus)`` for open bus-branch switches, each of which gets an auxiliary bus.
    Switches touching an out-of-service bus never fuse.
    """
    uf = _UnionFind(net.bus.indices())
    open_terminals = []
    for idx, sw in net.switch.items():
        if sw["et"] == "bus":
            a, b = sw["bus"], sw["element"]
            if sw["closed"] and net.bus[a]["in_service"] and net.bus[b]["in_service"]:
                uf.union(a, b)
        elif not sw["closed"]:
            open_terminals.append((idx, sw["et"], sw["element"], sw["bus"]))
    groups = {b: uf.find(b) for b in net.bus.indices()}
    return groups, open_terminals


# -- conversion ------------------------------------------------------------------------------

@dataclass
class _Builder:
    base_kv: list = field(default_factory=list)
    in_service: list = field(default_factory=list)
    f: list = field(default_factory=list)
    t: list = field(default_factory=list)
    params: list = field(default_factory=list)
    on: list = field(default_factory=list)

    def add_bus(self, vn_kv, in_service=True):
        self.base_kv.append(vn_kv)
        self.in_service.append(in_service)
        return len(self.base_kv) - 1

    def add_branch(self, f, t, params, on):
        self.f.append(f)
        self.t.append(t)
        self.params.append(params)
        self.on.append(on)
        return len(self.f) - 1


def convert(net: Network, trafo_model: str | None = None, neglect_angles: bool = False,
            reuse: tuple | None = None, mode: str = "pf", c_max: float | None = None,
            sc_seed_buses=()) -> tuple[BusBranchModel, IndexMapping]:
    """Build the bus-branch model of ``net``.

    ``reuse`` takes a previous ``(bbm, mapping)`` of the same topology and
    refreshes only the nodal injections, keeping branches and the cached
    admittance matrix. ``mode="sc"`` builds the short-circuit network:
    no line charging, no magnetizing branches, transformer correction
    factors with ``c_max`` (a float or a callable of the bus voltage).
    """
    if reuse is not None:
        old, mapping = reuse
        inj = aggregate_nodal_injections(net, mapping, old.n_bus)
        types = _bus_types(net, mapping, old.n_bus, old.bus_type == ISOLATED, inj)
        bbm = dataclasses.replace(old, **inj, bus_type=types, _ybranch=old._ybranch, _ybus=None)
        return bbm, mapping

    sc = mode == "sc"
    diagnostics: list[str] = []
    groups, open_terminals = fuse_switch_buses(net)
    b = _Builder()
    bus_lookup: dict[int, int] = {}
    bus_groups: dict[int, list[int]] = defaultdict(list)
    root_to_bbm: dict[int, int] = {}
    for idx, rec in net.bus.items():
        root = groups[idx]
        if root not in root_to_bbm:
            root_to_bbm[root] = b.add_bus(net.bus[root]["vn_kv"], net.bus[root]["in_service"])
        bus_lookup[idx] = root_to_bbm[root]
        bus_groups[root_to_bbm[root]].append(idx)

    aux_buses = []
    # open bus-branch switches: (et, element, bus) -> aux bbm bus
    open_aux: dict[tuple[str, int, int], int] = {}
    for sw_idx, et, element, bus in open_terminals:
        key = (et, element, bus)
        if key in open_aux:
            continue
        aux = b.add_bus(net.bus[bus]["vn_kv"], net.bus[bus]["in_service"])
        open_aux[key] = aux
        aux_buses.append((aux, ("switch", sw_idx)))

    def terminal(et, element, bus):
        return open_aux.get((et, element, bus), bus_lookup[bus])

    def usable(*buses):
        return all(net.bus[x]["in_service"] for x in buses)

    branch_map = {}
    sn, fhz = net.sn_kva, net.f_hz
    for idx, ln in net.line.items():
        fb, tb = ln["from_bus"], ln["to_bus"]
        p = line_branch_params(ln, net.bus[fb]["vn_kv"], sn, fhz, with_charging=not sc)
        on = ln["in_service"] and usable(fb, tb)
        branch_map[("line", idx, 0)] = b.add_branch(terminal("line", idx, fb),
                                                    terminal("line", idx, tb), p, on)

    def c_for(vn):
        return c_max(vn) if callable(c_max) else c_max

    for idx, tr in net.trafo.items():
        hv, lv = tr["hv_bus"], tr["lv_bus"]
        p = trafo_branch_params(tr, sn, tr["model"] if trafo_model is None else trafo_model,
                                net.bus[hv]["vn_kv"], net.bus[lv]["vn_kv"],
                                neglect_shift=neglect_angles,
                                sc_c_max=c_for(tr["vn_lv_kv"]) if sc else None,
                                diagnostics=diagnostics)
        on = tr["in_service"] and usable(hv, lv)
        branch_map[("trafo", idx, 0)] = b.add_branch(terminal("trafo", idx, hv),
                                                     terminal("trafo", idx, lv), p, on)

    for idx, tr in net.trafo3w.items():
        buses = (tr["hv_bus"], tr["mv_bus"], tr["lv_bus"])
        on = tr["in_service"] and usable(*buses)
        star = b.add_bus(tr["vn_hv_kv"], on)
        aux_buses.append((star, ("trafo3w", idx)))
        legs = trafo3w_to_two_winding(tr, sn, c_for(tr["vn_lv_kv"]) if sc else None,
                                      diagnostics)
        ends = ((bus_lookup[buses[0]], star), (star, bus_lookup[buses[1]]),
                (star, bus_lookup[buses[2]]))
        for sub, (leg, (fb, tb)) in enumerate(zip(legs, ends)):
            p = _two_winding(leg["z_pu"], leg["y_m_pu"], sn, leg["vn_from_kv"], leg["vn_to_kv"],
                             b.base_kv[fb], b.base_kv[tb], sn, 1, trafo_model or "t")
            branch_map[("trafo3w", idx, sub)] = b.add_branch(fb, tb, p, on)

    for idx, imp in net.impedance.items():
        fb, tb = imp["from_bus"], imp["to_bus"]
        p = impedance_branch_params(imp, sn)
        branch_map[("impedance", idx, 0)] = b.add_branch(bus_lookup[fb], bus_lookup[tb], p,
                                                         imp["in_service"] and usable(fb, tb))

    for idx, xw in net.xward.items():
        on = xw["in_service"] and usable(xw["bus"])
        node = b.add_bus(net.bus[xw["bus"]]["vn_kv"], on)
        aux_buses.append((node, ("xward", idx)))
        z = complex(xw["r_ohm"], xw["x_ohm"]) / z_base_ohm(net.bus[xw["bus"]]["vn_kv"], sn)
        p = dict(ys=1 / z, ys_tf=1 / z, y_from=0j, y_to=0j, tap=1 + 0j, x_dc=z.imag, z=z)
        branch_map[("xward", idx, 0)] = b.add_branch(bus_lookup[xw["bus"]], node, p, on)

    nb = len(b.base_kv)
    bus_on = np.array(b.in_service, dtype=bool)
    f = np.array(b.f, dtype=np.int64)
    t = np.array(b.t, dtype=np.int64)
    br_on = np.array(b.on, dtype=bool)
    if len(f):
        br_on &= bus_on[f] & bus_on[t]

    mapping = IndexMapping(bus_lookup=bus_lookup, bus_groups=dict(bus_groups),
                           aux_buses=aux_buses, branch_map=branch_map, sources=[],
                           diagnostics=diagnostics)
    if sc:
        seeds = {bus_lookup[x] for x in sc_seed_buses if net.bus[x]["in_service"]}
    else:
        seeds = {bus_lookup[eg["bus"]] for eg in net.ext_grid.values()
                 if eg["in_service"] and net.bus[eg["bus"]]["in_service"]}
        if not seeds:
            raise NetworkError("no slack: the network has no in-service ext_grid")
    reached = _reachable(nb, f[br_on], t[br_on], seeds)
    isolated = ~reached | ~bus_on
    br_on &= ~isolated[f] if len(f) else br_on

    def arr(key):
        return np.array([p[key] for p in b.params], dtype=complex)

    base_kv = np.array(b.base_kv, dtype=float)
    ys = arr("ys")
    bbm = BusBranchModel(
        sn_kva=sn, f_hz=fhz, base_kv=base_kv, bus_type=np.full(nb, PQ), p_pu=np.zeros(nb),
        q_pu=np.zeros(nb), ip_pu=np.zeros(nb), iq_pu=np.zeros(nb), y_shunt=np.zeros(nb, complex),
        vm_set=np.ones(nb), va_set=np.zeros(nb), f=f, t=t, ys=ys, ys_tf=arr("ys_tf"),
        y_from=arr("y_from"), y_to=arr("y_to"), tap=arr("tap"), br_on=br_on,
        x_dc=np.array([p["x_dc"] for p in b.params], dtype=float),
        src_bus=np.zeros(0, np.int64), src_q_min=np.zeros(0), src_q_max=np.zeros(0))
    if sc:
        bbm.bus_type = np.where(isolated, ISOLATED, PQ)
        return bbm, mapping
    inj = aggregate_nodal_injections(net, mapping, nb)
    types = _bus_types(net, mapping, nb, isolated, inj)
    bbm = dataclasses.replace(bbm, **inj, bus_type=types)
    if mapping.diagnostics:
        net.diagnostics.extend(d for d in mapping.diagnostics if d not in net.diagnostics)
    return bbm, mapping


def _reachable(nb, f, t, seeds) -> np.ndarray:
    adj = defaultdict(list)
    for a, c in zip(f.tolist(), t.tolist()):
        adj[a].append(c)
        adj[c].append(a)
    seen = np.zeros(nb, dtype=bool)
    queue = deque(seeds)
    for s in seeds:
        seen[s] = True
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                queue.append(v)
    return seen


def _xward_nodes(mapping: IndexMapping) -> dict[int, int]:
    return {ref[1]: bus for bus, ref in mapping.aux_buses if ref[0] == "xward"}


def aggregate_nodal_injections(net: Network, mapping: IndexMapping, n_bus: int) -> dict:
    """Sum element injections per bus-branch bus, split by ZIP share.

    Constant power goes to ``p_pu``/``q_pu``, constant current to
    ``ip_pu``/``iq_pu`` (value at |V| = 1), constant impedance to
    ``y_shunt``. Also sets the source list and voltage set points.
    """
    sn = net.sn_kva
    lookup = mapping.bus_lookup
    p = np.zeros(n_bus)
    q = np.zeros(n_bus)
    ip = np.zeros(n_bus)
    iq = np.zeros(n_bus)
    ysh = np.zeros(n_bus, complex)
    vm_set = np.ones(n_bus)
    va_set = np.zeros(n_bus)

    def active(rec, bus):
        return rec["in_service"] and net.bus[bus]["in_service"]

    for rec in net.load.values():
        if not active(rec, rec["bus"]):
            continue
        k = lookup[rec["bus"]]
        s = complex(rec["p_kw"], rec["q_kvar"]) * rec["scaling"] / sn
        z, i = rec["const_z_percent"] / 100, rec["const_i_percent"] / 100
        p[k] += s.real * (1 - z - i)
        q[k] += s.imag * (1 - z - i)
        ip[k] += s.real * i
        iq[k] += s.imag * i
        ysh[k] += s.conjugate() * z
    for rec in net.sgen.values():
        if active(rec, rec["bus"]):
            k = lookup[rec["bus"]]
            p[k] += rec["p_kw"] * rec["scaling"] / sn
            q[k] += rec["q_kvar"] * rec["scaling"] / sn
    for rec in net.shunt.values():
        if active(rec, rec["bus"]):
            k = lookup[rec["bus"]]
            vn = rec["vn_kv"] if rec["vn_kv"] is not None else net.bus[rec["bus"]]["vn_kv"]
            s = complex(rec["p_kw"], rec["q_kvar"]) * rec["step"] / sn
            ysh[k] += s.conjugate() * (net.bus[rec["bus"]]["vn_kv"] / vn) ** 2
    for kind in ("ward", "xward"):
        for rec in net.tables[kind].values():
            if active(rec, rec["bus"]):
                k = lookup[rec["bus"]]
                p[k] += rec["ps_kw"] / sn
                q[k] += rec["qs_kvar"] / sn
                ysh[k] += complex(rec["pz_kw"], -rec["qz_kvar"]) / sn
    for rec in net.gen.values():
        if active(rec, rec["bus"]):
            p[lookup[rec["bus"]]] += rec["p_kw"] / sn
    for rec in net.dcline.values():
        if active(rec, rec["from_bus"]) and net.bus[rec["to_bus"]]["in_service"]:
            p_from = rec["p_kw"]
            p_to = -(p_from * (1 - rec["p_loss_percent"] / 100) - rec["p_loss_kw"])
            p[lookup[rec["from_bus"]]] += p_from / sn
            p[lookup[rec["to_bus"]]] += p_to / sn

    src_bus, q_min, q_max, sources = [], [], [], []

    def lim(v, default):
        return default if v is None else v / sn

    slack_set: dict[int, tuple[float, float, int]] = {}
    for idx, rec in net.ext_grid.items():
        if not active(rec, rec["bus"]):
            continue
        k = lookup[rec["bus"]]
        setpoint = (rec["vm_pu"], math.radians(rec["va_degree"]))
        if k in slack_set and slack_set[k][:2] != setpoint:
            raise NetworkError(f"conflicting slack set points at ext_grid {slack_set[k][2]} "
                               f"and {idx}")
        slack_set[k] = (*setpoint, idx)
        vm_set[k], va_set[k] = setpoint
        sources.append(("ext_grid", idx, k))
        src_bus.append(k)
        q_min.append(-np.inf)
        q_max.append(np.inf)

    pv_set: dict[int, float] = {}

    def add_pv(kind, idx, k, vm, qmin, qmax):
        if k not in slack_set:
            if k in pv_set and not math.isclose(pv_set[k], vm):
                mapping.diagnostics.append(
                    f"{kind} {idx}: voltage set point {vm} ignored, bus already at {pv_set[k]}")
            pv_set.setdefault(k, vm)
            vm_set[k] = pv_set[k]
        sources.append((kind, idx, k))
        src_bus.append(k)
        q_min.append(lim(qmin, -np.inf))
        q_max.append(lim(qmax, np.inf))

    for idx, rec in net.gen.items():
        if active(rec, rec["bus"]):
            add_pv("gen", idx, lookup[rec["bus"]], rec["vm_pu"], rec["q_min_kvar"],
                   rec["q_max_kvar"])
    for idx, rec in net.dcline.items():
        if active(rec, rec["from_bus"]) and net.bus[rec["to_bus"]]["in_service"]:
            add_pv("dcline_from", idx, lookup[rec["from_bus"]], rec["vm_from_pu"],
                   rec["q_min_from_kvar"], rec["q_max_from_kvar"])
            add_pv("dcline_to", idx, lookup[rec["to_bus"]], rec["vm_to_pu"],
                   rec["q_min_to_kvar"], rec["q_max_to_kvar"])
    nodes = _xward_nodes(mapping)
    for idx, rec in net.xward.items():
        if active(rec, rec["bus"]):
            add_pv("xward", idx, nodes[idx], rec["vm_pu"], None, None)

    mapping.sources = sources
    return dict(p_pu=p, q_pu=q, ip_pu=ip, iq_pu=iq, y_shunt=ysh, vm_set=vm_set, va_set=va_set,
                src_bus=np.array(src_bus, dtype=np.int64), src_q_min=np.array(q_min, float),
                src_q_max=np.array(q_max, float))


def _bus_types(net, mapping, n_bus, isolated, inj) -> np.ndarray:
    types = np.full(n_bus, PQ)
    for kind, _, k in mapping.sources:
        if kind == "ext_grid":
            types[k] = SLACK
        elif types[k] != SLACK:
            types[k] = PV
    types[np.asarray(isolated, dtype=bool)] = ISOLATED
    return types


# -- admittance matrix -----------------------------------------------------------------------

def branch_admittances(bbm: BusBranchModel):
    """Two-port entries ``(Yff, Yft, Ytf, Ytt)`` per branch; zero when off."""
    on = bbm.br_on.astype(float)
    tap = bbm.tap
    yff = on * (bbm.ys + bbm.y_from) / (tap * tap.conj()).real
    yft = on * -bbm.ys / tap.conj()
    ytf = on * -bbm.ys_tf / tap
    ytt = on * (bbm.ys_tf + bbm.y_to)
    return yff, yft, ytf, ytt


def build_branch_matrices(bbm: BusBranchModel):
    """Sparse ``Yf``, ``Yt`` mapping bus voltages to branch terminal currents."""
    nb, nl = bbm.n_bus, bbm.n_branch
    yff, yft, ytf, ytt = branch_admittances(bbm)
    rows = np.r_[np.arange(nl), np.arange(nl)]
    cols = np.r_[bbm.f, bbm.t]
    yf = sparse.csr_matrix((np.r_[yff, yft], (rows, cols)), (nl, nb))
    yt = sparse.csr_matrix((np.r_[ytf, ytt], (rows, cols)), (nl, nb))
    return yf, yt


def build_admittance_matrix(bbm: BusBranchModel, include_shunts: bool = True):
    """Nodal admittance matrix (sparse CSR, possibly asymmetric)."""
    nb = bbm.n_bus
    yff, yft, ytf, ytt = branch_admittances(bbm)
    f, t = bbm.f, bbm.t
    rows = np.r_[f, f, t, t]
    cols = np.r_[f, t, f, t]
    vals = np.r_[yff, yft, ytf, ytt]
    y = sparse.csr_matrix((vals, (rows, cols)), (nb, nb))
    if include_shunts:
        y = y + sparse.diags(bbm.y_shunt, format="csr")
    y.sum_duplicates()
    return y


class BBMHandle:
    """Cached conversion for repeated runs that change only injections.

    Valid until any topology or impedance field of the network changes;
    call :meth:`invalidate` after such edits.
    """

    def __init__(self, net: Network, **options):
        self.net = net
        self.options = options
        self._cached = None

    def get(self) -> tuple[BusBranchModel, IndexMapping]:
        if self._cached is None:
            bbm, mapping = convert(self.net, **self.options)
            bbm.ybus()
        else:
            bbm, mapping = convert(self.net, reuse=self._cached, **self.options)
        self._cached = (bbm, mapping)
        return bbm, mapping

    def invalidate(self):
        self._cached = None
