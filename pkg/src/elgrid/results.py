"""Map a solved bus-branch state back onto element result tables."""
from __future__ import annotations

import math
from collections import defaultdict

import numpy as np
import pandas as pd

from .bbm import ISOLATED, BusBranchModel, IndexMapping, build_branch_matrices

RESULT_COLUMNS = {
    "bus": ["vm_pu", "va_degree", "p_kw", "q_kvar"],
    "line": ["p_from_kw", "q_from_kvar", "p_to_kw", "q_to_kvar", "pl_kw", "ql_kvar",
             "i_from_ka", "i_to_ka", "i_ka", "loading_percent"],
    "trafo": ["p_hv_kw", "q_hv_kvar", "p_lv_kw", "q_lv_kvar", "pl_kw", "ql_kvar", "i_hv_ka",
              "i_lv_ka", "loading_percent"],
    "trafo3w": ["p_hv_kw", "q_hv_kvar", "p_mv_kw", "q_mv_kvar", "p_lv_kw", "q_lv_kvar",
                "pl_kw", "ql_kvar", "i_hv_ka", "i_mv_ka", "i_lv_ka", "loading_percent"],
    "impedance": ["p_from_kw", "q_from_kvar", "p_to_kw", "q_to_kvar", "pl_kw", "ql_kvar",
                  "i_from_ka", "i_to_ka"],
    "load": ["p_kw", "q_kvar"],
    "sgen": ["p_kw", "q_kvar"],
    "shunt": ["p_kw", "q_kvar", "vm_pu"],
    "ward": ["p_kw", "q_kvar", "vm_pu"],
    "xward": ["p_kw", "q_kvar", "vm_pu"],
    "gen": ["p_kw", "q_kvar", "va_degree", "vm_pu"],
    "ext_grid": ["p_kw", "q_kvar"],
    "dcline": ["p_from_kw", "q_from_kvar", "p_to_kw", "q_to_kvar", "pl_kw", "vm_from_pu",
               "vm_to_pu"],
}


def current_base_ka(sn_kva, vn_kv):
    return sn_kva / (math.sqrt(3) * vn_kv) / 1000.0


def _frame(kind, rows):
    return pd.DataFrame.from_dict(rows, orient="index", columns=RESULT_COLUMNS[kind]) \
        if rows else pd.DataFrame(columns=RESULT_COLUMNS[kind], dtype=float)


def extract_results(net, bbm: BusBranchModel, mapping: IndexMapping, V, fixed_q=None,
                    options=None) -> dict:
    """Build result tables for every element kind.

    ``V`` is the solved bus-branch voltage vector, or ``None`` after a
    failed run (all voltages NaN). Buses cut off from every slack report NaN.
    """
    sn = bbm.sn_kva
    fixed_q = fixed_q or {}
    loading_by = getattr(options, "trafo_loading", "current")
    nb = bbm.n_bus
    iso = bbm.bus_type == ISOLATED
    if V is None:
        V = np.full(nb, np.nan + 0j)
        iso = np.ones(nb, dtype=bool)
    V = np.where(iso, 0j, V)
    vm = np.abs(V)
    lookup = mapping.bus_lookup
    tables = {}

    def bus_ok(bus):
        return net.bus[bus]["in_service"] and not iso[lookup[bus]]

    # per element bus PSC power sums
    bus_p = defaultdict(float)
    bus_q = defaultdict(float)

    def put(bus, p, q):
        bus_p[bus] += p
        bus_q[bus] += q

    # branch flows
    yf, yt = build_branch_matrices(bbm)
    i_f = yf @ V
    i_t = yt @ V
    s_f = V[bbm.f] * np.conj(i_f) * sn
    s_t = V[bbm.t] * np.conj(i_t) * sn
    ib_f = np.abs(i_f) * current_base_ka(sn, bbm.base_kv[bbm.f])
    ib_t = np.abs(i_t) * current_base_ka(sn, bbm.base_kv[bbm.t])
    bm = mapping.branch_map

    rows = {}
    for idx, ln in net.line.items():
        br = bm[("line", idx, 0)]
        i_ka = max(ib_f[br], ib_t[br])
        rated = ln["max_i_ka"] * ln["df"] * ln["parallel"]
        sl = s_f[br] + s_t[br]
        rows[idx] = [s_f[br].real, s_f[br].imag, s_t[br].real, s_t[br].imag, sl.real, sl.imag,
                     ib_f[br], ib_t[br], i_ka, i_ka / rated * 100]
    tables["line"] = _frame("line", rows)

    rows = {}
    for idx, tr in net.trafo.items():
        br = bm[("trafo", idx, 0)]
        sl = s_f[br] + s_t[br]
        par = tr["parallel"]
        if loading_by == "power":
            loading = max(abs(s_f[br]), abs(s_t[br])) / (tr["sn_kva"] * par) * 100
        else:
            loading = max(ib_f[br] / (current_base_ka(tr["sn_kva"], tr["vn_hv_kv"]) * par),
                          ib_t[br] / (current_base_ka(tr["sn_kva"], tr["vn_lv_kv"]) * par)) * 100
        rows[idx] = [s_f[br].real, s_f[br].imag, s_t[br].real, s_t[br].imag, sl.real, sl.imag,
                     ib_f[br], ib_t[br], loading]
    tables["trafo"] = _frame("trafo", rows)

    rows = {}
    for idx, tr in net.trafo3w.items():
        hv, mv, lv = (bm[("trafo3w", idx, k)] for k in range(3))
        s_hv, s_mv, s_lv = s_f[hv], s_t[mv], s_t[lv]
        i_hv, i_mv, i_lv = ib_f[hv], ib_t[mv], ib_t[lv]
        sl = s_hv + s_mv + s_lv
        if loading_by == "power":
            loading = max(abs(s_hv) / tr["sn_hv_kva"], abs(s_mv) / tr["sn_mv_kva"],
                          abs(s_lv) / tr["sn_lv_kva"]) * 100
        else:
            loading = max(i_hv / current_base_ka(tr["sn_hv_kva"], tr["vn_hv_kv"]),
                          i_mv / current_base_ka(tr["sn_mv_kva"], tr["vn_mv_kv"]),
                          i_lv / current_base_ka(tr["sn_lv_kva"], tr["vn_lv_kv"])) * 100
        rows[idx] = [s_hv.real, s_hv.imag, s_mv.real, s_mv.imag, s_lv.real, s_lv.imag, sl.real,
                     sl.imag, i_hv, i_mv, i_lv, loading]
    tables["trafo3w"] = _frame("trafo3w", rows)

    rows = {}
    for idx, imp in net.impedance.items():
        br = bm[("impedance", idx, 0)]
        sl = s_f[br] + s_t[br]
        rows[idx] = [s_f[br].real, s_f[br].imag, s_t[br].real, s_t[br].imag, sl.real, sl.imag,
                     ib_f[br], ib_t[br]]
    tables["impedance"] = _frame("impedance", rows)

    # passive bus elements; fixed powers at the solved voltage
    non_source = np.zeros(nb, complex)
    rows = {}
    for idx, ld in net.load.items():
        bus = ld["bus"]
        if ld["in_service"] and bus_ok(bus):
            u = vm[lookup[bus]]
            z, i = ld["const_z_percent"] / 100, ld["const_i_percent"] / 100
            s = complex(ld["p_kw"], ld["q_kvar"]) * ld["scaling"] * (1 - z - i + i * u + z * u * u)
        else:
            s = 0j
        rows[idx] = [s.real, s.imag]
        put(bus, s.real, s.imag)
        non_source[lookup[bus]] += s
    tables["load"] = _frame("load", rows)

    rows = {}
    for idx, sg in net.sgen.items():
        bus = sg["bus"]
        s = complex(sg["p_kw"], sg["q_kvar"]) * sg["scaling"] \
            if sg["in_service"] and bus_ok(bus) else 0j
        rows[idx] = [s.real, s.imag]
        put(bus, s.real, s.imag)
        non_source[lookup[bus]] += s
    tables["sgen"] = _frame("sgen", rows)

    rows = {}
    for idx, sh in net.shunt.items():
        bus = sh["bus"]
        u = vm[lookup[bus]]
        if sh["in_service"] and bus_ok(bus):
            vn = sh["vn_kv"] if sh["vn_kv"] is not None else net.bus[bus]["vn_kv"]
            s = complex(sh["p_kw"], sh["q_kvar"]) * sh["step"] * (net.bus[bus]["vn_kv"] / vn) ** 2 \
                * u * u
            rows[idx] = [s.real, s.imag, u]
        else:
            s = 0j
            rows[idx] = [0.0, 0.0, np.nan]
        put(bus, s.real, s.imag)
        non_source[lookup[bus]] += s
    tables["shunt"] = _frame("shunt", rows)

    for kind in ("ward", "xward"):
        rows = {}
        for idx, wd in net.tables[kind].items():
            bus = wd["bus"]
            u = vm[lookup[bus]]
            if wd["in_service"] and bus_ok(bus):
                s = complex(wd["ps_kw"], wd["qs_kvar"]) + complex(wd["pz_kw"], wd["qz_kvar"]) * u * u
                non_source[lookup[bus]] += s
                if kind == "xward":
                    s = s + s_f[bm[("xward", idx, 0)]]
                rows[idx] = [s.real, s.imag, u]
            else:
                s = 0j
                rows[idx] = [0.0, 0.0, np.nan]
            put(bus, s.real, s.imag)
        tables[kind] = _frame(kind, rows)

    # sources: what the bus needs beyond its passive elements
    s_branch = V * np.conj(build_branch_only_current(bbm, V))
    source_need = -s_branch * sn - non_source
    src_s: dict[int, complex] = {}
    by_bus = defaultdict(list)
    for pos, (kind, idx, k) in enumerate(mapping.sources):
        by_bus[k].append(pos)
    fixed_p = {}
    for pos, (kind, idx, k) in enumerate(mapping.sources):
        if kind == "gen":
            fixed_p[pos] = net.gen[idx]["p_kw"]
        elif kind in ("dcline_from", "dcline_to"):
            dc = net.dcline[idx]
            p_from = dc["p_kw"]
            fixed_p[pos] = p_from if kind == "dcline_from" else \
                -(p_from * (1 - dc["p_loss_percent"] / 100) - dc["p_loss_kw"])
        elif kind == "xward":
            fixed_p[pos] = 0.0
    for k, positions in by_bus.items():
        if iso[k]:
            for pos in positions:
                src_s[pos] = 0j
            continue
        need = source_need[k]
        slacks = [p for p in positions if p not in fixed_p]
        p_rest = need.real - sum(fixed_p[p] for p in positions if p in fixed_p)
        q_fixed = sum(fixed_q[p] * sn for p in positions if p in fixed_q)
        free_q = [p for p in positions if p not in fixed_q]
        q_share = (need.imag - q_fixed) / len(free_q) if free_q else 0.0
        for pos in positions:
            if pos in fixed_p:
                p = fixed_p[pos]
            else:
                p = p_rest / len(slacks)
            q = fixed_q[pos] * sn if pos in fixed_q else q_share
            src_s[pos] = complex(p, q)

    def source_rows(kind):
        out = {}
        for pos, (k_, idx, k) in enumerate(mapping.sources):
            if k_ == kind:
                out[idx] = (src_s[pos], k)
        return out

    rows = {}
    gen_src = source_rows("gen")
    for idx, g in net.gen.items():
        if idx in gen_src:
            s, k = gen_src[idx]
            rows[idx] = [s.real, s.imag, math.degrees(np.angle(V[k])), vm[k]]
        else:
            s = 0j
            rows[idx] = [0.0, 0.0, np.nan, np.nan]
        if idx in gen_src and not iso[gen_src[idx][1]]:
            put(g["bus"], s.real, s.imag)
        else:
            rows[idx] = [0.0, 0.0, np.nan, np.nan]
    tables["gen"] = _frame("gen", rows)

    rows = {}
    eg_src = source_rows("ext_grid")
    for idx, eg in net.ext_grid.items():
        s = eg_src[idx][0] if idx in eg_src else 0j
        rows[idx] = [s.real, s.imag]
        put(eg["bus"], s.real, s.imag)
    tables["ext_grid"] = _frame("ext_grid", rows)

    rows = {}
    dc_from, dc_to = source_rows("dcline_from"), source_rows("dcline_to")
    for idx, dc in net.dcline.items():
        if idx in dc_from and not iso[dc_from[idx][1]] and not iso[dc_to[idx][1]]:
            (sf, kf), (st, kt) = dc_from[idx], dc_to[idx]
            rows[idx] = [sf.real, sf.imag, st.real, st.imag, sf.real + st.real, vm[kf], vm[kt]]
            put(dc["from_bus"], sf.real, sf.imag)
            put(dc["to_bus"], st.real, st.imag)
        else:
            rows[idx] = [0.0, 0.0, 0.0, 0.0, 0.0, np.nan, np.nan]
    tables["dcline"] = _frame("dcline", rows)

    rows = {}
    for idx in net.bus.indices():
        k = lookup[idx]
        if bus_ok(idx):
            rows[idx] = [vm[k], math.degrees(np.angle(V[k])), bus_p[idx], bus_q[idx]]
        else:
            rows[idx] = [np.nan, np.nan, np.nan, np.nan]
    tables["bus"] = _frame("bus", rows)
    return tables


def build_branch_only_current(bbm: BusBranchModel, V):
    """Nodal currents through branches only (bus shunts excluded)."""
    if bbm._ybranch is None:
        bbm.ybus()
    return bbm._ybranch @ V
