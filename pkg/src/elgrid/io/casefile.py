"""MATPOWER-style case files (version 2 layout).

Import guesses element data from per-unit branch parameters; export writes
the bus-branch view, so nameplate data do not survive an export.
"""
from __future__ import annotations

import logging
import math
import re

import numpy as np

from .. import bbm as bbm_mod
from ..bbm import ISOLATED, PV, SLACK
from ..network import (Network, NetworkError, create_bus, create_empty_network,
                       create_ext_grid, create_gen, create_line_from_parameters, create_load,
                       create_sgen, create_shunt, create_switch,
                       create_transformer_from_parameters)

logger = logging.getLogger(__name__)

BUS_COLS = ("bus_i", "type", "Pd", "Qd", "Gs", "Bs", "area", "Vm", "Va", "baseKV", "zone",
            "Vmax", "Vmin")
GEN_COLS = ("bus", "Pg", "Qg", "Qmax", "Qmin", "Vg", "mBase", "status", "Pmax", "Pmin")
BRANCH_COLS = ("fbus", "tbus", "r", "x", "b", "rateA", "rateB", "rateC", "ratio", "angle",
               "status", "angmin", "angmax")

LINE_LENGTH_KM = 1.0
NO_RATING_KA = 99999.0
FALLBACK_KV = 1.0


def parse_case(text: str) -> dict:
    """Read ``baseMVA`` and the bus, gen and branch matrices from case-file text."""
    text = re.sub(r"%[^\n]*", "", text)
    m = re.search(r"mpc\.baseMVA\s*=\s*([-+0-9.eE]+)\s*;", text)
    if not m:
        raise NetworkError("case file has no baseMVA")
    case = {"baseMVA": float(m.group(1))}
    for name in ("bus", "gen", "branch"):
        m = re.search(rf"mpc\.{name}\s*=\s*\[(.*?)\]\s*;", text, re.S)
        if not m:
            raise NetworkError(f"case file has no {name} matrix")
        rows = []
        for line in re.split(r"[;\n]", m.group(1)):
            vals = line.replace(",", " ").split()
            if vals:
                rows.append([float(v) for v in vals])
        width = max((len(r) for r in rows), default=0)
        if any(len(r) != width for r in rows):
            raise NetworkError(f"case file {name} matrix has ragged rows")
        case[name] = np.array(rows, dtype=float).reshape(len(rows), width)
    return case


def _fmt(x: float) -> str:
    return repr(float(x)) if x != int(x) or abs(x) >= 1e15 else str(int(x))


def write_case(case: dict, path, name: str = "case") -> None:
    lines = [f"function mpc = {name}", "mpc.version = '2';", f"mpc.baseMVA = {_fmt(case['baseMVA'])};"]
    for key, cols in (("bus", BUS_COLS), ("gen", GEN_COLS), ("branch", BRANCH_COLS)):
        lines.append(f"%% {' '.join(cols)}")
        lines.append(f"mpc.{key} = [")
        for row in case[key]:
            lines.append("\t" + "\t".join(_fmt(v) for v in row) + ";")
        lines.append("];")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def import_case(source, f_hz: float = 50.0) -> Network:
    """Build a network from a case file path or a parsed case dict.

    Bus ``i`` in the file becomes bus index ``i - 1``. Branches without
    ratio or angle between equal base voltages become 1 km lines; all other
    branches become transformers whose ratio is stored entirely as a tap
    offset. Zero-impedance branches become closed bus-bus switches.
    """
    if isinstance(source, dict):
        case = source
    else:
        with open(source, encoding="utf-8") as fh:
            case = parse_case(fh.read())
    base_mva = case["baseMVA"]
    net = create_empty_network("case", f_hz=f_hz, sn_kva=base_mva * 1000.0)
    bus_type = {}
    base_kv = {}
    for row in case["bus"]:
        num, btype = int(row[0]), int(row[1])
        kv = row[9] if row[9] > 0 else FALLBACK_KV
        if row[9] <= 0:
            net.diagnostics.append(f"bus {num}: baseKV missing, assumed {FALLBACK_KV} kV")
        idx = create_bus(net, kv, name=str(num), in_service=btype != 4, index=num - 1)
        bus_type[idx] = btype
        base_kv[idx] = kv
        if row[2] or row[3]:
            create_load(net, idx, row[2] * 1000.0, row[3] * 1000.0)
        if row[4] or row[5]:
            create_shunt(net, idx, q_kvar=-row[5] * 1000.0, p_kw=row[4] * 1000.0)
    va = {int(r[0]) - 1: float(r[8]) for r in case["bus"]}
    slack_done = set()
    for row in case["gen"]:
        b = int(row[0]) - 1
        on = row[7] > 0
        if bus_type[b] == 3 and on and b not in slack_done:
            create_ext_grid(net, b, vm_pu=row[5], va_degree=va[b])
            slack_done.add(b)
        elif bus_type[b] in (2, 3):
            create_gen(net, b, -row[1] * 1000.0, vm_pu=row[5], q_min_kvar=-row[3] * 1000.0,
                       q_max_kvar=-row[4] * 1000.0, in_service=bool(on))
        else:
            create_sgen(net, b, -row[1] * 1000.0, -row[2] * 1000.0, in_service=bool(on))
    for row in case["branch"]:
        f, t = int(row[0]) - 1, int(row[1]) - 1
        r, x, b, rate, ratio, angle, status = row[2], row[3], row[4], row[5], row[8], row[9], row[10]
        on = bool(status > 0)
        if r == 0 and x == 0:
            sw = create_switch(net, f, t, "bus", closed=on)
            net.diagnostics.append(f"branch {f + 1}-{t + 1} has zero impedance; imported as "
                                   f"switch {sw}")
            continue
        n = ratio if ratio != 0 else 1.0
        if n == 1.0 and angle == 0 and base_kv[f] == base_kv[t]:
            zb = base_kv[f] ** 2 / base_mva
            i_max = rate / (math.sqrt(3) * base_kv[f]) if rate > 0 else NO_RATING_KA
            create_line_from_parameters(
                net, f, t, LINE_LENGTH_KM, r * zb, x * zb,
                b / (2 * math.pi * f_hz * zb) * 1e9, i_max, in_service=on)
            continue
        if r < 0 or x < 0:
            raise NetworkError(f"branch {f + 1}-{t + 1}: negative impedance cannot be a "
                               "transformer")
        tap = {}
        if n != 1.0:
            tap = dict(tp_side="hv", tp_mid=0, tp_min=-1, tp_max=1, tp_pos=1 if n > 1 else -1,
                       tp_st_percent=abs(n - 1) * 100.0)
        create_transformer_from_parameters(
            net, f, t, base_mva * 1000.0, base_kv[f], base_kv[t], math.hypot(r, x) * 100.0,
            r * 100.0, shift_degree=angle, model="pi", in_service=on, **tap)
        if b:
            # charging of a transformer branch cannot be magnetizing; keep it as bus shunts
            create_shunt(net, f, q_kvar=-b / 2 / n ** 2 * base_mva * 1000.0, in_service=on)
            create_shunt(net, t, q_kvar=-b / 2 * base_mva * 1000.0, in_service=on)
            net.diagnostics.append(f"branch {f + 1}-{t + 1}: transformer charging moved to "
                                   "bus shunts")
    return net


def export_case(net: Network, path=None, name: str = "case") -> dict:
    """Write the bus-branch view of ``net`` as a case dict (and file if ``path``).

    Closed bus-bus switches appear fused, three-winding transformers as
    three branches around an extra bus. Branch shunt admittances are folded
    into bus Gs/Bs so the admittance matrix is reproduced exactly; loads
    become constant power at rated voltage.
    """
    bbm, mapping = bbm_mod.convert(net)
    base_mva = net.sn_kva / 1000.0
    nb = bbm.n_bus
    fixed_p = np.zeros(nb)
    gens = []
    for kind, idx, k in mapping.sources:
        if kind == "gen":
            p = net.gen[idx]["p_kw"]
        elif kind == "dcline_from":
            p = net.dcline[idx]["p_kw"]
        elif kind == "dcline_to":
            dc = net.dcline[idx]
            p = -(dc["p_kw"] * (1 - dc["p_loss_percent"] / 100) - dc["p_loss_kw"])
        else:
            p = 0.0
        fixed_p[k] += p / net.sn_kva
        gens.append((k, p, kind, idx))
    y_bus = bbm.y_shunt.copy()
    yff, _, _, ytt = bbm_mod.branch_admittances(bbm)
    on = bbm.br_on
    tap2 = (bbm.tap * bbm.tap.conj()).real
    np.add.at(y_bus, bbm.f[on], bbm.y_from[on] / tap2[on])
    np.add.at(y_bus, bbm.t[on], bbm.y_to[on])
    bus_rows = []
    for k in range(nb):
        t = bbm.bus_type[k]
        btype = 4 if t == ISOLATED else 3 if t == SLACK else 2 if t == PV else 1
        pd = (bbm.p_pu[k] + bbm.ip_pu[k] - fixed_p[k]) * base_mva
        qd = (bbm.q_pu[k] + bbm.iq_pu[k]) * base_mva
        bus_rows.append([k + 1, btype, pd, qd, y_bus[k].real * base_mva,
                         y_bus[k].imag * base_mva, 1, bbm.vm_set[k],
                         math.degrees(bbm.va_set[k]), bbm.base_kv[k], 1, 1.1, 0.9])
    gen_rows = []
    for pos, (k, p, kind, idx) in enumerate(gens):
        qmin, qmax = bbm.src_q_min[pos], bbm.src_q_max[pos]
        q_hi = -qmin * base_mva if np.isfinite(qmin) else 9999.0
        q_lo = -qmax * base_mva if np.isfinite(qmax) else -9999.0
        gen_rows.append([k + 1, -p / 1000.0, 0.0, q_hi, q_lo, bbm.vm_set[k], base_mva, 1,
                         9999.0, -9999.0])
    br_rows = []
    asym = np.flatnonzero(bbm.ys != bbm.ys_tf)
    if len(asym):
        net.diagnostics.append("asymmetric impedances exported with their forward value")
    rating = _branch_ratings(net, mapping, bbm.n_branch)
    for i in range(bbm.n_branch):
        z = 1 / bbm.ys[i]
        tap = bbm.tap[i]
        ratio = 0.0 if tap == 1 else abs(tap)
        br_rows.append([bbm.f[i] + 1, bbm.t[i] + 1, z.real, z.imag, 0.0, rating[i], 0, 0,
                        ratio, math.degrees(np.angle(tap)), int(on[i]), -360, 360])
    case = {"baseMVA": base_mva, "bus": np.array(bus_rows, dtype=float).reshape(-1, 13),
            "gen": np.array(gen_rows, dtype=float).reshape(-1, 10),
            "branch": np.array(br_rows, dtype=float).reshape(-1, 13)}
    if path is not None:
        write_case(case, path, name)
    return case


def _branch_ratings(net, mapping, n_branch):
    rate = np.zeros(n_branch)
    for (kind, idx, sub), br in mapping.branch_map.items():
        if kind == "line":
            ln = net.line[idx]
            vn = net.bus[ln["from_bus"]]["vn_kv"]
            rate[br] = math.sqrt(3) * vn * ln["max_i_ka"] * ln["df"] * ln["parallel"]
        elif kind == "trafo":
            rate[br] = net.trafo[idx]["sn_kva"] * net.trafo[idx]["parallel"] / 1000.0
        elif kind == "trafo3w":
            tr = net.trafo3w[idx]
            rate[br] = tr[f"sn_{('hv', 'mv', 'lv')[sub]}_kva"] / 1000.0
    return rate
