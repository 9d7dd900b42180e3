"""Initial symmetrical short-circuit currents with the equivalent voltage source.

The fault network keeps series impedances only: line charging, magnetizing
branches, loads and shunts are dropped, transformer impedances get the
network correction factor K_T and rated ratios. External grids and
synchronous generators become internal impedances to ground; converter
sgens act as current sources whose contributions add to the fault current.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse.linalg import splu

from . import bbm as bbm_mod
from .bbm import ISOLATED
from .network import Network, NetworkError

logger = logging.getLogger(__name__)

_FAULTS = {"3ph": "3ph", "threephase": "3ph", "2ph": "2ph", "twophase": "2ph"}


def default_c(vn_kv: float, case: str) -> float:
    """Voltage factor per the standard's table (above 1 kV / low voltage)."""
    if vn_kv > 1.0:
        return 1.1 if case == "max" else 1.0
    return 1.05 if case == "max" else 0.95


@dataclass
class SCOptions:
    fault: str = "3ph"
    case: str = "max"
    c_max: float | None = None
    c_min: float | None = None
    fault_buses: list | None = None

    def __post_init__(self):
        if self.fault not in _FAULTS:
            raise ValueError(f"fault must be 3ph or 2ph, got {self.fault!r}")
        self.fault = _FAULTS[self.fault]
        if self.case not in ("max", "min"):
            raise ValueError(f"case must be max or min, got {self.case!r}")
        for c in (self.c_max, self.c_min):
            if c is not None and not 0.9 <= c <= 1.2:
                raise ValueError("voltage factors must lie in [0.9, 1.2]")

    def c_of(self, vn_kv: float, case: str | None = None) -> float:
        case = case or self.case
        fixed = self.c_max if case == "max" else self.c_min
        return default_c(vn_kv, case) if fixed is None else fixed


@dataclass
class SCResult:
    ikss_ka: pd.Series
    tables: dict = field(default_factory=dict)
    contributions: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)


def source_internal_impedance(net: Network, kind: str, idx: int, options: SCOptions,
                              diagnostics: list | None = None):
    """Internal impedance of a source in ohm, or ``("current", kA)`` for converters."""
    if kind == "ext_grid":
        eg = net.ext_grid[idx]
        s_sc = eg[f"s_sc_{options.case}_mva"]
        rx = eg[f"rx_{options.case}"]
        if s_sc is None:
            raise NetworkError(f"ext_grid {idx} has no s_sc_{options.case}_mva")
        if rx is None:
            raise NetworkError(f"ext_grid {idx} has no rx_{options.case}")
        vn = net.bus[eg["bus"]]["vn_kv"]
        z = options.c_of(vn) * vn ** 2 / s_sc
        x = z / math.sqrt(1 + rx * rx)
        return complex(rx * x, x)
    if kind == "gen":
        g = net.gen[idx]
        if g["xdss_pu"] is None or g["sn_kva"] is None:
            raise NetworkError(f"gen {idx} needs sn_kva and xdss_pu for short-circuit studies")
        bus_vn = net.bus[g["bus"]]["vn_kv"]
        vn = g["vn_kv"] if g["vn_kv"] is not None else bus_vn
        xd = g["xdss_pu"]
        rd = g["rdss_pu"] if g["rdss_pu"] is not None else 0.07 * xd
        if g["cos_phi"] is None:
            k_g = 1.0
            msg = f"gen {idx}: cos_phi missing, generator correction factor set to 1"
            if diagnostics is not None:
                diagnostics.append(msg)
            logger.warning(msg)
        else:
            sin_phi = math.sqrt(max(0.0, 1 - g["cos_phi"] ** 2))
            k_g = bus_vn / vn * options.c_of(bus_vn, "max") / (1 + xd * sin_phi)
        return complex(rd, xd) * vn ** 2 / (g["sn_kva"] / 1000.0) * k_g
    if kind == "sgen":
        sg = net.sgen[idx]
        if sg["sc_current_ka"] is None:
            raise NetworkError(f"sgen {idx} is a converter without sc_current_ka")
        return ("current", float(sg["sc_current_ka"]))
    raise ValueError(f"{kind} is not a short-circuit source")


def _active(net, rec, bus):
    return rec["in_service"] and net.bus[bus]["in_service"]


def run_short_circuit(net: Network, options: SCOptions | None = None, **kwargs) -> SCResult:
    """Initial short-circuit current at every (or each selected) bus.

    Writes ``net.res["bus_sc"]`` with ``ikss_ka`` and the Thevenin
    impedance ``rk_ohm``/``xk_ohm``. Buses without galvanic connection to
    an impedance source get NaN.
    """
    opt = options or SCOptions(**kwargs)
    diagnostics: list[str] = []
    impedance_sources = [("ext_grid", i, r["bus"]) for i, r in net.ext_grid.items()
                         if _active(net, r, r["bus"])]
    impedance_sources += [("gen", i, r["bus"]) for i, r in net.gen.items()
                          if _active(net, r, r["bus"])]
    converters = [("sgen", i, r["bus"]) for i, r in net.sgen.items()
                  if r["sc_model"] == "converter" and _active(net, r, r["bus"])]
    # K_T always uses c_max of the transformer's low-voltage side
    bbm, mapping = bbm_mod.convert(net, mode="sc",
                                   c_max=lambda vn: opt.c_of(vn, "max"),
                                   sc_seed_buses=[b for _, _, b in impedance_sources])
    sn = bbm.sn_kva
    lookup = mapping.bus_lookup
    y_src = np.zeros(bbm.n_bus, complex)
    for kind, idx, bus in impedance_sources:
        k = lookup[bus]
        z_ohm = source_internal_impedance(net, kind, idx, opt, diagnostics)
        y_src[k] += bbm_mod.z_base_ohm(bbm.base_kv[k], sn) / z_ohm
    live = np.flatnonzero(bbm.bus_type != ISOLATED)
    pos = {int(k): i for i, k in enumerate(live)}
    Y = (bbm_mod.build_admittance_matrix(bbm, include_shunts=False)
         + sparse.diags(y_src)).tocsc()[live][:, live]
    i_base = sn / (math.sqrt(3) * bbm.base_kv) / 1000.0

    buses = net.bus.indices() if opt.fault_buses is None else list(opt.fault_buses)
    fault_k = sorted({lookup[b] for b in buses if lookup[b] in pos})
    lu = splu(Y.tocsc()) if len(live) else None
    z_cols = {}
    if fault_k:
        rhs = np.zeros((len(live), len(fault_k)), complex)
        for j, k in enumerate(fault_k):
            rhs[pos[k], j] = 1.0
        # rows of Z (Z_kj for all j) via the transposed system
        sol = lu.solve(rhs, trans="T")
        z_cols = {k: sol[:, j] for j, k in enumerate(fault_k)}

    conv = []
    for kind, idx, bus in converters:
        _, i_ka = source_internal_impedance(net, kind, idx, opt)
        k = lookup[bus]
        if k in pos:
            conv.append((idx, k, i_ka / i_base[k]))

    factor = math.sqrt(3) / 2 if opt.fault == "2ph" else 1.0
    rows, contributions = {}, {}
    for b in buses:
        k = lookup[b]
        if k not in z_cols or not net.bus[b]["in_service"]:
            rows[b] = [np.nan, np.nan, np.nan]
            continue
        col = z_cols[k]
        zkk = col[pos[k]]
        c = opt.c_of(net.bus[b]["vn_kv"])
        ik_pu = c / abs(zkk)
        parts = {}
        for idx, j, i_pu in conv:
            parts[("sgen", idx)] = abs(col[pos[j]] / zkk) * i_pu * i_base[k] * factor
        zb = bbm_mod.z_base_ohm(bbm.base_kv[k], sn)
        ikss = ik_pu * i_base[k] * factor + sum(parts.values())
        rows[b] = [ikss, zkk.real * zb, zkk.imag * zb]
        if parts:
            contributions[b] = parts
    table = pd.DataFrame.from_dict(rows, orient="index", columns=["ikss_ka", "rk_ohm", "xk_ohm"])
    net.res["bus_sc"] = table
    net.diagnostics.extend(d for d in diagnostics if d not in net.diagnostics)
    return SCResult(ikss_ka=table["ikss_ka"], tables={"bus_sc": table},
                    contributions=contributions, diagnostics=diagnostics)
