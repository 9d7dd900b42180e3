"""Element-based network model.

A :class:`Network` holds one :class:`ElementTable` per element kind. Every
table maps a non-negative integer index to a record (a plain dict). Indices
are chosen by the caller or allocated as ``max + 1``; they need not be
contiguous. Power values follow the passive sign convention: consumption is
positive, generation negative.
"""
from __future__ import annotations

import copy
import logging
import math
from typing import Any, Iterator

logger = logging.getLogger(__name__)


class NetworkError(ValueError):
    """Raised when an element or network violates the data model."""


class _Required:
    def __repr__(self):
        return "REQUIRED"


REQUIRED = _Required()

ELEMENT_KINDS = ("bus", "load", "sgen", "gen", "ext_grid", "shunt", "line", "trafo",
                 "trafo3w", "switch", "dcline", "impedance", "ward", "xward", "measurement")

# field -> default; REQUIRED marks mandatory fields, None is the "absent" value
SCHEMAS: dict[str, dict[str, Any]] = {
    "bus": {"name": "", "vn_kv": REQUIRED, "in_service": True},
    "load": {"name": "", "bus": REQUIRED, "p_kw": 0.0, "q_kvar": 0.0, "const_z_percent": 0.0,
             "const_i_percent": 0.0, "scaling": 1.0, "in_service": True},
    "sgen": {"name": "", "bus": REQUIRED, "p_kw": 0.0, "q_kvar": 0.0, "scaling": 1.0,
             "sc_model": "none", "sc_current_ka": None, "in_service": True},
    "gen": {"name": "", "bus": REQUIRED, "p_kw": 0.0, "vm_pu": 1.0, "q_min_kvar": None,
            "q_max_kvar": None, "sn_kva": None, "vn_kv": None, "xdss_pu": None, "rdss_pu": None,
            "cos_phi": None, "in_service": True},
    "ext_grid": {"name": "", "bus": REQUIRED, "vm_pu": 1.0, "va_degree": 0.0, "s_sc_max_mva": None,
                 "s_sc_min_mva": None, "rx_max": None, "rx_min": None, "in_service": True},
    "shunt": {"name": "", "bus": REQUIRED, "p_kw": 0.0, "q_kvar": 0.0, "vn_kv": None, "step": 1,
              "in_service": True},
    "line": {"name": "", "from_bus": REQUIRED, "to_bus": REQUIRED, "length_km": REQUIRED,
             "r_ohm_per_km": REQUIRED, "x_ohm_per_km": REQUIRED, "c_nf_per_km": 0.0,
             "max_i_ka": REQUIRED, "df": 1.0, "parallel": 1, "std_type": None, "in_service": True},
    "trafo": {"name": "", "hv_bus": REQUIRED, "lv_bus": REQUIRED, "sn_kva": REQUIRED,
              "vn_hv_kv": REQUIRED, "vn_lv_kv": REQUIRED, "v_sc_percent": REQUIRED,
              "v_scr_percent": REQUIRED, "i0_percent": 0.0, "pfe_kw": 0.0, "shift_degree": 0.0,
              "tp_side": None, "tp_mid": None, "tp_min": None, "tp_max": None, "tp_pos": None,
              "tp_st_percent": None, "tp_degree_percent": None, "parallel": 1, "model": "t",
              "std_type": None, "in_service": True},
    "trafo3w": {"name": "", "hv_bus": REQUIRED, "mv_bus": REQUIRED, "lv_bus": REQUIRED,
                "sn_hv_kva": REQUIRED, "sn_mv_kva": REQUIRED, "sn_lv_kva": REQUIRED,
                "vn_hv_kv": REQUIRED, "vn_mv_kv": REQUIRED, "vn_lv_kv": REQUIRED,
                "vsc_hv_percent": REQUIRED, "vsc_mv_percent": REQUIRED,
                "vsc_lv_percent": REQUIRED, "vscr_hv_percent": REQUIRED,
                "vscr_mv_percent": REQUIRED, "vscr_lv_percent": REQUIRED, "i0_percent": 0.0,
                "pfe_kw": 0.0, "std_type": None, "in_service": True},
    "switch": {"name": "", "bus": REQUIRED, "element": REQUIRED, "et": REQUIRED, "closed": True},
    "dcline": {"name": "", "from_bus": REQUIRED, "to_bus": REQUIRED, "p_kw": 0.0,
               "p_loss_kw": 0.0, "p_loss_percent": 0.0, "vm_from_pu": 1.0, "vm_to_pu": 1.0,
               "q_min_from_kvar": None, "q_max_from_kvar": None, "q_min_to_kvar": None,
               "q_max_to_kvar": None, "in_service": True},
    "impedance": {"name": "", "from_bus": REQUIRED, "to_bus": REQUIRED, "rft_pu": REQUIRED,
                  "xft_pu": REQUIRED, "rtf_pu": REQUIRED, "xtf_pu": REQUIRED,
                  "sn_kva": REQUIRED, "in_service": True},
    "ward": {"name": "", "bus": REQUIRED, "ps_kw": 0.0, "qs_kvar": 0.0, "pz_kw": 0.0,
             "qz_kvar": 0.0, "in_service": True},
    "xward": {"name": "", "bus": REQUIRED, "ps_kw": 0.0, "qs_kvar": 0.0, "pz_kw": 0.0,
              "qz_kvar": 0.0, "r_ohm": REQUIRED, "x_ohm": REQUIRED, "vm_pu": 1.0,
              "in_service": True},
    "measurement": {"name": "", "kind": REQUIRED, "element_kind": REQUIRED, "element": REQUIRED,
                    "side": None, "value": REQUIRED, "std_dev": REQUIRED, "in_service": True},
}

ENUMS = {
    ("sgen", "sc_model"): ("none", "converter"),
    ("trafo", "tp_side"): (None, "hv", "lv"),
    ("trafo", "model"): ("t", "pi"),
    ("switch", "et"): ("bus", "line", "trafo"),
    ("measurement", "kind"): ("v_bus", "p_bus", "q_bus", "p_branch", "q_branch", "i_branch"),
    ("measurement", "element_kind"): ("bus", "line", "trafo"),
    ("measurement", "side"): (None, "from", "to"),
}

BUS_FIELDS = {
    "load": ("bus",), "sgen": ("bus",), "gen": ("bus",), "ext_grid": ("bus",),
    "shunt": ("bus",), "ward": ("bus",), "xward": ("bus",), "switch": ("bus",),
    "line": ("from_bus", "to_bus"), "trafo": ("hv_bus", "lv_bus"),
    "trafo3w": ("hv_bus", "mv_bus", "lv_bus"), "dcline": ("from_bus", "to_bus"),
    "impedance": ("from_bus", "to_bus"),
}

_TEXT_FIELDS = {"name", "std_type", "tp_side", "model", "et", "sc_model", "kind",
                "element_kind", "side"}
_BOOL_FIELDS = {"in_service", "closed"}
_INT_FIELDS = {"bus", "from_bus", "to_bus", "hv_bus", "lv_bus", "mv_bus", "element", "parallel",
               "step", "tp_mid", "tp_min", "tp_max", "tp_pos"}


class ElementTable:
    """Ordered map ``index -> record``; iteration is by ascending index."""

    def __init__(self, kind: str):
        self.kind = kind
        self._rows: dict[int, dict] = {}

    def __len__(self):
        return len(self._rows)

    def __contains__(self, index):
        return index in self._rows

    def __getitem__(self, index: int) -> dict:
        try:
            return self._rows[index]
        except KeyError:
            raise KeyError(f"{self.kind} {index} does not exist") from None

    def __iter__(self) -> Iterator[int]:
        return iter(self._rows)

    def items(self):
        return self._rows.items()

    def values(self):
        return self._rows.values()

    def indices(self) -> list[int]:
        return list(self._rows)

    def next_index(self) -> int:
        return max(self._rows) + 1 if self._rows else 0

    def _insert(self, index: int, record: dict):
        last = next(reversed(self._rows)) if self._rows else -1
        self._rows[index] = record
        if index < last:
            self._rows = dict(sorted(self._rows.items()))

    def _pop(self, index: int) -> dict:
        return self._rows.pop(index)

    def to_frame(self):
        import pandas as pd

        columns = list(SCHEMAS[self.kind])
        return pd.DataFrame.from_dict(self._rows, orient="index", columns=columns)

    def __eq__(self, other):
        return isinstance(other, ElementTable) and self.kind == other.kind \
            and list(self._rows.items()) == list(other._rows.items())

    def __repr__(self):
        return f"ElementTable({self.kind!r}, {len(self)} rows)"


class Network:
    """Container of element tables, global settings and a std-type registry.

    Element tables are reachable as attributes (``net.line``); result tables
    as ``net.res_<kind>`` once an analysis has run.
    """

    def __init__(self, name: str = "", f_hz: float = 50.0, sn_kva: float = 1000.0):
        self.name = name
        self.f_hz = f_hz
        self.sn_kva = sn_kva
        self.tables = {kind: ElementTable(kind) for kind in ELEMENT_KINDS}
        self.std_types: dict[tuple[str, str], dict] = {}
        self.res: dict[str, Any] = {}
        self.diagnostics: list[str] = []

    def __getattr__(self, item):
        tables = self.__dict__.get("tables")
        if tables is not None and item in tables:
            return tables[item]
        if item.startswith("res_"):
            res = self.__dict__.get("res", {})
            if item[4:] in res:
                return res[item[4:]]
        raise AttributeError(item)

    def __repr__(self):
        parts = [f"{len(t)} {k}" for k, t in self.tables.items() if len(t)]
        return f"Network({self.name!r}: {', '.join(parts) or 'empty'})"

    def copy(self) -> "Network":
        return copy.deepcopy(self)


def create_empty_network(name: str = "", f_hz: float = 50.0, sn_kva: float = 1000.0,
                         add_std_types: bool = True) -> Network:
    """Create a network without elements.

    ``sn_kva`` is the power base of the per-unit system. The std-type
    registry is seeded with the built-in library unless ``add_std_types``
    is false.
    """
    if not _positive(f_hz):
        raise NetworkError("f_hz must be positive")
    if not _positive(sn_kva):
        raise NetworkError("sn_kva must be positive")
    net = Network(name, float(f_hz), float(sn_kva))
    if add_std_types:
        from .std_types import add_basic_std_types

        add_basic_std_types(net)
    return net


def _positive(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x) and x > 0


def _num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _check_types(kind: str, rec: dict) -> list[str]:
    out = []
    for field, value in rec.items():
        if value is None:
            if SCHEMAS[kind][field] is REQUIRED:
                out.append(f"{kind}.{field} is required")
            continue
        if (kind, field) in ENUMS:
            if value not in ENUMS[(kind, field)]:
                out.append(f"{kind}.{field} = {value!r} not in {ENUMS[(kind, field)]}")
        elif field in _TEXT_FIELDS:
            if not isinstance(value, str):
                out.append(f"{kind}.{field} must be text")
        elif field in _BOOL_FIELDS:
            if not isinstance(value, bool):
                out.append(f"{kind}.{field} must be a flag")
        elif field in _INT_FIELDS:
            if not (isinstance(value, int) and not isinstance(value, bool)):
                out.append(f"{kind}.{field} must be an integer")
        elif not _num(value):
            out.append(f"{kind}.{field} must be a finite number")
    return out


def check_record(kind: str, rec: dict) -> list[str]:
    """Field-level invariants of a single record (no cross-table checks)."""
    out = _check_types(kind, rec)
    if out:
        return out
    g = rec.get
    if kind == "bus" and not g("vn_kv") > 0:
        out.append("bus.vn_kv must be positive")
    elif kind == "load":
        z, i = g("const_z_percent"), g("const_i_percent")
        if z < 0 or i < 0:
            out.append("load ZIP shares must be non-negative")
        elif z + i > 100:
            out.append(f"load const_z_percent + const_i_percent = {z + i} exceeds 100")
        if g("scaling") < 0:
            out.append("load.scaling must be non-negative")
    elif kind == "sgen":
        if g("scaling") < 0:
            out.append("sgen.scaling must be non-negative")
        if g("sc_model") == "converter" and not (g("sc_current_ka") is not None
                                                  and g("sc_current_ka") >= 0):
            out.append("sgen with converter sc_model needs sc_current_ka >= 0")
    elif kind == "gen":
        if g("q_min_kvar") is not None and g("q_max_kvar") is not None \
                and g("q_min_kvar") > g("q_max_kvar"):
            out.append("gen.q_min_kvar exceeds q_max_kvar")
        if not g("vm_pu") > 0:
            out.append("gen.vm_pu must be positive")
        for f in ("sn_kva", "vn_kv", "xdss_pu"):
            if g(f) is not None and not g(f) > 0:
                out.append(f"gen.{f} must be positive")
        if g("cos_phi") is not None and not 0 < g("cos_phi") <= 1:
            out.append("gen.cos_phi must be in (0, 1]")
    elif kind == "ext_grid":
        if not g("vm_pu") > 0:
            out.append("ext_grid.vm_pu must be positive")
        for f in ("s_sc_max_mva", "s_sc_min_mva"):
            if g(f) is not None and not g(f) > 0:
                out.append(f"ext_grid.{f} must be positive")
        for f in ("rx_max", "rx_min"):
            if g(f) is not None and g(f) < 0:
                out.append(f"ext_grid.{f} must be non-negative")
    elif kind == "shunt":
        if g("step") < 0:
            out.append("shunt.step must be non-negative")
        if g("vn_kv") is not None and not g("vn_kv") > 0:
            out.append("shunt.vn_kv must be positive")
    elif kind == "line":
        if g("from_bus") == g("to_bus"):
            out.append("line from_bus equals to_bus")
        if not g("length_km") > 0:
            out.append("line.length_km must be positive")
        if g("r_ohm_per_km") < 0 or g("c_nf_per_km") < 0:
            out.append("line r_ohm_per_km and c_nf_per_km must be non-negative")
        if not g("max_i_ka") > 0:
            out.append("line.max_i_ka must be positive")
        if not 0 < g("df") <= 1:
            out.append("line.df must be in (0, 1]")
        if g("parallel") < 1:
            out.append("line.parallel must be >= 1")
    elif kind == "trafo":
        for f in ("sn_kva", "vn_hv_kv", "vn_lv_kv", "v_sc_percent"):
            if not g(f) > 0:
                out.append(f"trafo.{f} must be positive")
        if g("v_scr_percent") < 0 or g("i0_percent") < 0 or g("pfe_kw") < 0:
            out.append("trafo v_scr_percent, i0_percent and pfe_kw must be non-negative")
        if g("v_scr_percent") > g("v_sc_percent"):
            out.append("trafo.v_scr_percent exceeds v_sc_percent")
        if g("hv_bus") == g("lv_bus"):
            out.append("trafo hv_bus equals lv_bus")
        if g("parallel") < 1:
            out.append("trafo.parallel must be >= 1")
        if g("tp_st_percent") is not None and g("tp_st_percent") < 0:
            out.append("trafo.tp_st_percent must be non-negative")
        if g("tp_pos") is not None:
            lo, hi = g("tp_min"), g("tp_max")
            if (lo is not None and g("tp_pos") < lo) or (hi is not None and g("tp_pos") > hi):
                out.append(f"trafo.tp_pos {g('tp_pos')} outside [{lo}, {hi}]")
    elif kind == "trafo3w":
        for f in ("sn_hv_kva", "sn_mv_kva", "sn_lv_kva", "vn_hv_kv", "vn_mv_kv", "vn_lv_kv",
                  "vsc_hv_percent", "vsc_mv_percent", "vsc_lv_percent"):
            if not g(f) > 0:
                out.append(f"trafo3w.{f} must be positive")
        for w in ("hv", "mv", "lv"):
            if not 0 <= g(f"vscr_{w}_percent") <= g(f"vsc_{w}_percent"):
                out.append(f"trafo3w.vscr_{w}_percent must be in [0, vsc_{w}_percent]")
        if len({g("hv_bus"), g("mv_bus"), g("lv_bus")}) < 3:
            out.append("trafo3w buses must be distinct")
        if g("i0_percent") < 0 or g("pfe_kw") < 0:
            out.append("trafo3w i0_percent and pfe_kw must be non-negative")
    elif kind == "dcline":
        if g("from_bus") == g("to_bus"):
            out.append("dcline from_bus equals to_bus")
        if g("p_loss_kw") < 0 or g("p_loss_percent") < 0:
            out.append("dcline losses must be non-negative")
    elif kind == "impedance":
        if g("rft_pu") == 0 and g("xft_pu") == 0:
            out.append("impedance forward impedance is zero")
        if g("rtf_pu") == 0 and g("xtf_pu") == 0:
            out.append("impedance backward impedance is zero")
        if not g("sn_kva") > 0:
            out.append("impedance.sn_kva must be positive")
        if g("from_bus") == g("to_bus"):
            out.append("impedance from_bus equals to_bus")
    elif kind == "xward":
        if g("r_ohm") == 0 and g("x_ohm") == 0:
            out.append("xward internal impedance is zero")
        if not g("vm_pu") > 0:
            out.append("xward.vm_pu must be positive")
    elif kind == "measurement":
        if not g("std_dev") > 0:
            out.append("measurement.std_dev must be positive")
        if g("element_kind") == "bus" and g("kind") not in ("v_bus", "p_bus", "q_bus"):
            out.append(f"measurement kind {g('kind')} needs a branch element")
        if g("element_kind") != "bus":
            if g("kind") not in ("p_branch", "q_branch", "i_branch"):
                out.append(f"measurement kind {g('kind')} needs a bus element")
            if g("side") is None:
                out.append("branch measurement needs a side")
    return out


def _reference_errors(net: Network, kind: str, rec: dict) -> list[str]:
    out = []
    for field in BUS_FIELDS.get(kind, ()):
        b = rec.get(field)
        if b not in net.bus:
            out.append(f"bus {b} does not exist")
    if kind == "switch":
        et, el = rec["et"], rec["element"]
        target = net.tables[et]
        if el not in target:
            out.append(f"switch target {et} {el} does not exist")
        elif et == "bus":
            if el == rec["bus"]:
                out.append("bus-bus switch connects a bus to itself")
        else:
            terminals = [target[el][f] for f in BUS_FIELDS[et]]
            if rec["bus"] not in terminals:
                out.append(f"switch bus {rec['bus']} is not a terminal of {et} {el}")
    elif kind == "measurement":
        ek, el = rec["element_kind"], rec["element"]
        if el not in net.tables[ek]:
            out.append(f"measured {ek} {el} does not exist")
    return out


def add_element(net: Network, kind: str, record: dict | None = None, index: int | None = None,
                **fields) -> int:
    """Store a new element and return its index.

    Missing optional fields take their defaults. ``index`` forces an
    explicit, unused index.
    """
    if kind not in SCHEMAS:
        raise NetworkError(f"unknown element kind {kind!r}")
    given = dict(record or {}, **fields)
    unknown = set(given) - set(SCHEMAS[kind])
    if unknown:
        raise NetworkError(f"unknown {kind} field(s): {', '.join(sorted(unknown))}")
    rec = {f: (given[f] if f in given else (None if d is REQUIRED else d))
           for f, d in SCHEMAS[kind].items()}
    errors = check_record(kind, rec) or _reference_errors(net, kind, rec)
    if errors:
        raise NetworkError(errors[0])
    table = net.tables[kind]
    if index is None:
        index = table.next_index()
    elif isinstance(index, bool) or not isinstance(index, int) or index < 0:
        raise NetworkError(f"index must be a non-negative integer, got {index!r}")
    elif index in table:
        raise NetworkError(f"{kind} index {index} already exists")
    table._insert(index, rec)
    return index


def remove_element(net: Network, kind: str, index: int) -> dict:
    """Remove an element and return its record. Dependants are not touched."""
    if index not in net.tables[kind]:
        raise NetworkError(f"{kind} {index} does not exist")
    return net.tables[kind]._pop(index)


def validate_network(net: Network) -> list[str]:
    """Return every invariant violation found; an empty list means well formed."""
    out = []
    if not _positive(net.f_hz):
        out.append("f_hz must be positive")
    if not _positive(net.sn_kva):
        out.append("sn_kva must be positive")
    for kind, table in net.tables.items():
        for idx, rec in table.items():
            if set(rec) != set(SCHEMAS[kind]):
                out.append(f"{kind} {idx}: fields do not match the schema")
                continue
            errors = check_record(kind, rec)
            if not errors:
                errors = _reference_errors(net, kind, rec)
            out.extend(f"{kind} {idx}: {e}" for e in errors)
    for idx, rec in net.line.items():
        f, t = rec["from_bus"], rec["to_bus"]
        if f in net.bus and t in net.bus and net.bus[f]["vn_kv"] != net.bus[t]["vn_kv"]:
            out.append(f"line {idx}: terminal buses have different vn_kv")
    return out


# -- create helpers ---------------------------------------------------------------------------

def create_bus(net, vn_kv, name="", in_service=True, index=None):
    return add_element(net, "bus", dict(vn_kv=vn_kv, name=name, in_service=in_service), index)


def create_load(net, bus, p_kw, q_kvar=0.0, const_z_percent=0.0, const_i_percent=0.0,
                scaling=1.0, name="", in_service=True, index=None):
    return add_element(net, "load", dict(
        bus=bus, p_kw=p_kw, q_kvar=q_kvar, const_z_percent=const_z_percent,
        const_i_percent=const_i_percent, scaling=scaling, name=name, in_service=in_service), index)


def create_sgen(net, bus, p_kw, q_kvar=0.0, scaling=1.0, sc_model="none", sc_current_ka=None,
                name="", in_service=True, index=None):
    return add_element(net, "sgen", dict(
        bus=bus, p_kw=p_kw, q_kvar=q_kvar, scaling=scaling, sc_model=sc_model,
        sc_current_ka=sc_current_ka, name=name, in_service=in_service), index)


def create_gen(net, bus, p_kw, vm_pu=1.0, q_min_kvar=None, q_max_kvar=None, index=None,
               **kwargs):
    return add_element(net, "gen", dict(bus=bus, p_kw=p_kw, vm_pu=vm_pu, q_min_kvar=q_min_kvar,
                                        q_max_kvar=q_max_kvar, **kwargs), index)


def create_ext_grid(net, bus, vm_pu=1.0, va_degree=0.0, index=None, **kwargs):
    return add_element(net, "ext_grid", dict(bus=bus, vm_pu=vm_pu, va_degree=va_degree,
                                             **kwargs), index)


def create_shunt(net, bus, q_kvar, p_kw=0.0, vn_kv=None, step=1, name="", in_service=True,
                 index=None):
    return add_element(net, "shunt", dict(bus=bus, p_kw=p_kw, q_kvar=q_kvar, vn_kv=vn_kv,
                                          step=step, name=name, in_service=in_service), index)


def create_line_from_parameters(net, from_bus, to_bus, length_km, r_ohm_per_km, x_ohm_per_km,
                                c_nf_per_km, max_i_ka, index=None, **kwargs):
    return add_element(net, "line", dict(
        from_bus=from_bus, to_bus=to_bus, length_km=length_km, r_ohm_per_km=r_ohm_per_km,
        x_ohm_per_km=x_ohm_per_km, c_nf_per_km=c_nf_per_km, max_i_ka=max_i_ka, **kwargs), index)


def create_line(net, from_bus, to_bus, length_km, std_type, index=None, **overrides):
    """Create a line whose per-km data come from the registered std type."""
    from .std_types import load_std_type

    params = load_std_type(net, std_type, "line")
    rec = dict(params, from_bus=from_bus, to_bus=to_bus, length_km=length_km, std_type=std_type)
    rec.update(overrides)
    return add_element(net, "line", rec, index)


create_line_from_std_type = create_line


def create_transformer_from_parameters(net, hv_bus, lv_bus, sn_kva, vn_hv_kv, vn_lv_kv,
                                       v_sc_percent, v_scr_percent, pfe_kw=0.0, i0_percent=0.0,
                                       index=None, **kwargs):
    return add_element(net, "trafo", dict(
        hv_bus=hv_bus, lv_bus=lv_bus, sn_kva=sn_kva, vn_hv_kv=vn_hv_kv, vn_lv_kv=vn_lv_kv,
        v_sc_percent=v_sc_percent, v_scr_percent=v_scr_percent, pfe_kw=pfe_kw,
        i0_percent=i0_percent, **kwargs), index)


def create_transformer(net, hv_bus, lv_bus, std_type, index=None, **overrides):
    from .std_types import load_std_type

    rec = dict(load_std_type(net, std_type, "trafo"), hv_bus=hv_bus, lv_bus=lv_bus,
               std_type=std_type)
    if rec.get("tp_pos") is None and rec.get("tp_mid") is not None:
        rec["tp_pos"] = rec["tp_mid"]
    rec.update(overrides)
    return add_element(net, "trafo", rec, index)


def create_transformer3w_from_parameters(net, hv_bus, mv_bus, lv_bus, index=None, **kwargs):
    return add_element(net, "trafo3w", dict(hv_bus=hv_bus, mv_bus=mv_bus, lv_bus=lv_bus,
                                            **kwargs), index)


def create_transformer3w(net, hv_bus, mv_bus, lv_bus, std_type, index=None, **overrides):
    from .std_types import load_std_type

    rec = dict(load_std_type(net, std_type, "trafo3w"), hv_bus=hv_bus, mv_bus=mv_bus,
               lv_bus=lv_bus, std_type=std_type)
    rec.update(overrides)
    return add_element(net, "trafo3w", rec, index)


def create_switch(net, bus, element, et, closed=True, name="", index=None):
    return add_element(net, "switch", dict(bus=bus, element=element, et=et, closed=closed,
                                           name=name), index)


def create_dcline(net, from_bus, to_bus, p_kw, p_loss_percent=0.0, p_loss_kw=0.0, vm_from_pu=1.0,
                  vm_to_pu=1.0, index=None, **kwargs):
    return add_element(net, "dcline", dict(
        from_bus=from_bus, to_bus=to_bus, p_kw=p_kw, p_loss_percent=p_loss_percent,
        p_loss_kw=p_loss_kw, vm_from_pu=vm_from_pu, vm_to_pu=vm_to_pu, **kwargs), index)


def create_impedance(net, from_bus, to_bus, rft_pu, xft_pu, sn_kva, rtf_pu=None, xtf_pu=None,
                     name="", in_service=True, index=None):
    return add_element(net, "impedance", dict(
        from_bus=from_bus, to_bus=to_bus, rft_pu=rft_pu, xft_pu=xft_pu,
        rtf_pu=rft_pu if rtf_pu is None else rtf_pu, xtf_pu=xft_pu if xtf_pu is None else xtf_pu,
        sn_kva=sn_kva, name=name, in_service=in_service), index)


def create_ward(net, bus, ps_kw, qs_kvar, pz_kw, qz_kvar, name="", in_service=True, index=None):
    return add_element(net, "ward", dict(bus=bus, ps_kw=ps_kw, qs_kvar=qs_kvar, pz_kw=pz_kw,
                                         qz_kvar=qz_kvar, name=name, in_service=in_service), index)


def create_xward(net, bus, ps_kw, qs_kvar, pz_kw, qz_kvar, r_ohm, x_ohm, vm_pu, name="",
                 in_service=True, index=None):
    return add_element(net, "xward", dict(
        bus=bus, ps_kw=ps_kw, qs_kvar=qs_kvar, pz_kw=pz_kw, qz_kvar=qz_kvar, r_ohm=r_ohm,
        x_ohm=x_ohm, vm_pu=vm_pu, name=name, in_service=in_service), index)


def create_measurement(net, kind, element_kind, element, value, std_dev, side=None, name="",
                       in_service=True, index=None):
    """Add a measurement record.

    ``value`` is in p.u. for ``v_bus``, kW/kvar (PSC, bus consumption) for
    bus powers, kW/kvar flowing into the branch at ``side`` for branch
    powers and kA for ``i_branch``.
    """
    return add_element(net, "measurement", dict(
        kind=kind, element_kind=element_kind, element=element, value=value, std_dev=std_dev,
        side=side, name=name, in_service=in_service), index)
