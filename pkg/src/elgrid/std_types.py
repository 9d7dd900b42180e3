"""Standard-type registry for lines and transformers.

The built-in entries are typical catalogue values (see README for sources).
They are defaults for convenient grid building, not normative data.
"""
from __future__ import annotations

import copy

from .network import Network, NetworkError

REQUIRED_PARAMS = {
    "line": ("r_ohm_per_km", "x_ohm_per_km", "c_nf_per_km", "max_i_ka"),
    "trafo": ("sn_kva", "vn_hv_kv", "vn_lv_kv", "v_sc_percent", "v_scr_percent", "pfe_kw",
              "i0_percent"),
    "trafo3w": ("sn_hv_kva", "sn_mv_kva", "sn_lv_kva", "vn_hv_kv", "vn_mv_kv", "vn_lv_kv",
                "vsc_hv_percent", "vsc_mv_percent", "vsc_lv_percent", "vscr_hv_percent",
                "vscr_mv_percent", "vscr_lv_percent", "pfe_kw", "i0_percent"),
}

OPTIONAL_PARAMS = {
    "line": (),
    "trafo": ("shift_degree", "tp_side", "tp_mid", "tp_min", "tp_max", "tp_st_percent",
              "tp_degree_percent"),
    "trafo3w": (),
}

BASIC_LINE_TYPES = {
    "NAYY 4x150 SE": {"r_ohm_per_km": 0.208, "x_ohm_per_km": 0.08, "c_nf_per_km": 261.0,
                      "max_i_ka": 0.27},
    "NAYY 4x50 SE": {"r_ohm_per_km": 0.642, "x_ohm_per_km": 0.083, "c_nf_per_km": 210.0,
                     "max_i_ka": 0.142},
    "NA2XS2Y 1x185 RM/25 12/20 kV": {"r_ohm_per_km": 0.161, "x_ohm_per_km": 0.117,
                                     "c_nf_per_km": 273.0, "max_i_ka": 0.362},
    "NA2XS2Y 1x240 RM/25 12/20 kV": {"r_ohm_per_km": 0.122, "x_ohm_per_km": 0.112,
                                     "c_nf_per_km": 304.0, "max_i_ka": 0.421},
    "243-AL1/39-ST1A 110.0": {"r_ohm_per_km": 0.1188, "x_ohm_per_km": 0.39, "c_nf_per_km": 9.0,
                              "max_i_ka": 0.645},
}

BASIC_TRAFO_TYPES = {
    "0.4 MVA 10/0.4 kV": {"sn_kva": 400.0, "vn_hv_kv": 10.0, "vn_lv_kv": 0.4,
                          "v_sc_percent": 4.0, "v_scr_percent": 1.325, "pfe_kw": 0.95,
                          "i0_percent": 0.2375, "shift_degree": 150.0, "tp_side": "hv",
                          "tp_mid": 0, "tp_min": -2, "tp_max": 2, "tp_st_percent": 2.5},
    "0.63 MVA 20/0.4 kV": {"sn_kva": 630.0, "vn_hv_kv": 20.0, "vn_lv_kv": 0.4,
                           "v_sc_percent": 6.0, "v_scr_percent": 1.206, "pfe_kw": 1.65,
                           "i0_percent": 0.2619, "shift_degree": 150.0, "tp_side": "hv",
                           "tp_mid": 0, "tp_min": -2, "tp_max": 2, "tp_st_percent": 2.5},
    "25 MVA 110/10 kV": {"sn_kva": 25000.0, "vn_hv_kv": 110.0, "vn_lv_kv": 10.0,
                         "v_sc_percent": 12.0, "v_scr_percent": 0.41, "pfe_kw": 14.0,
                         "i0_percent": 0.07, "shift_degree": 150.0, "tp_side": "hv",
                         "tp_mid": 0, "tp_min": -9, "tp_max": 9, "tp_st_percent": 1.5},
    "40 MVA 110/20 kV": {"sn_kva": 40000.0, "vn_hv_kv": 110.0, "vn_lv_kv": 20.0,
                         "v_sc_percent": 16.2, "v_scr_percent": 0.34, "pfe_kw": 18.0,
                         "i0_percent": 0.05, "shift_degree": 150.0, "tp_side": "hv",
                         "tp_mid": 0, "tp_min": -9, "tp_max": 9, "tp_st_percent": 1.5},
}

BASIC_TRAFO3W_TYPES = {
    "63/25/38 MVA 110/20/10 kV": {"sn_hv_kva": 63000.0, "sn_mv_kva": 25000.0,
                                  "sn_lv_kva": 38000.0, "vn_hv_kv": 110.0, "vn_mv_kv": 20.0,
                                  "vn_lv_kv": 10.0, "vsc_hv_percent": 10.4,
                                  "vsc_mv_percent": 10.4, "vsc_lv_percent": 10.4,
                                  "vscr_hv_percent": 0.28, "vscr_mv_percent": 0.32,
                                  "vscr_lv_percent": 0.35, "pfe_kw": 35.0, "i0_percent": 0.89},
}


def add_basic_std_types(net: Network) -> None:
    for kind, library in (("line", BASIC_LINE_TYPES), ("trafo", BASIC_TRAFO_TYPES),
                          ("trafo3w", BASIC_TRAFO3W_TYPES)):
        for name, params in library.items():
            net.std_types[(kind, name)] = dict(params)


def define_std_type(net: Network, kind: str, name: str, params: dict) -> None:
    """Create or replace a registry entry. Existing elements keep their values."""
    if kind not in REQUIRED_PARAMS:
        raise NetworkError(f"std types exist only for {', '.join(REQUIRED_PARAMS)}")
    missing = [p for p in REQUIRED_PARAMS[kind] if params.get(p) is None]
    if missing:
        raise NetworkError(f"{kind} std type {name!r} is missing {', '.join(missing)}")
    allowed = set(REQUIRED_PARAMS[kind]) | set(OPTIONAL_PARAMS[kind])
    extra = set(params) - allowed
    if extra:
        raise NetworkError(f"{kind} std type {name!r} has unknown parameters "
                           f"{', '.join(sorted(extra))}")
    net.std_types[(kind, name)] = dict(params)


def load_std_type(net: Network, name: str, kind: str) -> dict:
    try:
        return copy.deepcopy(net.std_types[(kind, name)])
    except KeyError:
        raise NetworkError(f"std type not found: {kind} {name!r}") from None


def available_std_types(net: Network, kind: str) -> list[str]:
    return sorted(n for k, n in net.std_types if k == kind)
