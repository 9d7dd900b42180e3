"""Canonical JSON grid files.

Layout::

    {"meta": {"name", "f_hz", "sn_kva", "format_version"},
     "elements": {kind: [{"index": i, field: value, ...}, ...]},
     "std_types": {kind: {name: {param: value}}}}

Absent optional values are ``null``. Records carry explicit indices, so
non-contiguous numbering survives a round trip.
"""
from __future__ import annotations

import json

from ..network import ELEMENT_KINDS, SCHEMAS, Network, NetworkError, add_element

FORMAT_VERSION = 1


class GridFileError(NetworkError):
    pass


def network_to_dict(net: Network) -> dict:
    elements = {}
    for kind in ELEMENT_KINDS:
        rows = [{"index": idx, **rec} for idx, rec in net.tables[kind].items()]
        if rows:
            elements[kind] = rows
    std = {}
    for (kind, name), params in sorted(net.std_types.items()):
        std.setdefault(kind, {})[name] = dict(params)
    return {"meta": {"name": net.name, "f_hz": net.f_hz, "sn_kva": net.sn_kva,
                     "format_version": FORMAT_VERSION},
            "elements": elements, "std_types": std}


def network_from_dict(data: dict) -> Network:
    if not isinstance(data, dict):
        raise GridFileError("$: top level must be an object")
    meta = data.get("meta")
    if not isinstance(meta, dict):
        raise GridFileError("$.meta: missing or not an object")
    version = meta.get("format_version")
    if not isinstance(version, int) or isinstance(version, bool):
        raise GridFileError("$.meta.format_version: must be an integer")
    if version > FORMAT_VERSION:
        raise GridFileError(f"$.meta.format_version: version {version} is newer than the "
                            f"supported version {FORMAT_VERSION}")
    for key in ("f_hz", "sn_kva"):
        v = meta.get(key)
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
            raise GridFileError(f"$.meta.{key}: must be a positive number")
    name = meta.get("name", "")
    if not isinstance(name, str):
        raise GridFileError("$.meta.name: must be text")
    net = Network(name, meta["f_hz"], meta["sn_kva"])
    elements = data.get("elements", {})
    if not isinstance(elements, dict):
        raise GridFileError("$.elements: must be an object")
    unknown = set(elements) - set(ELEMENT_KINDS)
    if unknown:
        raise GridFileError(f"$.elements: unknown element kind {sorted(unknown)[0]!r}")
    for kind in ELEMENT_KINDS:
        rows = elements.get(kind, [])
        if not isinstance(rows, list):
            raise GridFileError(f"$.elements.{kind}: must be a list")
        for pos, row in enumerate(rows):
            path = f"$.elements.{kind}[{pos}]"
            if not isinstance(row, dict) or "index" not in row:
                raise GridFileError(f"{path}: record must be an object with an index")
            rec = dict(row)
            index = rec.pop("index")
            missing = set(SCHEMAS[kind]) - set(rec)
            if missing:
                raise GridFileError(f"{path}.{sorted(missing)[0]}: field missing")
            try:
                add_element(net, kind, rec, index=index)
            except NetworkError as exc:
                field = _field_in(str(exc), kind)
                where = f"{path}.{field}" if field else path
                raise GridFileError(f"{where}: {exc}") from None
    std = data.get("std_types", {})
    if not isinstance(std, dict):
        raise GridFileError("$.std_types: must be an object")
    for kind, entries in std.items():
        if kind not in ("line", "trafo", "trafo3w") or not isinstance(entries, dict):
            raise GridFileError(f"$.std_types.{kind}: unknown std-type kind or not an object")
        for tname, params in entries.items():
            if not isinstance(params, dict):
                raise GridFileError(f"$.std_types.{kind}.{tname}: must be an object")
            net.std_types[(kind, tname)] = dict(params)
    return net


def _field_in(message: str, kind: str) -> str | None:
    for field in SCHEMAS[kind]:
        if f"{kind}.{field}" in message or f" {field} " in f" {message} ":
            return field
    return None


def dumps(net: Network) -> str:
    return json.dumps(network_to_dict(net), indent=1, sort_keys=True, allow_nan=False)


def save_network(net: Network, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(net))
        fh.write("\n")


def load_network(path) -> Network:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GridFileError(f"$: invalid JSON ({exc})") from None
    return network_from_dict(data)
