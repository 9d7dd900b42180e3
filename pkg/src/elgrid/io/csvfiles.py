"""Measurement and profile CSV files and result export."""
from __future__ import annotations

import json
import math
import os

import numpy as np
import pandas as pd

from ..network import SCHEMAS, Network, NetworkError

MEASUREMENT_COLUMNS = ["kind", "element_kind", "element", "side", "value", "std_dev"]


def read_measurements(path) -> list:
    """Measurement records from CSV with columns kind, element_kind, element, side, value, std_dev."""
    from ..estimation import Measurement

    df = pd.read_csv(path, dtype={"side": str, "kind": str, "element_kind": str},
                     keep_default_na=False)
    missing = [c for c in MEASUREMENT_COLUMNS if c not in df.columns]
    if missing:
        raise NetworkError(f"measurement file lacks column {missing[0]}")
    out = []
    for i, row in enumerate(df.itertuples(index=False)):
        side = row.side if row.side not in ("", None) else None
        out.append(Measurement(row.kind, row.element_kind, int(row.element), float(row.value),
                               float(row.std_dev), side, True, i))
    return out


def write_measurements(measurements, path) -> None:
    rows = [[m.kind, m.element_kind, m.element, m.side or "", repr(float(m.value)),
             repr(float(m.std_dev))] for m in measurements]
    pd.DataFrame(rows, columns=MEASUREMENT_COLUMNS).to_csv(path, index=False)


def read_profiles(path) -> pd.DataFrame:
    """Profile table indexed by step; columns are ``kind.index.field`` scalers."""
    df = pd.read_csv(path)
    first = df.columns[0]
    if first not in ("step", "timestamp"):
        raise NetworkError("profile file must start with a step or timestamp column")
    if first == "timestamp":
        df.insert(0, "step", range(len(df)))
        df = df.drop(columns="timestamp")
    df = df.set_index("step")
    for col in df.columns:
        parse_profile_column(col)
    return df.astype(float)


def parse_profile_column(col: str) -> tuple[str, int, str]:
    parts = col.split(".")
    if len(parts) != 3 or not parts[1].lstrip("-").isdigit():
        raise NetworkError(f"profile column {col!r} is not of the form kind.index.field")
    kind, idx, field = parts[0], int(parts[1]), parts[2]
    if kind not in SCHEMAS or field not in SCHEMAS[kind]:
        raise NetworkError(f"profile column {col!r} names an unknown element field")
    return kind, idx, field


def apply_profile(net: Network, base: Network, profiles: pd.DataFrame, step) -> None:
    """Set each profiled field of ``net`` to the ``base`` value times the step's factor."""
    if step not in profiles.index:
        raise NetworkError(f"profiles have no step {step}")
    row = profiles.loc[step]
    for col, factor in row.items():
        kind, idx, field = parse_profile_column(col)
        if idx not in base.tables[kind]:
            raise NetworkError(f"profile column {col!r}: {kind} {idx} does not exist")
        net.tables[kind][idx][field] = base.tables[kind][idx][field] * float(factor)


def _result_frames(result) -> dict:
    tables = result.tables if hasattr(result, "tables") else result
    return {k: v for k, v in tables.items() if isinstance(v, pd.DataFrame)}


def write_results(result, path, fmt: str = "csv") -> list[str]:
    """Write result tables.

    ``csv`` writes ``res_<kind>.csv`` per table into directory ``path``
    with an ``index`` column first and empty fields for NaN; ``json``
    writes one file ``{kind: {"columns": [...], "rows": [[index, ...]]}}``
    with ``null`` for NaN. Rows are ordered by index. Returns written paths.
    """
    frames = _result_frames(result)
    if fmt == "csv":
        os.makedirs(path, exist_ok=True)
        written = []
        for kind, df in sorted(frames.items()):
            out = df.sort_index()
            out.index.name = "index"
            p = os.path.join(path, f"res_{kind}.csv")
            out.to_csv(p, na_rep="", float_format="%.17g")
            written.append(p)
        return written
    if fmt == "json":
        doc = {}
        for kind, df in sorted(frames.items()):
            out = df.sort_index()
            rows = []
            for idx, vals in zip(out.index, out.itertuples(index=False)):
                rows.append([_jsonable(idx)] + [_jsonable(v) for v in vals])
            doc[kind] = {"columns": ["index"] + list(out.columns), "rows": rows}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1, allow_nan=False)
            fh.write("\n")
        return [str(path)]
    raise ValueError(f"format must be csv or json, got {fmt!r}")


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return None if math.isnan(v) else float(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def read_results(path) -> dict:
    """Inverse of :func:`write_results` for either format."""
    if os.path.isdir(path):
        out = {}
        for name in sorted(os.listdir(path)):
            if name.startswith("res_") and name.endswith(".csv"):
                df = pd.read_csv(os.path.join(path, name), index_col="index")
                df.index.name = None
                out[name[4:-4]] = df
        return out
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    out = {}
    for kind, tab in doc.items():
        cols = tab["columns"]
        df = pd.DataFrame([r[1:] for r in tab["rows"]], columns=cols[1:],
                          index=[r[0] for r in tab["rows"]])
        out[kind] = df.apply(lambda s: s.astype(float) if s.dtype == object
                             and all(v is None or isinstance(v, (int, float)) for v in s)
                             else s)
    return out
