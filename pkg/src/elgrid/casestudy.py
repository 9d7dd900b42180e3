"""Switching-state enumeration and the quasi-static reconfiguration time series.

A switching state names the tie switches that are open; every other tie
switch is closed. States are screened once (radial, fully supplied,
minimum fault current) and then, at every time step, each remaining state
gets a power flow with a simple tap controller. The accepted state with
the lowest losses wins.
"""
from __future__ import annotations

import copy
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import networkx as nx
import numpy as np
import pandas as pd

from . import topology
from .bbm import ISOLATED, BBMHandle, build_branch_matrices
from .io.csvfiles import apply_profile, parse_profile_column, read_profiles
from .network import Network, NetworkError
from .powerflow import PFOptions, initial_voltage, solve
from .results import current_base_ka
from .shortcircuit import run_short_circuit


@dataclass(frozen=True, order=True)
class SwitchingState:
    open_switch_ids: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "open_switch_ids", tuple(sorted(self.open_switch_ids)))

    def label(self) -> str:
        return ";".join(str(i) for i in self.open_switch_ids)

    @classmethod
    def parse(cls, text: str) -> "SwitchingState":
        text = str(text).strip()
        return cls(tuple(int(t) for t in text.split(";")) if text else ())


@dataclass
class Constraints:
    vmin_pu: float = 0.97
    vmax_pu: float = 1.03
    max_loading_percent: float = 50.0
    ik_min_ka: float = 1.1

    def __post_init__(self):
        if not self.vmin_pu < self.vmax_pu:
            raise ValueError("vmin_pu must be below vmax_pu")


@dataclass
class TimeSeriesConfig:
    """Settings of a reconfiguration time series.

    ``tie_switches`` defaults to every switch of the network and
    ``tap_bounds`` (trafo index to ``(min, max)``) to each transformer's
    own tap range. ``steps`` defaults to every step of the profiles.
    """

    profiles: object = None
    steps: list | None = None
    constraints: Constraints = field(default_factory=Constraints)
    tap_bounds: dict = field(default_factory=dict)
    objective: str = "min_losses"
    tie_switches: list | None = None
    k_open: int = 2
    workers: int = 1
    tol_pu: float = 1e-8
    max_iter: int = 10

    def __post_init__(self):
        if isinstance(self.constraints, dict):
            self.constraints = Constraints(**self.constraints)
        self.tap_bounds = {int(k): (int(v[0]), int(v[1])) for k, v in self.tap_bounds.items()}
        if self.objective != "min_losses":
            raise ValueError(f"unsupported objective {self.objective!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @classmethod
    def from_dict(cls, data: dict, base_dir: str = ".") -> "TimeSeriesConfig":
        data = dict(data)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        prof = data.get("profiles")
        if isinstance(prof, str) and not os.path.isabs(prof):
            data["profiles"] = os.path.join(base_dir, prof)
        if isinstance(data.get("steps"), dict):
            s = data["steps"]
            data["steps"] = list(range(s.get("start", 0), s["stop"], s.get("step", 1)))
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "TimeSeriesConfig":
        with open(path) as fh:
            data = json.load(fh)
        return cls.from_dict(data, base_dir=os.path.dirname(os.path.abspath(path)))

    def profile_frame(self) -> pd.DataFrame:
        if self.profiles is None:
            raise ValueError("no profiles configured")
        if isinstance(self.profiles, pd.DataFrame):
            return self.profiles
        return read_profiles(self.profiles)


# -- states ----------------------------------------------------------------------------------

def enumerate_switching_states(net: Network, tie_switch_ids, k_open: int) -> list[SwitchingState]:
    """All ways to open ``k_open`` of the tie switches, in lexicographic order."""
    ids = sorted(int(i) for i in tie_switch_ids)
    missing = [i for i in ids if i not in net.switch]
    if missing:
        raise NetworkError(f"tie switches not in the network: {missing}")
    if len(set(ids)) != len(ids):
        raise ValueError("tie switch ids must be unique")
    if not 0 <= k_open <= len(ids):
        raise ValueError(f"k_open must be between 0 and {len(ids)}")
    return [SwitchingState(c) for c in itertools.combinations(ids, k_open)]


def apply_state(net: Network, state: SwitchingState, tie_switch_ids=None) -> Network:
    """Copy of ``net`` with the state's switches open and other tie switches closed."""
    out = copy.deepcopy(net)
    for i in tie_switch_ids if tie_switch_ids is not None else ():
        out.switch[i]["closed"] = True
    for i in state.open_switch_ids:
        out.switch[i]["closed"] = False
    return out


def topology_ok(net: Network) -> bool:
    return bool(topology.is_radial(net)) and not topology.unsupplied_buses(net)


def min_fault_current_ka(net: Network) -> float:
    """Smallest minimum-case three-phase Ik'' over all in-service buses; NaN counts as 0."""
    ikss = run_short_circuit(net, case="min", fault="3ph").ikss_ka
    live = [b for b in ikss.index if net.bus[b]["in_service"]]
    vals = ikss.loc[live].to_numpy(dtype=float)
    return float(np.min(np.nan_to_num(vals, nan=0.0))) if len(vals) else math.nan


def filter_feasible_states(net: Network, states, ik_min_ka: float = 1.1, tie_switch_ids=None,
                           order: str = "topology_first", details: dict | None = None
                           ) -> list[SwitchingState]:
    """States that are radial, leave no bus unsupplied and keep Ik''min >= ``ik_min_ka``.

    ``order`` only decides which check runs first. When ``details`` is a
    dict it receives ``state -> {"topology": bool, "ikss_min_ka": float}``
    for every check that was evaluated.
    """
    if order not in ("topology_first", "sc_first"):
        raise ValueError("order must be topology_first or sc_first")
    kept = []
    for st in states:
        n = apply_state(net, st, tie_switch_ids)
        info = {}
        checks = [("topology", lambda: topology_ok(n)),
                  ("ikss_min_ka", lambda: min_fault_current_ka(n))]
        if order == "sc_first":
            checks.reverse()
        ok = True
        for name, fn in checks:
            info[name] = fn()
            ok = info[name] if name == "topology" else info[name] >= ik_min_ka
            if not ok:
                break
        if details is not None:
            details[st] = info
        if ok:
            kept.append(st)
    return kept


# -- evaluation of one state ------------------------------------------------------------------

def controlling_transformers(net: Network) -> dict:
    """Bus index -> transformer that feeds it, found by a graph search.

    The switch-respecting graph without transformer edges splits into
    areas; every bus maps to the transformer whose low-voltage (or medium
    voltage) terminal sits in its area, as ``("trafo", idx)`` or
    ``("trafo3w", idx)``. Buses without such a transformer are absent.
    """
    g = topology.to_graph(net, include_dclines=False)
    g.remove_edges_from([(u, v, k) for u, v, k, d in list(g.edges(keys=True, data=True))
                         if d["kind"] in ("trafo", "trafo3w")])
    feeders = []
    for idx in sorted(net.trafo.indices()):
        tr = net.trafo[idx]
        if tr["in_service"]:
            feeders.append((tr["lv_bus"], ("trafo", idx)))
    for idx in sorted(net.trafo3w.indices()):
        tr = net.trafo3w[idx]
        if tr["in_service"]:
            feeders += [(tr["mv_bus"], ("trafo3w", idx)), (tr["lv_bus"], ("trafo3w", idx))]
    out = {}
    for bus, ref in feeders:
        if bus not in g:
            continue
        for b in nx.node_connected_component(g, bus):
            if isinstance(b, (int, np.integer)):
                out.setdefault(int(b), ref)
    return out


def _tap_changers(net: Network) -> list[int]:
    return sorted(i for i, tr in net.trafo.items()
                  if tr.get("tp_side") is not None and tr.get("tp_pos") is not None)


class _Evaluator:
    """Vectorised metric extraction for one converted state."""

    def __init__(self, net, bbm, mapping):
        bm = mapping.branch_map
        sn = bbm.sn_kva
        self.sn = sn
        lk = mapping.bus_lookup
        self.bus_ids = np.array([b for b in net.bus.indices() if net.bus[b]["in_service"]])
        self.bus_pos = np.array([lk[b] for b in self.bus_ids], dtype=int)
        self.ibase_f = current_base_ka(sn, bbm.base_kv[bbm.f])
        self.ibase_t = current_base_ka(sn, bbm.base_kv[bbm.t])
        # (branch, side, rating in kA); side 0 = from, 1 = to, 2 = both
        lim = []
        for idx, ln in net.line.items():
            if ln["in_service"]:
                lim.append((bm[("line", idx, 0)], 2, ln["max_i_ka"] * ln["df"] * ln["parallel"]))
        for idx, tr in net.trafo.items():
            if tr["in_service"]:
                br = bm[("trafo", idx, 0)]
                lim.append((br, 0, current_base_ka(tr["sn_kva"], tr["vn_hv_kv"]) * tr["parallel"]))
                lim.append((br, 1, current_base_ka(tr["sn_kva"], tr["vn_lv_kv"]) * tr["parallel"]))
        for idx, tr in net.trafo3w.items():
            if tr["in_service"]:
                lim.append((bm[("trafo3w", idx, 0)], 0,
                            current_base_ka(tr["sn_hv_kva"], tr["vn_hv_kv"])))
                lim.append((bm[("trafo3w", idx, 1)], 1,
                            current_base_ka(tr["sn_mv_kva"], tr["vn_mv_kv"])))
                lim.append((bm[("trafo3w", idx, 2)], 1,
                            current_base_ka(tr["sn_lv_kva"], tr["vn_lv_kv"])))
        self.lim_br = np.array([x[0] for x in lim], dtype=int)
        self.lim_side = np.array([x[1] for x in lim], dtype=int)
        self.lim_ka = np.array([x[2] for x in lim], dtype=float)
        self.yf, self.yt = build_branch_matrices(bbm)
        self.f, self.t = bbm.f, bbm.t
        self.iso = bbm.bus_type == ISOLATED

    def metrics(self, V):
        V = np.where(self.iso, 0j, V)
        i_f = self.yf @ V
        i_t = self.yt @ V
        losses = float(np.sum((V[self.f] * np.conj(i_f) + V[self.t] * np.conj(i_t)).real)) * self.sn
        a_f = np.abs(i_f) * self.ibase_f
        a_t = np.abs(i_t) * self.ibase_t
        cur = np.where(self.lim_side == 0, a_f[self.lim_br],
                       np.where(self.lim_side == 1, a_t[self.lim_br],
                                np.maximum(a_f[self.lim_br], a_t[self.lim_br])))
        loading = float(np.max(cur / self.lim_ka) * 100) if len(cur) else 0.0
        vm = np.abs(V[self.bus_pos])
        return losses, vm, loading


@dataclass
class StateOutcome:
    state: SwitchingState
    accepted: bool
    reason: str
    taps: dict
    losses_kw: float = math.nan
    vmin_pu: float = math.nan
    vmax_pu: float = math.nan
    max_loading_percent: float = math.nan
    power_flows: int = 0


class StateContext:
    """Per-state network copy, cached conversions and controller topology."""

    def __init__(self, base: Network, state: SwitchingState, tie_switch_ids, options):
        self.state = state
        self.net = apply_state(base, state, tie_switch_ids)
        self.options = options
        self.handles = {}
        self.evaluators = {}
        self.controller = controlling_transformers(self.net)
        self.tap_ids = _tap_changers(self.net)

    def run(self, taps: dict):
        key = tuple(taps[i] for i in self.tap_ids)
        for i in self.tap_ids:
            self.net.trafo[i]["tp_pos"] = taps[i]
        handle = self.handles.get(key)
        if handle is None:
            handle = self.handles[key] = BBMHandle(self.net, trafo_model=self.options.trafo_model)
        bbm, mapping = handle.get()
        if key not in self.evaluators:
            self.evaluators[key] = _Evaluator(self.net, bbm, mapping)
        V0 = initial_voltage(bbm, mapping, "flat", self.net)
        V, ok, _, _, _ = solve(bbm, self.options, V0)
        return bool(ok), V, self.evaluators[key]


def evaluate_state(ctx: StateContext, start_taps: dict, bounds: dict,
                   constraints: Constraints) -> StateOutcome:
    """Power flow with the tap controller for one state at the current profile values."""
    taps = dict(start_taps)
    seen = set()
    pfs = 0
    while True:
        seen.add(tuple(sorted(taps.items())))
        ok, V, ev = ctx.run(taps)
        pfs += 1
        out = StateOutcome(ctx.state, False, "", dict(taps), power_flows=pfs)
        if not ok:
            out.reason = "power flow did not converge"
            return out
        losses, vm, loading = ev.metrics(V)
        out.losses_kw, out.max_loading_percent = losses, loading
        out.vmin_pu, out.vmax_pu = float(np.min(vm)), float(np.max(vm))
        if loading > constraints.max_loading_percent:
            out.reason = "loading"
            return out
        low = ev.bus_ids[vm < constraints.vmin_pu]
        high = ev.bus_ids[vm > constraints.vmax_pu]
        if not len(low) and not len(high):
            out.accepted, out.reason = True, "ok"
            return out
        moves = {}
        for buses, direction in ((low, "boost"), (high, "buck")):
            for b in buses:
                ref = ctx.controller.get(int(b))
                if ref is None or ref[0] != "trafo" or ref[1] not in taps:
                    out.reason = f"voltage at bus {int(b)} has no tap control"
                    return out
                if moves.setdefault(ref[1], direction) != direction:
                    out.reason = f"trafo {ref[1]} area has low and high voltages"
                    return out
        for t, direction in sorted(moves.items()):
            tr = ctx.net.trafo[t]
            sign = -1 if tr["tp_side"] == "hv" else 1
            step = sign if direction == "boost" else -sign
            new = taps[t] + step
            lo, hi = bounds[t]
            if not lo <= new <= hi:
                out.reason = f"trafo {t} tap range exhausted"
                return out
            taps[t] = new
        if tuple(sorted(taps.items())) in seen:
            out.reason = "tap controller oscillates"
            return out


@dataclass
class StepResult:
    step: object
    feasible: bool
    state: SwitchingState | None
    taps: dict
    losses_kw: float
    vmin_pu: float
    vmax_pu: float
    max_loading_percent: float
    ikss_min_ka: float
    power_flows: int
    outcomes: list = field(default_factory=list)


def _pick(outcomes: list[StateOutcome]) -> StateOutcome | None:
    acc = [o for o in outcomes if o.accepted]
    if not acc:
        return None
    return min(acc, key=lambda o: (o.losses_kw, o.state.open_switch_ids))


def default_tap_bounds(net: Network, overrides: dict | None = None) -> dict:
    bounds = {}
    for i in _tap_changers(net):
        tr = net.trafo[i]
        bounds[i] = (int(tr["tp_min"]), int(tr["tp_max"]))
    for i, b in (overrides or {}).items():
        if i not in bounds:
            raise NetworkError(f"tap bounds given for trafo {i} which has no tap changer")
        bounds[i] = (int(b[0]), int(b[1]))
    return bounds


def optimize_time_step(net: Network, feasible_states, config: TimeSeriesConfig | None = None,
                       contexts: dict | None = None, ikss_min: dict | None = None,
                       step=None) -> StepResult:
    """Best state for the profile values currently in ``net``.

    ``contexts`` caches :class:`StateContext` objects between calls; their
    profiled fields are refreshed from ``net`` each time.
    """
    config = config or TimeSeriesConfig()
    options = PFOptions(tol_pu=config.tol_pu, max_iter=config.max_iter)
    contexts = {} if contexts is None else contexts
    bounds = default_tap_bounds(net, config.tap_bounds)
    start = {i: int(net.trafo[i]["tp_pos"]) for i in bounds}
    for i, (lo, hi) in bounds.items():
        if not lo <= start[i] <= hi:
            raise NetworkError(f"trafo {i} tap position {start[i]} outside bounds {lo}..{hi}")
    outcomes = []
    for st in feasible_states:
        ctx = contexts.get(st)
        if ctx is None:
            ctx = contexts[st] = StateContext(net, st, config.tie_switches, options)
        _copy_injections(net, ctx.net)
        outcomes.append(evaluate_state(ctx, start, bounds, config.constraints))
    best = _pick(outcomes)
    pfs = sum(o.power_flows for o in outcomes)
    if best is None:
        return StepResult(step, False, None, {}, math.nan, math.nan, math.nan, math.nan,
                          math.nan, pfs, outcomes)
    ik = (ikss_min or {}).get(best.state, math.nan)
    return StepResult(step, True, best.state, best.taps, best.losses_kw, best.vmin_pu,
                      best.vmax_pu, best.max_loading_percent, ik, pfs, outcomes)


_PROFILED = {"load": ("p_kw", "q_kvar", "sn_kva", "scaling"),
             "sgen": ("p_kw", "q_kvar", "sn_kva", "scaling"),
             "gen": ("p_kw", "vm_pu"), "ward": ("ps_kw", "qs_kvar"),
             "shunt": ("p_kw", "q_kvar")}


def _copy_injections(src: Network, dst: Network):
    for kind, fields in _PROFILED.items():
        if kind not in src.tables:
            continue
        for idx, rec in src.tables[kind].items():
            target = dst.tables[kind][idx]
            for f in fields:
                if f in rec:
                    target[f] = rec[f]


# -- time series ------------------------------------------------------------------------------

@dataclass
class TimeSeriesResult:
    table: pd.DataFrame
    metadata: dict
    steps: list

    def to_csv(self, path) -> None:
        self.table.to_csv(path, index=False, na_rep="", float_format="%.10g")


def prepare(net: Network, config: TimeSeriesConfig):
    """Enumerate and screen states; returns ``(states, topo_ok, feasible, ikss_min)``."""
    tie = config.tie_switches if config.tie_switches is not None else sorted(net.switch.indices())
    states = enumerate_switching_states(net, tie, config.k_open)
    details = {}
    feasible = filter_feasible_states(net, states, config.constraints.ik_min_ka, tie,
                                      details=details)
    topo = [s for s in states if details[s].get("topology")]
    ikss = {s: details[s]["ikss_min_ka"] for s in feasible}
    return states, topo, feasible, ikss


def _check_profiles(net: Network, profiles: pd.DataFrame, steps):
    for col in profiles.columns:
        kind, idx, f = parse_profile_column(col)
        if kind not in net.tables or idx not in net.tables[kind]:
            raise NetworkError(f"profile column {col!r}: {kind} {idx} does not exist")
        if f not in _PROFILED.get(kind, ()):
            raise NetworkError(f"profile column {col!r}: field {f!r} cannot be profiled")
    missing = [s for s in steps if s not in profiles.index]
    if missing:
        raise NetworkError(f"profiles have no row for step {missing[0]}")


_WORKER = {}


def _init_worker(net, feasible, config, ikss):
    _WORKER.clear()
    _WORKER.update(net=net, feasible=feasible, config=config, ikss=ikss, contexts={},
                   profiles=config.profile_frame())


def _run_step(step):
    w = _WORKER
    work = copy.deepcopy(w["net"])
    apply_profile(work, w["net"], w["profiles"], step)
    res = optimize_time_step(work, w["feasible"], w["config"], w["contexts"], w["ikss"], step)
    res.outcomes = []
    return res


def run_time_series(net: Network, config: TimeSeriesConfig, workers: int | None = None,
                    keep_outcomes: bool = False) -> TimeSeriesResult:
    """Choose the best switching state for every profile step.

    Steps are independent, so ``workers > 1`` spreads them over processes;
    the output does not depend on the worker count.
    """
    workers = workers or config.workers
    profiles = config.profile_frame()
    steps = list(config.steps) if config.steps is not None else list(profiles.index)
    _check_profiles(net, profiles, steps)
    cfg = copy.copy(config)
    cfg.profiles = profiles
    states, topo, feasible, ikss = prepare(net, cfg)
    if workers == 1 or len(steps) < 2:
        _init_worker(net, feasible, cfg, ikss)
        if keep_outcomes:
            results = []
            for s in steps:
                work = copy.deepcopy(net)
                apply_profile(work, net, profiles, s)
                results.append(optimize_time_step(work, feasible, cfg, _WORKER["contexts"],
                                                  ikss, s))
        else:
            results = [_run_step(s) for s in steps]
        _WORKER.clear()
    else:
        chunk = max(1, math.ceil(len(steps) / workers))
        with ProcessPoolExecutor(workers, initializer=_init_worker,
                                 initargs=(net, feasible, cfg, ikss)) as pool:
            results = list(pool.map(_run_step, steps, chunksize=chunk))
    tap_ids = sorted(default_tap_bounds(net, cfg.tap_bounds))
    rows = []
    for r in results:
        row = {"step": r.step, "open_switches": r.state.label() if r.state else ""}
        for t in tap_ids:
            row[f"tap_{t}"] = r.taps.get(t) if r.feasible else None
        row.update(losses_kw=r.losses_kw, vmin_pu=r.vmin_pu, vmax_pu=r.vmax_pu,
                   max_loading_percent=r.max_loading_percent, ikss_min_ka=r.ikss_min_ka,
                   feasible=r.feasible)
        rows.append(row)
    table = pd.DataFrame(rows)
    for t in tap_ids:
        table[f"tap_{t}"] = table[f"tap_{t}"].astype("Int64")
    meta = {"n_states": len(states), "n_topology_feasible": len(topo),
            "n_feasible": len(feasible), "n_steps": len(steps),
            "n_infeasible_steps": int(sum(not r.feasible for r in results)),
            "n_power_flows": int(sum(r.power_flows for r in results)),
            "feasible_states": [s.label() for s in feasible],
            "constraints": asdict(cfg.constraints)}
    return TimeSeriesResult(table, meta, results)
