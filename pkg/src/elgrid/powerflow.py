"""AC and DC power flow on the bus-branch model.

The default AC solver is Newton-Raphson in polar coordinates. Loads follow
the ZIP model: constant power enters the mismatch directly, constant
current scales with |V|, constant impedance sits in the admittance matrix.
A backward/forward sweep is available for radial grids with one slack.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from . import bbm as bbm_mod
from .bbm import ISOLATED, PQ, PV, SLACK, BBMHandle, BusBranchModel, IndexMapping
from .network import Network

logger = logging.getLogger(__name__)


@dataclass
class PFOptions:
    """Power flow settings.

    ``max_iter`` defaults to 10 for Newton-Raphson and 100 for the sweep.
    """

    init: str = "flat"
    tol_pu: float = 1e-8
    max_iter: int | None = None
    enforce_q_lims: bool = False
    neglect_angles: bool = False
    algorithm: str = "nr"
    trafo_model: str | None = None
    trafo_loading: str = "current"

    def __post_init__(self):
        if self.init not in ("flat", "dc", "results"):
            raise ValueError(f"init must be flat, dc or results, got {self.init!r}")
        if self.algorithm not in ("nr", "bfsw"):
            raise ValueError(f"algorithm must be nr or bfsw, got {self.algorithm!r}")
        if not self.tol_pu > 0:
            raise ValueError("tol_pu must be positive")
        if self.max_iter is None:
            self.max_iter = 10 if self.algorithm == "nr" else 100
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.trafo_loading not in ("current", "power"):
            raise ValueError("trafo_loading must be current or power")


@dataclass
class PowerFlowResult:
    converged: bool
    iterations: int
    tables: dict = field(default_factory=dict)
    V: np.ndarray | None = None
    bbm: BusBranchModel | None = None
    mapping: IndexMapping | None = None
    diagnostics: list = field(default_factory=list)

    def __getattr__(self, item):
        tables = self.__dict__.get("tables", {})
        if item in tables:
            return tables[item]
        raise AttributeError(item)


class PowerFlowError(RuntimeError):
    pass


# -- Newton-Raphson --------------------------------------------------------------------------

def mismatch(Y, V, s_const, s_curr):
    """Computed minus specified injection; specified = -(S_P + S_I |V|)."""
    return V * np.conj(Y @ V) + s_const + s_curr * np.abs(V)


def _jacobian_blocks(Y, V, s_curr):
    ibus = Y @ V
    vnorm = V / np.abs(V)
    diag_v = sparse.diags(V)
    ds_dvm = diag_v @ (Y @ sparse.diags(vnorm)).conj() \
        + sparse.diags(np.conj(ibus) * vnorm + s_curr)
    ds_dva = 1j * diag_v @ (sparse.diags(ibus) - Y @ diag_v).conj()
    return ds_dva.tocsr(), ds_dvm.tocsr()


DENSE_LIMIT = 150  # below this many buses dense algebra beats scipy.sparse overhead


def _dense_jacobian_blocks(Y, V, s_curr):
    ibus = Y @ V
    vnorm = V / np.abs(V)
    ds_dvm = V[:, None] * np.conj(Y * vnorm[None, :]) + np.diag(np.conj(ibus) * vnorm + s_curr)
    ds_dva = 1j * V[:, None] * np.conj(np.diag(ibus) - Y * V[None, :])
    return ds_dva, ds_dvm


def newton_raphson(Y, s_const, s_curr, V0, pv, pq, tol=1e-8, max_iter=10):
    """Solve the AC power flow equations.

    ``s_const`` and ``s_curr`` are complex PSC consumptions (constant power,
    constant current at |V| = 1). Buses in neither ``pv`` nor ``pq`` keep
    their initial voltage. Returns ``(V, converged, iterations)``; the
    tolerance is checked before the first update.
    """
    V = np.array(V0, dtype=complex)
    vm, va = np.abs(V), np.angle(V)
    pvpq = np.r_[pv, pq].astype(np.int64)
    pq = np.asarray(pq, dtype=np.int64)
    n1 = len(pvpq)

    def f_of(V):
        mis = mismatch(Y, V, s_const, s_curr)
        return np.r_[mis[pvpq].real, mis[pq].imag]

    F = f_of(V)
    it = 0
    if not len(F) or np.max(np.abs(F)) <= tol:
        return V, True, 0
    if Y.shape[0] <= DENSE_LIMIT:
        return _newton_dense(Y.toarray() if sparse.issparse(Y) else np.asarray(Y), f_of, F,
                             V, vm, va, pvpq, pq, s_curr, tol, max_iter)
    while it < max_iter:
        it += 1
        ds_dva, ds_dvm = _jacobian_blocks(Y, V, s_curr)
        j11 = ds_dva[pvpq][:, pvpq].real
        j12 = ds_dvm[pvpq][:, pq].real
        j21 = ds_dva[pq][:, pvpq].imag
        j22 = ds_dvm[pq][:, pq].imag
        J = sparse.bmat([[j11, j12], [j21, j22]], format="csc")
        with warnings.catch_warnings():
            warnings.simplefilter("error", MatrixRankWarning)
            try:
                dx = spsolve(J, -F)
            except (MatrixRankWarning, RuntimeError):
                logger.warning("singular Jacobian in Newton-Raphson iteration %d", it)
                return V, False, it
        if not np.all(np.isfinite(dx)):
            logger.warning("singular Jacobian in Newton-Raphson iteration %d", it)
            return V, False, it
        va[pvpq] += dx[:n1]
        vm[pq] += dx[n1:]
        V = vm * np.exp(1j * va)
        F = f_of(V)
        if np.max(np.abs(F)) <= tol:
            return V, True, it
    return V, False, it


def _newton_dense(Yd, f_of, F, V, vm, va, pvpq, pq, s_curr, tol, max_iter):
    n1 = len(pvpq)
    it = 0
    while it < max_iter:
        it += 1
        ds_dva, ds_dvm = _dense_jacobian_blocks(Yd, V, s_curr)
        J = np.block([[ds_dva[np.ix_(pvpq, pvpq)].real, ds_dvm[np.ix_(pvpq, pq)].real],
                      [ds_dva[np.ix_(pq, pvpq)].imag, ds_dvm[np.ix_(pq, pq)].imag]])
        try:
            dx = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            logger.warning("singular Jacobian in Newton-Raphson iteration %d", it)
            return V, False, it
        if not np.all(np.isfinite(dx)) or np.linalg.cond(J) > 1e14:
            logger.warning("singular Jacobian in Newton-Raphson iteration %d", it)
            return V, False, it
        va[pvpq] += dx[:n1]
        vm[pq] += dx[n1:]
        V = vm * np.exp(1j * va)
        F = f_of(V)
        if np.max(np.abs(F)) <= tol:
            return V, True, it
    return V, False, it


# -- DC power flow ---------------------------------------------------------------------------

def _dc_matrices(bbm: BusBranchModel):
    on = bbm.br_on
    b = np.zeros(bbm.n_branch)
    x = bbm.x_dc[on] * np.abs(bbm.tap[on])
    if np.any(x == 0):
        raise PowerFlowError("branch with zero series reactance in DC power flow")
    b[on] = 1 / x
    shift = np.angle(bbm.tap)
    nb = bbm.n_bus
    f, t = bbm.f, bbm.t
    B = sparse.csr_matrix((np.r_[b, -b, -b, b], (np.r_[f, f, t, t], np.r_[f, t, f, t])),
                          (nb, nb))
    p_shift = np.zeros(nb)
    np.add.at(p_shift, f, -b * shift)
    np.add.at(p_shift, t, b * shift)
    return B, b, shift, p_shift


def dc_angles(bbm: BusBranchModel) -> np.ndarray:
    """Bus voltage angles (rad) of the linearized power flow; NaN when isolated."""
    B, _, _, p_shift = _dc_matrices(bbm)
    active = bbm.bus_type != ISOLATED
    slack = bbm.bus_type == SLACK
    p_inj = -(bbm.p_pu + bbm.ip_pu + bbm.y_shunt.real)
    theta = np.full(bbm.n_bus, np.nan)
    theta[slack] = bbm.va_set[slack]
    free = np.flatnonzero(active & ~slack)
    if len(free):
        rhs = p_inj[free] - p_shift[free] - B[free][:, np.flatnonzero(slack)] @ theta[slack]
        with warnings.catch_warnings():
            warnings.simplefilter("error", MatrixRankWarning)
            try:
                theta[free] = spsolve(B[free][:, free].tocsc(), rhs)
            except (MatrixRankWarning, RuntimeError):
                theta[free] = np.nan
        if not np.all(np.isfinite(theta[free])):
            bad = free[~np.isfinite(theta[free])]
            raise PowerFlowError(f"singular B matrix; island with buses {bad.tolist()} "
                                 "has no reference")
    return theta


@dataclass
class DCResult:
    va_degree: dict
    branch_p_kw: dict
    tables: dict = field(default_factory=dict)


def run_dc_power_flow(net: Network) -> DCResult:
    """Linearized power flow: unit magnitudes, series reactance only."""
    bbm, mapping = bbm_mod.convert(net)
    theta = dc_angles(bbm)
    _, b, shift, _ = _dc_matrices(bbm)
    theta0 = np.nan_to_num(theta)
    flow = b * (theta0[bbm.f] - theta0[bbm.t] - shift)
    import pandas as pd

    va = {bus: math.degrees(theta[k]) for bus, k in mapping.bus_lookup.items()}
    rows = {}
    for bus, k in mapping.bus_lookup.items():
        iso = bbm.bus_type[k] == ISOLATED or not net.bus[bus]["in_service"]
        rows[bus] = {"vm_pu": np.nan if iso else 1.0, "va_degree": va[bus]}
    res_bus = pd.DataFrame.from_dict(rows, orient="index", columns=["vm_pu", "va_degree"])
    branch_p = {}
    tables = {"bus": res_bus}
    for kind in ("line", "trafo", "impedance"):
        recs = {}
        for (k, idx, sub), br in mapping.branch_map.items():
            if k == kind:
                p = flow[br] * bbm.sn_kva
                branch_p[(kind, idx)] = p
                recs[idx] = {"p_from_kw": p, "p_to_kw": -p}
        tables[kind] = pd.DataFrame.from_dict(recs, orient="index",
                                              columns=["p_from_kw", "p_to_kw"])
    for (k, idx, sub), br in mapping.branch_map.items():
        if k == "trafo3w":
            branch_p[(k, idx, sub)] = flow[br] * bbm.sn_kva
    net.res["bus"] = res_bus
    for kind in ("line", "trafo", "impedance"):
        net.res[kind] = tables[kind]
    return DCResult(va_degree=va, branch_p_kw=branch_p, tables=tables)


# -- backward/forward sweep ------------------------------------------------------------------

def _radial_tree(bbm: BusBranchModel):
    active = np.flatnonzero(bbm.br_on)
    nodes = np.flatnonzero(bbm.bus_type != ISOLATED)
    slack = np.flatnonzero(bbm.bus_type == SLACK)
    if len(slack) != 1:
        raise PowerFlowError("backward/forward sweep needs exactly one slack bus")
    if np.any(bbm.bus_type == PV):
        raise PowerFlowError("backward/forward sweep does not support PV buses")
    if len(active) != len(nodes) - 1:
        raise PowerFlowError("network not radial")
    adj = {int(n): [] for n in nodes}
    for br in active:
        adj[int(bbm.f[br])].append((int(br), int(bbm.t[br])))
        adj[int(bbm.t[br])].append((int(br), int(bbm.f[br])))
    order = [int(slack[0])]
    parent = {int(slack[0]): (None, None)}
    for u in order:
        for br, v in adj[u]:
            if v not in parent:
                parent[v] = (u, br)
                order.append(v)
    if len(order) != len(nodes):
        raise PowerFlowError("network not radial")
    return order, parent


def backward_forward_sweep(bbm: BusBranchModel, V0, tol=1e-8, max_iter=100):
    """Fixed-point sweep on a radial network. Returns ``(V, converged, sweeps)``."""
    order, parent = _radial_tree(bbm)
    yff, yft, ytf, ytt = bbm_mod.branch_admittances(bbm)
    s_const = bbm.p_pu + 1j * bbm.q_pu
    s_curr = bbm.ip_pu + 1j * bbm.iq_pu
    V = np.array(V0, dtype=complex)
    children = {u: [] for u in order}
    for v in order[1:]:
        children[parent[v][0]].append(v)
    for sweep in range(1, max_iter + 1):
        # backward: current drawn from each node by its subtree
        drawn = {}
        for u in reversed(order):
            vu = V[u]
            cur = np.conj((s_const[u] + s_curr[u] * abs(vu)) / vu) + bbm.y_shunt[u] * vu
            for c in children[u]:
                br = parent[c][1]
                if bbm.f[br] == u:
                    cur += yff[br] * vu + yft[br] * V[c]
                else:
                    cur += ytt[br] * vu + ytf[br] * V[c]
            drawn[u] = cur
        V_new = V.copy()
        for c in order[1:]:
            p, br = parent[c]
            i_c = -drawn[c]  # current entering the branch at the child terminal
            if bbm.t[br] == c:
                V_new[c] = (i_c - ytf[br] * V_new[p]) / ytt[br]
            else:
                V_new[c] = (i_c - yft[br] * V_new[p]) / yff[br]
        change = np.max(np.abs(V_new - V)) if len(V) else 0.0
        V = V_new
        if change < tol:
            return V, True, sweep
    return V, False, max_iter


# -- driver ----------------------------------------------------------------------------------

def _shifted_flat_angles(bbm: BusBranchModel, slack) -> np.ndarray:
    """Slack angle carried through the network, minus transformer phase shifts."""
    va = np.zeros(bbm.n_bus)
    shift = np.angle(bbm.tap)
    adj = {}
    for br in np.flatnonzero(bbm.br_on):
        f, t = int(bbm.f[br]), int(bbm.t[br])
        adj.setdefault(f, []).append((t, -shift[br]))
        adj.setdefault(t, []).append((f, shift[br]))
    seen = set()
    for s in slack:
        s = int(s)
        if s in seen:
            continue
        seen.add(s)
        va[s] = bbm.va_set[s]
        queue = [s]
        for u in queue:
            for v, d in adj.get(u, ()):
                if v not in seen:
                    seen.add(v)
                    va[v] = va[u] + d
                    queue.append(v)
    return va


def initial_voltage(bbm: BusBranchModel, mapping: IndexMapping, init: str,
                    net: Network | None = None) -> np.ndarray:
    slack = np.flatnonzero(bbm.bus_type == SLACK)
    va = _shifted_flat_angles(bbm, slack)
    vm = np.ones(bbm.n_bus)
    fixed = (bbm.bus_type == SLACK) | (bbm.bus_type == PV)
    vm[fixed] = bbm.vm_set[fixed]
    va[slack] = bbm.va_set[slack]
    if init == "dc":
        theta = dc_angles(bbm)
        ok = np.isfinite(theta)
        va[ok] = theta[ok]
    elif init == "results" and net is not None and "bus" in net.res:
        res = net.res["bus"]
        for bus, k in mapping.bus_lookup.items():
            if bus in res.index and bbm.bus_type[k] != SLACK:
                vm_r, va_r = res.at[bus, "vm_pu"], res.at[bus, "va_degree"]
                if np.isfinite(vm_r) and np.isfinite(va_r):
                    if bbm.bus_type[k] == PQ:
                        vm[k] = vm_r
                    va[k] = math.radians(va_r)
    return vm * np.exp(1j * va)


def solve(bbm: BusBranchModel, options: PFOptions, V0: np.ndarray):
    """Run the selected solver with q-limit handling.

    Returns ``(V, converged, iterations, bbm, fixed_q)`` where ``bbm`` may
    have PV buses converted to PQ and ``fixed_q`` maps source positions to
    the limit they were clamped at.
    """
    fixed_q: dict[int, float] = {}
    if options.algorithm == "bfsw":
        V, ok, it = backward_forward_sweep(bbm, V0, options.tol_pu, options.max_iter)
        return V, ok, it, bbm, fixed_q
    total_it = 0
    n_pv = int(np.sum(bbm.bus_type == PV))
    for _ in range(n_pv + 1):
        Y = bbm.ybus()
        pv = np.flatnonzero(bbm.bus_type == PV)
        pq = np.flatnonzero(bbm.bus_type == PQ)
        s_const = bbm.p_pu + 1j * bbm.q_pu
        s_curr = bbm.ip_pu + 1j * bbm.iq_pu
        V, ok, it = newton_raphson(Y, s_const, s_curr, V0, pv, pq, options.tol_pu,
                                   options.max_iter)
        total_it += it
        if not ok or not options.enforce_q_lims or not len(pv):
            return V, ok, total_it, bbm, fixed_q
        violated = _q_limit_violations(bbm, V, pv, fixed_q)
        if not violated:
            return V, ok, total_it, bbm, fixed_q
        bbm = _convert_to_pq(bbm, violated, fixed_q)
        V0 = V
    return V, ok, total_it, bbm, fixed_q


def _source_q_need(bbm, V):
    """Reactive consumption (PSC) each bus must get from its sources."""
    s_inj = V * np.conj(bbm.ybus() @ V)
    q_load = bbm.q_pu + bbm.iq_pu * np.abs(V)
    return -(s_inj.imag + q_load)


def _q_limit_violations(bbm, V, pv, fixed_q):
    need = _source_q_need(bbm, V)
    violated = {}
    for k in pv:
        pos = np.flatnonzero(bbm.src_bus == k)
        pos = [p for p in pos if p not in fixed_q]
        if not pos:
            continue
        qmin = bbm.src_q_min[pos].sum()
        qmax = bbm.src_q_max[pos].sum()
        q = need[k] - sum(fixed_q.get(p, 0.0) for p in np.flatnonzero(bbm.src_bus == k))
        if q > qmax + 1e-12:
            violated[int(k)] = [(p, bbm.src_q_max[p]) for p in pos]
        elif q < qmin - 1e-12:
            violated[int(k)] = [(p, bbm.src_q_min[p]) for p in pos]
    return violated


def _convert_to_pq(bbm, violated, fixed_q):
    import dataclasses

    types = bbm.bus_type.copy()
    q = bbm.q_pu.copy()
    for k, limits in violated.items():
        types[k] = PQ
        for p, lim in limits:
            fixed_q[p] = float(lim)
            q[k] += lim
    return dataclasses.replace(bbm, bus_type=types, q_pu=q, _ybranch=bbm._ybranch,
                               _ybus=bbm._ybus)


def run_ac_power_flow(net: Network, options: PFOptions | None = None,
                      handle: BBMHandle | None = None, extract: bool = True,
                      **kwargs) -> PowerFlowResult:
    """Convert, solve and write element results to ``net.res``.

    Non-convergence is reported through ``converged = False``; the result
    tables then hold NaN voltages.
    """
    from .results import extract_results

    if options is None:
        options = PFOptions(**kwargs)
    elif kwargs:
        raise TypeError("pass either options or keyword settings")
    if handle is not None:
        bbm, mapping = handle.get()
    else:
        bbm, mapping = bbm_mod.convert(net, trafo_model=options.trafo_model,
                                       neglect_angles=options.neglect_angles)
    V0 = initial_voltage(bbm, mapping, options.init, net)
    V, ok, it, solved_bbm, fixed_q = solve(bbm, options, V0)
    result = PowerFlowResult(converged=bool(ok), iterations=it, V=V, bbm=solved_bbm,
                             mapping=mapping, diagnostics=list(mapping.diagnostics))
    if not ok:
        result.diagnostics.append(f"power flow did not converge after {it} iterations")
        logger.warning(result.diagnostics[-1])
    if extract:
        result.tables = extract_results(net, solved_bbm, mapping, V if ok else None, fixed_q,
                                        options)
        net.res.update(result.tables)
    return result


runpp = run_ac_power_flow
