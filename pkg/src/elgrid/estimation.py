"""Weighted-least-squares state estimation with bad-data removal.

The state is the complex voltage of every supplied bus-branch bus (one
angle per island is the reference). Measurement functions use the same
branch admittances as the power flow. Bus power measurements are PSC
consumption of all elements at the bus, so everything attached to a bus
(loads, shunts, generators) is covered by the measured value and the model
uses branches only. Auxiliary buses without elements (open-switch ends,
three-winding star points) get zero-injection pseudo measurements.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy import linalg, sparse
from scipy.stats import chi2

from . import bbm as bbm_mod
from .bbm import ISOLATED, SLACK
from .network import Network, NetworkError
from .results import current_base_ka

logger = logging.getLogger(__name__)

KINDS = ("v_bus", "p_bus", "q_bus", "p_branch", "q_branch", "i_branch")
PSEUDO_STD = 1e-4


class EstimationError(NetworkError):
    pass


@dataclass(frozen=True)
class Measurement:
    kind: str
    element_kind: str
    element: int
    value: float
    std_dev: float
    side: str | None = None
    in_service: bool = True
    index: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown measurement kind {self.kind!r}")
        if not self.std_dev > 0:
            raise ValueError("std_dev must be positive")


def measurements_from_net(net: Network) -> list[Measurement]:
    return [Measurement(m["kind"], m["element_kind"], m["element"], m["value"], m["std_dev"],
                        m["side"], m["in_service"], idx) for idx, m in net.measurement.items()]


@dataclass
class SEOptions:
    tol: float = 1e-6
    max_iter: int = 20
    alpha: float = 0.95
    rn_threshold: float = 3.0
    init: str = "flat"


@dataclass
class SEResult:
    converged: bool
    iterations: int
    V: np.ndarray
    tables: dict
    residuals: np.ndarray
    normalized_residuals: np.ndarray
    chi2_value: float
    chi2_threshold: float
    chi2_passed: bool
    dof: int
    removed_measurements: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)

    @property
    def vm_pu(self):
        return self.tables["bus"]["vm_pu"]

    @property
    def va_degree(self):
        return self.tables["bus"]["va_degree"]


def chi_squared_test(j_min: float, dof: int, alpha: float = 0.95) -> tuple[bool, float]:
    """Return ``(passed, threshold)``; passes when ``j_min`` is within the alpha quantile."""
    if dof < 1:
        raise ValueError("degrees of freedom must be at least 1")
    threshold = float(chi2.ppf(alpha, dof))
    return bool(j_min <= threshold), threshold


class _Model:
    """Measurement functions and Jacobian on the live buses of a BBM."""

    def __init__(self, net: Network, measurements: list[Measurement]):
        if len(net.xward):
            raise EstimationError("state estimation does not support xward elements")
        self.net = net
        bbm, mapping = bbm_mod.convert(net)
        self.bbm, self.mapping = bbm, mapping
        self.Yf, self.Yt = bbm_mod.build_branch_matrices(bbm)
        self.Ybr = bbm_mod.build_admittance_matrix(bbm, include_shunts=False)
        live = bbm.bus_type != ISOLATED
        self.live = np.flatnonzero(live)
        # one angle reference per island: its first slack bus
        labels = _labels(bbm)
        refs = {}
        for k in np.flatnonzero(bbm.bus_type == SLACK):
            refs.setdefault(labels[k], int(k))
        self.refs = sorted(refs.values())
        self.va_idx = np.array([k for k in self.live if k not in set(self.refs)], dtype=int)
        self.vm_idx = self.live
        self.n_state = len(self.va_idx) + len(self.vm_idx)
        # (kind, bbm bus or branch, side, z_pu, sigma_pu, measurement position, unit)
        self.rows = []
        self.diagnostics = []
        fused = {}
        for pos, m in enumerate(measurements):
            if not m.in_service:
                continue
            row = self._row(m, pos)
            if m.kind in ("p_bus", "q_bus") and len(mapping.bus_groups[row[1]]) > 1:
                fused.setdefault((m.kind, row[1]), []).append((m.element, row))
            else:
                self.rows.append(row)
        for (kind, k), parts in sorted(fused.items()):
            row = self._merge_fused(kind, k, parts)
            if row is not None:
                self.rows.append(row)
        self.n_real = len(self.rows)
        for aux, _ in mapping.aux_buses:
            if live[aux]:
                self.rows.append(("p_bus", aux, None, 0.0, PSEUDO_STD, None, 1.0))
                self.rows.append(("q_bus", aux, None, 0.0, PSEUDO_STD, None, 1.0))
        kind = np.array([r[0] for r in self.rows])
        self.kind = kind
        self.loc = np.array([r[1] for r in self.rows], dtype=int)
        self.side_to = np.array([r[2] == "to" for r in self.rows])
        self.z = np.array([r[3] for r in self.rows], dtype=float)
        self.sigma = np.array([r[4] for r in self.rows], dtype=float)
        self.ids = [r[5] for r in self.rows]
        self.unit = np.array([r[6] for r in self.rows], dtype=float)

    def _row(self, m: Measurement, pos: int):
        net, bbm, mp = self.net, self.bbm, self.mapping
        sn = bbm.sn_kva
        if m.kind in ("v_bus", "p_bus", "q_bus"):
            if m.element_kind != "bus" or m.element not in net.bus:
                raise EstimationError(f"measurement {m.index}: bus {m.element} does not exist")
            k = mp.bus_lookup[m.element]
            if bbm.bus_type[k] == ISOLATED:
                raise EstimationError(f"measurement {m.index}: bus {m.element} is not supplied")
            unit = 1.0 if m.kind == "v_bus" else sn
        else:
            if m.element_kind not in ("line", "trafo") \
                    or m.element not in net.tables[m.element_kind]:
                raise EstimationError(f"measurement {m.index}: {m.element_kind} {m.element} "
                                      "does not exist")
            k = mp.branch_map[(m.element_kind, m.element, 0)]
            unit = sn
            if m.kind == "i_branch":
                unit = current_base_ka(sn, bbm.base_kv[bbm.t[k] if m.side == "to" else bbm.f[k]])
        return (m.kind, k, m.side or "from", m.value / unit, m.std_dev / unit, pos, unit)

    def _merge_fused(self, kind, k, parts):
        """Buses joined by closed switches share one node: their measured
        injections only add up to the node injection when every member is
        measured. Partial sets cannot be modeled and are skipped."""
        members = sorted(self.mapping.bus_groups[k])
        if sorted({b for b, _ in parts}) != members or len(parts) != len(members):
            self.diagnostics.append(f"{kind} measurements on buses {sorted(b for b, _ in parts)} "
                                    f"ignored: buses {members} are fused by closed switches "
                                    "and only a complete set can be used")
            return None
        rows = [r for _, r in parts]
        z = sum(r[3] for r in rows)
        sigma = math.sqrt(sum(r[4] ** 2 for r in rows))
        return (kind, k, "from", z, sigma, rows[0][5], rows[0][6])

    def h_and_H(self, V):
        nb = self.bbm.n_bus
        vm = np.abs(V)
        vnorm = V / np.where(vm > 0, vm, 1)
        ibus = self.Ybr @ V
        s_bus = -(V * np.conj(ibus))
        dva = sparse.diags(1j * V)
        dvm = sparse.diags(vnorm)
        ds_va = -(1j * sparse.diags(V) @ np.conj(sparse.diags(ibus) - self.Ybr @ sparse.diags(V)))
        ds_vm = -(sparse.diags(V) @ (self.Ybr @ dvm).conj() + sparse.diags(np.conj(ibus) * vnorm))
        h = np.zeros(len(self.rows))
        H = np.zeros((len(self.rows), 2 * nb))
        ds_va, ds_vm = ds_va.toarray(), ds_vm.toarray()
        branch = {}
        for side, Yx, term in (("from", self.Yf, self.bbm.f), ("to", self.Yt, self.bbm.t)):
            i_br = Yx @ V
            nl = len(term)
            C = sparse.csr_matrix((np.ones(nl), (np.arange(nl), term)), (nl, nb))
            v_term = V[term]
            s_br = v_term * np.conj(i_br)
            dva_s = (sparse.diags(np.conj(i_br)) @ C @ dva
                     + sparse.diags(v_term) @ (Yx @ dva).conj()).toarray()
            dvm_s = (sparse.diags(np.conj(i_br)) @ C @ dvm
                     + sparse.diags(v_term) @ (Yx @ dvm).conj()).toarray()
            di_va = (Yx @ dva).toarray()
            di_vm = (Yx @ dvm).toarray()
            branch[side] = (i_br, s_br, dva_s, dvm_s, di_va, di_vm)
        for r, (kind, loc, to) in enumerate(zip(self.kind, self.loc, self.side_to)):
            if kind == "v_bus":
                h[r] = vm[loc]
                H[r, nb + loc] = 1.0
            elif kind in ("p_bus", "q_bus"):
                part = np.real if kind == "p_bus" else np.imag
                h[r] = part(s_bus[loc])
                H[r, :nb] = part(ds_va[loc])
                H[r, nb:] = part(ds_vm[loc])
            else:
                i_br, s_br, dva_s, dvm_s, di_va, di_vm = branch["to" if to else "from"]
                if kind == "i_branch":
                    mag = abs(i_br[loc])
                    h[r] = mag
                    if mag > 1e-12:
                        u = np.conj(i_br[loc]) / mag
                        H[r, :nb] = np.real(u * di_va[loc])
                        H[r, nb:] = np.real(u * di_vm[loc])
                else:
                    part = np.real if kind == "p_branch" else np.imag
                    h[r] = part(s_br[loc])
                    H[r, :nb] = part(dva_s[loc])
                    H[r, nb:] = part(dvm_s[loc])
        cols = np.r_[self.va_idx, nb + self.vm_idx]
        return h, H[:, cols]

    def state_to_v(self, va, vm):
        return vm * np.exp(1j * va)


def _labels(bbm):
    from scipy.sparse import csgraph

    on = bbm.br_on
    nb = bbm.n_bus
    g = sparse.csr_matrix((np.ones(on.sum()), (bbm.f[on], bbm.t[on])), (nb, nb))
    return csgraph.connected_components(g, directed=False)[1]


def _gain_factor(G):
    try:
        cf = linalg.cho_factor(G)
    except linalg.LinAlgError:
        raise EstimationError("gain matrix singular: network not observable") from None
    d = np.diag(cf[0])
    if np.min(np.abs(d)) < 1e-9 * np.max(np.abs(d)):
        raise EstimationError("gain matrix singular: network not observable")
    return cf


def _wls(model: _Model, V0, options: SEOptions):
    if len(model.rows) < model.n_state:
        raise EstimationError(f"gain matrix singular: {len(model.rows)} measurements for "
                              f"{model.n_state} states")
    va = np.angle(V0).copy()
    vm = np.abs(V0).copy()
    w = 1 / model.sigma ** 2
    converged, it = False, 0
    for it in range(1, options.max_iter + 1):
        V = model.state_to_v(va, vm)
        h, H = model.h_and_H(V)
        r = model.z - h
        G = H.T @ (w[:, None] * H)
        cf = _gain_factor(G)
        dx = linalg.cho_solve(cf, H.T @ (w * r))
        va[model.va_idx] += dx[:len(model.va_idx)]
        vm[model.vm_idx] += dx[len(model.va_idx):]
        if np.max(np.abs(dx)) < options.tol:
            converged = True
            break
    V = model.state_to_v(va, vm)
    h, H = model.h_and_H(V)
    r = model.z - h
    G = H.T @ (w[:, None] * H)
    cf = _gain_factor(G)
    # residual covariance diagonal: R - H G^-1 H^T
    omega = model.sigma ** 2 - np.einsum("ij,ji->i", H, linalg.cho_solve(cf, H.T))
    with np.errstate(invalid="ignore", divide="ignore"):
        rn = np.where(omega > 1e-10 * model.sigma ** 2, np.abs(r) / np.sqrt(np.abs(omega)), np.nan)
    return V, converged, it, r, rn, float(np.sum(w * r * r))


def initial_state(model: _Model, init: str):
    bbm = model.bbm
    if init == "flat":
        from .powerflow import _shifted_flat_angles

        slack = np.flatnonzero(bbm.bus_type == SLACK)
        va = _shifted_flat_angles(bbm, slack)
        return np.exp(1j * va)
    if init in ("pf", "results"):
        from .powerflow import run_ac_power_flow

        res = model.net.res.get("bus") if init == "results" else None
        if res is None:
            res = run_ac_power_flow(model.net.copy()).tables["bus"]
        V = np.ones(bbm.n_bus, complex)
        for bus, k in model.mapping.bus_lookup.items():
            if bus in res.index and np.isfinite(res.at[bus, "vm_pu"]):
                V[k] = res.at[bus, "vm_pu"] * np.exp(1j * math.radians(res.at[bus, "va_degree"]))
        return V
    raise ValueError(f"init must be flat, pf or results, got {init!r}")


def _tables(model: _Model, V, measurements, r, rn):
    bbm, mp = model.bbm, model.mapping
    s_bus = -(V * np.conj(model.Ybr @ V)) * bbm.sn_kva
    rows = {}
    for bus, k in mp.bus_lookup.items():
        if bbm.bus_type[k] == ISOLATED:
            rows[bus] = [np.nan] * 4
        else:
            rows[bus] = [abs(V[k]), math.degrees(np.angle(V[k])), s_bus[k].real, s_bus[k].imag]
    bus = pd.DataFrame.from_dict(rows, orient="index",
                                 columns=["vm_pu", "va_degree", "p_kw", "q_kvar"])
    mrows = {}
    for pos, m in enumerate(measurements):
        key = m.index if m.index is not None else pos
        mrows[key] = [m.kind, m.value, np.nan, np.nan, np.nan, m.in_service]
    for i, mid in enumerate(model.ids):
        if mid is None:
            continue
        m = measurements[mid]
        key = m.index if m.index is not None else mid
        sc = model.unit[i]
        mrows[key][2:5] = [m.value - r[i] * sc, r[i] * sc, rn[i]]
    meas = pd.DataFrame.from_dict(mrows, orient="index",
                                  columns=["kind", "value", "estimate", "residual",
                                           "normalized_residual", "active"])
    return {"bus": bus, "measurement": meas}


def estimate_state(net: Network, measurements: list[Measurement] | None = None,
                   options: SEOptions | None = None, remove_bad_data: bool = False,
                   **kwargs) -> SEResult:
    """Estimate bus voltages from measurements by weighted least squares.

    ``measurements`` defaults to the network's measurement table. With
    ``remove_bad_data`` the estimate is repeated, dropping the measurement
    with the largest normalized residual, until the chi-squared test passes
    and no normalized residual exceeds the threshold, or nothing more can
    be removed without losing observability.
    """
    opt = options or SEOptions(**kwargs)
    meas = list(measurements_from_net(net) if measurements is None else measurements)
    removed, diagnostics = [], []
    while True:
        model = _Model(net, meas)
        V0 = initial_state(model, opt.init)
        V, ok, it, r, rn, j_min = _wls(model, V0, opt)
        dof = len(model.rows) - model.n_state
        if dof >= 1:
            passed, threshold = chi_squared_test(j_min, dof, opt.alpha)
        else:
            passed, threshold = True, float("nan")
        if not remove_bad_data:
            break
        real = np.array([mid is not None for mid in model.ids])
        cand = np.where(real & np.isfinite(rn), rn, -np.inf)
        worst = int(np.argmax(cand)) if len(cand) else -1
        bad = worst >= 0 and cand[worst] > opt.rn_threshold
        if passed and not bad:
            break
        if worst < 0 or not np.isfinite(cand[worst]):
            diagnostics.append("bad data suspected but no measurement can be removed")
            break
        mid = model.ids[worst]
        trial = list(meas)
        trial[mid] = replace(meas[mid], in_service=False)
        try:
            tm = _Model(net, trial)
            if len(tm.rows) <= tm.n_state:
                raise EstimationError("no redundancy left")
            _gain_factor(_gain_of(tm, V))
        except EstimationError:
            diagnostics.append(f"measurement {_mid_label(meas[mid], mid)} kept: removal would "
                               "leave the network unobservable")
            break
        removed.append(_mid_label(meas[mid], mid))
        meas = trial
    diagnostics = model.diagnostics + diagnostics
    tables = _tables(model, V, meas, r, rn)
    net.res["bus_est"] = tables["bus"]
    net.res["measurement_est"] = tables["measurement"]
    if not ok:
        diagnostics.append(f"state estimation did not converge in {it} iterations")
    return SEResult(converged=ok, iterations=it, V=V, tables=tables, residuals=r,
                    normalized_residuals=rn, chi2_value=j_min, chi2_threshold=threshold,
                    chi2_passed=passed, dof=dof, removed_measurements=removed,
                    diagnostics=diagnostics)


def _mid_label(m: Measurement, pos: int):
    return m.index if m.index is not None else pos


def _gain_of(model: _Model, V):
    _, H = model.h_and_H(V)
    w = 1 / model.sigma ** 2
    return H.T @ (w[:, None] * H)


def remove_worst_measurement(measurements: list[Measurement], normalized_residuals,
                             threshold: float = 3.0):
    """Deactivate the active measurement with the largest normalized residual.

    ``normalized_residuals`` is aligned with ``measurements`` (NaN for
    inactive or critical ones). Returns ``(measurements', removed_position)``
    with ``None`` when every residual is below ``threshold``.
    """
    rn = np.asarray(normalized_residuals, dtype=float)
    active = np.array([m.in_service for m in measurements])
    cand = np.where(active & np.isfinite(rn), rn, -np.inf)
    if not len(cand) or cand.max() <= threshold:
        return list(measurements), None
    worst = int(np.argmax(cand))
    out = list(measurements)
    out[worst] = replace(out[worst], in_service=False)
    return out, worst
