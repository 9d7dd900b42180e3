"""Command-line front end.

Exit codes: 0 success, 2 a solver did not converge, 1 usage or data error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .network import NetworkError

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


class _Failure(Exception):
    def __init__(self, message, code=EXIT_ERROR):
        super().__init__(message)
        self.code = code


def load_any(path: str):
    """Read a grid from JSON, a case file (``.m``) or ``example:NAME``."""
    from . import networks
    from .io import import_case, load_network

    if path.startswith("example:"):
        name = path.split(":", 1)[1]
        grids = {"case_study": networks.case_study_grid, "two_bus": networks.two_bus,
                 "mv_feeder": networks.mv_feeder, "lv_feeder": networks.lv_feeder,
                 "switched_feeder": networks.switched_feeder,
                 "three_winding": networks.three_winding, "meshed_ring": networks.meshed_ring,
                 "mixed_elements": networks.mixed_elements}
        if name in networks.CASES:
            return networks.load_case(name)
        if name not in grids:
            raise _Failure(f"unknown example {name!r}; choose from "
                           f"{', '.join(sorted(grids) + list(networks.CASES))}")
        return grids[name]()
    if not os.path.exists(path):
        raise _Failure(f"no such file: {path}")
    if path.endswith(".m"):
        return import_case(path)
    return load_network(path)


def _write(tables, out, fmt):
    from .io import write_results

    if out is None:
        return
    target = out
    if fmt == "json" and (os.path.isdir(out) or out.endswith(os.sep)):
        os.makedirs(out, exist_ok=True)
        target = os.path.join(out, "results.json")
    for p in write_results(tables, target, fmt):
        print(f"wrote {p}", file=sys.stderr)


def _need_net(args):
    if not args.net:
        raise _Failure("--net is required")
    return load_any(args.net)


def cmd_pf(args):
    from .powerflow import PFOptions, run_ac_power_flow

    net = _need_net(args)
    opts = PFOptions(init=args.init, tol_pu=args.tol, max_iter=args.max_iter,
                     algorithm=args.algorithm, enforce_q_lims=args.enforce_q_lims)
    res = run_ac_power_flow(net, opts)
    for d in res.diagnostics:
        print(d, file=sys.stderr)
    if not res.converged:
        raise _Failure(f"power flow did not converge after {res.iterations} iterations",
                       EXIT_NOT_CONVERGED)
    _write(res.tables, args.out, args.format)
    bus = res.tables["bus"]
    print(f"converged in {res.iterations} iterations; vm_pu {bus.vm_pu.min():.4f}.."
          f"{bus.vm_pu.max():.4f}")


def cmd_dcpf(args):
    from .powerflow import run_dc_power_flow

    net = _need_net(args)
    res = run_dc_power_flow(net)
    _write(res.tables, args.out, args.format)
    print(f"dc power flow solved for {len(res.va_degree)} buses")


def cmd_sc(args):
    from .shortcircuit import run_short_circuit

    net = _need_net(args)
    res = run_short_circuit(net, fault=args.fault, case=args.case)
    for d in res.diagnostics:
        print(d, file=sys.stderr)
    _write(res.tables, args.out, args.format)
    ik = res.ikss_ka.dropna()
    if len(ik):
        print(f"ikss_ka {ik.min():.4f}..{ik.max():.4f} ({args.fault}, {args.case})")


def cmd_se(args):
    from .estimation import SEOptions, estimate_state
    from .io import read_measurements

    net = _need_net(args)
    meas = None
    if args.measurements:
        meas = read_measurements(args.measurements)
    init = {"flat": "flat", "dc": "flat", "results": "results"}[args.init]
    opts = SEOptions(tol=args.tol, max_iter=args.max_iter or 20, init=init)
    res = estimate_state(net, meas, opts, remove_bad_data=args.remove_bad_data)
    for d in res.diagnostics:
        print(d, file=sys.stderr)
    for m in res.removed_measurements:
        print(f"removed measurement {m}", file=sys.stderr)
    if not res.converged:
        raise _Failure("state estimation did not converge", EXIT_NOT_CONVERGED)
    _write(res.tables, args.out, args.format)
    verdict = "passed" if res.chi2_passed else "failed"
    print(f"converged in {res.iterations} iterations; chi2 {res.chi2_value:.4g} "
          f"(threshold {res.chi2_threshold:.4g}, {verdict})")


def cmd_topo(args):
    from . import topology

    net = _need_net(args)
    g = topology.to_graph(net, respect_switches=not args.physical)
    rad = topology.is_radial(net)
    unsup = sorted(topology.unsupplied_buses(net))
    summary = {"buses": len(list(net.bus.indices())),
               "edges": g.number_of_edges(),
               "components": len(topology.connected_components(g)),
               "radial": rad.radial, "loops": [[list(map(str, k)) for k in loop]
                                               for loop in rad.loops],
               "unsupplied_buses": unsup}
    if args.out:
        topology.write_edge_list(g, args.out)
        print(f"wrote {args.out}", file=sys.stderr)
    print(json.dumps(summary, indent=1))


def cmd_import(args):
    from .io import import_case, save_network

    if not args.net:
        raise _Failure("--net is required")
    net = import_case(args.net)
    for d in net.diagnostics:
        print(d, file=sys.stderr)
    if args.out:
        save_network(net, args.out)
    print(f"imported {len(list(net.bus.indices()))} buses")


def cmd_export(args):
    from .io import export_case

    net = _need_net(args)
    if not args.out:
        raise _Failure("--out is required")
    case = export_case(net, args.out, name=os.path.splitext(os.path.basename(args.out))[0])
    for d in net.diagnostics:
        print(d, file=sys.stderr)
    print(f"exported {len(case['bus'])} buses, {len(case['branch'])} branches")


def cmd_timeseries(args):
    from .casestudy import TimeSeriesConfig, run_time_series
    from .networks import data_path

    net = load_any(args.net or "example:case_study")
    cfg = TimeSeriesConfig.from_file(args.config) if args.config else TimeSeriesConfig()
    if args.profiles:
        cfg.profiles = args.profiles
    if cfg.profiles is None and (args.net or "example:case_study") == "example:case_study":
        cfg.profiles = data_path("case_study_profiles.csv")
    if cfg.profiles is None:
        raise _Failure("--profiles is required")
    res = run_time_series(net, cfg, workers=args.workers)
    if args.out:
        res.to_csv(args.out)
        with open(os.path.splitext(args.out)[0] + "_meta.json", "w") as fh:
            json.dump(res.metadata, fh, indent=1)
        print(f"wrote {args.out}", file=sys.stderr)
    m = res.metadata
    print(f"{m['n_states']} states, {m['n_topology_feasible']} radial and supplied, "
          f"{m['n_feasible']} feasible; {m['n_steps']} steps, {m['n_infeasible_steps']} "
          f"infeasible; {m['n_power_flows']} power flows")
    if m["n_infeasible_steps"] == m["n_steps"] and m["n_steps"]:
        raise _Failure("no step has a feasible switching state", EXIT_NOT_CONVERGED)


COMMANDS = {"pf": cmd_pf, "dcpf": cmd_dcpf, "sc": cmd_sc, "se": cmd_se, "topo": cmd_topo,
            "import": cmd_import, "export": cmd_export, "timeseries": cmd_timeseries}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="elgrid", description="Balanced power-system analysis.")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def add(name, help_text, out_help="output directory for result CSVs"):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--net", help="grid file (.json), case file (.m) or example:NAME")
        sp.add_argument("--out", help=out_help)
        return sp

    def fmt(sp):
        sp.add_argument("--format", choices=("csv", "json"), default="csv")

    sp = add("pf", "AC power flow")
    sp.add_argument("--init", choices=("flat", "dc", "results"), default="flat")
    sp.add_argument("--tol", type=float, default=1e-8)
    sp.add_argument("--max-iter", type=int, default=None)
    sp.add_argument("--algorithm", choices=("nr", "bfsw"), default="nr")
    sp.add_argument("--enforce-q-lims", action="store_true")
    fmt(sp)
    fmt(add("dcpf", "DC power flow"))
    sp = add("sc", "IEC 60909 initial short-circuit currents")
    sp.add_argument("--fault", choices=("3ph", "2ph"), default="3ph")
    sp.add_argument("--case", choices=("max", "min"), default="max")
    fmt(sp)
    sp = add("se", "weighted least squares state estimation")
    sp.add_argument("--measurements", help="measurement CSV (default: the grid's own)")
    sp.add_argument("--init", choices=("flat", "dc", "results"), default="flat")
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--max-iter", type=int, default=None)
    sp.add_argument("--remove-bad-data", action="store_true")
    fmt(sp)
    sp = add("topo", "graph summary", out_help="edge list CSV")
    sp.add_argument("--physical", action="store_true", help="ignore switch states")
    add("import", "case file to grid JSON", out_help="grid JSON path")
    add("export", "grid to case file", out_help="case file path")
    sp = add("timeseries", "reconfiguration time series", out_help="result CSV path")
    sp.add_argument("--profiles", help="profile CSV (kind.index.field scalers)")
    sp.add_argument("--config", help="time-series config JSON")
    sp.add_argument("--workers", type=int, default=None)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except _Failure as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except (NetworkError, ValueError, KeyError, OSError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
