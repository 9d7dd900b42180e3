"""Record the case-study screening counts and full-day totals as golden values.

Run from the repository root: ``python3 tools/make_golden.py``. The counts
depend only on the bundled grid and profiles; rerun after changing either.
"""
import json
import pathlib
import time

from elgrid import networks
from elgrid.casestudy import TimeSeriesConfig, run_time_series

OUT = pathlib.Path(__file__).resolve().parents[1] / "tests" / "golden" / "case_study.json"


def main():
    net = networks.case_study_grid()
    cfg = TimeSeriesConfig(profiles=networks.case_study_profiles(),
                           tie_switches=networks.case_study_tie_switches(net))
    t0 = time.perf_counter()
    res = run_time_series(net, cfg)
    meta = res.metadata
    doc = {
        "source": "tools/make_golden.py on case_study_grid() with case_study_profiles.csv",
        "n_states": meta["n_states"],
        "n_topology_feasible": meta["n_topology_feasible"],
        "n_feasible": meta["n_feasible"],
        "n_steps": meta["n_steps"],
        "n_infeasible_steps": meta["n_infeasible_steps"],
        "n_power_flows": meta["n_power_flows"],
        "total_losses_kwh": round(float(res.table.losses_kw.sum()) * 0.25, 6),
    }
    OUT.parent.mkdir(exist_ok=True)
    OUT.write_text(json.dumps(doc, indent=1) + "\n")
    print(json.dumps(doc, indent=1), f"\n{time.perf_counter() - t0:.1f} s")


if __name__ == "__main__":
    main()
