"""Regenerate the bundled case files and their reference power-flow states.

Needs PYPOWER (not a runtime dependency). The case matrices are the public
IEEE/MATPOWER test cases as distributed with PYPOWER; the solved states
are PYPOWER's Newton-Raphson solution at a 1e-12 MVA tolerance.

    python3 tools/make_case_data.py
"""
import importlib.metadata
import os
import sys

from pypower.api import case9, case14, case30, case118, ppoption, runpf

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))
from elgrid.io.casefile import write_case  # noqa: E402

DATA = os.path.join(os.path.dirname(__file__), "..", "src", "elgrid", "data")


def main():
    version = importlib.metadata.version("PYPOWER")
    for name, fn in (("case9", case9), ("case14", case14), ("case30", case30),
                     ("case118", case118)):
        ppc = fn()
        case = {"baseMVA": ppc["baseMVA"], "bus": ppc["bus"][:, :13],
                "gen": ppc["gen"][:, :10], "branch": ppc["branch"][:, :13]}
        write_case(case, os.path.join(DATA, f"{name}.m"), name)
        res, ok = runpf(ppc, ppoption(VERBOSE=0, OUT_ALL=0, PF_TOL=1e-12))
        assert ok, name
        with open(os.path.join(DATA, f"{name}_solved.csv"), "w") as fh:
            fh.write(f"# solved state of {name} from PYPOWER {version} runpf "
                     "(Newton-Raphson, PF_TOL=1e-12, no q limits)\n")
            fh.write("bus,vm_pu,va_degree\n")
            for row in res["bus"]:
                fh.write(f"{int(row[0])},{float(row[7])!r},{float(row[8])!r}\n")


if __name__ == "__main__":
    main()
