"""Regenerate src/elgrid/data/case_study_profiles.csv (96 quarter-hour scalers).

Loads follow a household-like shape with a morning and an evening peak
(maximum at 19:15); commercial loads (every third) peak around noon.
Wind output is a slow diurnal wave peaking at 03:30 plus seeded noise.
"""
import os

import numpy as np
import pandas as pd

OUT = os.path.join(os.path.dirname(__file__), "..", "src", "elgrid", "data",
                   "case_study_profiles.csv")


def main():
    rng = np.random.default_rng(20160912)
    h = np.arange(96) / 4.0
    household = (0.35 + 0.25 * np.exp(-((h - 7.5) / 1.5) ** 2)
                 + 0.65 * np.exp(-((h - 19.25) / 2.0) ** 2))
    household /= household.max()
    commercial = 0.3 + 0.7 * np.exp(-((h - 12.5) / 3.5) ** 2)
    wind = 0.55 + 0.4 * np.cos(2 * np.pi * (h - 3.5) / 24.0)
    wind = wind + np.convolve(rng.normal(0.0, 0.06, 96 + 7), np.ones(8) / 8, "valid")
    wind = np.clip(wind / wind.max(), 0.0, 1.0)
    cols = {}
    for i in range(10):
        shape = commercial if i % 3 == 2 else household
        cols[f"load.{i}.p_kw"] = shape
        cols[f"load.{i}.q_kvar"] = shape
    for j in range(4):
        cols[f"sgen.{j}.p_kw"] = np.clip(wind * (1.0 - 0.05 * j), 0.0, 1.0)
    df = pd.DataFrame(cols).round(4)
    df.index.name = "step"
    df.to_csv(OUT)


if __name__ == "__main__":
    main()
