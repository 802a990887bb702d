"""
A synthetic household survey with a consumer-expenditure-like layout
====================================================================

Real expenditure microdata cannot be shipped with the package, so this
script builds a stand-in with the same kind of columns: a primary sampling
unit (``psu``), a design weight, a college indicator for the primary
earner, household income, family size, and two indicators (any vehicle,
any tobacco spending).

Everything that matters for the cluster-adjusted test is clustered here:
the share of college-educated earners, income levels, family sizes and
vehicle ownership all vary by PSU. Only income and tobacco use carry a
genuine group difference inside PSUs.

Run from the repository root::

    python gallery/make_ce_like_sample.py

It rewrites ``src/surveyperm/data/ce_like.csv``.
"""

from pathlib import Path

import numpy as np
import pandas as pd

rng = np.random.default_rng(2015)

# 60 PSUs of uneven size, as in an area sample
n_psu = 60
sizes = rng.integers(12, 45, n_psu)
psu = np.repeat(np.arange(1, n_psu + 1), sizes)
n = psu.size
k = psu - 1

# PSU-level ingredients: how educated, how wealthy, how rural
college_rate = rng.beta(2.0, 3.5, n_psu)
log_income_effect = rng.normal(0.0, 0.35, n_psu)
rural = rng.uniform(size=n_psu) < 0.3

college = (rng.uniform(size=n) < college_rate[k]).astype(int)

# income: PSU effect plus a within-PSU college premium
log_income = 10.6 + log_income_effect[k] + 0.55 * college + rng.normal(0.0, 0.6, n)
income = np.round(np.exp(log_income), -2)

# family size tracks the PSU, not the individual earner
family_size = 1 + rng.poisson(1.2 + 0.9 * rural[k] + 0.5 * (college_rate[k] < 0.3))

# vehicles: almost everyone in rural PSUs, fewer in dense urban ones
vehicle = (rng.uniform(size=n) < np.where(rural[k], 0.97, 0.82 + 0.1 * college_rate[k])).astype(int)

# tobacco: lower for college-educated earners in every PSU
tobacco = (rng.uniform(size=n) < np.where(college == 1, 0.06, 0.18)).astype(int)

# design weights: PSU-level base weight with a household nonresponse adjustment
base = rng.uniform(8000.0, 30000.0, n_psu)
weight = np.round(base[k] * rng.uniform(0.8, 1.25, n), 1)

frame = pd.DataFrame(
    {
        "psu": [f"P{p:03d}" for p in psu],
        "weight": weight,
        "college": college,
        "income": income,
        "family_size": family_size,
        "vehicle": vehicle,
        "tobacco": tobacco,
    }
)

out = Path(__file__).resolve().parent.parent / "src" / "surveyperm" / "data" / "ce_like.csv"
frame.to_csv(out, index=False)

# A weighted look at the two groups, in the spirit of a survey summary table
for col in ("income", "family_size", "vehicle", "tobacco"):
    means = [np.average(frame.loc[frame.college == g, col], weights=frame.loc[frame.college == g, "weight"]) for g in (1, 0)]
    print(f"{col:>12}: college {means[0]:10.4f}   not college {means[1]:10.4f}")
print(f"wrote {len(frame)} households in {n_psu} PSUs to {out}")
