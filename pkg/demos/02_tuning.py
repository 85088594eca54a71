"""Choosing the budgets from data.

Start with a generous trimming budget, pick the feature budget on the
BIC path, then walk the trimming budget down until every trimmed case
has a deletion residual beyond the Bonferroni cut-off.
"""

from __future__ import annotations

import numpy as np

from sfsod import Dataset
from sfsod.tuning import TuningPlan, tune

rng = np.random.default_rng(11)
n, p = 50, 8
X = rng.normal(size=(n, p))
y = 1.0 + 2.0 * X[:, 0] - 1.5 * X[:, 2] + rng.normal(size=n)
y[:4] += 9.0
data = Dataset.from_arrays(y, X)

plan = TuningPlan(method="bic", kp_grid=tuple(range(1, 7)), kn_start=8)
result = tune(data, plan)

print("BIC path:")
for k, v in result.kp_scores.items():
    mark = "  <- elbow" if k == result.k_p else ""
    print(f"  k_p={k}  {v:9.3f}{mark}")

print("\ntrimming walk (smallest |deletion residual| vs cut-off):")
tr = result.kn_trace
for k in tr.statistic:
    verdict = "stop" if k == tr.selected else "continue"
    print(f"  k_n={k}  {tr.statistic[k]:6.2f}  {tr.threshold[k]:5.2f}  {verdict}")

print(f"\nchosen budgets: k_p={result.k_p} (intercept included), k_n={result.k_n}")
