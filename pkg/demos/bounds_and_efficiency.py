"""A priori and a posteriori error bounds on the 2D problem.

The a posteriori bound is computable during the iteration from the
update norms alone, so it can drive a stopping test; eta is the ratio of
the true error to it and stays below one.
"""

import math

from spectral_parareal import ExperimentConfig, run

trace = run(ExperimentConfig("exp3", mesh_n=16, coarse="svd-randomized", rank=3, oversampling=1, max_iterations=6))

print(f"delta = {trace.delta:.3f}, eps = {trace.eps:.3e} ({trace.bounds_mode})")
print(f"{'k':>2} {'error':>10} {'a priori':>10} {'a post.':>10} {'eta':>7}")
for k in range(trace.K + 1):
    apost = trace.apost_per_n[k].max() if k else math.nan
    print(f"{k:2d} {trace.max_errors[k]:10.2e} {trace.apriori[k]:10.2e} {apost:10.2e} {trace.eta[k]:7.3f}"
          + ("  (at rounding floor)" if trace.below_floor[k] else ""))
