"""Singular values of the interval transfer operators.

Prints the leading singular values of the first interval operator of each
1D preset next to a randomized estimate, then checks the two facts the
coarse solver relies on: the sketch never overshoots (interlacing) and
with a few oversampling vectors it agrees with the exact values.
"""

import numpy as np

from spectral_parareal import RsvdConfig, assemble, build_problem, exact_truncated_svd, make_propagators, randomized_svd
from spectral_parareal.rsvd import dense_operator_matrix

R = 4


def show(name, **params):
    problem = build_problem(name, **params)
    F = make_propagators(assemble(problem), problem)[0]
    exact = exact_truncated_svd(dense_operator_matrix(F), rank=R)
    sketch = randomized_svd(F, RsvdConfig(R, 5, seed=7), interval=1)
    print(f"\n{name} {params or ''}")
    for r in range(1, sketch.rank + 1):
        rel = abs(sketch.sigma(r) - exact.sigma(r)) / exact.sigma(r)
        print(f"  sigma_{r}: exact {exact.sigma(r):.4e}  randomized {sketch.sigma(r):.4e}  rel. diff {rel:.1e}")
    assert np.all(sketch.sigmas <= exact.sigmas[: sketch.rank] + 1e-10)


if __name__ == "__main__":
    show("exp1_dirichlet", T=8.0)
    show("exp2")
    show("exp4_scaled")
