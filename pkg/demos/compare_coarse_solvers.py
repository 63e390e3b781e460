"""Compare coarse propagators on the variable-diffusivity 1D problem.

Every variant is exact after k >= n iterations at time n; what differs is
how fast the maximum-over-time error falls before that.  The spectral
coarse solver from the exact SVD is the reference for what a rank-5
correction can do, and the randomized one should track it closely.

    python demos/compare_coarse_solvers.py
"""

from spectral_parareal import ExperimentConfig, run

VARIANTS = [
    ("zero", {}),
    ("euler", {}),
    ("fourier", {"rank": 5}),
    ("svd-exact", {"rank": 5}),
    ("svd-randomized", {"rank": 5, "oversampling": 1}),
]


def main():
    K = 5
    print(f"{'coarse':>16} " + " ".join(f"{'k=' + str(k):>9}" for k in range(K + 1)))
    for coarse, extra in VARIANTS:
        trace = run(ExperimentConfig("exp2", coarse=coarse, max_iterations=K, **extra))
        print(f"{coarse:>16} " + " ".join(f"{e:9.2e}" for e in trace.max_errors))


if __name__ == "__main__":
    main()
