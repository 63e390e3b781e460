# With homogeneous Neumann data the constant function is never damped, so
# the fine propagator has singular value one.  A zero coarse solver then
# makes no progress at all, while a rank-one coarse solver that carries
# only the constant mode converges in a couple of iterations.
from spectral_parareal import ExperimentConfig, run

common = dict(T=8.0, include_offset=False, max_iterations=3)
zero = run(ExperimentConfig("exp1_neumann", coarse="zero", **common))
mean = run(ExperimentConfig("exp1_neumann", coarse="fourier", rank=1, inner_product="l2", **common))

for k in range(4):
    print(f"k={k}  G=0: {zero.max_errors[k]:.3e}   constant mode: {mean.max_errors[k]:.3e}")
