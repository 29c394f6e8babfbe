"""Build a reduced model from a handful of trajectories and check that the
residual-based error estimate really bounds the true output error.

The estimate is computable without ever touching the full model online; the
full solves below are only the audit.
"""

import numpy as np

from certrom import FullOrderModel, RbGenerator, build_heat_square, l2_time_norm

problem = build_heat_square()
fom = FullOrderModel(problem)

generator = RbGenerator(fom, eps=1e-4)
rng = np.random.default_rng(0)
generator.extend(problem.box.sample(rng))
rom = generator.precompute()
print(f"reduced basis: {rom.dim} vectors for a {problem.dim}-DoF model")

print(f"{'mu':>16}  {'true error':>12}  {'estimate':>12}  {'effectivity':>11}")
for _ in range(8):
    mu = problem.box.sample(rng)
    traj = rom.eval_state(mu)
    estimate = rom.est_output_for(traj, mu)
    true_error = l2_time_norm(fom.eval_output(mu) - rom.output_of(traj))
    eff = estimate / true_error if true_error else float("inf")
    print(f"({mu[0]:5.2f}, {mu[1]:5.2f})  {true_error:12.3e}  {estimate:12.3e}  {eff:11.1f}")

for mu in generator.training_parameters:
    assert rom.est_output(mu) <= 1e-4
print("every training parameter certifies below the target accuracy")
