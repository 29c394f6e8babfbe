"""Learn full reduced trajectories with greedy kernel regression and certify
every prediction through the reduced model's own error estimate.

The learned model predicts all time steps in one shot; the estimator never
trusts it, so a bad prediction is caught, not served.
"""

import numpy as np

from certrom import (
    FullOrderModel,
    KernelConfig,
    RbGenerator,
    VkogaGenerator,
    build_heat_square,
    l2_time_norm,
)

problem = build_heat_square()
fom = FullOrderModel(problem)
rb_gen = RbGenerator(fom, eps=1e-3)
rng = np.random.default_rng(2)
training = [problem.box.sample(rng) for _ in range(6)]
for mu in training:
    rb_gen.extend(mu)
rom = rb_gen.precompute()

ml_gen = VkogaGenerator(rom, KernelConfig())
for mu in training:
    ml_gen.extend(mu)
learned = ml_gen.precompute()
print(f"kernel model: {learned.size} centers, targets of length "
      f"{rom.time_grid.num_nodes} x {rom.dim}")

print(f"{'mu':>16}  {'certified bound':>15}  {'true error':>12}  verdict")
for _ in range(8):
    mu = problem.box.sample(rng)
    bound = learned.est_output(mu)
    true = l2_time_norm(fom.eval_output(mu) - learned.eval_output(mu))
    verdict = "accept" if bound <= 1e-2 else "reject -> fall back"
    print(f"({mu[0]:5.2f}, {mu[1]:5.2f})  {bound:15.3e}  {true:12.3e}  {verdict}")
