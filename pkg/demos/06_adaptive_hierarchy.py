"""The adaptive model in action: each query is answered by the cheapest tier
whose certified error passes the tolerance, enriching on the fly.

Watch the tier column: the first query pays for a full solve, repeats and
neighbors ride the learned model, and everything stays within eps of truth.
"""

import numpy as np

from certrom import FullOrderModel, build_heat_square, l2_time_norm, make_adaptive_model

problem = build_heat_square()
eps = 1e-2
model = make_adaptive_model(problem, eps=eps, ml_backend="vkoga")
fom = FullOrderModel(problem)

rng = np.random.default_rng(4)
queries = [problem.box.sample(rng) for _ in range(12)]
queries.append(queries[0])  # a repeat rides the learned tier

print(f"{'#':>2}  {'mu':>16}  {'tier':>4}  {'ml bound':>10}  {'rb bound':>10}  {'true err':>10}")
for i, mu in enumerate(queries):
    signal, rec = model.query(mu)
    true = l2_time_norm(fom.eval_output(mu) - signal)
    assert true <= eps * (1 + 1e-10)
    rb = f"{rec.delta_rb:10.2e}" if np.isfinite(rec.delta_rb) else "         -"
    print(f"{i:2d}  ({mu[0]:5.2f}, {mu[1]:5.2f})  {rec.tier:>4}  {rec.delta_ml:10.2e}  {rb}  {true:10.2e}")

counts = {t: sum(r.tier == t for r in model.records) for t in ("ml", "rb", "fom")}
print(f"\ntier usage: {counts}, final basis size {model.rb_rom.dim}, "
      f"kernel centers {model.ml_rom.size}")
