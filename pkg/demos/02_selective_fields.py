"""Greedy construction of selective fields on a short horizon.

Each field is optimized so that one basis operator and its best imitation
by the earlier operators give different readings. The objective can only
grow along the iterations.
"""
# %%
import numpy as np

from dipoleid import MonotonicSettings, MultistartSettings, ProblemContext, TimeGrid, greedy_fields
from dipoleid.linalg import basis_state, random_hermitian_basis

ctx = ProblemContext(1e-2 * np.diag([1.0, 2.0, 4.0]), basis_state(3, 0), basis_state(3, 2),
                     TimeGrid(60.0, 240), beta=1e-2)
basis = random_hermitian_basis(3, 4, seed=5)
fs = greedy_fields(ctx, basis, MonotonicSettings(max_iters=40), MultistartSettings(restarts=5), field_seed=1)

# %%
for k, (eps, tr) in enumerate(zip(fs.fields, fs.traces), start=1):
    energy = ctx.dt * eps @ eps
    steps = np.diff(tr.objective_history)
    print(f"field {k}: J {tr.objective_history[0]:.4f} -> {tr.final_objective:.4f} "
          f"in {tr.iterations} sweeps, energy {energy:.3f}, smallest J step {steps.min():.1e}")

# %% [markdown]
# The fitted imitation used at step k and how well it matched.

# %%
for k in range(2, len(basis) + 1):
    print(f"step {k}: alpha = {np.round(fs.fit_coefficients[k - 1], 3)}, misfit {fs.fit_costs[k - 1]:.2e}")
