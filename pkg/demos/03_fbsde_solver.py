"""
Solving the adjoint system by regression
========================================

Forget the Riccati equations and solve the forward-backward system directly:
simulate, regress the adjoint on the observed state, update the controls,
repeat. The result is then compared with the Riccati representation. About
a minute and a half.
"""

# %%
from mfnash.fbsde import SolverConfig, check_against_riccati, solve_lq_fbsde
from mfnash.model import TimeGrid, reference_spec
from mfnash.riccati import solve_riccati
from mfnash.sde import NoisePlan

spec = reference_spec()
results = {}
for n_paths, n_steps in ((10_000, 256), (40_000, 512)):
    grid = TimeGrid(spec.horizon, n_steps)
    cfg = SolverConfig(n_paths=n_paths, n_steps=n_steps)
    sol = solve_lq_fbsde(spec, cfg, NoisePlan(3, n_paths, grid, antithetic=True))
    res = check_against_riccati(sol, solve_riccati(spec, grid))
    results[n_paths] = res
    print(f"\n{n_paths} paths, {n_steps} steps, {len(sol.iteration_log)} Picard iterations")
    print("control change per iteration: " + " ".join(f"{c:.1e}" for c in sol.iteration_log))
    print(res.summary())

# %%
# Quadrupling the paths and doubling the steps should shrink the errors.
small, large = results[10_000], results[40_000]
for i in range(2):
    print(f"player {i + 1}: q_hat error {small.qhat_rmse[i]:.2e} -> {large.qhat_rmse[i]:.2e}")
