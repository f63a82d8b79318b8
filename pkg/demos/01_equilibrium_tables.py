"""
Equilibrium tables for the benchmark game
=========================================

Solve the Riccati system, read off the feedback gains, and price the
equilibrium two ways: Monte Carlo over simulated paths and the closed
moment equations. Runs in a few seconds.
"""

# %%
# The benchmark game and its coefficient check.
import numpy as np

from mfnash.cost import exact_cost_moments, moment_trajectory, simulate_cost
from mfnash.model import TimeGrid, reference_spec, validate_lq
from mfnash.riccati import feedback_gains, solve_riccati
from mfnash.sde import NoisePlan, equilibrium_policy

spec = reference_spec()
grid = TimeGrid(spec.horizon, 512)
print(validate_lq(spec, grid).summary())

# %%
# alpha prices the mean, tau prices the filtered deviation, and their gap
# delta is what the mean-field term adds on top of the usual LQ feedback.
tables = solve_riccati(spec, grid)
gains = feedback_gains(spec, tables)
print(f"\n{'t':>5} {'alpha1':>8} {'tau1':>8} {'delta1':>8} {'k_hat1':>8} {'E[x]':>8}")
for k in range(0, grid.n_steps + 1, 128):
    print(f"{grid.nodes[k]:5.2f} {tables.alpha1[k]:8.4f} {tables.tau1[k]:8.4f} "
          f"{tables.delta1[k]:8.4f} {gains.k_hat1[k]:8.4f} {tables.ex_mean[k]:8.4f}")
print(f"max |alpha - tau - delta| = {tables.identity_residual():.1e}")

# %%
# Costs. The moment route is exact for the discrete convention up to RK4
# error; the Monte Carlo route should sit within a few standard errors.
exact = exact_cost_moments(spec, gains, tables.ex_mean)
print(f"\nmoment equations: J1 = {exact[0]:.6f}, J2 = {exact[1]:.6f}")
for n in (1_000, 10_000, 100_000):
    est = simulate_cost(spec, equilibrium_policy(gains), tables.ex_mean, NoisePlan(1, n, grid))
    print(f"{n:>7} paths: J1 = {est.j1:.5f} +- {est.se1:.5f}   J2 = {est.j2:.5f} +- {est.se2:.5f}")

# %%
# The filter never carries more variance than the state it tracks. The gap
# is the variance of the error x - x_hat, which obeys de = a e dt + c2 dw2
# whatever the controls do.
mom = moment_trajectory(spec, gains, tables.ex_mean)
gap = mom.filter_variance_gap()
a, c2, T = 0.1, 0.2, spec.horizon
print(f"\nE[x^2] - E[x_hat^2] at T: {gap[-1]:.6f}")
print(f"c2^2 (exp(2aT) - 1) / (2a): {c2 ** 2 * np.expm1(2 * a * T) / (2 * a):.6f}")
