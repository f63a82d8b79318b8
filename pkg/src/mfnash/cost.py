"""Quadratic cost functionals: Monte Carlo estimates and an exact moment oracle.

Discrete cost convention (shared with the equilibrium checks): state terms use
the trapezoid rule over nodes, control terms are held constant on each step.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .model import LqGameSpec, TimeGrid
from .riccati import GainTables, GridMismatch
from .sde import (ControlPolicy, NoisePlan, StatePathSet, generate_noise,
                  simulate_state)


@dataclass(frozen=True)
class CostEstimate:
    j1: float
    j2: float
    se1: float
    se2: float
    n_paths: int
    n_steps: int
    rule: str = "trapezoid-state/held-control"
    seed: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    n = values.size
    mean = math.fsum(values) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((values - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def per_path_costs(spec: LqGameSpec, paths: StatePathSet, ex_mean=None) -> tuple[np.ndarray, np.ndarray]:
    """Realised cost of each path for both players.

    ``E[x]`` terms are evaluated with ``ex_mean`` (default: the mean stored
    with the paths), never with a per-bundle plug-in.
    """
    grid = paths.grid
    ex = paths.ex_mean if ex_mean is None else np.asarray(ex_mean, dtype=float)
    if ex.shape != (grid.n_steps + 1,) or paths.x.shape[1] != grid.n_steps + 1:
        raise GridMismatch("paths and ex_mean are not on the same grid")
    c = spec.at(grid.nodes)
    dt = grid.dt
    w = np.full(grid.n_steps + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    x2 = paths.x ** 2
    out = []
    for g, gb, m, v, h, hb in (
        (c.g1, c.gbar1, c.m1, paths.v1, spec.h1, spec.hbar1),
        (c.g2, c.gbar2, c.m2, paths.v2, spec.h2, spec.hbar2),
    ):
        state = x2 @ (w * g) + np.dot(w, gb * ex ** 2)
        control = (v ** 2) @ (m[:-1] * dt)
        terminal = h * x2[:, -1] + hb * ex[-1] ** 2
        out.append(0.5 * (state + control + terminal))
    return out[0], out[1]


def estimate_cost_mc(spec: LqGameSpec, paths: StatePathSet, ex_mean=None, seed: int | None = None) -> CostEstimate:
    c1, c2 = per_path_costs(spec, paths, ex_mean)
    j1, se1 = _mean_se(c1)
    j2, se2 = _mean_se(c2)
    return CostEstimate(j1, j2, se1, se2, paths.n_paths, paths.grid.n_steps, seed=seed)


def simulate_cost(spec: LqGameSpec, policy: ControlPolicy, ex_mean, plan: NoisePlan,
                  chunk_size: int = 4096, threads: int = 1) -> CostEstimate:
    """Monte Carlo cost over ``plan`` processed in chunks of paths.

    Needs a deterministic ``ex_mean`` so that paths are independent. Per-path
    costs are assembled in path order before the final reduction, so the
    result does not depend on ``chunk_size`` or ``threads``.
    """
    if ex_mean is None:
        raise ValueError("chunked simulation needs a deterministic mean path")
    c1 = np.empty(plan.n_paths)
    c2 = np.empty(plan.n_paths)
    for start in range(0, plan.n_paths, chunk_size):
        rows = np.arange(start, min(start + chunk_size, plan.n_paths))
        bundle = generate_noise(plan, rows, threads=threads)
        paths = simulate_state(spec, policy, ex_mean, bundle)
        c1[rows], c2[rows] = per_path_costs(spec, paths, ex_mean)
    j1, se1 = _mean_se(c1)
    j2, se2 = _mean_se(c2)
    return CostEstimate(j1, j2, se1, se2, plan.n_paths, plan.grid.n_steps, seed=int(plan.master_seed))


@dataclass(frozen=True)
class MomentTrajectory:
    """First and second moments of ``(x, x_hat)`` at every node."""

    grid: TimeGrid
    mean_x: np.ndarray
    mean_xhat: np.ndarray
    exx: np.ndarray
    exxh: np.ndarray
    exhxh: np.ndarray

    def min_eigenvalues(self) -> np.ndarray:
        """Smallest eigenvalue of the second-moment matrix at each node."""
        tr = self.exx + self.exhxh
        det = self.exx * self.exhxh - self.exxh ** 2
        disc = np.sqrt(np.maximum(0.25 * tr ** 2 - det, 0.0))
        return 0.5 * tr - disc

    def filter_variance_gap(self) -> np.ndarray:
        """``E[x^2] - E[x_hat^2]``; nonnegative for a conditional expectation."""
        return self.exx - self.exhxh


def _moment_rhs(a, B, phi, q_xx, q_xh, y):
    mx, mh, pxx, pxh, phh = y
    aB = a + B
    return np.array([
        a * mx + B * mh + phi,
        aB * mh + phi,
        2.0 * (a * pxx + B * pxh + phi * mx) + q_xx,
        (a + aB) * pxh + B * phh + phi * (mx + mh) + q_xh,
        2.0 * (aB * phh + phi * mh) + q_xh,
    ])


def moment_trajectory(spec: LqGameSpec, gains: GainTables, ex_mean) -> MomentTrajectory:
    """Integrate the closed moment equations of ``(x, x_hat)`` under the
    linear feedback ``u_i = k_hat_i x_hat + k_mean_i E[x]`` with RK4.

    ``x`` carries ``c1 dw1 + c2 dw2`` and ``x_hat`` carries ``c1 dw1``; gains
    and the mean path are linearly interpolated at stage midpoints.
    """
    grid = gains.grid
    ex = np.asarray(ex_mean, dtype=float)
    if ex.shape != (grid.n_steps + 1,):
        raise GridMismatch("ex_mean is not on the gain grid")
    cn = spec.at(grid.nodes)
    cm = spec.at(grid.midpoints)
    mid = lambda v: 0.5 * (v[:-1] + v[1:])
    B_n = cn.b1 * gains.k_hat1 + cn.b2 * gains.k_hat2
    phi_n = (cn.abar + cn.b1 * gains.k_mean1 + cn.b2 * gains.k_mean2) * ex
    B_m = cm.b1 * mid(gains.k_hat1) + cm.b2 * mid(gains.k_hat2)
    phi_m = (cm.abar + cm.b1 * mid(gains.k_mean1) + cm.b2 * mid(gains.k_mean2)) * mid(ex)
    qxx_n, qxh_n = cn.c1 ** 2 + cn.c2 ** 2, cn.c1 ** 2
    qxx_m, qxh_m = cm.c1 ** 2 + cm.c2 ** 2, cm.c1 ** 2

    h = grid.dt
    y = np.array([spec.x0, spec.x0, spec.x0 ** 2, spec.x0 ** 2, spec.x0 ** 2])
    out = np.empty((grid.n_steps + 1, 5))
    out[0] = y
    for k in range(grid.n_steps):
        k1 = _moment_rhs(cn.a[k], B_n[k], phi_n[k], qxx_n[k], qxh_n[k], y)
        k2 = _moment_rhs(cm.a[k], B_m[k], phi_m[k], qxx_m[k], qxh_m[k], y + 0.5 * h * k1)
        k3 = _moment_rhs(cm.a[k], B_m[k], phi_m[k], qxx_m[k], qxh_m[k], y + 0.5 * h * k2)
        k4 = _moment_rhs(cn.a[k + 1], B_n[k + 1], phi_n[k + 1], qxx_n[k + 1], qxh_n[k + 1], y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = y
    return MomentTrajectory(grid, *(out[:, j].copy() for j in range(5)))


def cost_from_moments(spec: LqGameSpec, gains: GainTables, ex_mean, moments: MomentTrajectory):
    grid = gains.grid
    ex = np.asarray(ex_mean, dtype=float)
    c = spec.at(grid.nodes)
    w = np.full(grid.n_steps + 1, grid.dt)
    w[0] = w[-1] = 0.5 * grid.dt
    res = []
    for g, gb, m, kh, km, hh, hb in (
        (c.g1, c.gbar1, c.m1, gains.k_hat1, gains.k_mean1, spec.h1, spec.hbar1),
        (c.g2, c.gbar2, c.m2, gains.k_hat2, gains.k_mean2, spec.h2, spec.hbar2),
    ):
        eu2 = kh ** 2 * moments.exhxh + 2 * kh * km * ex * moments.mean_xhat + km ** 2 * ex ** 2
        running = np.dot(w, g * moments.exx + gb * ex ** 2 + m * eu2)
        terminal = hh * moments.exx[-1] + hb * ex[-1] ** 2
        res.append(float(0.5 * (running + terminal)))
    return res[0], res[1]


def exact_cost_moments(spec: LqGameSpec, gains: GainTables, ex_mean) -> tuple[float, float]:
    """Costs of the linear feedback pair from the moment equations."""
    mom = moment_trajectory(spec, gains, ex_mean)
    return cost_from_moments(spec, gains, ex_mean, mom)
