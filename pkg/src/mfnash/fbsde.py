"""Picard / least-squares Monte Carlo solver for the LQ adjoint system.

This route never touches the Riccati equations. Given candidate control
tables ``u_i = slope_i(t) x_hat + intercept_i(t)``, the forward state is
simulated with its particle mean, and the adjoints

    dq_i = -[a q_i + abar E q_i + g_i x + gbar_i E x] dt + k_i1 dw1 + k_i2 dw2,
    q_i(T) = h_i x(T) + hbar_i E x(T),

are stepped backward with an explicit Euler target whose conditional
expectation is taken by regression on ``{1, x, x_hat}``. By default the
step's Brownian increments join the regression as control variates: they
have conditional mean zero, so they leave the conditional expectation
unchanged, and their coefficients estimate the integrands ``k_ij``. The filtered adjoint
``q_hat_i`` is that fit with ``x`` replaced by its conditional mean ``x_hat``,
and the control is updated towards ``-b_i q_hat_i / m_i`` with damping
``theta``.

Because ``E x`` is one number per node, the ``E x`` regressor is collinear
with the intercept and is absorbed into it.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .model import LqGameSpec, TimeGrid
from .riccati import GridMismatch, RiccatiTables
from .sde import ControlPolicy, NoisePlan, PathBundle, generate_noise, simulate_state


class NoConvergence(RuntimeError):
    def __init__(self, iterations: int, last_change: float):
        super().__init__(f"Picard iteration did not converge in {iterations} iterations "
                         f"(last relative control change {last_change:.3e})")
        self.iterations = iterations
        self.last_change = last_change


class RegressionSingular(ArithmeticError):
    """The regression basis carries no cross-path variation at some node."""


@dataclass(frozen=True)
class SolverConfig:
    n_paths: int = 10_000
    n_steps: int = 256
    max_picard: int = 30
    picard_tol: float = 1e-4
    theta: float = 0.5
    rcond: float = 1e-10
    basis: tuple = ("1", "x", "x_hat", "ex_mean")
    martingale_regressors: bool = True

    def __post_init__(self):
        if self.picard_tol <= 0:
            raise ValueError("picard_tol must be positive")
        if not 0 < self.theta <= 1:
            raise ValueError("theta must lie in (0, 1]")
        if self.max_picard < 1 or self.n_paths < 2 or self.n_steps < 1:
            raise ValueError("max_picard, n_paths and n_steps must be positive (n_paths >= 2)")


def _design(cols, centers):
    """Columns centred by ``centers`` with a leading intercept."""
    n = cols[0].size
    out = np.empty((n, 1 + len(cols)))
    out[:, 0] = 1.0
    for j, (c, m) in enumerate(zip(cols, centers)):
        out[:, j + 1] = c - m
    return out


def _project(coef, x, x_hat):
    """Filtered version of a centred fit ``c0 + c1 (x - mx) + c2 (x_hat - mh)``.

    The filter error ``x - x_hat`` is independent of the observed noise and
    has mean zero, so conditioning on the observations replaces ``x`` by
    ``x_hat``. Returns ``(intercept, slope)`` in ``x_hat - mh``.
    """
    return np.array([coef[0] + coef[1] * (x_hat.mean() - x.mean()), coef[1] + coef[2]])


@dataclass
class FbsdeSolution:
    """Paths and node-wise regression tables.

    ``q_coef[i]`` has shape ``(N+1, 3)`` for the centred basis
    ``(1, x - mean x, x_hat - mean x_hat)``; ``qhat_coef[i]`` has shape
    ``(N+1, 2)`` for ``(1, x_hat - mean x_hat)``; ``k_coef[i][j]`` has shape
    ``(N, 3)`` in the same basis as ``q_coef`` (only the constant column is
    used when increments are regressors). Per-path values are produced on
    demand.
    """

    grid: TimeGrid
    x: np.ndarray
    x_hat: np.ndarray
    ex_mean: np.ndarray
    q_coef: tuple
    qhat_coef: tuple
    k_coef: tuple
    slopes: tuple
    intercepts: tuple
    iteration_log: list
    terminal_r2: tuple
    converged: bool = True
    _centers: tuple = field(default=None, repr=False)

    def __post_init__(self):
        self._centers = (self.x.mean(axis=0), self.x_hat.mean(axis=0))

    def _full(self, coef, nodes=slice(None)):
        mx, mh = self._centers
        return (coef[nodes, 0] + coef[nodes, 1] * (self.x[:, nodes] - mx[nodes])
                + coef[nodes, 2] * (self.x_hat[:, nodes] - mh[nodes]))

    def q(self, player: int) -> np.ndarray:
        return self._full(self.q_coef[player - 1])

    def q_hat(self, player: int) -> np.ndarray:
        c = self.qhat_coef[player - 1]
        return c[:, 0] + c[:, 1] * (self.x_hat - self._centers[1])

    def mean_q(self, player: int) -> np.ndarray:
        """Cross-path mean of ``q_i`` (the intercept of the centred fit)."""
        return self.q_coef[player - 1][:, 0].copy()

    def k(self, player: int, channel: int) -> np.ndarray:
        coef = self.k_coef[player - 1][channel - 1]
        return self._full(coef, slice(0, self.grid.n_steps))

    def control(self, player: int) -> np.ndarray:
        j = player - 1
        return self.slopes[j] * self.x_hat[:, :-1] + self.intercepts[j]

    def log_to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "control_change"])
        for i, ch in enumerate(self.iteration_log, 1):
            w.writerow([i, repr(float(ch))])
        return buf.getvalue()

    def qhat_to_csv(self, tables: RiccatiTables | None = None) -> str:
        """Node curves of ``E q_hat_i`` against ``tau_i E x_hat + delta_i E x``."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = ["t", "ex_mean", "mean_qhat1", "mean_qhat2"]
        if tables is not None:
            head += ["riccati_qhat1", "riccati_qhat2"]
        w.writerow(head)
        mh = self._centers[1]
        for k, t in enumerate(self.grid.nodes):
            row = [t, self.ex_mean[k], self.qhat_coef[0][k, 0], self.qhat_coef[1][k, 0]]
            if tables is not None:
                row += [tables.tau1[k] * mh[k] + tables.delta1[k] * self.ex_mean[k],
                        tables.tau2[k] * mh[k] + tables.delta2[k] * self.ex_mean[k]]
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def _table_policy(slopes, intercepts):
    def rule(k, x_hat):
        return slopes[0][k] * x_hat + intercepts[0][k], slopes[1][k] * x_hat + intercepts[1][k]

    return ControlPolicy(rule, "table")


def _fit_many(design, targets, rcond):
    """Least squares for several targets through one Gram matrix.

    Columns after the intercept are centred, so the Gram matrix is block
    diagonal and well conditioned; ``pinv`` drops collinear directions
    (``x == x_hat`` when the hidden noise vanishes).
    """
    gram = design.T @ design
    coef = np.linalg.pinv(gram, rcond=rcond, hermitian=True) @ (design.T @ targets)
    return coef


def _backward(spec, grid, paths, noise, rcond, with_k, martingale=True):
    """One backward sweep; returns coefficient tables and terminal R^2."""
    N, dt = grid.n_steps, grid.dt
    c = spec.at(grid.nodes)
    x, xh, ex = paths.x, paths.x_hat, paths.ex_mean
    q_coef = [np.zeros((N + 1, 3)), np.zeros((N + 1, 3))]
    qhat_coef = [np.zeros((N + 1, 2)), np.zeros((N + 1, 2))]
    k_coef = [[np.zeros((N, 3)), np.zeros((N, 3))], [np.zeros((N, 3)), np.zeros((N, 3))]]

    def basis(j):
        xj, hj = x[:, j], xh[:, j]
        spread = max(np.ptp(xj), np.ptp(hj))
        if spread == 0.0 and j > 0:
            raise RegressionSingular(f"no cross-path variation at t={grid.nodes[j]:g}")
        D = _design((xj, hj), (xj.mean(), hj.mean()))
        return D if j > 0 else D[:, :1]

    D = basis(N)
    target = np.column_stack([spec.h1 * x[:, N] + spec.hbar1 * ex[N],
                              spec.h2 * x[:, N] + spec.hbar2 * ex[N]])
    coef = _fit_many(D, target, rcond)
    q_next = D @ coef
    ss_tot = np.sum((target - target.mean(axis=0)) ** 2, axis=0)
    ss_res = np.sum((target - q_next) ** 2, axis=0)
    r2 = tuple(1.0 if t == 0.0 else float(1.0 - r / t) for t, r in zip(ss_tot, ss_res))
    for i in range(2):
        q_coef[i][N, :coef.shape[0]] = coef[:, i]
        qhat_coef[i][N] = _project(q_coef[i][N], x[:, N], xh[:, N])
    g = np.array([c.g1, c.g2])
    gb = np.array([c.gbar1, c.gbar2])
    dws = (noise.dw1, noise.dw2)
    for j in range(N - 1, -1, -1):
        D = basis(j)
        p = D.shape[1]
        drift = (c.a[j] * q_next + c.abar[j] * q_next.mean(axis=0)
                 + np.outer(x[:, j], g[:, j]) + gb[:, j] * ex[j])
        target = q_next + drift * dt
        if martingale:
            # the step's increments absorb the martingale part of the target;
            # their coefficients are the integrands k_i1, k_i2
            incr = [dw[:, j] - dw[:, j].mean() for dw in dws]
            coef = _fit_many(np.column_stack([D] + incr), target, rcond)
            for i in range(2):
                for ch in range(2):
                    k_coef[i][ch][j, 0] = coef[p + ch, i]
            coef = coef[:p]
        else:
            targets = [target]
            if with_k:
                targets += [q_next * dw[:, j, None] / dt for dw in dws]
            coef = _fit_many(D, np.hstack(targets), rcond)
            if with_k:
                for i in range(2):
                    for ch in range(2):
                        k_coef[i][ch][j, :p] = coef[:, 2 + 2 * ch + i]
        for i in range(2):
            q_coef[i][j, :p] = coef[:, i]
            qhat_coef[i][j] = _project(q_coef[i][j], x[:, j], xh[:, j])
        q_next = D @ coef[:, :2]
    return q_coef, qhat_coef, k_coef, r2


def solve_lq_fbsde(spec: LqGameSpec, config: SolverConfig, noise: NoisePlan | PathBundle,
                   raise_on_failure: bool = True) -> FbsdeSolution:
    """Damped Picard iteration on the control tables, starting from zero."""
    grid = TimeGrid(spec.horizon, config.n_steps)
    if isinstance(noise, NoisePlan):
        if noise.grid.n_steps != grid.n_steps or noise.n_paths != config.n_paths:
            raise GridMismatch("noise plan does not match the solver configuration")
        bundle = generate_noise(noise)
    else:
        bundle = noise
        if bundle.grid.n_steps != grid.n_steps:
            raise GridMismatch("noise bundle does not match the solver grid")
    c = spec.at(grid.nodes[:-1])
    slopes = [np.zeros(grid.n_steps), np.zeros(grid.n_steps)]
    intercepts = [np.zeros(grid.n_steps), np.zeros(grid.n_steps)]
    log = []
    converged = False
    for it in range(config.max_picard):
        paths = simulate_state(spec, _table_policy(slopes, intercepts), None, bundle)
        q_coef, qhat_coef, _, _ = _backward(spec, grid, paths, bundle, config.rcond, False,
                                               config.martingale_regressors)
        xh = paths.x_hat[:, :-1]
        mh = xh.mean(axis=0)
        num = den = 0.0
        for i, (b, m) in enumerate(((c.b1, c.m1), (c.b2, c.m2))):
            qc = qhat_coef[i][:-1]
            # q_hat = qc0 + qc1 (x_hat - mean) -> best-response slope/intercept
            br_slope = -b / m * qc[:, 1]
            br_int = -b / m * (qc[:, 0] - qc[:, 1] * mh)
            new_slope = (1 - config.theta) * slopes[i] + config.theta * br_slope
            new_int = (1 - config.theta) * intercepts[i] + config.theta * br_int
            u_old = slopes[i] * xh + intercepts[i]
            u_new = new_slope * xh + new_int
            num += float(np.sum((u_new - u_old) ** 2))
            den += float(np.sum(u_new ** 2))
            slopes[i], intercepts[i] = new_slope, new_int
        change = 0.0 if num == 0.0 else math.sqrt(num / den) if den > 0 else math.inf
        log.append(change)
        if change < config.picard_tol:
            converged = True
            break
    if not converged and raise_on_failure:
        raise NoConvergence(len(log), log[-1])
    paths = simulate_state(spec, _table_policy(slopes, intercepts), None, bundle)
    q_coef, qhat_coef, k_coef, r2 = _backward(spec, grid, paths, bundle, config.rcond, True,
                                             config.martingale_regressors)
    return FbsdeSolution(grid, paths.x, paths.x_hat, paths.ex_mean, tuple(q_coef), tuple(qhat_coef),
                         tuple(tuple(k) for k in k_coef), tuple(slopes), tuple(intercepts), log, r2,
                         converged)


@dataclass(frozen=True)
class RiccatiResidual:
    """(a) relative RMSE of ``q_hat_i`` against the Riccati representation,
    (b) worst relative gap between ``E q_i`` and ``alpha_i E x``,
    (c) terminal-fit R^2."""

    qhat_rmse: tuple
    mean_gap: tuple
    terminal_r2: tuple

    def ok(self, rmse_tol: float = 0.05, mean_tol: float = 0.02, r2_min: float = 0.999) -> bool:
        return (max(self.qhat_rmse) <= rmse_tol and max(self.mean_gap) <= mean_tol
                and min(self.terminal_r2) >= r2_min)

    def summary(self) -> str:
        f = lambda v: ", ".join(f"{x:.3e}" for x in v)
        return (f"q_hat relative RMSE: {f(self.qhat_rmse)}\n"
                f"E q vs alpha E x (max relative): {f(self.mean_gap)}\n"
                f"terminal fit R^2: {f(self.terminal_r2)}")


def check_against_riccati(sol: FbsdeSolution, tables: RiccatiTables) -> RiccatiResidual:
    g = tables.grid
    if g.n_steps != sol.grid.n_steps or g.horizon != sol.grid.horizon:
        raise GridMismatch("solution and tables live on different grids")
    ex = sol.ex_mean
    rmse, gap = [], []
    for i, (tau, delta, alpha) in enumerate(((tables.tau1, tables.delta1, tables.alpha1),
                                             (tables.tau2, tables.delta2, tables.alpha2)), 1):
        qh = sol.q_hat(i)
        ref = tau * sol.x_hat + delta * ex
        err = math.sqrt(float(np.mean((qh - ref) ** 2)))
        scale = math.sqrt(float(np.mean(qh ** 2)))
        rmse.append(0.0 if err == 0.0 else err / scale if scale > 0 else math.inf)
        target = alpha * ex
        mask = np.abs(ex) > 1e-6
        if mask.any():
            diff = np.abs(sol.mean_q(i)[mask] - target[mask])
            denom = np.abs(target[mask])
            rel = np.where(diff == 0.0, 0.0, diff / np.where(denom > 0, denom, np.inf))
            rel = np.where((denom == 0) & (diff > 0), np.inf, rel)
            gap.append(float(rel.max()))
        else:
            gap.append(0.0)
    return RiccatiResidual(tuple(rmse), tuple(gap), tuple(sol.terminal_r2))
