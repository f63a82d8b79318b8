"""Backward Riccati systems and the mean path of the equilibrium state.

With ``s_i = b_i^2 / m_i`` the three systems are::

    alpha_1' + 2(a+abar) alpha_1 - s1 alpha_1^2 - s2 alpha_1 alpha_2 + g1 + gbar1 = 0
    tau_1'   + 2a tau_1 - s1 tau_1^2 - s2 tau_1 tau_2 + g1 = 0
    delta_1' + (2a + abar - s1 alpha_1 - s2 alpha_2 - s1 tau_1) delta_1
             - s2 tau_1 delta_2 + abar tau_1 + abar alpha_1 + gbar1 = 0

(and symmetrically for player 2) with ``alpha_i(T) = h_i + hbar_i``,
``tau_i(T) = h_i``, ``delta_i(T) = hbar_i``. All are integrated backward
with the classical fourth-order Runge-Kutta scheme on a fixed grid.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from types import SimpleNamespace

import numpy as np

from .model import LqGameSpec, TimeGrid

BLOWUP_THRESHOLD = 1e12


class BlowUp(ArithmeticError):
    """The Riccati solution left every reasonable bound before reaching t = 0."""

    def __init__(self, t: float, value: float, system: str = ""):
        self.t = t
        self.value = value
        self.system = system
        super().__init__(f"{system} Riccati solution blew up near t={t:.6g} (|value|={value:.3g})")


class GridMismatch(ValueError):
    pass


@dataclass(frozen=True)
class RiccatiTables:
    grid: TimeGrid
    alpha1: np.ndarray
    alpha2: np.ndarray
    tau1: np.ndarray
    tau2: np.ndarray
    delta1: np.ndarray
    delta2: np.ndarray
    ex_mean: np.ndarray

    COLUMNS = ("alpha1", "alpha2", "tau1", "tau2", "delta1", "delta2", "ex_mean")

    def identity_residual(self) -> float:
        """max over nodes and players of |alpha_i - tau_i - delta_i|."""
        r1 = np.abs(self.alpha1 - self.tau1 - self.delta1)
        r2 = np.abs(self.alpha2 - self.tau2 - self.delta2)
        return float(max(r1.max(), r2.max()))


@dataclass(frozen=True)
class GainTables:
    """``u_i = k_hat_i * x_hat + k_mean_i * E[x]``."""

    grid: TimeGrid
    k_hat1: np.ndarray
    k_hat2: np.ndarray
    k_mean1: np.ndarray
    k_mean2: np.ndarray

    COLUMNS = ("k_hat1", "k_hat2", "k_mean1", "k_mean2")

    def scaled(self, factor: float) -> "GainTables":
        return GainTables(self.grid, factor * self.k_hat1, factor * self.k_hat2,
                          factor * self.k_mean1, factor * self.k_mean2)

    def control(self, player: int, k, x_hat, ex_mean):
        if player == 1:
            return self.k_hat1[k] * x_hat + self.k_mean1[k] * ex_mean
        return self.k_hat2[k] * x_hat + self.k_mean2[k] * ex_mean


class _Stages:
    """Coefficient values at grid nodes and midpoints, as lists of floats."""

    NAMES = ("a", "abar", "s1", "s2", "g1", "g2", "gbar1", "gbar2")

    def __init__(self, spec: LqGameSpec, grid: TimeGrid):
        self.node = self._lists(spec.at(grid.nodes))
        self.mid = self._lists(spec.at(grid.midpoints))

    def _lists(self, c):
        return SimpleNamespace(**{n: getattr(c, n).tolist() for n in self.NAMES})


def _rk4_backward(rhs, y_terminal, grid: TimeGrid, system: str):
    """Integrate the planar system ``y' = rhs(where, k, y1, y2)`` from ``T``
    down to 0.

    ``where`` is ``"node"`` or ``"mid"`` and ``k`` indexes the node or the
    interval ``[t_k, t_{k+1}]``. Scalar arithmetic keeps the loop cheap.
    """
    n = grid.n_steps
    h = -grid.dt
    hh = 0.5 * h
    y1, y2 = (float(v) for v in y_terminal)
    out = np.empty((n + 1, 2))
    out[n] = (y1, y2)
    t = grid.nodes
    lim = BLOWUP_THRESHOLD
    for k in range(n - 1, -1, -1):
        p1, p2 = rhs("node", k + 1, y1, y2)
        u1, u2 = y1 + hh * p1, y2 + hh * p2
        q1, q2 = rhs("mid", k, u1, u2)
        v1, v2 = y1 + hh * q1, y2 + hh * q2
        r1, r2 = rhs("mid", k, v1, v2)
        w1, w2 = y1 + h * r1, y2 + h * r2
        s1, s2 = rhs("node", k, w1, w2)
        y1 = y1 + (h / 6.0) * (p1 + 2.0 * q1 + 2.0 * r1 + s1)
        y2 = y2 + (h / 6.0) * (p2 + 2.0 * q2 + 2.0 * r2 + s2)
        worst = max(abs(u1), abs(u2), abs(v1), abs(v2), abs(w1), abs(w2), abs(y1), abs(y2))
        if not worst <= lim:
            raise BlowUp(float(t[k]), float(worst), system)
        out[k] = (y1, y2)
    return out


def _alpha_rhs(c, k, a1, a2):
    apb2 = 2.0 * (c.a[k] + c.abar[k])
    s1, s2 = c.s1[k], c.s2[k]
    return (
        -(apb2 * a1 - s1 * a1 * a1 - s2 * a1 * a2 + c.g1[k] + c.gbar1[k]),
        -(apb2 * a2 - s1 * a1 * a2 - s2 * a2 * a2 + c.g2[k] + c.gbar2[k]),
    )


def _tau_rhs(c, k, t1, t2):
    a2 = 2.0 * c.a[k]
    s1, s2 = c.s1[k], c.s2[k]
    return (
        -(a2 * t1 - s1 * t1 * t1 - s2 * t1 * t2 + c.g1[k]),
        -(a2 * t2 - s2 * t2 * t2 - s1 * t1 * t2 + c.g2[k]),
    )


def _delta_rhs(c, k, d1, d2, a1, a2, t1, t2):
    a, ab = c.a[k], c.abar[k]
    s1, s2 = c.s1[k], c.s2[k]
    common = 2.0 * a + ab - s1 * a1 - s2 * a2
    return (
        -((common - s1 * t1) * d1 - s2 * t1 * d2 + ab * t1 + ab * a1 + c.gbar1[k]),
        -((common - s2 * t2) * d2 - s1 * t2 * d1 + ab * t2 + ab * a2 + c.gbar2[k]),
    )


def _hermite_mid(values, slopes, dt):
    """Cubic Hermite value at each interval midpoint (fourth-order accurate)."""
    return 0.5 * (values[:-1] + values[1:]) + dt * (slopes[:-1] - slopes[1:]) / 8.0


def _node_slopes(rhs, stages, tables):
    """Evaluate a system's right-hand side at every node for given node values."""
    return np.array([rhs(stages.node, k, y1, y2) for k, (y1, y2) in enumerate(tables.tolist())])


def solve_alpha(spec: LqGameSpec, grid: TimeGrid):
    """Solve the coupled mean-gain Riccati pair; returns ``(alpha1, alpha2)``."""
    st = _Stages(spec, grid)
    y = _rk4_backward(
        lambda where, k, y1, y2: _alpha_rhs(getattr(st, where), k, y1, y2),
        [spec.h1 + spec.hbar1, spec.h2 + spec.hbar2], grid, "alpha",
    )
    return y[:, 0].copy(), y[:, 1].copy()


def solve_tau(spec: LqGameSpec, grid: TimeGrid):
    """Solve the coupled filter-gain Riccati pair; returns ``(tau1, tau2)``."""
    st = _Stages(spec, grid)
    y = _rk4_backward(
        lambda where, k, y1, y2: _tau_rhs(getattr(st, where), k, y1, y2),
        [spec.h1, spec.h2], grid, "tau",
    )
    return y[:, 0].copy(), y[:, 1].copy()


def _check_table(arr, grid, name):
    arr = np.asarray(arr, dtype=float)
    if arr.shape != (grid.n_steps + 1,):
        raise GridMismatch(f"{name} has shape {arr.shape}, grid needs {(grid.n_steps + 1,)}")
    return arr


def solve_delta(spec: LqGameSpec, grid: TimeGrid, alpha, tau):
    """Solve the linear system for the mean-field part of the filter gain.

    ``alpha`` and ``tau`` are pairs of node tables. Their values at the RK4
    midpoint stages are reconstructed by cubic Hermite interpolation using
    slopes from their own differential equations, which keeps the scheme
    fourth order.
    """
    st = _Stages(spec, grid)
    A = np.column_stack([_check_table(alpha[0], grid, "alpha1"), _check_table(alpha[1], grid, "alpha2")])
    Tt = np.column_stack([_check_table(tau[0], grid, "tau1"), _check_table(tau[1], grid, "tau2")])
    A_mid = _hermite_mid(A, _node_slopes(_alpha_rhs, st, A), grid.dt)
    T_mid = _hermite_mid(Tt, _node_slopes(_tau_rhs, st, Tt), grid.dt)

    An, Am, Tn, Tm = A.tolist(), A_mid.tolist(), Tt.tolist(), T_mid.tolist()

    def rhs(where, k, d1, d2):
        if where == "node":
            return _delta_rhs(st.node, k, d1, d2, *An[k], *Tn[k])
        return _delta_rhs(st.mid, k, d1, d2, *Am[k], *Tm[k])

    y = _rk4_backward(rhs, [spec.hbar1, spec.hbar2], grid, "delta")
    return y[:, 0].copy(), y[:, 1].copy()


def _mean_rate(c, alpha1, alpha2):
    return c.a + c.abar - c.s1 * alpha1 - c.s2 * alpha2


def mean_state_closed_form(spec: LqGameSpec, alpha, grid: TimeGrid) -> np.ndarray:
    """``E[x](t) = x0 exp(int_0^t (a + abar - s1 alpha1 - s2 alpha2) ds)`` with
    the integral taken by the trapezoid rule on the grid."""
    a1 = _check_table(alpha[0], grid, "alpha1")
    a2 = _check_table(alpha[1], grid, "alpha2")
    rate = _mean_rate(spec.at(grid.nodes), a1, a2)
    integral = np.concatenate([[0.0], np.cumsum(0.5 * grid.dt * (rate[:-1] + rate[1:]))])
    return spec.x0 * np.exp(integral)


def mean_state_ode(spec: LqGameSpec, alpha, grid: TimeGrid) -> np.ndarray:
    """Integrate ``dE[x] = ((a+abar) E[x] - s1 E[q1] - s2 E[q2]) dt`` forward
    with ``E[q_i] = alpha_i E[x]``, using RK4."""
    st = _Stages(spec, grid)
    A = np.column_stack([_check_table(alpha[0], grid, "alpha1"), _check_table(alpha[1], grid, "alpha2")])
    A_mid = _hermite_mid(A, _node_slopes(_alpha_rhs, st, A), grid.dt)
    r_node = _mean_rate(spec.at(grid.nodes), A[:, 0], A[:, 1]).tolist()
    r_mid = _mean_rate(spec.at(grid.midpoints), A_mid[:, 0], A_mid[:, 1]).tolist()
    h = grid.dt
    out = np.empty(grid.n_steps + 1)
    y = spec.x0
    out[0] = y
    for k in range(grid.n_steps):
        k1 = r_node[k] * y
        k2 = r_mid[k] * (y + 0.5 * h * k1)
        k3 = r_mid[k] * (y + 0.5 * h * k2)
        k4 = r_node[k + 1] * (y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = y
    return out


def solve_riccati(spec: LqGameSpec, grid: TimeGrid) -> RiccatiTables:
    """Solve alpha, then tau, then delta, then the mean path."""
    alpha = solve_alpha(spec, grid)
    tau = solve_tau(spec, grid)
    delta = solve_delta(spec, grid, alpha, tau)
    ex = mean_state_ode(spec, alpha, grid)
    return RiccatiTables(grid, alpha[0], alpha[1], tau[0], tau[1], delta[0], delta[1], ex)


def feedback_gains(spec: LqGameSpec, tables: RiccatiTables) -> GainTables:
    c = spec.at(tables.grid.nodes)
    r1 = c.b1 / c.m1
    r2 = c.b2 / c.m2
    return GainTables(
        tables.grid,
        k_hat1=-r1 * tables.tau1, k_hat2=-r2 * tables.tau2,
        k_mean1=-r1 * tables.delta1, k_mean2=-r2 * tables.delta2,
    )


def tables_to_csv(tables: RiccatiTables, gains: GainTables | None = None) -> str:
    """One row per node: ``t`` then the table columns (and gain columns)."""
    cols = ["t", *RiccatiTables.COLUMNS]
    data = [tables.grid.nodes] + [getattr(tables, c) for c in RiccatiTables.COLUMNS]
    if gains is not None:
        cols += list(GainTables.COLUMNS)
        data += [getattr(gains, c) for c in GainTables.COLUMNS]
    return _rows_to_csv(cols, np.column_stack(data))


def gains_to_csv(gains: GainTables) -> str:
    cols = ["t", *GainTables.COLUMNS]
    data = [gains.grid.nodes] + [getattr(gains, c) for c in GainTables.COLUMNS]
    return _rows_to_csv(cols, np.column_stack(data))


def _rows_to_csv(columns, matrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in matrix:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()
