"""Numerical certificates that a feedback pair is a Nash equilibrium.

Three independent routes are offered:

* cost deviations: simulate ``J_i`` along ``u_i + eps (v_i - u_i)`` with
  common random numbers and extrapolate the one-sided derivative to
  ``eps -> 0``;
* the first-variation route: propagate the variational state and evaluate the
  directional derivative of the cost through the partial derivatives of the
  running and terminal costs;
* the conditional Hamiltonian gradient ``b_i q_hat_i + m_i u_i``.

Unilateral deviations are open-loop: while player ``i`` deviates, the other
player keeps the control *process* it used along the equilibrium path.

Mean-field terms use a particle mean computed inside each of ``n_batches``
contiguous, independent batches of paths. Standard errors are batch-means
standard errors, so every reported SE accounts for the randomness of the
particle mean as well.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .model import GeneralGameSpec, LqGameSpec, TimeGrid, lq_as_general, validate_lq
from .riccati import GainTables, GridMismatch, RiccatiTables, feedback_gains, solve_riccati
from .sde import (OBSERVABLE_INPUTS, NoisePlan, PathBundle, generate_noise,
                  requested_inputs)

DEFAULT_LADDER = (0.2, 0.1, 0.05)
DEVIATION_INPUTS = OBSERVABLE_INPUTS | {"u"}


class LadderInconsistent(ArithmeticError):
    """Successive epsilon-ladder estimates disagree beyond sampling noise."""


@dataclass(frozen=True)
class Deviation:
    """Direction ``v_i`` for player ``i``.

    ``rule`` is evaluated along the equilibrium path. Its parameter names pick
    inputs from ``k``, ``t``, ``x_hat``, ``ex_mean``, ``w1`` and ``u`` (the
    player's own equilibrium control). Asking for ``x``, ``w2`` or ``dw2``
    raises ``NonAdaptedPolicy``.
    """

    player: int
    name: str
    rule: Callable
    epsilons: tuple = DEFAULT_LADDER

    def __post_init__(self):
        if self.player not in (1, 2):
            raise ValueError("player must be 1 or 2")
        eps = tuple(float(e) for e in self.epsilons)
        if len(eps) < 2 or any(e <= 0 for e in eps) or any(a <= b for a, b in zip(eps, eps[1:])):
            raise ValueError("epsilon ladder must hold at least two strictly decreasing positive values")
        object.__setattr__(self, "epsilons", eps)
        self.inputs()

    @property
    def id(self) -> str:
        return f"p{self.player}:{self.name}"

    def inputs(self) -> tuple:
        return requested_inputs(self.rule, DEVIATION_INPUTS)


def deviation_battery(spec: LqGameSpec, grid: TimeGrid) -> list:
    """Standard battery of seven directions per player."""
    T = grid.horizon

    def constant(c):
        return lambda: c

    def bang(t):
        return 1.0 if t < 0.5 * T else -1.0

    def sinusoid(t, x_hat):
        return math.sin(2.0 * math.pi * t / T) * x_hat

    def half_gain(u):
        return 0.5 * u

    rules = [
        ("const+0.5", constant(0.5)),
        ("const-0.5", constant(-0.5)),
        ("const+1", constant(1.0)),
        ("const-1", constant(-1.0)),
        ("bang", bang),
        ("sin-feedback", sinusoid),
        ("gain*0.5", half_gain),
    ]
    return [Deviation(p, name, rule) for p in (1, 2) for name, rule in rules]


# ---------------------------------------------------------------------------
# simulation engines


@dataclass(frozen=True)
class BaseRun:
    """Equilibrium paths arranged as ``(N+1, n_batches, batch_size)``."""

    grid: TimeGrid
    x: np.ndarray
    x_hat: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    w1: np.ndarray
    ex_mean: np.ndarray
    noise: PathBundle

    @property
    def n_batches(self) -> int:
        return self.x.shape[1]

    def control(self, player: int) -> np.ndarray:
        return self.u1 if player == 1 else self.u2


def _batched(a: np.ndarray, n_batches: int) -> np.ndarray:
    """``(n, N)`` path-major array to time-major ``(N, B, n/B)``."""
    n = a.shape[0]
    return np.ascontiguousarray(a.T).reshape(a.shape[1], n_batches, n // n_batches)


def _check_batches(n_paths: int, n_batches: int):
    if n_batches < 2 or n_paths % n_batches:
        raise ValueError(f"n_paths={n_paths} must be a multiple of n_batches={n_batches} >= 2")


def run_equilibrium(spec: LqGameSpec, gains: GainTables, noise: PathBundle, n_batches: int = 20) -> BaseRun:
    """Simulate state, filter and feedback controls with batch particle means."""
    grid = gains.grid
    if noise.grid.n_steps != grid.n_steps or noise.grid.horizon != grid.horizon:
        raise GridMismatch("noise and gains live on different grids")
    _check_batches(noise.n_paths, n_batches)
    N, dt = grid.n_steps, grid.dt
    c = spec.at(grid.nodes)
    dw1 = _batched(noise.dw1, n_batches)
    dw2 = _batched(noise.dw2, n_batches)
    shape = dw1.shape[1:]
    x = np.empty((N + 1,) + shape)
    xh = np.empty_like(x)
    w1 = np.empty_like(x)
    u1 = np.empty((N,) + shape)
    u2 = np.empty_like(u1)
    ex = np.empty((N + 1, n_batches))
    x[0] = xh[0] = spec.x0
    w1[0] = 0.0
    for k in range(N):
        ex[k] = x[k].mean(axis=1)
        m = ex[k][:, None]
        u1[k] = gains.control(1, k, xh[k], m)
        u2[k] = gains.control(2, k, xh[k], m)
        common = c.abar[k] * m + c.b1[k] * u1[k] + c.b2[k] * u2[k]
        d1 = c.c1[k] * dw1[k]
        x[k + 1] = x[k] + (c.a[k] * x[k] + common) * dt + d1 + c.c2[k] * dw2[k]
        xh[k + 1] = xh[k] + (c.a[k] * xh[k] + common) * dt + d1
        w1[k + 1] = w1[k] + dw1[k]
    ex[N] = x[N].mean(axis=1)
    return BaseRun(grid, x, xh, u1, u2, w1, ex, noise)


def direction(dev: Deviation, base: BaseRun) -> np.ndarray:
    """Evaluate ``v_i`` along the equilibrium path, shape ``(N, B, n/B)``."""
    names = dev.inputs()
    u = base.control(dev.player)
    t = base.grid.nodes
    out = np.empty_like(u)
    for k in range(base.grid.n_steps):
        avail = {"k": k, "t": t[k], "x_hat": base.x_hat[k], "ex_mean": base.ex_mean[k][:, None],
                 "w1": base.w1[k], "u": u[k]}
        out[k] = dev.rule(**{n: avail[n] for n in names})
    if not np.all(np.isfinite(out)):
        raise ValueError(f"deviation {dev.id} produced non-finite values")
    return out


def sampled_l2(v: np.ndarray, grid: TimeGrid) -> float:
    """``E int v^2 dt`` with the control held on each step."""
    return float(np.mean(np.sum(v ** 2, axis=0)) * grid.dt)


def simulate_open_loop(game: GeneralGameSpec, grid: TimeGrid, v1: np.ndarray, v2: np.ndarray,
                       base: BaseRun) -> tuple[np.ndarray, np.ndarray]:
    """Euler scheme for the general dynamics under fixed control arrays.

    Uses the base run's Brownian increments; ``E[x]`` is the batch particle
    mean. Returns ``(x, ex_mean)``.
    """
    N, dt = grid.n_steps, grid.dt
    t = grid.nodes
    dw1 = _batched(base.noise.dw1, base.n_batches)
    dw2 = _batched(base.noise.dw2, base.n_batches)
    x = np.empty((N + 1,) + dw1.shape[1:])
    ex = np.empty((N + 1, base.n_batches))
    x[0] = game.x0
    for k in range(N):
        ex[k] = x[k].mean(axis=1)
        m = ex[k][:, None]
        args = (t[k], x[k], m, v1[k], v2[k])
        x[k + 1] = (x[k] + game.f(*args) * dt + game.sigma1(*args) * dw1[k]
                    + game.sigma2(*args) * dw2[k])
    ex[N] = x[N].mean(axis=1)
    return x, ex


def batch_costs(game: GeneralGameSpec, grid: TimeGrid, player: int, x, ex, v1, v2) -> np.ndarray:
    """Per-batch mean cost of ``player``.

    Running cost on step ``k`` is the trapezoid of ``l_i`` at both ends of the
    step with the control held at its value on that step.
    """
    l = game.running_cost(player)
    phi = game.terminal_cost(player)
    t = grid.nodes
    total = np.zeros(x.shape[1:])
    for k in range(grid.n_steps):
        left = l(t[k], x[k], ex[k][:, None], v1[k], v2[k])
        right = l(t[k + 1], x[k + 1], ex[k + 1][:, None], v1[k], v2[k])
        total = total + 0.5 * grid.dt * (left + right)
    total = total + phi(x[-1], ex[-1][:, None])
    return total.mean(axis=1)


@dataclass(frozen=True)
class VariationalPath:
    """First variation ``x^i`` and its batch means; ``x^i(0) = 0``."""

    grid: TimeGrid
    x: np.ndarray
    ex_mean: np.ndarray

    @property
    def paths(self) -> np.ndarray:
        """Path-major view ``(n_paths, N+1)``."""
        return self.x.reshape(self.x.shape[0], -1).T


def variational_state(game: GeneralGameSpec, grid: TimeGrid, dev: Deviation, base: BaseRun,
                      dv: np.ndarray | None = None) -> VariationalPath:
    """Euler scheme for the first variation along the equilibrium path.

    ``dx = [f_x x + f_xt E x + f_vi dv] dt + sum_j [s_j,x x + s_j,xt E x + s_j,vi dv] dw_j``
    with all partial derivatives evaluated on the equilibrium path and
    ``dv = v_i - u_i``.
    """
    if dv is None:
        dv = direction(dev, base) - base.control(dev.player)
    var = f"v{dev.player}"
    N, dt = grid.n_steps, grid.dt
    t = grid.nodes
    dw = (_batched(base.noise.dw1, base.n_batches), _batched(base.noise.dw2, base.n_batches))
    y = np.empty_like(base.x)
    ey = np.empty_like(base.ex_mean)
    y[0] = 0.0
    for k in range(N):
        ey[k] = y[k].mean(axis=1)
        args = (t[k], base.x[k], base.ex_mean[k][:, None], base.u1[k], base.u2[k])
        m = ey[k][:, None]

        def lin(name):
            return (game.d(name, "x")(*args) * y[k] + game.d(name, "xt")(*args) * m
                    + game.d(name, var)(*args) * dv[k])

        y[k + 1] = y[k] + lin("f") * dt + lin("sigma1") * dw[0][k] + lin("sigma2") * dw[1][k]
    ey[N] = y[N].mean(axis=1)
    return VariationalPath(grid, y, ey)


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float
    batches: np.ndarray = field(repr=False, default=None)

    @classmethod
    def from_batches(cls, b: np.ndarray) -> "Estimate":
        b = np.asarray(b, dtype=float)
        return cls(float(math.fsum(b) / b.size), float(np.std(b, ddof=1) / math.sqrt(b.size)), b)


def variational_inequality_value(game: GeneralGameSpec, grid: TimeGrid, dev: Deviation, base: BaseRun,
                                 varpath: VariationalPath, dv: np.ndarray | None = None) -> Estimate:
    """Directional derivative of the discrete cost of player ``i`` along the
    first variation, using the partial derivatives of ``l_i`` and ``phi_i``."""
    if varpath.x.shape != base.x.shape:
        raise GridMismatch("variational path and base run differ in shape")
    if dv is None:
        dv = direction(dev, base) - base.control(dev.player)
    i = dev.player
    l, phi = f"l{i}", f"phi{i}"
    var = f"v{i}"
    t = grid.nodes
    y, ey = varpath.x, varpath.ex_mean
    total = np.zeros(base.x.shape[1:])

    def node(j, k):
        args = (t[j], base.x[j], base.ex_mean[j][:, None], base.u1[k], base.u2[k])
        return (game.d(l, "x")(*args) * y[j] + game.d(l, "xt")(*args) * ey[j][:, None]
                + game.d(l, var)(*args) * dv[k])

    for k in range(grid.n_steps):
        total = total + 0.5 * grid.dt * (node(k, k) + node(k + 1, k))
    xe = (base.x[-1], base.ex_mean[-1][:, None])
    total = total + game.d(phi, "x")(*xe) * y[-1] + game.d(phi, "xt")(*xe) * ey[-1][:, None]
    return Estimate.from_batches(total.mean(axis=1))


def richardson_weights(epsilons) -> np.ndarray:
    """Weights extrapolating a polynomial through the ladder to ``eps = 0``."""
    eps = np.asarray(epsilons, dtype=float)
    w = np.ones_like(eps)
    for l in range(eps.size):
        for m in range(eps.size):
            if m != l:
                w[l] *= eps[m] / (eps[m] - eps[l])
    return w


def check_ladder(dev_id: str, epsilons, quotients):
    """Raise ``LadderInconsistent`` when successive two-level extrapolations
    disagree by more than ten combined standard errors.

    Raw difference quotients carry the curvature term ``eps * Q``, which is
    far larger than the sampling noise under common random numbers, so the
    comparison is made after removing it pairwise. For a cost that is
    quadratic along the direction the pairwise values coincide.
    """
    pairs = []
    for l in range(len(epsilons) - 1):
        w = richardson_weights(epsilons[l:l + 2])
        pairs.append(Estimate.from_batches(w[0] * quotients[l] + w[1] * quotients[l + 1]))
    for l, (a, b) in enumerate(zip(pairs, pairs[1:])):
        gap = abs(a.value - b.value)
        combined = math.hypot(a.se, b.se)
        if gap > max(10.0 * combined, 1e-12 * max(1.0, abs(a.value))):
            raise LadderInconsistent(
                f"{dev_id}: extrapolations from eps={epsilons[l:l + 2]} and "
                f"eps={epsilons[l + 1:l + 3]} differ by {gap:.3g}, more than 10 combined SE ({combined:.3g})")


@dataclass(frozen=True)
class GateauxResult:
    derivative: Estimate
    ladder: tuple
    j_base: Estimate
    delta_full: Estimate


def gateaux_derivative(game: GeneralGameSpec, grid: TimeGrid, dev: Deviation, base: BaseRun,
                       dv: np.ndarray | None = None, j_base: np.ndarray | None = None) -> GateauxResult:
    """One-sided derivative of ``J_i`` at the equilibrium along ``dev``.

    Every ladder level reuses the base run's increments. ``J_i`` at ``eps=0``
    is re-simulated from the frozen control arrays, so a vanishing direction
    gives exactly zero. The full deviation ``eps = 1`` is returned as well.
    """
    if dv is None:
        dv = direction(dev, base) - base.control(dev.player)
    i = dev.player
    if j_base is None:
        x0, ex0 = simulate_open_loop(game, grid, base.u1, base.u2, base)
        j_base = batch_costs(game, grid, i, x0, ex0, base.u1, base.u2)

    def j_at(eps):
        v1 = base.u1 + eps * dv if i == 1 else base.u1
        v2 = base.u2 + eps * dv if i == 2 else base.u2
        x, ex = simulate_open_loop(game, grid, v1, v2, base)
        return batch_costs(game, grid, i, x, ex, v1, v2)

    eps = dev.epsilons
    quotients = [(j_at(e) - j_base) / e for e in eps]
    ladder = tuple(Estimate.from_batches(q) for q in quotients)
    check_ladder(dev.id, eps, quotients)
    w = richardson_weights(eps)
    deriv = Estimate.from_batches(sum(wl * q for wl, q in zip(w, quotients)))
    full = Estimate.from_batches(j_at(1.0) - j_base)
    return GateauxResult(deriv, ladder, Estimate.from_batches(j_base), full)


# ---------------------------------------------------------------------------
# structural checks


@dataclass(frozen=True)
class HamiltonianResidual:
    """Residual ``b_i q_hat_i + m_i u_i`` at nodes ``0..N-1``.

    ``max_abs`` and ``rms`` are per player; ``rms_control`` is the RMS of
    ``m_i u_i`` for scale. ``per_node`` has shape ``(2, N)`` and holds the
    node-wise RMS over paths.
    """

    max_abs: tuple
    rms: tuple
    rms_control: tuple
    per_node: np.ndarray

    def relative(self) -> tuple:
        return tuple(r / c if c > 0 else (0.0 if r == 0 else math.inf)
                     for r, c in zip(self.rms, self.rms_control))

    def conditional_gap(self, spec: LqGameSpec, grid: TimeGrid) -> tuple:
        """Average shortfall ``r^2 / (2 m)`` of the conditional Hamiltonian
        minimisation, per player."""
        c = spec.at(grid.nodes[:-1])
        return tuple(float(np.mean(self.per_node[j] ** 2 / (2.0 * m)))
                     for j, m in enumerate((c.m1, c.m2)))


def hamiltonian_residual(spec: LqGameSpec, tables: RiccatiTables, x_hat, ex_mean, u1, u2,
                         q_hat=None) -> HamiltonianResidual:
    """Conditional Hamiltonian gradient along simulated paths.

    ``x_hat`` is ``(n_paths, N+1)``, controls ``(n_paths, N)``. ``q_hat``
    defaults to ``tau_i x_hat + delta_i E[x]``; pass a pair of
    ``(n_paths, N+1)`` arrays to test an externally computed adjoint.
    """
    grid = tables.grid
    N = grid.n_steps
    x_hat = np.asarray(x_hat, dtype=float)
    ex = np.asarray(ex_mean, dtype=float)
    if x_hat.shape[-1] != N + 1 or np.shape(u1)[-1] != N:
        raise GridMismatch("paths do not match the tables' grid")
    if q_hat is None:
        q_hat = (tables.tau1 * x_hat + tables.delta1 * ex, tables.tau2 * x_hat + tables.delta2 * ex)
    c = spec.at(grid.nodes[:-1])
    maxes, rmses, scales, nodes = [], [], [], []
    for q, u, b, m in ((q_hat[0], u1, c.b1, c.m1), (q_hat[1], u2, c.b2, c.m2)):
        mu = m * np.asarray(u)
        r = b * np.asarray(q)[..., :N] + mu
        maxes.append(float(np.max(np.abs(r))))
        rmses.append(float(np.sqrt(np.mean(r ** 2))))
        scales.append(float(np.sqrt(np.mean(mu ** 2))))
        nodes.append(np.sqrt(np.mean(r.reshape(-1, N) ** 2, axis=0)))
    return HamiltonianResidual(tuple(maxes), tuple(rmses), tuple(scales), np.array(nodes))


@dataclass(frozen=True)
class ConvexityReport:
    """Per-condition pass flags with offending node lists.

    ``validation`` carries constraint names from ``validate_lq`` that fail
    even though convexity may hold (zero control weights, for instance).
    """

    conditions: dict
    validation: tuple

    @property
    def ok(self) -> bool:
        return all(not bad for bad in self.conditions.values())

    def summary(self) -> str:
        lines = []
        for name, bad in self.conditions.items():
            lines.append(f"{name}: {'pass' if not bad else 'FAIL at t=' + ', '.join(f'{t:g}' for t in bad[:10])}")
        if self.validation:
            lines.append("validate_lq also reports: " + ", ".join(self.validation))
        return "\n".join(lines)


def convexity_check(spec: LqGameSpec, grid: TimeGrid) -> ConvexityReport:
    """Hamiltonian convexity in ``(x, E x, v_i)`` and terminal convexity.

    The Hessian of the LQ Hamiltonian is diagonal with entries ``g_i``,
    ``gbar_i``, ``m_i``, so convexity reduces to sign conditions.
    """
    c = spec.at(grid.nodes)
    conds = {}
    for name in ("g1", "gbar1", "m1", "g2", "gbar2", "m2"):
        vals = getattr(c, name)
        conds[f"{name}>=0"] = [float(t) for t in grid.nodes[vals < 0]]
    for name in ("h1", "hbar1", "h2", "hbar2"):
        conds[f"{name}>=0"] = [float(grid.horizon)] if getattr(spec, name) < 0 else []
    report = validate_lq(spec, grid)
    extra = tuple(sorted(set(report.constraints()) - {"g1_nonnegative", "g2_nonnegative",
                                                      "gbar1_nonnegative", "gbar2_nonnegative",
                                                      "h1_nonnegative", "h2_nonnegative",
                                                      "hbar1_nonnegative", "hbar2_nonnegative"}))
    return ConvexityReport(conds, extra)


# ---------------------------------------------------------------------------
# full verification


@dataclass(frozen=True)
class DeviationRecord:
    player: int
    deviation: str
    j_base: float
    delta_j: float
    delta_j_se: float
    derivative: float
    derivative_se: float
    vi_value: float
    vi_se: float
    tol_grad: float
    verdict: bool

    @property
    def routes_agree(self) -> bool:
        return abs(self.derivative - self.vi_value) <= 3.0 * math.hypot(self.derivative_se, self.vi_se) + 1e-12


ROUNDING_FLOOR = 1e-12


def verdict(delta_j: Estimate, deriv: Estimate, j_base: float) -> tuple[bool, float]:
    """Pass when the full deviation does not lower the cost and the
    derivative is zero within ``max(3 SE, 1e-4 |J|)``.

    A floor at rounding level keeps games with zero cost from failing on
    round-off in the difference quotients.
    """
    tol = max(3.0 * deriv.se, 1e-4 * abs(j_base), ROUNDING_FLOOR)
    ok = delta_j.value >= -3.0 * delta_j.se and abs(deriv.value) <= tol
    return ok, tol


@dataclass(frozen=True)
class NashReport:
    records: tuple
    convexity: ConvexityReport
    hamiltonian: HamiltonianResidual
    n_paths: int
    n_steps: int
    n_batches: int
    seed: int

    @property
    def passed(self) -> bool:
        return all(r.verdict for r in self.records) and self.convexity.ok

    @property
    def routes_agree(self) -> bool:
        return all(r.routes_agree for r in self.records)

    def to_csv(self) -> str:
        cols = ["player", "deviation", "j_base", "delta_j", "delta_j_se", "derivative",
                "derivative_se", "vi_value", "vi_se", "tol_grad", "verdict"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.records:
            row = [getattr(r, c) for c in cols]
            w.writerow([repr(v) if isinstance(v, float) else ("pass" if v is True else "fail" if v is False else v)
                        for v in row])
        return buf.getvalue()

    def summary(self) -> str:
        lines = [f"Nash verification: {self.n_paths} paths, {self.n_steps} steps, "
                 f"{self.n_batches} batches, seed {self.seed}"]
        for r in self.records:
            lines.append(f"  {'PASS' if r.verdict else 'FAIL'} p{r.player} {r.deviation:<13s} "
                         f"dJ={r.delta_j:+.4e}+-{r.delta_j_se:.1e} "
                         f"D={r.derivative:+.3e}+-{r.derivative_se:.1e} VI={r.vi_value:+.3e} "
                         f"tol={r.tol_grad:.1e}")
        lines.append("  convexity: " + ("pass" if self.convexity.ok else "FAIL"))
        lines.append("  hamiltonian residual (max): " + ", ".join(f"{v:.2e}" for v in self.hamiltonian.max_abs))
        lines.append(f"  overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def verify_nash(spec: LqGameSpec, grid: TimeGrid, n_paths: int = 10_000, seed: int = 0,
                gains: GainTables | None = None, battery=None, n_batches: int = 20,
                threads: int = 1) -> NashReport:
    """Run the deviation battery and the structural checks.

    ``gains`` defaults to the Riccati feedback; pass tampered gains to see
    the battery fail.
    """
    tables = solve_riccati(spec, grid)
    if gains is None:
        gains = feedback_gains(spec, tables)
    battery = deviation_battery(spec, grid) if battery is None else battery
    noise = generate_noise(NoisePlan(seed, n_paths, grid), threads=threads)
    base = run_equilibrium(spec, gains, noise, n_batches)
    game = lq_as_general(spec)
    x0, ex0 = simulate_open_loop(game, grid, base.u1, base.u2, base)
    j0 = {p: batch_costs(game, grid, p, x0, ex0, base.u1, base.u2) for p in (1, 2)}
    records = []
    for dev in battery:
        dv = direction(dev, base) - base.control(dev.player)
        g = gateaux_derivative(game, grid, dev, base, dv, j0[dev.player])
        vp = variational_state(game, grid, dev, base, dv)
        vi = variational_inequality_value(game, grid, dev, base, vp, dv)
        ok, tol = verdict(g.delta_full, g.derivative, g.j_base.value)
        records.append(DeviationRecord(dev.player, dev.name, g.j_base.value, g.delta_full.value,
                                       g.delta_full.se, g.derivative.value, g.derivative.se,
                                       vi.value, vi.se, tol, ok))
    n = grid.n_steps
    flat = lambda a, m: a.reshape(m, -1).T
    ham = hamiltonian_residual(spec, tables, flat(base.x_hat, n + 1),
                               np.repeat(base.ex_mean, base.x.shape[2], axis=1).T,
                               flat(base.u1, n), flat(base.u2, n))
    return NashReport(tuple(records), convexity_check(spec, grid), ham, n_paths, n, n_batches, int(seed))
