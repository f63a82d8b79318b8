"""Reproducible Brownian increments and Euler-Maruyama simulation.

Every path has its own pair of counter-based Philox streams keyed by
``(master_seed, path, channel)``; the increment of step ``k`` is the inverse
normal CDF of the ``k``-th 64-bit output of that stream. Any subset of paths
can therefore be regenerated on its own, in any order, on any number of
workers, and comes out bit-identical.
"""

from __future__ import annotations

import csv
import inspect
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import ndtri

from .model import LqGameSpec, TimeGrid
from .riccati import GainTables, GridMismatch, RiccatiTables

OBSERVABLE_INPUTS = frozenset({"k", "t", "x_hat", "ex_mean", "w1"})
HIDDEN_INPUTS = frozenset({"x", "dw2", "w2"})


class NonAdaptedPolicy(ValueError):
    """A control rule asked for information outside the w1 filtration."""


@dataclass(frozen=True)
class NoisePlan:
    master_seed: int
    n_paths: int
    grid: TimeGrid
    antithetic: bool = False

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.antithetic and self.n_paths % 2:
            raise ValueError("antithetic plans need an even number of paths")
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise ValueError("master_seed must fit in 64 unsigned bits")

    def to_dict(self) -> dict:
        return {"master_seed": int(self.master_seed), "n_paths": int(self.n_paths),
                "n_steps": self.grid.n_steps, "horizon": self.grid.horizon,
                "antithetic": bool(self.antithetic)}


@dataclass(frozen=True)
class PathBundle:
    """Brownian increments, shape ``(n_paths, n_steps)`` per channel."""

    grid: TimeGrid
    dw1: np.ndarray
    dw2: np.ndarray
    paths: np.ndarray = field(default=None)

    @property
    def n_paths(self) -> int:
        return self.dw1.shape[0]

    def subset(self, rows) -> "PathBundle":
        idx = None if self.paths is None else self.paths[rows]
        return PathBundle(self.grid, self.dw1[rows], self.dw2[rows], idx)


def _stream_key(master_seed: int) -> np.ndarray:
    return np.random.SeedSequence(int(master_seed)).generate_state(2, np.uint64)


def _raw_uniforms(key, path: int, channel: int, n_steps: int) -> np.ndarray:
    bg = np.random.Philox(key=key, counter=np.array([0, 0, path, channel], dtype=np.uint64))
    raw = bg.random_raw(n_steps)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def generate_noise(plan: NoisePlan, paths=None, threads: int = 1) -> PathBundle:
    """Draw the increments for ``paths`` (default: all paths of the plan).

    In an antithetic plan path ``2j + 1`` is the mirror image of path ``2j``.
    """
    grid = plan.grid
    idx = np.arange(plan.n_paths) if paths is None else np.asarray(paths, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= plan.n_paths):
        raise IndexError("path index outside the plan")
    n = grid.n_steps
    scale = np.sqrt(grid.dt)
    key = _stream_key(plan.master_seed)
    dw1 = np.empty((idx.size, n))
    dw2 = np.empty((idx.size, n))

    def fill(rows):
        for r in rows:
            p = int(idx[r]) >> 1 if plan.antithetic else int(idx[r])
            dw1[r] = _raw_uniforms(key, p, 0, n)
            dw2[r] = _raw_uniforms(key, p, 1, n)
        if len(rows):
            sl = slice(rows[0], rows[-1] + 1)
            sign = scale
            if plan.antithetic:
                sign = np.where(idx[sl] % 2 == 1, -scale, scale)[:, None]
            dw1[sl] = sign * ndtri(dw1[sl])
            dw2[sl] = sign * ndtri(dw2[sl])

    chunks = np.array_split(np.arange(idx.size), max(1, idx.size // 512, int(threads)))
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as ex:
            list(ex.map(fill, chunks))
    else:
        for c in chunks:
            fill(c)
    return PathBundle(grid, dw1, dw2, idx)


def coarsen(bundle: PathBundle, factor: int) -> PathBundle:
    """Sum consecutive increments so the same Brownian paths live on a grid
    with ``n_steps / factor`` steps."""
    n = bundle.grid.n_steps
    if n % factor:
        raise ValueError("factor must divide the number of steps")
    m = n // factor
    grid = TimeGrid(bundle.grid.horizon, m)
    rs = lambda a: a.reshape(a.shape[0], m, factor).sum(axis=2)
    return PathBundle(grid, rs(bundle.dw1), rs(bundle.dw2), bundle.paths)


def requested_inputs(rule: Callable, allowed=OBSERVABLE_INPUTS) -> tuple:
    """Names of the arguments ``rule`` asks for.

    Raises ``NonAdaptedPolicy`` for state or ``w2`` information and
    ``TypeError`` for anything unknown.
    """
    names = tuple(inspect.signature(rule).parameters)
    hidden = [n for n in names if n in HIDDEN_INPUTS]
    if hidden:
        raise NonAdaptedPolicy(f"rule requests non-observable input(s) {hidden}")
    unknown = [n for n in names if n not in allowed]
    if unknown:
        raise TypeError(f"rule requests unknown input(s) {unknown}; allowed: {sorted(allowed)}")
    return names


@dataclass(frozen=True)
class ControlPolicy:
    """A node-wise rule ``rule(**inputs) -> (v1, v2)``.

    The rule's parameter names select its inputs from ``k``, ``t``,
    ``x_hat``, ``ex_mean`` and ``w1`` (the running value of the observed
    Brownian motion). Only w1-measurable quantities are offered, so any
    policy built this way is adapted to the players' information.
    """

    rule: Callable
    name: str = "policy"

    def inputs(self) -> tuple:
        return requested_inputs(self.rule)

    def __call__(self, **available):
        return self.rule(**{n: available[n] for n in self.inputs()})


@dataclass(frozen=True)
class StatePathSet:
    grid: TimeGrid
    x: np.ndarray
    x_hat: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    ex_mean: np.ndarray
    particle_mean: bool = False

    @property
    def n_paths(self) -> int:
        return self.x.shape[0]


def _as_mean(ex_mean, grid):
    arr = np.asarray(ex_mean, dtype=float)
    if arr.shape != (grid.n_steps + 1,):
        raise GridMismatch(f"ex_mean has shape {arr.shape}, grid needs {(grid.n_steps + 1,)}")
    return arr


def simulate_state(spec: LqGameSpec, policy: ControlPolicy, ex_mean, noise: PathBundle) -> StatePathSet:
    """Euler-Maruyama for the state and its w1-filter under ``policy``.

    ``ex_mean`` supplies ``E[x]`` on the grid. If it is ``None`` the bundle's
    own sample mean is used at each step (interacting particles) and is
    returned as the frozen mean of the run; re-simulating with that frozen
    mean reproduces the same paths.
    """
    grid = noise.grid
    wanted = policy.inputs()
    n, N = noise.n_paths, grid.n_steps
    dt = grid.dt
    t = grid.nodes
    c = spec.at(t)
    particle = ex_mean is None
    mean = np.empty(N + 1) if particle else _as_mean(ex_mean, grid)
    # time-major buffers keep each step's slice contiguous
    x = np.empty((N + 1, n))
    xh = np.empty((N + 1, n))
    v1 = np.empty((N, n))
    v2 = np.empty((N, n))
    dw1 = np.ascontiguousarray(noise.dw1.T)
    dw2 = np.ascontiguousarray(noise.dw2.T)
    x[0] = spec.x0
    xh[0] = spec.x0
    w1 = np.zeros(n)
    for k in range(N):
        if particle:
            mean[k] = np.mean(x[k])
        available = {"k": k, "t": t[k], "x_hat": xh[k], "ex_mean": mean[k], "w1": w1}
        u1, u2 = policy.rule(**{name: available[name] for name in wanted})
        v1[k] = u1
        v2[k] = u2
        common = c.abar[k] * mean[k] + c.b1[k] * v1[k] + c.b2[k] * v2[k]
        d1 = c.c1[k] * dw1[k]
        x[k + 1] = x[k] + (c.a[k] * x[k] + common) * dt + d1 + c.c2[k] * dw2[k]
        xh[k + 1] = xh[k] + (c.a[k] * xh[k] + common) * dt + d1
        w1 = w1 + dw1[k]
    if particle:
        mean[N] = np.mean(x[N])
    x, xh, v1, v2 = x.T, xh.T, v1.T, v2.T
    return StatePathSet(grid, x, xh, v1, v2, mean, particle)


def equilibrium_policy(gains: GainTables) -> ControlPolicy:
    """``u_i = k_hat_i x_hat + k_mean_i E[x]``."""

    def rule(k, x_hat, ex_mean):
        return gains.control(1, k, x_hat, ex_mean), gains.control(2, k, x_hat, ex_mean)

    return ControlPolicy(rule, "equilibrium")


def zero_policy() -> ControlPolicy:
    return ControlPolicy(lambda: (0.0, 0.0), "zero")


def simulate_filter(spec: LqGameSpec, gains: GainTables, ex_mean, dw1) -> np.ndarray:
    """Euler-Maruyama for the filter equation with the equilibrium feedback
    substituted; driven by the ``w1`` increments only."""
    grid = gains.grid
    mean = _as_mean(ex_mean, grid)
    dw1 = np.atleast_2d(np.asarray(dw1, dtype=float))
    if dw1.shape[1] != grid.n_steps:
        raise GridMismatch("dw1 does not match the gain grid")
    c = spec.at(grid.nodes)
    drift_h = c.a + c.b1 * gains.k_hat1 + c.b2 * gains.k_hat2
    drift_m = (c.abar + c.b1 * gains.k_mean1 + c.b2 * gains.k_mean2) * mean
    dt = grid.dt
    out = np.empty((dw1.shape[0], grid.n_steps + 1))
    out[:, 0] = spec.x0
    for k in range(grid.n_steps):
        out[:, k + 1] = out[:, k] + (drift_h[k] * out[:, k] + drift_m[k]) * dt + c.c1[k] * dw1[:, k]
    return out


def filter_closed_form(spec: LqGameSpec, tables: RiccatiTables, dw1) -> np.ndarray:
    """Explicit variation-of-constants representation of the filter.

    ``Phi(s, t) = exp(int_s^t (a - s1 tau1 - s2 tau2))`` with the exponent
    integrated by the trapezoid rule; the time and stochastic integrals are
    left-point sums on the grid.
    """
    grid = tables.grid
    dw1 = np.atleast_2d(np.asarray(dw1, dtype=float))
    if dw1.shape[1] != grid.n_steps:
        raise GridMismatch("dw1 does not match the table grid")
    c = spec.at(grid.nodes)
    lam = c.a - c.s1 * tables.tau1 - c.s2 * tables.tau2
    mu = c.abar - c.s1 * tables.delta1 - c.s2 * tables.delta2
    L = np.concatenate([[0.0], np.cumsum(0.5 * grid.dt * (lam[:-1] + lam[1:]))])
    forcing = (mu * tables.ex_mean)[:-1] * grid.dt + c.c1[:-1] * dw1
    acc = np.cumsum(np.exp(-L[:-1]) * forcing, axis=1)
    out = np.empty((dw1.shape[0], grid.n_steps + 1))
    out[:, 0] = spec.x0
    out[:, 1:] = np.exp(L[1:]) * (spec.x0 + acc)
    return out


@dataclass(frozen=True)
class ConditionalMean:
    estimate: np.ndarray
    se: np.ndarray
    x_hat: np.ndarray
    n_inner: int


def conditional_mean_oracle(spec: LqGameSpec, gains: GainTables, ex_mean, w1_increments,
                            n_inner: int, seed: int) -> ConditionalMean:
    """Estimate ``E[x(t) | w1 path]`` by holding one ``w1`` path fixed and
    averaging the state over ``n_inner`` independent ``w2`` paths."""
    grid = gains.grid
    dw1 = np.asarray(w1_increments, dtype=float).reshape(-1)
    if dw1.size != grid.n_steps:
        raise GridMismatch("w1 path does not match the gain grid")
    inner = generate_noise(NoisePlan(seed, n_inner, grid))
    bundle = PathBundle(grid, np.broadcast_to(dw1, inner.dw2.shape), inner.dw2)
    paths = simulate_state(spec, equilibrium_policy(gains), ex_mean, bundle)
    est = paths.x.mean(axis=0)
    se = paths.x.std(axis=0, ddof=1) / np.sqrt(n_inner) if n_inner > 1 else np.zeros_like(est)
    return ConditionalMean(est, se, paths.x_hat[0].copy(), n_inner)


def paths_to_csv(paths: StatePathSet, every: int = 1, max_paths: int | None = None) -> str:
    """Long format ``path_id, t, x, x_hat, v1, v2``; controls are blank at
    the terminal node."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["path_id", "t", "x", "x_hat", "v1", "v2"])
    t = paths.grid.nodes
    N = paths.grid.n_steps
    nodes = list(range(0, N + 1, every))
    if nodes[-1] != N:
        nodes.append(N)
    n = paths.n_paths if max_paths is None else min(max_paths, paths.n_paths)
    for p in range(n):
        for k in nodes:
            ctrl = [repr(float(paths.v1[p, k])), repr(float(paths.v2[p, k]))] if k < N else ["", ""]
            w.writerow([p, repr(float(t[k])), repr(float(paths.x[p, k])), repr(float(paths.x_hat[p, k])), *ctrl])
    return buf.getvalue()
