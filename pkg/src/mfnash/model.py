"""Game specifications for the two-player linear-quadratic mean-field game.

The state is scalar and driven by two independent Brownian motions ``w1``
and ``w2``; both players observe only the filtration generated by ``w1``.

Coefficients may be given as constants, as tables sampled uniformly on
``[0, horizon]`` (linearly interpolated), or as vectorised callables of time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import SimpleNamespace
from typing import Callable, Sequence, Union

import numpy as np

CoefficientLike = Union[float, Sequence[float], np.ndarray, Callable]

TIME_COEFFICIENTS = (
    "a", "abar", "b1", "b2", "c1", "c2",
    "g1", "g2", "gbar1", "gbar2", "m1", "m2",
)
TERMINAL_WEIGHTS = ("h1", "h2", "hbar1", "hbar2")


class Coefficient:
    """A deterministic function of time on ``[0, horizon]``."""

    def __init__(self, value: CoefficientLike, horizon: float):
        self.horizon = float(horizon)
        self._func = None
        if isinstance(value, Coefficient):
            value = value.source
        if callable(value):
            self._func = value
            self.table = None
        else:
            arr = np.atleast_1d(np.asarray(value, dtype=float))
            if arr.ndim != 1 or arr.size == 0:
                raise ValueError("tabulated coefficient must be a non-empty 1-d array")
            if not np.all(np.isfinite(arr)):
                raise ValueError("coefficient values must be finite")
            self.table = arr
        self.source = value

    @property
    def is_constant(self) -> bool:
        return self.table is not None and self.table.size == 1

    @property
    def is_tabulated(self) -> bool:
        return self.table is not None and self.table.size > 1

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self._func is not None:
            return np.broadcast_to(np.asarray(self._func(t), dtype=float), t.shape).copy()
        if self.table.size == 1:
            return np.full(t.shape, self.table[0])
        nodes = np.linspace(0.0, self.horizon, self.table.size)
        return np.interp(t, nodes, self.table)

    def __repr__(self):
        if self.is_constant:
            return f"Coefficient({self.table[0]!r})"
        if self.is_tabulated:
            return f"Coefficient(table[{self.table.size}])"
        return f"Coefficient({self._func!r})"


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``0 = t_0 < ... < t_N = horizon``."""

    horizon: float
    n_steps: int

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError("n_steps must be a positive integer")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        t = np.arange(self.n_steps + 1) * self.dt
        t[-1] = self.horizon
        return t

    @property
    def midpoints(self) -> np.ndarray:
        t = self.nodes
        return 0.5 * (t[:-1] + t[1:])

    def refine(self, factor: int) -> "TimeGrid":
        return TimeGrid(self.horizon, self.n_steps * int(factor))


@dataclass(frozen=True)
class LqGameSpec:
    """Coefficients of the linear mean-field state equation and quadratic costs.

    The controlled state is::

        dx = (a x + abar E[x] + b1 v1 + b2 v2) dt + c1 dw1 + c2 dw2,  x(0) = x0

    and player ``i`` minimises::

        J_i = 1/2 E[ int_0^T (g_i x^2 + gbar_i E[x]^2 + m_i v_i^2) dt
                     + h_i x(T)^2 + hbar_i E[x(T)]^2 ].
    """

    horizon: float
    x0: float
    a: CoefficientLike = 0.0
    abar: CoefficientLike = 0.0
    b1: CoefficientLike = 1.0
    b2: CoefficientLike = 1.0
    c1: CoefficientLike = 0.0
    c2: CoefficientLike = 0.0
    g1: CoefficientLike = 0.0
    g2: CoefficientLike = 0.0
    gbar1: CoefficientLike = 0.0
    gbar2: CoefficientLike = 0.0
    m1: CoefficientLike = 1.0
    m2: CoefficientLike = 1.0
    h1: float = 0.0
    h2: float = 0.0
    hbar1: float = 0.0
    hbar2: float = 0.0

    def __post_init__(self):
        if not float(self.horizon) > 0:
            raise ValueError("horizon must be positive")
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "x0", float(self.x0))
        for name in TIME_COEFFICIENTS:
            object.__setattr__(self, name, Coefficient(getattr(self, name), self.horizon))
        for name in TERMINAL_WEIGHTS:
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def all_constant(self) -> bool:
        return all(getattr(self, n).is_constant for n in TIME_COEFFICIENTS)

    def at(self, t) -> SimpleNamespace:
        """Evaluate every coefficient at times ``t``.

        Also provides ``s1 = b1^2/m1`` and ``s2 = b2^2/m2`` (guarded against
        zero ``m``) and the terminal weights.
        """
        t = np.asarray(t, dtype=float)
        out = SimpleNamespace(t=t)
        for name in TIME_COEFFICIENTS:
            setattr(out, name, getattr(self, name)(t))
        with np.errstate(divide="ignore", invalid="ignore"):
            out.s1 = out.b1 ** 2 / out.m1
            out.s2 = out.b2 ** 2 / out.m2
        for name in TERMINAL_WEIGHTS:
            setattr(out, name, getattr(self, name))
        return out

    def replace(self, **changes) -> "LqGameSpec":
        kwargs = {n: getattr(self, n).source for n in TIME_COEFFICIENTS}
        kwargs.update({n: getattr(self, n) for n in TERMINAL_WEIGHTS})
        kwargs.update(horizon=self.horizon, x0=self.x0)
        kwargs.update(changes)
        return LqGameSpec(**kwargs)


CONSTRAINT_NOTES = {"A3": "|b1^2/m1 - b2^2/m2| within tolerance"}


@dataclass(frozen=True)
class Violation:
    constraint: str
    t: float | None
    magnitude: float


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def constraints(self) -> set:
        return {v.constraint for v in self.violations}

    def summary(self) -> str:
        if self.ok:
            return "PASS: all constraints satisfied"
        lines = [f"FAIL: {len(self.violations)} violation(s)"]
        by_name: dict[str, list[Violation]] = {}
        for v in self.violations:
            by_name.setdefault(v.constraint, []).append(v)
        for name, vs in by_name.items():
            worst = max(vs, key=lambda v: v.magnitude)
            where = "" if worst.t is None else f" (worst at t={worst.t:.6g})"
            label = f"{name} ({CONSTRAINT_NOTES[name]})" if name in CONSTRAINT_NOTES else name
            lines.append(f"  {label}: {len(vs)} node(s), max magnitude {worst.magnitude:.6g}{where}")
        return "\n".join(lines)


def default_tol_a3(spec: LqGameSpec) -> float:
    return 1e-10 if spec.all_constant else 1e-8


def validate_lq(spec: LqGameSpec, grid: TimeGrid, tol_a3: float | None = None) -> ValidationReport:
    """Check sign conditions, the b1*b2 != 0 condition and the A3 symmetry
    ``b1^2/m1 == b2^2/m2`` at every grid node.

    Violations are returned as data; nothing is raised.
    """
    if tol_a3 is None:
        tol_a3 = default_tol_a3(spec)
    c = spec.at(grid.nodes)
    out: list[Violation] = []

    def per_node(name, bad, magnitude):
        for k in np.flatnonzero(bad):
            out.append(Violation(name, float(grid.nodes[k]), float(magnitude[k])))

    for m in ("m1", "m2"):
        vals = getattr(c, m)
        per_node(f"{m}_positive", ~(vals > 0), np.abs(np.minimum(vals, 0.0)))
    for g in ("g1", "g2", "gbar1", "gbar2"):
        vals = getattr(c, g)
        per_node(f"{g}_nonnegative", vals < 0, -vals)
    for h in TERMINAL_WEIGHTS:
        val = getattr(spec, h)
        if val < 0:
            out.append(Violation(f"{h}_nonnegative", None, -val))
    prod = c.b1 * c.b2
    per_node("b1b2_nonzero", prod == 0, np.zeros_like(prod))
    with np.errstate(divide="ignore", invalid="ignore"):
        gap = np.abs(c.s1 - c.s2)
    gap = np.where(np.isfinite(gap), gap, np.inf)
    per_node("A3", gap > tol_a3, gap)
    return ValidationReport(tuple(out))


@dataclass(frozen=True)
class GeneralGameSpec:
    """Nonlinear game data used by the Gateaux and variational checkers.

    ``f``, ``sigma1``, ``sigma2``, ``l1``, ``l2`` take ``(t, x, xt, v1, v2)``
    where ``xt`` stands for ``E[x]``; ``phi1`` and ``phi2`` take ``(x, xt)``.
    ``derivatives[name][var]`` holds the partial derivative of coefficient
    ``name`` in ``var`` (one of ``x``, ``xt``, ``v1``, ``v2``) with the same
    call signature. Missing entries are treated as identically zero.
    """

    horizon: float
    x0: float
    f: Callable
    sigma1: Callable
    sigma2: Callable
    l1: Callable
    l2: Callable
    phi1: Callable
    phi2: Callable
    derivatives: dict = field(default_factory=dict)
    bounds1: tuple = (-np.inf, np.inf)
    bounds2: tuple = (-np.inf, np.inf)

    def running_cost(self, player: int) -> Callable:
        return self.l1 if player == 1 else self.l2

    def terminal_cost(self, player: int) -> Callable:
        return self.phi1 if player == 1 else self.phi2

    def bounds(self, player: int) -> tuple:
        return self.bounds1 if player == 1 else self.bounds2

    def d(self, name: str, var: str) -> Callable:
        """Partial derivative callable, zero if not supplied."""
        fn = self.derivatives.get(name, {}).get(var)
        if fn is not None:
            return fn
        if name.startswith("phi"):
            return lambda x, xt: np.zeros(np.broadcast(x, xt).shape)
        return lambda t, x, xt, v1, v2: np.zeros(np.broadcast(x, xt, v1, v2).shape)

    def check_derivatives(self, rng: np.random.Generator | None = None, n_probe: int = 20,
                          step: float = 1e-5, rtol: float = 1e-4) -> list:
        """Compare derivative callables with central differences.

        Returns a list of ``(name, var, probe, analytic, numeric)`` tuples for
        every probe whose error exceeds ``rtol * max(1, |analytic|)``.
        """
        rng = np.random.default_rng(0) if rng is None else rng
        failures = []
        running = ("f", "sigma1", "sigma2", "l1", "l2")
        terminal = ("phi1", "phi2")
        for _ in range(n_probe):
            t = rng.uniform(0.0, self.horizon)
            point = dict(zip(("x", "xt", "v1", "v2"), rng.normal(size=4)))
            for name in running + terminal:
                fn = getattr(self, name)
                vars_ = ("x", "xt") if name in terminal else ("x", "xt", "v1", "v2")
                for var in vars_:
                    up, dn = dict(point), dict(point)
                    up[var] += step
                    dn[var] -= step
                    if name in terminal:
                        num = (fn(up["x"], up["xt"]) - fn(dn["x"], dn["xt"])) / (2 * step)
                        ana = self.d(name, var)(point["x"], point["xt"])
                    else:
                        num = (fn(t, **up) - fn(t, **dn)) / (2 * step)
                        ana = self.d(name, var)(t, **point)
                    num, ana = float(num), float(ana)
                    if abs(num - ana) > rtol * max(1.0, abs(ana)):
                        failures.append((name, var, (t, point), ana, num))
        return failures


def lq_as_general(spec: LqGameSpec) -> GeneralGameSpec:
    """Express the LQ game through generic coefficient callables with exact
    partial derivatives."""
    s = spec

    def f(t, x, xt, v1, v2):
        return s.a(t) * x + s.abar(t) * xt + s.b1(t) * v1 + s.b2(t) * v2

    def sigma1(t, x, xt, v1, v2):
        return s.c1(t) * np.ones(np.broadcast(x, xt, v1, v2).shape)

    def sigma2(t, x, xt, v1, v2):
        return s.c2(t) * np.ones(np.broadcast(x, xt, v1, v2).shape)

    def l1(t, x, xt, v1, v2):
        return 0.5 * (s.g1(t) * x ** 2 + s.gbar1(t) * xt ** 2 + s.m1(t) * v1 ** 2)

    def l2(t, x, xt, v1, v2):
        return 0.5 * (s.g2(t) * x ** 2 + s.gbar2(t) * xt ** 2 + s.m2(t) * v2 ** 2)

    def phi1(x, xt):
        return 0.5 * (s.h1 * x ** 2 + s.hbar1 * xt ** 2)

    def phi2(x, xt):
        return 0.5 * (s.h2 * x ** 2 + s.hbar2 * xt ** 2)

    def shaped(coef):
        return lambda t, x, xt, v1, v2: coef(t) * np.ones(np.broadcast(x, xt, v1, v2).shape)

    derivatives = {
        "f": {"x": shaped(s.a), "xt": shaped(s.abar), "v1": shaped(s.b1), "v2": shaped(s.b2)},
        "l1": {
            "x": lambda t, x, xt, v1, v2: s.g1(t) * x,
            "xt": lambda t, x, xt, v1, v2: s.gbar1(t) * xt,
            "v1": lambda t, x, xt, v1, v2: s.m1(t) * v1,
        },
        "l2": {
            "x": lambda t, x, xt, v1, v2: s.g2(t) * x,
            "xt": lambda t, x, xt, v1, v2: s.gbar2(t) * xt,
            "v2": lambda t, x, xt, v1, v2: s.m2(t) * v2,
        },
        "phi1": {"x": lambda x, xt: s.h1 * x, "xt": lambda x, xt: s.hbar1 * xt},
        "phi2": {"x": lambda x, xt: s.h2 * x, "xt": lambda x, xt: s.hbar2 * xt},
    }
    return GeneralGameSpec(
        horizon=s.horizon, x0=s.x0, f=f, sigma1=sigma1, sigma2=sigma2,
        l1=l1, l2=l2, phi1=phi1, phi2=phi2, derivatives=derivatives,
    )


def reference_spec(x0: float = 1.0) -> LqGameSpec:
    """The benchmark game used throughout the tests and demos."""
    return LqGameSpec(
        horizon=1.0, x0=x0, a=0.1, abar=0.05, b1=1.0, b2=1.0, m1=1.0, m2=1.0,
        c1=0.2, c2=0.2, g1=1.0, g2=0.5, gbar1=0.1, gbar2=0.2,
        h1=1.0, h2=0.5, hbar1=0.0, hbar2=0.0,
    )


def zero_cost_spec(horizon: float = 1.0, x0: float = 1.0, a: float = 0.1, abar: float = 0.05,
                   c1: float = 0.2, c2: float = 0.2) -> LqGameSpec:
    """All running and terminal weights zero, controls still penalised."""
    return LqGameSpec(horizon=horizon, x0=x0, a=a, abar=abar, c1=c1, c2=c2)
