"""Explicit upwind integration of the primal and dual systems.

Grid values live on the nodes ``x_j = j dx``, ``j = 0..Nx``. Inflow nodes
are updated with the same upwind stencil as interior nodes, fed by a ghost
value taken from the boundary law at the previous time level:

* minus family, node 0: ghost ``B w_+(t_n, 0)``
* plus family, node Nx: ghost ``U(t_n)``

so ``U`` is read at ``t_0..t_{Nt-1}`` and the last control sample never
enters. At Courant number 1 every update is an exact index shift.

Two adjoints are provided:

``solve_dual``
    discretizes the dual PDE ``v_t = Sigma v_x + Sigma' v`` backwards in time
    with the nonlocal boundary law at ``x = 0`` (trapezoid quadrature of the
    integral term, explicit in time).
``solve_adjoint``
    the exact transpose of the primal scheme with respect to the trapezoid
    inner products in ``x`` and ``t``. It is a consistent discretization of
    the same dual problem and is what the Gramian is built from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import HyperbolicSystem, SpeedProfile, check

_COURANT_SNAP = 1e-12


@dataclass(frozen=True)
class Grid:
    nx: int
    cfl: float = 1.0

    def __post_init__(self):
        if int(self.nx) != self.nx or self.nx < 8:
            raise ValueError(f"nx must be an integer >= 8, got {self.nx}")
        if not 0.0 < self.cfl <= 1.0:
            raise ValueError(f"cfl must lie in (0, 1], got {self.cfl}")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "cfl", float(self.cfl))

    @property
    def dx(self):
        return 1.0 / self.nx

    @property
    def x(self):
        return np.linspace(0.0, 1.0, self.nx + 1)

    def steps(self, T, speeds):
        """Number of steps and uniform step for horizon ``T``."""
        if not T > 0:
            raise ValueError(f"horizon must be positive, got {T}")
        dt_max = cfl_timestep(self, speeds)
        nt = max(1, math.ceil(T / dt_max * (1.0 - 1e-12)))
        return nt, T / nt


def cfl_timestep(grid: Grid, speeds: SpeedProfile) -> float:
    """Largest stable step ``cfl * dx / max lam`` for the upwind scheme."""
    lam = speeds.at(grid.x)
    return grid.cfl * grid.dx / float(np.max(lam))


@dataclass(frozen=True)
class StateField:
    values: np.ndarray
    t: float = 0.0

    @property
    def n(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class ControlSignal:
    values: np.ndarray
    T: float

    @property
    def times(self):
        return np.linspace(0.0, self.T, self.values.shape[1])


@dataclass(frozen=True)
class BoundaryTrace:
    values: np.ndarray
    T: float

    @property
    def times(self):
        return np.linspace(0.0, self.T, self.values.shape[1])


@dataclass
class PrimalResult:
    terminal: StateField
    trajectory: np.ndarray | None
    times: np.ndarray


@dataclass
class DualResult:
    initial: StateField
    trace: BoundaryTrace


def _values(obj):
    return np.asarray(getattr(obj, "values", obj), dtype=float)


def trapezoid_weights(npts, h):
    w = np.full(npts, h)
    w[0] = w[-1] = 0.5 * h
    return w


class Discretization:
    """Coefficients of the upwind scheme for one ``(system, grid, T)``.

    Building this once and reusing it avoids recomputing speeds and coupling
    on the nodes for every solve.
    """

    def __init__(self, system: HyperbolicSystem, grid: Grid, T: float):
        check(system)
        self.system = system
        self.grid = grid
        self.T = float(T)
        self.n, self.k, self.m = system.n, system.k, system.m
        self.nx = grid.nx
        self.dx = grid.dx
        self.x = grid.x
        self.nt, self.dt = grid.steps(T, system.speeds)
        self.t = np.linspace(0.0, self.T, self.nt + 1)

        self.lam = system.speeds.at(self.x)
        r = self.lam * (self.dt / self.dx)
        r[np.abs(r - 1.0) <= _COURANT_SNAP] = 1.0
        if np.any(r > 1.0):
            raise ValueError("CFL condition violated")
        self.r = r
        self.one_minus_r = 1.0 - r
        # one-sided at the ends, centered inside
        self.dlam = np.gradient(self.lam, self.dx, axis=1, edge_order=1)
        self.B = np.asarray(system.B, dtype=float)

        self.form = system.form
        self.coupled = not system.coupling.is_zero
        cx = system.coupling.at(self.x) if self.coupled else None
        self.Cx = cx if self.form == "w" else None
        # u-form: only the columns acting on u_+(t, 0) can be nonzero
        self.Sx = cx[:, :, self.k:] if (self.coupled and self.form == "u") else None

        self.wx = trapezoid_weights(self.nx + 1, self.dx)
        self.wt = trapezoid_weights(self.nt + 1, self.dt)

        dummy = np.zeros((1, 1, 1))
        self._mode = 0 if not self.coupled else (1 if self.form == "w" else 2)
        self._C = np.ascontiguousarray(self.Cx) if self.Cx is not None else dummy
        self._S = np.ascontiguousarray(self.Sx) if self.Sx is not None else dummy
        self._variable = not system.speeds.is_constant

    # -- inner products -------------------------------------------------
    def state_inner(self, a, b):
        return float(np.sum(_values(a) * _values(b) * self.wx))

    def control_inner(self, a, b):
        return float(np.sum(_values(a) * _values(b) * self.wt))

    def state_norm(self, a):
        return math.sqrt(max(self.state_inner(a, a), 0.0))

    def control_norm(self, a):
        return math.sqrt(max(self.control_inner(a, a), 0.0))

    # -- primal ---------------------------------------------------------
    def _source(self, w):
        if self.Cx is not None:
            return np.einsum("jab,bj->aj", self.Cx, w)
        return (self.Sx @ w[self.k:, 0]).T

    def step(self, w, u):
        k = self.k
        r, q = self.r, self.one_minus_r
        new = np.empty_like(w)
        new[:k, 1:] = q[:k, 1:] * w[:k, 1:] + r[:k, 1:] * w[:k, :-1]
        new[:k, 0] = q[:k, 0] * w[:k, 0] + r[:k, 0] * (self.B @ w[k:, 0])
        new[k:, :-1] = q[k:, :-1] * w[k:, :-1] + r[k:, :-1] * w[k:, 1:]
        new[k:, -1] = q[k:, -1] * w[k:, -1] + r[k:, -1] * u
        if self.coupled:
            new += self.dt * self._source(w)
        return new

    def primal(self, w0, U=None, store=False):
        w = np.array(_values(w0), dtype=float)
        if w.shape != (self.n, self.nx + 1):
            raise ValueError(f"state shape {w.shape} != {(self.n, self.nx + 1)}")
        if U is None:
            U = np.zeros((self.m, self.nt + 1))
        U = _values(U)
        if U.shape != (self.m, self.nt + 1):
            raise ValueError(f"control shape {U.shape} != {(self.m, self.nt + 1)}")
        traj = np.empty((self.nt + 1,) + w.shape) if store else np.empty((1, 1, 1))
        w = _kernels.run_primal(
            w, np.ascontiguousarray(U), self.r, self.one_minus_r, self.B, self.k,
            self._mode, self._C, self._S, self.dt, traj, store,
        )
        if not store:
            traj = None
        if not np.all(np.isfinite(w)):
            raise FloatingPointError("non-finite state: solution blew up")
        return w, traj

    # -- exact discrete adjoint ------------------------------------------
    def step_transpose(self, q):
        """Euclidean transpose of :meth:`step`; returns ``(p, dU)``."""
        k = self.k
        r, c = self.r, self.one_minus_r
        p = np.empty_like(q)
        p[:k, :-1] = c[:k, :-1] * q[:k, :-1] + r[:k, 1:] * q[:k, 1:]
        p[:k, -1] = c[:k, -1] * q[:k, -1]
        p[k:, 1:] = c[k:, 1:] * q[k:, 1:] + r[k:, :-1] * q[k:, :-1]
        p[k:, 0] = c[k:, 0] * q[k:, 0] + self.B.T @ (r[:k, 0] * q[:k, 0])
        dU = r[k:, -1] * q[k:, -1]
        if self.coupled:
            if self.Cx is not None:
                p += self.dt * np.einsum("jab,aj->bj", self.Cx, q)
            else:
                p[k:, 0] += self.dt * np.einsum("jab,aj->b", self.Sx, q)
        return p, dU

    def adjoint(self, vT):
        """Adjoint of ``(w0, U) -> w(T)`` in the trapezoid inner products.

        Returns ``(v0, trace)`` with ``<w(T), vT> = <w0, v0> + <U, trace>``
        exactly (up to rounding) for every ``w0`` and ``U``.
        """
        v = _values(vT)
        if v.shape != (self.n, self.nx + 1):
            raise ValueError(f"state shape {v.shape} != {(self.n, self.nx + 1)}")
        p, grad = _kernels.run_adjoint(
            v * self.wx, self.nt, self.r, self.one_minus_r, self.B, self.k,
            self._mode, self._C, self._S, self.dt,
        )
        if not np.all(np.isfinite(p)):
            raise FloatingPointError("non-finite adjoint state")
        return p / self.wx, grad / self.wt

    # -- dual PDE ----------------------------------------------------------
    def dual_ghost(self, v):
        """Inflow value of the dual plus family at ``x = 0``.

        Solves ``Sigma_+(0) v_+ = -B^T Sigma_-(0) v_-(0) + int_0^1 S^T v dx``
        for ``v_+``, with the integral by the trapezoid rule.
        """
        k = self.k
        rhs = self.B.T @ (self.lam[:k, 0] * v[:k, 0])
        if self.Sx is not None:
            rhs = rhs + np.einsum("jab,aj,j->b", self.Sx, v, self.wx)
        return rhs / self.lam[k:, 0]

    def dual_step(self, v):
        k = self.k
        r, c, dt = self.r, self.one_minus_r, self.dt
        new = np.empty_like(v)
        new[:k, :-1] = c[:k, :-1] * v[:k, :-1] + r[:k, :-1] * v[:k, 1:]
        new[:k, -1] = c[:k, -1] * v[:k, -1]
        new[k:, 1:] = c[k:, 1:] * v[k:, 1:] + r[k:, 1:] * v[k:, :-1]
        new[k:, 0] = c[k:, 0] * v[k:, 0] + r[k:, 0] * self.dual_ghost(v)
        if self._variable:
            # backwards in time the dual reads v_s = -(Sigma v)_x + Sigma v_x
            new[:k] += dt * self.dlam[:k] * v[:k]
            new[k:] -= dt * self.dlam[k:] * v[k:]
        if self.Cx is not None:
            new += dt * np.einsum("jab,aj->bj", self.Cx, v)
        return new

    def dual(self, vT):
        v = np.array(_values(vT), dtype=float)
        if v.shape != (self.n, self.nx + 1):
            raise ValueError(f"state shape {v.shape} != {(self.n, self.nx + 1)}")
        v, trace = _kernels.run_dual(
            v, self.nt, self.r, self.one_minus_r, self.B, self.k, self.lam, self.dlam,
            self._variable, self.wx, self._mode, self._C, self._S, self.dt,
        )
        if not np.all(np.isfinite(v)):
            raise FloatingPointError("non-finite dual state")
        return v, trace


# ---------------------------------------------------------------------------
# functional interface


def solve_primal(system, w0, control, T, grid, store_trajectory=False) -> PrimalResult:
    disc = Discretization(system, grid, T)
    w, traj = disc.primal(w0, control, store=store_trajectory)
    return PrimalResult(StateField(w, T), traj, disc.t)


def free_evolution(system, w0, T, grid) -> StateField:
    disc = Discretization(system, grid, T)
    w, _ = disc.primal(w0, None)
    return StateField(w, T)


def solve_dual(system, vT, T, grid) -> DualResult:
    disc = Discretization(system, grid, T)
    v0, trace = disc.dual(vT)
    return DualResult(StateField(v0, 0.0), BoundaryTrace(trace, T))


def solve_adjoint(system, vT, T, grid) -> DualResult:
    disc = Discretization(system, grid, T)
    v0, trace = disc.adjoint(vT)
    return DualResult(StateField(v0, 0.0), BoundaryTrace(trace, T))


def zero_control(system, T, grid) -> ControlSignal:
    nt, _ = grid.steps(T, system.speeds)
    return ControlSignal(np.zeros((system.m, nt + 1)), T)


# ---------------------------------------------------------------------------
# CSV export


def _fmt(v):
    return format(float(v), ".17g")


def write_terminal_csv(path, state, x):
    vals = _values(state)
    with open(path, "w") as fh:
        fh.write("x," + ",".join(f"w{i}" for i in range(1, vals.shape[0] + 1)) + "\n")
        for j, xj in enumerate(x):
            fh.write(",".join([_fmt(xj)] + [_fmt(v) for v in vals[:, j]]) + "\n")


def write_trajectory_csv(path, trajectory, times, x):
    with open(path, "w") as fh:
        fh.write("t,x,component,value\n")
        for n, tn in enumerate(times):
            snap = trajectory[n]
            for i in range(snap.shape[0]):
                for j, xj in enumerate(x):
                    fh.write(f"{_fmt(tn)},{_fmt(xj)},{i + 1},{_fmt(snap[i, j])}\n")


def write_control_csv(path, control, times):
    vals = _values(control)
    with open(path, "w") as fh:
        fh.write("t," + ",".join(f"u{i}" for i in range(1, vals.shape[0] + 1)) + "\n")
        for n, tn in enumerate(times):
            fh.write(",".join([_fmt(tn)] + [_fmt(v) for v in vals[:, n]]) + "\n")
