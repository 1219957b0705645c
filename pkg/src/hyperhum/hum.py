"""Hilbert uniqueness method on the discretized control problem.

``F_T`` maps a boundary control to the terminal state reached from rest;
``F_T^*`` is its adjoint in the trapezoid inner products. The Gramian
``Lambda = F_T F_T^*`` is self-adjoint and positive semidefinite in the
state inner product and is only ever applied, never assembled.

Time is kept on ``[0, T]`` throughout: the dual problem written on
``(-T, 0)`` corresponds to ``t -> t - T`` here.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import in_class_B, in_class_Be, t_opt
from .solver import ControlSignal, Discretization, StateField, _values

log = logging.getLogger(__name__)

EPS_DEFAULT = 1e-6
CG_TOL_DEFAULT = 1e-8
CG_MAXIT_DEFAULT = 500
ESTIMATE_FLOOR = 1e-14


class ExperimentalSystemWarning(UserWarning):
    pass


class ControllabilityWarning(UserWarning):
    pass


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float
    converged: bool


@dataclass
class GramianReport:
    control: ControlSignal
    multiplier: StateField
    cg_iterations: int
    cg_residual: float
    terminal_residual_norm: float
    eps: float
    converged: bool = True
    diagnostics: list = field(default_factory=list)

    def scalars(self):
        return {
            "cg_iterations": self.cg_iterations,
            "cg_residual": self.cg_residual,
            "terminal_residual_norm": self.terminal_residual_norm,
            "eps": self.eps,
            "converged": int(self.converged),
        }


@dataclass
class ObservabilityEstimate:
    T: float
    constant_estimate: float
    method: str
    iterations: int
    residual: float
    converged: bool = True


def _check_hum_system(system, experimental):
    if system.form == "w" and not system.coupling.is_zero:
        msg = "HUM on a w-form system with C != 0 is experimental"
        if not experimental:
            raise ValueError(msg + "; pass experimental=True to proceed")
        warnings.warn(msg, ExperimentalSystemWarning, stacklevel=3)


class ControlProblem:
    """All HUM operators for one system, grid and horizon."""

    def __init__(self, system, T, grid, experimental=False):
        _check_hum_system(system, experimental)
        self.system = system
        self.T = float(T)
        self.grid = grid
        self.disc = Discretization(system, grid, T)
        self._norm_estimate = None

    @property
    def state_shape(self):
        return (self.disc.n, self.disc.nx + 1)

    @property
    def control_shape(self):
        return (self.disc.m, self.disc.nt + 1)

    def inner(self, a, b):
        return self.disc.state_inner(a, b)

    def norm(self, a):
        return self.disc.state_norm(a)

    def FT(self, U):
        w, _ = self.disc.primal(np.zeros(self.state_shape), U)
        return w

    def FT_star(self, v, adjoint="discrete"):
        if adjoint == "discrete":
            return self.disc.adjoint(v)[1]
        if adjoint == "pde":
            return self.disc.dual(v)[1]
        raise ValueError(f"unknown adjoint {adjoint!r}")

    def free(self, w0):
        return self.disc.primal(w0, None)[0]

    def free_star(self, v):
        return self.disc.adjoint(v)[0]

    def gramian(self, v, eps=0.0):
        out = self.FT(self.FT_star(v))
        if eps:
            out = out + eps * _values(v)
        return out

    def gramian_norm(self, iters=30, seed=0):
        """Power-iteration estimate of the largest Gramian eigenvalue."""
        if self._norm_estimate is None:
            rng = np.random.default_rng(seed)
            v = rng.standard_normal(self.state_shape)
            v /= self.norm(v)
            lam = 0.0
            for _ in range(iters):
                g = self.gramian(v)
                lam_new = self.inner(g, v)
                nrm = self.norm(g)
                if nrm == 0.0:
                    lam_new = 0.0
                    break
                v = g / nrm
                if abs(lam_new - lam) <= 1e-6 * abs(lam_new):
                    lam = lam_new
                    break
                lam = lam_new
            self._norm_estimate = float(lam_new)
        return self._norm_estimate

    def absolute_eps(self, eps):
        """Regularization weight scaled by the Gramian norm."""
        return eps * self.gramian_norm()


def conjugate_gradient(apply, rhs, inner, tol=CG_TOL_DEFAULT, maxit=CG_MAXIT_DEFAULT, x0=None):
    """CG for an operator self-adjoint in ``inner``.

    Stops when ``||A x - rhs|| <= tol ||rhs||``. Raises on a non-finite
    iterate instead of returning garbage.
    """
    rhs = _values(rhs)
    bnorm = math.sqrt(inner(rhs, rhs))
    x = np.zeros_like(rhs) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        return CGResult(np.zeros_like(rhs), 0, 0.0, True)
    r = rhs - apply(x) if x0 is not None else rhs.copy()
    p = r.copy()
    rr = inner(r, r)
    it = 0
    while math.sqrt(rr) > tol * bnorm and it < maxit:
        Ap = apply(p)
        pAp = inner(p, Ap)
        if pAp <= 0.0:
            log.warning("CG: non-positive curvature %g at iteration %d", pAp, it)
            break
        alpha = rr / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        rr_new = inner(r, r)
        if not (np.all(np.isfinite(x)) and math.isfinite(rr_new)):
            raise FloatingPointError(f"CG diverged at iteration {it + 1}")
        p = r + (rr_new / rr) * p
        rr = rr_new
        it += 1
    res = math.sqrt(rr) / bnorm
    return CGResult(x, it, res, res <= tol)


# ---------------------------------------------------------------------------
# functional interface


def apply_FT(system, U, T, grid, experimental=False) -> StateField:
    pb = ControlProblem(system, T, grid, experimental)
    return StateField(pb.FT(U), T)


def apply_FT_star(system, v, T, grid, adjoint="discrete", experimental=False) -> ControlSignal:
    """Boundary observation ``Sigma_+(1) v_+(., 1)`` of the dual started from ``v``.

    ``adjoint="discrete"`` returns the exact transpose of :func:`apply_FT`;
    ``adjoint="pde"`` integrates the dual PDE with its nonlocal boundary law.
    """
    pb = ControlProblem(system, T, grid, experimental)
    return ControlSignal(pb.FT_star(v, adjoint), T)


def gramian_apply(system, v, T, grid, eps=0.0, experimental=False) -> StateField:
    pb = ControlProblem(system, T, grid, experimental)
    return StateField(pb.gramian(v, eps), T)


def solve_gramian(problem: ControlProblem, rhs, eps, cg_tol=CG_TOL_DEFAULT, cg_maxit=CG_MAXIT_DEFAULT):
    """Solve ``(Lambda + eps I) phi = rhs`` by matrix-free CG.

    ``eps`` is absolute here. Returns a :class:`CGResult`.
    """
    res = conjugate_gradient(
        lambda v: problem.gramian(v, eps), rhs, problem.inner, cg_tol, cg_maxit
    )
    if not res.converged:
        log.warning("CG stopped after %d iterations at residual %.3e", res.iterations, res.residual)
    return res


def hum_objective(problem, phi, rhs, eps):
    """Penalized HUM functional, minimized by ``(Lambda + eps) phi = rhs``."""
    obs = problem.FT_star(phi)
    return (
        0.5 * problem.disc.control_inner(obs, obs)
        + 0.5 * eps * problem.inner(phi, phi)
        - problem.inner(rhs, phi)
    )


def _synthesize(problem, w0, target, eps, cg_tol, cg_maxit, eps_relative, diagnostics):
    w0 = _values(w0)
    free = problem.free(w0)
    rhs = (0.0 if target is None else _values(target)) - free
    eps_abs = problem.absolute_eps(eps) if eps_relative else eps
    cg = solve_gramian(problem, rhs, eps_abs, cg_tol, cg_maxit)
    U = problem.FT_star(cg.x)
    wT, _ = problem.disc.primal(w0, U)
    miss = wT - (0.0 if target is None else _values(target))
    ref = problem.norm(w0) if target is None else problem.norm(target)
    if ref == 0.0:
        ref = max(problem.norm(w0), problem.norm(rhs))
    resid = problem.norm(miss) / ref if ref > 0.0 else problem.norm(miss)
    if not cg.converged:
        diagnostics.append(f"CG iteration cap reached ({cg.iterations}), residual {cg.residual:.3e}")
    return GramianReport(
        control=ControlSignal(U, problem.T),
        multiplier=StateField(cg.x, problem.T),
        cg_iterations=cg.iterations,
        cg_residual=cg.residual,
        terminal_residual_norm=float(resid),
        eps=float(eps_abs),
        converged=cg.converged,
        diagnostics=diagnostics,
    )


def synthesize_null_control(
    system, w0, T, grid, eps=EPS_DEFAULT, cg_tol=CG_TOL_DEFAULT, cg_maxit=CG_MAXIT_DEFAULT,
    eps_relative=True, experimental=False, problem=None,
) -> GramianReport:
    """HUM control driving ``w0`` to rest at ``T``.

    The terminal residual is ``||w(T)|| / ||w0||``.
    """
    diags = []
    if T <= t_opt(system.speeds).t_opt:
        diags.append(f"T={T:g} does not exceed t_opt={t_opt(system.speeds).t_opt:g}")
    if not in_class_B(system.B, system.k, system.m):
        diags.append("B is not in class B")
    for d in diags:
        warnings.warn(d, ControllabilityWarning, stacklevel=2)
    pb = problem or ControlProblem(system, T, grid, experimental)
    return _synthesize(pb, w0, None, eps, cg_tol, cg_maxit, eps_relative, diags)


def synthesize_exact_control(
    system, w0, wT, T, grid, eps=EPS_DEFAULT, cg_tol=CG_TOL_DEFAULT, cg_maxit=CG_MAXIT_DEFAULT,
    eps_relative=True, experimental=False, problem=None,
) -> GramianReport:
    """HUM control steering ``w0`` to ``wT``; residual ``||w(T) - wT|| / ||wT||``."""
    if system.m < system.k:
        raise ValueError("exact controllability needs m >= k")
    diags = []
    if T <= t_opt(system.speeds).t_opt:
        diags.append(f"T={T:g} does not exceed t_opt={t_opt(system.speeds).t_opt:g}")
    if not in_class_Be(system.B, system.k, system.m):
        diags.append("B is not in class B_e")
    for d in diags:
        warnings.warn(d, ControllabilityWarning, stacklevel=2)
    pb = problem or ControlProblem(system, T, grid, experimental)
    return _synthesize(pb, w0, wT, eps, cg_tol, cg_maxit, eps_relative, diags)


# ---------------------------------------------------------------------------
# observability


def observation_energy(problem, v):
    obs = problem.FT_star(v)
    return problem.disc.control_inner(obs, obs)


def observability_constant(
    system, T, grid, variant="null", power_iters=50, inner_tol=1e-10,
    shift=1e-8, tol=1e-6, seed=0, experimental=False, problem=None,
) -> ObservabilityEstimate:
    """Estimate the best constant in the observability inequality.

    ``variant="exact"``: smallest eigenvalue of the Gramian, i.e. the best
    ``C`` in ``||F_T^* v||^2 >= C ||v||^2``, by inverse iteration with
    ``(Lambda + shift)^{-1}`` applied through CG.

    ``variant="null"``: the best ``C`` in ``||F_T^* v||^2 >= C ||D v||^2``
    with ``D`` the dual map from terminal data to the state at the start of
    the horizon. This is ``1 / mu`` with ``mu`` the top eigenvalue of the
    pencil ``(D^* D, Lambda + shift)``, found by power iteration. ``mu`` is
    floored at ``1e-14`` so a vanishing ``D`` gives a large finite value.

    ``shift`` is relative to the Gramian norm; it biases the estimate by at
    most that amount.
    """
    pb = problem or ControlProblem(system, T, grid, experimental)
    lam_norm = pb.gramian_norm()
    delta = shift * lam_norm
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(pb.state_shape)
    v /= pb.norm(v)

    def solve(rhs):
        return solve_gramian(pb, rhs, delta, inner_tol, 10 * CG_MAXIT_DEFAULT).x

    est, prev, it, resid = 0.0, None, 0, float("inf")
    if variant == "exact":
        for it in range(1, power_iters + 1):
            y = solve(v)
            ny = pb.norm(y)
            if ny == 0.0:
                break
            v = y / ny
            Lv = pb.gramian(v)
            est = pb.inner(Lv, v)
            resid = pb.norm(Lv - est * v) / max(lam_norm, ESTIMATE_FLOOR)
            if prev is not None and abs(est - prev) <= tol * max(abs(est), delta):
                break
            prev = est
        est = max(est, 0.0)
    elif variant == "null":
        mu = 0.0
        for it in range(1, power_iters + 1):
            Dv = pb.free_star(v)
            GV = pb.free(Dv)
            if pb.norm(GV) == 0.0:
                mu = 0.0
                resid = 0.0
                break
            y = solve(GV)
            ny = pb.norm(y)
            v = y / ny
            Dv = pb.free_star(v)
            num = pb.inner(Dv, Dv)
            den = pb.inner(pb.gramian(v, delta), v)
            mu = num / den
            if prev is not None:
                resid = abs(mu - prev) / max(abs(mu), ESTIMATE_FLOOR)
                if resid <= tol:
                    break
            prev = mu
        est = 1.0 / max(mu, ESTIMATE_FLOOR)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    converged = it < power_iters or resid <= tol
    return ObservabilityEstimate(float(T), float(est), f"{variant}-{'inverse' if variant == 'exact' else 'power'}",
                                 it, float(resid), converged)
