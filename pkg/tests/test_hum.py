import warnings

import numpy as np
import pytest

from hyperhum.fixtures import calibration_initial, local_bump, state
from hyperhum.hum import (
    ControllabilityWarning,
    ControlProblem,
    ExperimentalSystemWarning,
    apply_FT,
    apply_FT_star,
    conjugate_gradient,
    gramian_apply,
    hum_objective,
    observability_constant,
    observation_energy,
    solve_gramian,
    synthesize_exact_control,
    synthesize_null_control,
)
from hyperhum.model import make_system, t_opt
from hyperhum.solver import Grid, free_evolution


# -- operators ----------------------------------------------------------------------


def test_FT_and_adjoint_are_linear(coupled_calibration, rng):
    g = Grid(60, 0.9)
    T = 2.2
    pb = ControlProblem(coupled_calibration, T, g)
    U, V = rng.standard_normal((2,) + pb.control_shape)
    a, b = 1.7, -0.4
    np.testing.assert_allclose(pb.FT(a * U + b * V), a * pb.FT(U) + b * pb.FT(V), rtol=1e-12, atol=1e-12)
    v, w = rng.standard_normal((2,) + pb.state_shape)
    for mode in ("discrete", "pde"):
        np.testing.assert_allclose(
            pb.FT_star(a * v + b * w, mode), a * pb.FT_star(v, mode) + b * pb.FT_star(w, mode),
            rtol=1e-12, atol=1e-12,
        )
    with pytest.raises(ValueError):
        pb.FT_star(v, "other")


def test_functional_wrappers(calibration, rng):
    g = Grid(40)
    pb = ControlProblem(calibration, 2.4, g)
    U = rng.standard_normal(pb.control_shape)
    v = rng.standard_normal(pb.state_shape)
    np.testing.assert_array_equal(apply_FT(calibration, U, 2.4, g).values, pb.FT(U))
    np.testing.assert_array_equal(apply_FT_star(calibration, v, 2.4, g).values, pb.FT_star(v))
    np.testing.assert_array_equal(gramian_apply(calibration, v, 2.4, g, eps=0.1).values, pb.gramian(v, 0.1))


def test_gramian_symmetric_and_psd(coupled_calibration, rng):
    pb = ControlProblem(coupled_calibration, 2.4, Grid(100, 0.9))
    for _ in range(10):
        u, v = rng.standard_normal((2,) + pb.state_shape)
        a = pb.inner(pb.gramian(u), v)
        b = pb.inner(u, pb.gramian(v))
        assert abs(a - b) <= 1e-10 * max(abs(a), abs(b))
        assert pb.inner(pb.gramian(v), v) >= -1e-12 * pb.inner(v, v)


def test_gramian_norm_matches_dense_spectrum(calibration):
    pb = ControlProblem(calibration, 1.5, Grid(12, 0.9))
    N = 2 * 13
    Wh = np.sqrt(np.tile(pb.disc.wx, 2))
    G = np.zeros((N, N))
    for j in range(N):
        e = np.zeros(N)
        e[j] = 1.0 / Wh[j]
        G[:, j] = Wh * pb.gramian(e.reshape(2, 13)).ravel()
    top = np.linalg.eigvalsh(0.5 * (G + G.T))[-1]
    # a Rayleigh quotient never exceeds the top eigenvalue; only the scale matters
    assert top * 0.99 <= pb.gramian_norm() <= top * (1 + 1e-12)


# -- conjugate gradient --------------------------------------------------------------


def test_cg_matches_direct_solve(rng):
    A = rng.standard_normal((30, 30))
    A = A @ A.T + 30 * np.eye(30)
    b = rng.standard_normal(30)
    res = conjugate_gradient(lambda x: A @ x, b, np.dot, tol=1e-12, maxit=200)
    assert res.converged
    np.testing.assert_allclose(res.x, np.linalg.solve(A, b), rtol=1e-9)


def test_cg_zero_rhs_and_iteration_cap(rng):
    res = conjugate_gradient(lambda x: x, np.zeros(4), np.dot)
    assert res.iterations == 0 and res.converged
    A = np.diag(np.logspace(0, 8, 50))
    res = conjugate_gradient(lambda x: A @ x, np.ones(50), np.dot, tol=1e-14, maxit=3)
    assert res.iterations == 3 and not res.converged


def test_cg_raises_on_non_finite():
    with pytest.raises(FloatingPointError):
        conjugate_gradient(lambda x: np.full_like(x, np.nan) if x[0] else x, np.ones(3), np.dot)


def test_cg_on_calibration_gramian(calibration, rng):
    T = 1.2 * t_opt(calibration.speeds).t_opt
    pb = ControlProblem(calibration, T, Grid(100))
    rhs = rng.standard_normal(pb.state_shape)
    res = solve_gramian(pb, rhs, pb.absolute_eps(1e-6), cg_tol=1e-8, cg_maxit=500)
    assert res.converged and res.iterations <= 500
    resid = pb.gramian(res.x, pb.absolute_eps(1e-6)) - rhs
    assert pb.norm(resid) <= 1e-8 * pb.norm(rhs) * 1.01


def test_large_eps_dominates(calibration, rng):
    pb = ControlProblem(calibration, 2.4, Grid(50))
    rhs = rng.standard_normal(pb.state_shape)
    eps = 1e6 * pb.gramian_norm()
    res = solve_gramian(pb, rhs, eps)
    np.testing.assert_allclose(res.x, rhs / eps, rtol=1e-5)


def test_hum_objective_convex_and_minimized(coupled_calibration, rng):
    pb = ControlProblem(coupled_calibration, 2.4, Grid(80, 0.9))
    rhs = -pb.free(state(["zero", "bump"], pb.disc.x))
    eps = pb.absolute_eps(1e-3)
    phi = solve_gramian(pb, rhs, eps, cg_tol=1e-12, cg_maxit=2000).x
    J0 = hum_objective(pb, phi, rhs, eps)
    for _ in range(20):
        delta = 1e-3 * rng.standard_normal(phi.shape)
        assert J0 <= hum_objective(pb, phi + delta, rhs, eps)


# -- synthesis ------------------------------------------------------------------------


def test_null_control_above_and_below_t_opt(calibration):
    g = Grid(100)
    w0 = calibration_initial(g.x)
    above = synthesize_null_control(calibration, w0, 2.4, g)
    assert above.terminal_residual_norm <= 1e-2
    with pytest.warns(ControllabilityWarning, match="does not exceed"):
        below = synthesize_null_control(calibration, w0, 1.6, g)
    assert below.terminal_residual_norm >= 0.3
    assert set(above.scalars()) == {"cg_iterations", "cg_residual", "terminal_residual_norm", "eps", "converged"}


def test_null_control_with_coupling_reaches_rest(coupled_calibration):
    g = Grid(200, 0.9)
    rep = synthesize_null_control(coupled_calibration, calibration_initial(g.x), 2.4, g,
                                  cg_maxit=3000)
    assert rep.terminal_residual_norm <= 1e-2


def test_null_control_of_rest_is_zero(calibration):
    g = Grid(50)
    rep = synthesize_null_control(calibration, np.zeros((2, 51)), 2.4, g)
    assert rep.terminal_residual_norm == 0.0
    assert not np.any(rep.control.values)


def test_class_warning_for_singular_B():
    s = make_system([1.0, 1.0, 2.0], 1, [[1.0, 0.0]])
    with pytest.warns(ControllabilityWarning, match="not in class B"):
        synthesize_null_control(s, np.zeros((3, 21)), 2.4, Grid(20))


def test_exact_control_to_free_flow_needs_no_control(calibration):
    g = Grid(100)
    # free flow of the calibration system is empty after T = 2, so use a short horizon
    w0b = state(["bump(0.5,0.2)", "bump(0.5,0.2)"], g.x)
    target = free_evolution(calibration, w0b, 0.5, g).values
    rep = synthesize_exact_control(calibration, w0b, target, 0.5, g)
    assert rep.terminal_residual_norm <= 1e-8
    assert np.max(np.abs(rep.control.values)) <= 1e-8


def test_exact_control_shifted_bump(calibration):
    g = Grid(400)
    T = 1.2 * t_opt(calibration.speeds).t_opt
    w0 = state(["bump(0.3,0.2)", "bump(0.3,0.2)"], g.x)
    wT = state(["bump(0.7,0.2)", "bump(0.7,0.2)"], g.x)
    rep = synthesize_exact_control(calibration, w0, wT, T, g)
    assert rep.terminal_residual_norm <= 1e-2


def test_exact_control_plus_family_injection(k1m2):
    g = Grid(200)
    x = g.x
    wT = np.vstack([np.zeros_like(x), local_bump(x, 0.5, 0.2), local_bump(x, 0.6, 0.2)])
    # plus family is filled from x = 1 within tau_{k+1} = 1
    rep = synthesize_exact_control(k1m2, np.zeros_like(wT), wT, 1.1, g)
    assert rep.terminal_residual_norm <= 1e-2


def test_exact_control_needs_m_ge_k():
    s = make_system([2.0, 1.0, 1.0], 2, [[1.0], [2.0]])
    with pytest.raises(ValueError, match="m >= k"):
        synthesize_exact_control(s, np.zeros((3, 21)), np.zeros((3, 21)), 3.0, Grid(20))


def test_w_form_coupling_is_experimental():
    s = make_system([1.0, 1.0], 1, [[1.0]], [[0.0, 0.5], [0.3, 0.0]], form="w")
    with pytest.raises(ValueError, match="experimental"):
        ControlProblem(s, 2.4, Grid(50))
    with pytest.warns(ExperimentalSystemWarning):
        pb = ControlProblem(s, 2.4, Grid(50), experimental=True)
    v = np.random.default_rng(0).standard_normal(pb.state_shape)
    u = np.random.default_rng(1).standard_normal(pb.state_shape)
    a, b = pb.inner(pb.gramian(u), v), pb.inner(u, pb.gramian(v))
    assert abs(a - b) <= 1e-10 * abs(a)


# -- observability --------------------------------------------------------------------


def test_plus_family_transport_identity():
    # pure transport: ||lam v_+(., 1)||^2 over [0, T] = lam ||v_+||^2 once T > 1 / lam
    s = make_system([2.0, 2.0], 1, [[0.0]])
    g = Grid(400)
    pb = ControlProblem(s, 0.75, g)
    v = state(["zero", "bump(0.5,0.3)"], g.x)
    assert observation_energy(pb, v) / pb.inner(v, v) == pytest.approx(2.0, rel=1e-2)


def test_exact_variant_estimates(calibration):
    g = Grid(100)
    lo = observability_constant(calibration, 1.8, g, variant="exact")
    hi = observability_constant(calibration, 2.2, g, variant="exact")
    later = observability_constant(calibration, 3.0, g, variant="exact")
    assert hi.constant_estimate >= 1e3 * max(lo.constant_estimate, 1e-12)
    assert later.constant_estimate >= hi.constant_estimate - 1e-6
    assert hi.method == "exact-inverse"


def test_null_variant_transition(calibration):
    g = Grid(100)
    lo = observability_constant(calibration, 1.8, g, variant="null")
    hi = observability_constant(calibration, 2.2, g, variant="null")
    assert hi.constant_estimate / lo.constant_estimate >= 1e3
    assert lo.converged and hi.converged


def test_null_variant_with_coupling_is_monotone(coupled_calibration):
    g = Grid(60, 0.9)
    est = [observability_constant(coupled_calibration, T, g, variant="null").constant_estimate
           for T in (1.0, 1.5, 2.5)]
    assert est[0] <= est[1] * 1.01 and est[1] <= est[2] * 1.01


def test_unknown_variant(calibration):
    with pytest.raises(ValueError):
        observability_constant(calibration, 2.2, Grid(20), variant="other")


def test_warnings_are_quiet_by_default_in_library(calibration):
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        synthesize_null_control(calibration, np.zeros((2, 21)), 2.4, Grid(20))
    assert not rec
