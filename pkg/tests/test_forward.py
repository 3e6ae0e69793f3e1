import numpy as np
import pytest

from qlinverse import forward, mesh
from qlinverse.forward import EllipticityError, ForwardError

from conftest import grid_of


def test_manufactured_exact_solution_satisfies_pde():
    g = grid_of(129)
    cset, exact = forward.manufactured_solution(g)
    r = forward.residual(cset, exact)
    assert np.max(np.abs(r)) < 5e-3  # truncation error only


def test_newton_converges_fast(g33):
    cset, exact = forward.manufactured_solution(g33)
    sol = forward.solve_quasilinear(cset)
    assert sol.final_residual <= 1e-10
    assert sol.newton_iters <= 8
    assert np.max(np.abs(sol.u0 - exact)) < 1e-4
    # quadratic convergence: the last reductions speed up
    h = sol.history
    assert h[-1] < 1e-3 * h[-2] or h[-2] < 1e-6


def test_jacobian_is_exact_derivative(g17):
    cset = forward.preset("affine_source", g17)
    rng = np.random.default_rng(3)
    u = 0.1 * rng.standard_normal(g17.shape)
    du = np.zeros(g17.shape)
    du[1:-1, 1:-1] = rng.standard_normal((g17.n - 2, g17.n - 2))
    J = forward.jacobian(cset, u)
    t = 1e-6
    fd = (forward.residual(cset, u + t * du) - forward.residual(cset, u - t * du)) / (2 * t)
    assert np.allclose((J @ du.ravel()), fd[1:-1, 1:-1].ravel(), atol=1e-6)


def test_affine_preset_has_zero_solution(g17):
    sol = forward.solve_quasilinear(forward.preset("affine", g17))
    assert np.max(np.abs(sol.u0)) < 1e-14
    assert sol.newton_iters == 0


def test_constant_trace_constant_solution(g17):
    cset = forward.make_set(g17, lambda x, y: 1 + x, 1.0, 0.0, 0.7)
    sol = forward.solve_quasilinear(cset)
    assert np.max(np.abs(sol.u0 - 0.7)) < 1e-12


def test_linear_problem_single_step(g17):
    cset = forward.preset("linear", g17)
    sol = forward.solve_quasilinear(cset)
    assert sol.newton_iters <= 1


def test_ellipticity_loss_is_reported(g17):
    cset = forward.make_set(g17, 1.0, 1.0, 0.0, -2.0)
    with pytest.raises(EllipticityError) as info:
        forward.solve_quasilinear(cset)
    assert info.value.node is not None


def test_iteration_budget(g17):
    cset, _ = forward.manufactured_solution(g17)
    with pytest.raises(ForwardError) as info:
        forward.solve_quasilinear(cset, tol=1e-30, max_iter=2)
    assert len(info.value.history) == 3


def test_unknown_preset(g17):
    with pytest.raises(ValueError, match="unknown preset"):
        forward.preset("nope", g17)


def test_conditions_on_presets(g33):
    aff = forward.preset("affine_source", g33)
    u = forward.solve_quasilinear(aff).u0
    rep = forward.check_conditions(aff, u)
    assert rep.ellipticity and rep.nondegeneracy and rep.structural
    man, exact = forward.manufactured_solution(g33)
    rep = forward.check_conditions(man, exact)
    assert rep.ellipticity and not rep.structural
    lin = forward.preset("linear", g33)
    rep = forward.check_conditions(lin, forward.solve_quasilinear(lin).u0)
    assert not rep.nondegeneracy


def test_frozen_coefficients_are_linearization(g17):
    cset, exact = forward.manufactured_solution(g17)
    a, (bx, by), c = forward.frozen_coefficients(cset, exact)
    assert np.allclose(a, 1 + exact)
    ux, uy = mesh.gradient(exact, g17)
    assert np.allclose(bx, ux) and np.allclose(by, uy)
    assert np.allclose(c, mesh.divergence_form(cset.q, exact, g17))


def test_manufactured_normal_derivative_oracle():
    # frozen symbolic value: d_x u_exact at (1, 1/4) = -2 sqrt(22) / 11
    from qlinverse import dnmap

    oracle = -2 * np.sqrt(22) / 11
    errs = []
    for n in (33, 65):
        g = grid_of(n)
        cset, _ = forward.manufactured_solution(g)
        dn = dnmap.dn_apply(cset, cset.f0)
        pts = g.boundary_points[g.non_corner]
        k = np.flatnonzero((pts[:, 0] == 1.0) & (pts[:, 1] == 0.25))[0]
        errs.append(abs(dn[k] - oracle))
    assert errs[1] < 1e-3
    assert errs[0] / errs[1] > 3.0
