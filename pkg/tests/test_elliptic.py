import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qlinverse import elliptic, mesh
from qlinverse.elliptic import SolverError, make_problem, solve_dirichlet

from conftest import grid_of


def test_poisson_quadratic_is_exact(g17):
    # five-point stencil is exact on quadratics
    exact = g17.sample(lambda x, y: x * x + y * y)
    prob = make_problem(g17, a=1.0, rhs=4.0, trace=g17.boundary_values(exact))
    assert np.max(np.abs(solve_dirichlet(prob) - exact)) < 1e-12


def test_zero_data_gives_zero(g17):
    assert np.all(solve_dirichlet(make_problem(g17, a=2.0)) == 0)


def test_constant_solves_pure_divergence_form(g17):
    a = g17.sample(lambda x, y: 1 + x + y * y)
    v = solve_dirichlet(make_problem(g17, a=a, trace=np.full(g17.num_boundary, 3.0)))
    assert np.max(np.abs(v - 3.0)) < 1e-12


def test_variable_coefficient_second_order():
    errs = []
    for n in (17, 33, 65):
        g = grid_of(n)
        a = g.sample(lambda x, y: 1 + x * y)
        exact = g.sample(lambda x, y: np.sin(x) * np.exp(y))
        bx, by = g.sample(lambda x, y: 0.5 + y), g.sample(lambda x, y: -x)
        c = g.sample(lambda x, y: -1 - x)
        ux, uy = np.cos(g.X) * np.exp(g.Y), np.sin(g.X) * np.exp(g.Y)
        rhs = g.Y * ux + g.X * uy + a * 0.0 + (bx * ux + by * uy) + c * exact  # lap(sin x e^y) = 0
        prob = make_problem(g, a=a, b=(bx, by), c=c, rhs=rhs, trace=g.boundary_values(exact))
        errs.append(np.max(np.abs(solve_dirichlet(prob) - exact)))
    assert 3.5 < errs[0] / errs[1] < 4.5
    assert 3.5 < errs[1] / errs[2] < 4.5


def test_complex_coefficients(g17):
    exact = g17.sample(lambda x, y: np.exp(1j * x) * (1 + y))
    prob = make_problem(g17, a=1.0, c=1.0 + 0j, trace=g17.boundary_values(exact))
    v = solve_dirichlet(prob)
    assert v.dtype == complex
    # -(1) + 1 = 0: exp(i x)(1+y) solves lap v + v = 0 in the continuum
    assert np.max(np.abs(v - exact)) < 5e-4


def test_singular_system_reports_residual(g17):
    # a = 0 gives an all-zero interior block
    prob = make_problem(g17, a=0.0, rhs=1.0)
    with pytest.raises(SolverError) as info:
        solve_dirichlet(prob)
    assert np.isinf(info.value.residual) or info.value.residual > 1e-10


def test_apply_operator_vanishes_on_boundary(g17):
    prob = make_problem(g17, a=1.0)
    out = elliptic.apply_operator(prob, g17.sample(lambda x, y: x**3))
    assert np.all(g17.boundary_values(out) == 0)
    assert np.allclose(out[1:-1, 1:-1], 6 * g17.X[1:-1, 1:-1])


def test_maximum_principle_flag(g17):
    assert make_problem(g17, a=1.0, c=-1.0).is_maximum_principle
    assert not make_problem(g17, a=1.0, c=1.0).is_maximum_principle
    assert not make_problem(g17, a=1.0, c=-1.0 + 1j).is_maximum_principle


@given(st.integers(0, 2**31 - 1))
def test_formal_adjoint_is_matrix_adjoint(seed):
    g = grid_of(9)
    rng = np.random.default_rng(seed)
    a = 1.0 + rng.random(g.shape)
    b = (rng.standard_normal(g.shape), rng.standard_normal(g.shape))
    c = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
    prob = make_problem(g, a=a, b=b, c=c)
    adj = elliptic.formal_adjoint(prob)
    assert np.allclose(np.conj(adj.a), prob.a)
    assert np.allclose(adj.b[0], -prob.b[0])
    assert np.allclose(np.conj(adj.c), prob.c - mesh.divergence(*prob.b, g))
