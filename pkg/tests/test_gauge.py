import numpy as np
import pytest

from qlinverse import dnmap, forward, gauge, linops
from qlinverse.gauge import GaugeError

from conftest import grid_of


def test_beta_squared_laplacian_oracle():
    # frozen symbolic values: lap(beta^2)(0.5, 0.5) = -1/8, (0.3, 0.6) = -1719/25000
    from qlinverse.mesh import laplacian

    errs = []
    for n in (41, 81):
        g = grid_of(n)
        lap = laplacian(gauge.beta(g) ** 2, g)
        m = (n - 1) // 10
        errs.append(max(abs(lap[5 * m, 5 * m] + 1 / 8), abs(lap[3 * m, 6 * m] + 1719 / 25000)))
    assert errs[1] < 1e-4
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_default_gauge_field_has_zero_jet():
    g = grid_of(33)
    assert gauge.boundary_jet(gauge.gauge_field(g), g) == (0.0, 0.0)


def test_boundary_reaching_psi_has_small_jet():
    jets = [gauge.boundary_jet(gauge.gauge_field(grid_of(n), psi=lambda x, y: 1.0 + 0 * x), grid_of(n))[1] for n in (17, 33)]
    assert 3.5 < jets[0] / jets[1] < 4.5


def test_linear_counterexample_checks_phi():
    g = grid_of(17)
    with pytest.raises(GaugeError):
        gauge.build_linear_counterexample(g, 1.0, 0.0, phi=g.sample(lambda x, y: x * (1 - x)))
    pair = gauge.build_linear_counterexample(g, 1.0, 0.0, psi=lambda x, y: 1.0 + 0 * x)
    assert pair.meta["jet"][1] > 0


def test_linear_counterexample_solution_shift():
    g = grid_of(33)
    pair = gauge.build_linear_counterexample(g, lambda x, y: 2 + x, -1.0)
    u = forward.solve_quasilinear(pair.base).u0
    ut = forward.solve_quasilinear(pair.transformed).u0
    assert np.max(np.abs(ut - (u + pair.phi))) < 1e-10
    assert np.max(np.abs(pair.meta["dF"])) > 0.1


def test_scaling_gauge():
    g = grid_of(17)
    const = forward.preset("constant", g)
    pair = gauge.build_scaling_gauge(const)
    assert pair.flags == ()
    assert np.allclose(pair.transformed.sigma, 4.0) and np.allclose(pair.transformed.q, 2.0)
    assert np.allclose(pair.transformed.F, -2.0)
    assert gauge.build_scaling_gauge(forward.preset("affine_source", g)).flags == ("obstruction not expected",)
    with pytest.raises(GaugeError):
        gauge.build_scaling_gauge(forward.preset("linear", g))


def test_scaling_gauge_same_dn():
    g = grid_of(17)
    const = forward.preset("constant", g)
    pair = gauge.build_scaling_gauge(const)
    basis = dnmap.fourier_basis(g, k_max=1)
    a, b = dnmap.dn_matrix(const, basis), dnmap.dn_matrix(pair.transformed, basis)
    assert a.max_gap(b) <= 10 * a.floor


def test_gauge_breaking_small_grid():
    g = grid_of(17)
    rep = gauge.gauge_break_experiment(forward.preset("affine_source", g))
    assert rep.margins[0] <= 10 * rep.floors[0]
    assert rep.ratio(1) >= 10
    assert rep.modes[0] == "const"


def test_solution_relations_converge():
    reps = []
    for n in (33, 65):
        g = grid_of(n)
        cset = forward.preset("affine_source", g)
        u0 = forward.solve_quasilinear(cset).u0
        mag = linops.build_magnetic(cset, u0)
        _, Ls = linops.build_linearized(cset, u0)
        f = np.ones(g.num_boundary, dtype=complex)
        reps.append(gauge.verify_solution_relations(mag, Ls, 0.3j * gauge.gauge_field(g), f))
    assert reps[1].solution_residual < 1e-4
    assert reps[0].solution_residual / reps[1].solution_residual > 3.5
    assert reps[0].adjoint_residual / reps[1].adjoint_residual > 3.5
