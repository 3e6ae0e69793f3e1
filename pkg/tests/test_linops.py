import numpy as np
import pytest

from qlinverse import forward, linops
from qlinverse.forward import EllipticityError
from qlinverse.gauge import beta

from conftest import grid_of


def _setup(n, name="affine_source"):
    g = grid_of(n)
    cset = forward.preset(name, g)
    u0 = forward.solve_quasilinear(cset).u0
    return g, cset, u0


def test_linearized_structure():
    g, cset, u0 = _setup(17)
    L, Ls = linops.build_linearized(cset, u0)
    assert np.allclose(L.a, cset.sigma + cset.q * u0)
    assert np.allclose(Ls.b[0], -L.b[0])
    assert not np.any(Ls.c)
    assert L.meta["q"] is cset.q


def test_ellipticity_failure_names_node():
    g = grid_of(17)
    cset = forward.make_set(g, 1.0, 1.0, 0.0, 0.0)
    with pytest.raises(EllipticityError) as info:
        linops.build_linearized(cset, np.full(g.shape, -2.0))
    assert info.value.node is not None


def test_magnetic_fields_closed_forms():
    g, cset, u0 = _setup(33)
    mag = linops.build_magnetic(cset, u0)
    assert np.allclose(mag.Theta, cset.sigma + cset.q * u0)
    assert np.allclose(mag.A[0], 0.5j * mag.X[0])
    # affine background: u0 small, Z ~ -(1, 0) / Theta
    assert np.allclose(mag.Z[0] * mag.Theta, -(1.0 + u0 * 0), atol=0.1)


def test_magnetic_matches_linearized_up_to_theta():
    errs = []
    for n in (33, 65):
        g, cset, u0 = _setup(n)
        L, _ = linops.build_linearized(cset, u0)
        mag = linops.build_magnetic(cset, u0)
        v = np.exp(g.X + g.Y)
        errs.append(linops.magnetic_consistency(L, mag, v).value)
    assert errs[1] < errs[0] / 3


def test_gauge_conjugation_phi_zero_is_exact():
    g, cset, u0 = _setup(33)
    mag = linops.build_magnetic(cset, u0)
    v = np.exp(g.X - g.Y)
    assert linops.verify_gauge_conjugation(mag, np.zeros(g.shape), v).value <= 1e-12


def test_adjoint_pairing_order_two():
    vals = []
    for n in (33, 65):
        g, cset, u0 = _setup(n, "manufactured")
        L, Ls = linops.build_linearized(cset, u0)
        vals.append(linops.verify_adjoint_pairing(L, 5, 1, Lstar=Ls).value)
    assert 3.5 <= vals[0] / vals[1] <= 4.5


def test_random_fields_reproducible_and_zero_trace():
    a = linops.random_zero_trace_fields(grid_of(17), 2, seed=4)
    b = linops.random_zero_trace_fields(grid_of(17), 2, seed=4)
    assert np.array_equal(a[0], b[0])
    assert np.max(np.abs(grid_of(17).boundary_values(a[1]))) < 1e-14


def test_inner_is_hermitian():
    g = grid_of(17)
    f, h = linops.random_zero_trace_fields(g, 2, seed=9)
    assert np.isclose(linops.inner(f, h, g), np.conj(linops.inner(h, f, g)))
    assert linops.l2_norm(f, g) > 0


def test_structure_field_closed_form():
    g, cset, u0 = _setup(65)
    mag = linops.build_magnetic(cset, u0)
    probe, closed = linops.structure_field(cset, mag)
    inner = (slice(1, -1), slice(1, -1))
    assert np.max(np.abs((probe[0] - closed[0])[inner])) < 1e-3


def test_structure_field_vanishes_for_constant_ratio():
    g = grid_of(33)
    cset = forward.make_set(g, 1.0, 1.0, 0.0, 0.0)
    mag = linops.build_magnetic(cset, np.zeros(g.shape))
    probe, _ = linops.structure_field(cset, mag)
    assert np.max(np.abs(probe[0])) < 1e-13


def test_q_route_gap_converges():
    gaps = []
    for n in (33, 65):
        g, cset, u0 = _setup(n, "manufactured")
        gaps.append(linops.q_route_gap(linops.build_magnetic(cset, u0)).value)
    assert gaps[1] < gaps[0] / 2
