import numpy as np
import pytest

from qlinverse import forward, gauge, recon

from conftest import grid_of


def test_probe_points_snap_to_nodes():
    g = grid_of(129)
    for x, y in recon.probe_points(g):
        g.node_index(x, y)
    assert len(recon.probe_points(g)) == 9


@pytest.mark.parametrize("name", ["manufactured", "affine", "constant"])
def test_B_recovery(name):
    g = grid_of(33)
    rep = recon.verify_B_recovery(forward.preset(name, g).q, g)
    assert rep.error <= 1e-8 and rep.flags == ()


def test_B_recovery_rejects_zero_q():
    g = grid_of(17)
    with pytest.raises(ValueError):
        recon.verify_B_recovery(np.zeros(g.shape), g)


def test_A_recovery_structural_vs_constant_ratio():
    g = grid_of(65)
    aff = forward.preset("affine", g)
    rep = recon.verify_A_recovery(aff, np.zeros(g.shape), taus=(10.0,))
    assert rep.count == 9 and rep.flags == ()
    const = forward.make_set(g, 1.0, 1.0, 0.0, 0.0)
    rep = recon.verify_A_recovery(const, np.zeros(g.shape), taus=(10.0,))
    assert rep.count == 0 and rep.flags


def test_A_candidate_excluded():
    g = grid_of(65)
    aff = forward.preset("affine", g)
    cand = np.exp(2j * gauge.gauge_field(g, amplitude=50.0))
    rep = recon.verify_A_recovery(aff, np.zeros(g.shape), taus=(10.0,), candidate=cand)
    assert rep.candidate_excluded


def test_system_residual_det_identity_and_equal_sets():
    g = grid_of(33)
    cset = forward.preset("affine_source", g)
    u0 = forward.solve_quasilinear(cset).u0
    res = recon.system_residual(cset, u0, cset, u0)
    assert res.det_identity_gap <= 1e-12
    assert max(res.norms()) == 0.0


def test_system_residual_detects_bump():
    g = grid_of(33)
    cset = forward.preset("affine_source", g)
    bumped = cset.replace(sigma=cset.sigma + 0.01 * gauge.beta(g) ** 2)
    ua, ub = forward.solve_quasilinear(cset).u0, forward.solve_quasilinear(bumped).u0
    res = recon.system_residual(cset, ua, bumped, ub)
    assert min(res.norms()) >= 100 * res.floor


def test_boundary_determination_of_interior_bump():
    g = grid_of(33)
    cset = forward.preset("affine_source", g)
    bumped = cset.replace(sigma=cset.sigma + 0.01 * gauge.beta(g) ** 2)
    rep = recon.boundary_sigma_determination(cset, bumped)
    assert rep.determined
    assert rep.max_sigma_hat < 1e-6


def test_uniqueness_identical_pair():
    g = grid_of(17)
    cset = forward.preset("affine_source", g)
    row = recon.uniqueness_experiment(cset, cset, "same")
    assert row.verdict == "indistinguishable"
    assert all(m == 0.0 for m, _ in row.margins.values())
