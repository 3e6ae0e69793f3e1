"""
Gauge obstructions: the additive-source gauge, the scaling gauge, gauge
breaking by the nonlinearity, and the magnetic gauge relations between
solutions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dnmap, elliptic, forward, linops
from .forward import CoefficientSet, quasilinear_operator
from .mesh import GridSpec, gradient, normal_derivative

GAUGE_TOL = 1e-12


class GaugeError(ValueError):
    pass


def beta(grid: GridSpec) -> np.ndarray:
    """``x(1-x) y(1-y)``, vanishing to first order on the boundary."""
    X, Y = grid.X, grid.Y
    return X * (1 - X) * Y * (1 - Y)


def bump(grid: GridSpec, center=(0.5, 0.5), radius: float = 0.3) -> np.ndarray:
    """C^2 tensor bump ``(1-s^2)^3`` per axis, equal to 1 at ``center``."""

    def b(t, c):
        s = (t - c) / radius
        return np.where(np.abs(s) < 1.0, (1.0 - s * s) ** 3, 0.0)

    return b(grid.X, center[0]) * b(grid.Y, center[1])


def gauge_field(grid: GridSpec, psi=None, amplitude: float = 1.0) -> np.ndarray:
    """``phi = psi * beta^2``; ``psi`` defaults to :func:`bump`.

    The default bump keeps ``phi`` identically zero on the two outer node
    layers, so the discrete trace and one-sided normal derivative vanish
    exactly.  A ``psi`` that reaches the boundary leaves an ``O(h^2)``
    one-sided normal derivative.
    """
    if psi is None:
        psi = bump(grid)
    elif callable(psi):
        psi = grid.sample(psi)
    return amplitude * np.asarray(psi) * beta(grid) ** 2


def boundary_jet(phi: np.ndarray, grid: GridSpec) -> tuple[float, float]:
    """Largest ``|phi|`` and ``|d_nu phi|`` over the boundary nodes."""
    return (
        float(np.max(np.abs(grid.boundary_values(phi)))),
        float(np.max(np.abs(normal_derivative(phi, grid)))),
    )


@dataclass(frozen=True, eq=False)
class GaugePair:
    base: CoefficientSet
    transformed: CoefficientSet
    phi: np.ndarray
    flavor: str  # additive-source | scaling | magnetic
    flags: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)


def build_linear_counterexample(
    grid: GridSpec, sigma, F, phi=None, psi=None, u=None, f0=0.0
) -> GaugePair:
    """Linear pair ``(sigma, F)`` vs ``(sigma, F + div(sigma grad phi))`` with ``q = 0``.

    Give either ``phi`` (its boundary jet must vanish to ``1e-12``) or ``psi``
    (``phi = psi beta^2``, jet reported only).  ``F~`` uses the forward
    scheme's own operator, so ``u + phi`` solves the transformed problem
    exactly at the discrete level.  If ``u`` is supplied, ``meta["u_tilde"]``
    holds ``u + phi``.
    """
    base = forward.make_set(grid, sigma, 0.0, F, f0, name="linear-base")
    if phi is None:
        phi = gauge_field(grid, psi)
        checked = False
    else:
        phi = np.asarray(phi, dtype=float)
        checked = True
    trace, dnu = boundary_jet(phi, grid)
    if checked and max(trace, dnu) > GAUGE_TOL:
        raise GaugeError(
            f"phi must vanish with its normal derivative on the boundary: |phi| = {trace:.3e}, |d_nu phi| = {dnu:.3e}"
        )
    dF = quasilinear_operator(base.sigma, base.q, phi, grid)
    transformed = base.replace(F=base.F + dF, name="linear-transformed")
    meta = {"jet": (trace, dnu), "dF": dF}
    if u is not None:
        meta["u_tilde"] = np.asarray(u) + phi
    return GaugePair(base, transformed, phi, "additive-source", (), meta)


def build_scaling_gauge(cset: CoefficientSet) -> GaugePair:
    """Transformed triple ``(sigma^2/q, sigma, sigma F/q)``.

    The pair is a gauge only when ``sigma/q`` is constant; otherwise it is
    still built and flagged ``obstruction not expected``.
    """
    q = cset.q
    if np.min(np.abs(q)) == 0.0:
        raise GaugeError("scaling gauge needs q != 0 everywhere")
    ratio = cset.sigma / q
    spread = float(np.ptp(ratio))
    flags = () if spread <= GAUGE_TOL * max(1.0, float(np.max(np.abs(ratio)))) else ("obstruction not expected",)
    transformed = cset.replace(sigma=cset.sigma * ratio, q=cset.sigma.copy(), F=cset.F * ratio, name=f"{cset.name}-scaled")
    return GaugePair(cset, transformed, ratio, "scaling", flags, {"ratio_spread": spread})


# --------------------------------------------------------------------------
# gauge breaking


@dataclass(frozen=True)
class GaugeBreakReport:
    margins: dict  # order -> max DN gap, nonlinear pair
    control: dict  # order -> max DN gap, q = 0 pair
    floors: dict  # order -> noise floor
    eps: float
    modes: tuple

    def ratio(self, order: int) -> float:
        c = self.control[order]
        return float("inf") if c == 0.0 else self.margins[order] / c


def _additive_pair(cset: CoefficientSet, phi: np.ndarray, tol: float):
    base = forward.solve_quasilinear(cset, tol=tol)
    u0 = base.u0
    # F~ = F + [N(u0 + phi) - N(u0)] so phi = 0 reproduces the base set exactly
    dF = quasilinear_operator(cset.sigma, cset.q, u0 + phi, cset.grid) - quasilinear_operator(
        cset.sigma, cset.q, u0, cset.grid
    )
    return base, cset.replace(F=cset.F + dF, name=f"{cset.name}-gauged")


def _margins(cset, tset, basis, modes, pairs, eps, tol):
    out, floors = {}, {}
    d0 = dnmap.dn_apply(cset, cset.f0, tol=tol)
    t0 = dnmap.dn_apply(tset, tset.f0, tol=tol)
    out[0] = float(np.max(np.abs(d0 - t0)))
    a = dnmap.fd_linearize(cset, None, basis, 1, eps, modes=modes, tol=tol)
    b = dnmap.fd_linearize(tset, None, basis, 1, eps, modes=modes, tol=tol)
    out[1] = a.max_gap(b)
    a2 = dnmap.fd_linearize(cset, None, basis, 2, eps, pairs=pairs, tol=tol)
    b2 = dnmap.fd_linearize(tset, None, basis, 2, eps, pairs=pairs, tol=tol)
    out[2] = max(float(np.max(np.abs(a2.values[p] - b2.values[p]))) for p in pairs)
    u_scale = float(np.max(np.abs(forward.solve_quasilinear(cset, tol=tol).u0)))
    floors = {k: dnmap.dn_floor(cset.grid, tol, u_scale, order=k, eps=eps) for k in (0, 1, 2)}
    return out, floors


def gauge_break_experiment(
    cset: CoefficientSet,
    phi=None,
    basis=None,
    modes=("const", "cos1", "sin1", "cos2", "sin2"),
    pairs=None,
    eps: float = dnmap.DEFAULT_EPS,
    tol: float = forward.DEFAULT_TOL,
) -> GaugeBreakReport:
    """DN margins (orders 0-2) between a set and its additive-source transform.

    The transform keeps ``sigma, q`` and replaces ``F`` so that ``u0 + phi``
    solves the new problem with the same trace.  The same construction with
    ``q = 0`` is the linear control, where every margin should sit at the
    solver floor.
    """
    grid = cset.grid
    phi = gauge_field(grid) if phi is None else np.asarray(phi, dtype=float)
    basis = dnmap.fourier_basis(grid) if basis is None else basis
    idx = [basis.index(m) if isinstance(m, str) else int(m) for m in modes]
    if pairs is None:
        pairs = [(idx[1], idx[1]), (idx[1], idx[2])] if len(idx) > 2 else [(idx[0], idx[0])]

    _, tset = _additive_pair(cset, phi, tol)
    margins, floors = _margins(cset, tset, basis, idx, pairs, eps, tol)

    lin = cset.replace(q=np.zeros(grid.shape), name=f"{cset.name}-linear")
    _, tlin = _additive_pair(lin, phi, tol)
    control, _ = _margins(lin, tlin, basis, idx, pairs, eps, tol)
    return GaugeBreakReport(margins, control, floors, eps, tuple(basis.names[j] for j in idx))


# --------------------------------------------------------------------------
# magnetic gauge relations


@dataclass(frozen=True)
class RelationReport:
    solution_residual: float  # |v~ - e^{i phi} v| / |v|
    adjoint_residual: float  # |V0~ - (Theta/Theta~) e^{-i phi} V0| / |V0|


def verify_solution_relations(mag: linops.MagneticData, L_adj, phi, f, theta_tilde=None, tol=1e-12) -> RelationReport:
    """Check the solution relations under ``A~ = A - grad phi``, ``Q~ = Q``.

    ``v`` and ``v~`` solve the magnetic problems for ``(A, Q)`` and
    ``(A~, Q)`` with trace ``f``; the claim is ``v~ = e^{i phi} v``.
    ``V0`` solves ``L_adj V0 = 0`` with trace ``f``.  The transformed adjoint
    solution is ``w~ / Theta~`` where ``w~`` solves the magnetic problem for
    ``(conj(A~), Q)`` with trace ``Theta f``; the claim is
    ``V0~ = (Theta / Theta~) e^{-i phi} V0``.  Both residuals are relative
    interior maxima.
    """
    grid = mag.grid
    phi = np.asarray(phi, dtype=complex)
    f = np.asarray(f, dtype=complex)
    theta = mag.Theta
    theta_t = theta if theta_tilde is None else np.asarray(theta_tilde)
    px, py = gradient(phi, grid)
    At = (mag.A[0] - px, mag.A[1] - py)
    inner = (slice(1, -1), slice(1, -1))

    v = elliptic.solve_dirichlet(linops.magnetic_problem(grid, mag.A, mag.Q, trace=f), tol=tol)
    vt = elliptic.solve_dirichlet(linops.magnetic_problem(grid, At, mag.Q, trace=np.exp(1j * grid.boundary_values(phi)) * f), tol=tol)
    r1 = np.max(np.abs(vt - np.exp(1j * phi) * v)[inner]) / np.max(np.abs(v))

    V0 = elliptic.solve_dirichlet(L_adj.with_data(rhs=np.zeros(grid.shape, dtype=complex), trace=f), tol=tol)
    trace_t = grid.boundary_values(theta) * np.exp(-1j * grid.boundary_values(phi)) * f
    wt = elliptic.solve_dirichlet(linops.magnetic_problem(grid, (np.conj(At[0]), np.conj(At[1])), mag.Q, trace=trace_t), tol=tol)
    Vt = wt / theta_t
    r2 = np.max(np.abs(Vt - (theta / theta_t) * np.exp(-1j * phi) * V0)[inner]) / np.max(np.abs(V0))
    return RelationReport(float(r1), float(r2))
