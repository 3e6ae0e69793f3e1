"""
Newton solver for ``div((sigma + q u) grad u) = F`` with Dirichlet data,
well-posedness checks and the closed-form manufactured solution.

The discrete residual is the expanded, non-conservative form
``Theta lap_h u + grad_h Theta . grad_h u - F`` with ``Theta = sigma + q u``.
The Newton matrix is its exact derivative, which is a second-order
discretization of ``div(Theta grad v) + q grad u . grad v + div(q grad u) v``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import elliptic
from .mesh import GridSpec, check_field, divergence_form, gradient, laplacian

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 50


class ForwardError(RuntimeError):
    """Newton iteration failed; carries the residual history."""

    def __init__(self, message: str, history=(), node=None):
        super().__init__(message)
        self.history = list(history)
        self.node = node


class EllipticityError(ForwardError):
    pass


@dataclass(frozen=True, eq=False)
class CoefficientSet:
    """``(sigma, q, F, f0)`` for one quasilinear problem on ``grid``."""

    grid: GridSpec
    sigma: np.ndarray
    q: np.ndarray
    F: np.ndarray
    f0: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        for name in ("sigma", "q", "F"):
            check_field(getattr(self, name), self.grid)

    def replace(self, **changes) -> "CoefficientSet":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class ForwardSolution:
    u0: np.ndarray
    newton_iters: int
    final_residual: float
    history: list = field(default_factory=list)
    linearization: tuple = ()  # (a, (bx, by), c) frozen at u0


def make_set(grid: GridSpec, sigma, q, F, f0=0.0, name="custom") -> CoefficientSet:
    """Build a set from scalars, arrays or callables ``g(x, y)``."""

    def field_of(v):
        if callable(v):
            return grid.sample(v).astype(float)
        return np.zeros(grid.shape) + v

    if callable(f0):
        pts = grid.boundary_points
        f0 = np.asarray(f0(pts[:, 0], pts[:, 1]), dtype=float) + np.zeros(grid.num_boundary)
    else:
        f0 = np.zeros(grid.num_boundary) + np.asarray(f0, dtype=float)
    return CoefficientSet(grid, field_of(sigma), field_of(q), field_of(F), f0, name)


# --------------------------------------------------------------------------
# residual and Jacobian


def quasilinear_operator(sigma, q, u, grid: GridSpec) -> np.ndarray:
    """Discrete ``div((sigma + q u) grad u)``; meaningful on interior nodes."""
    theta = sigma + q * u
    tx, ty = gradient(theta, grid)
    ux, uy = gradient(u, grid)
    return theta * laplacian(u, grid) + tx * ux + ty * uy


def residual(cset: CoefficientSet, u: np.ndarray) -> np.ndarray:
    """Interior residual ``Psi(u)``; boundary entries are zero."""
    r = np.zeros(cset.grid.shape, dtype=np.result_type(u, float))
    r[1:-1, 1:-1] = (quasilinear_operator(cset.sigma, cset.q, u, cset.grid) - cset.F)[1:-1, 1:-1]
    return r


def jacobian(cset: CoefficientSet, u: np.ndarray):
    """Exact derivative of :func:`residual` at ``u`` (interior rows, all columns)."""
    grid = cset.grid
    h = grid.h
    q = cset.q
    theta = cset.sigma + q * u
    tx, ty = gradient(theta, grid)
    ux, uy = gradient(u, grid)
    lap_u = laplacian(u, grid)
    q_e, q_w = np.roll(q, -1, axis=0), np.roll(q, 1, axis=0)
    q_n, q_s = np.roll(q, -1, axis=1), np.roll(q, 1, axis=1)
    h2 = h * h
    coeffs = {
        (1, 0): theta / h2 + (tx + ux * q_e) / (2 * h),
        (-1, 0): theta / h2 - (tx + ux * q_w) / (2 * h),
        (0, 1): theta / h2 + (ty + uy * q_n) / (2 * h),
        (0, -1): theta / h2 - (ty + uy * q_s) / (2 * h),
        (0, 0): -4.0 * theta / h2 + q * lap_u,
    }
    return elliptic.stencil_matrix(grid, coeffs)


def _interior_max(r):
    return float(np.max(np.abs(r[1:-1, 1:-1]))) if r.size else 0.0


def _check_ellipticity(cset, u, floor=0.0):
    theta = cset.sigma + cset.q * u
    k = np.argmin(theta)
    if theta.flat[k] <= floor:
        i, j = np.unravel_index(k, theta.shape)
        raise EllipticityError(
            f"ellipticity lost: sigma + q u = {theta.flat[k]:.3e} at node ({i}, {j}) "
            f"= ({i * cset.grid.h:.4f}, {j * cset.grid.h:.4f})",
            node=(int(i), int(j)),
        )


def linear_guess(cset: CoefficientSet, f) -> np.ndarray:
    """Solution of ``div(sigma grad u) = F`` with trace ``f``."""
    prob = elliptic.make_problem(cset.grid, a=cset.sigma, rhs=cset.F, trace=f)
    return np.real(elliptic.solve_dirichlet(prob, tol=1e-12))


def frozen_coefficients(cset: CoefficientSet, u0: np.ndarray):
    """``(sigma + q u0, q grad u0, div(q grad u0))`` -- the triple of the linearized operator."""
    grid = cset.grid
    ux, uy = gradient(u0, grid)
    return (cset.sigma + cset.q * u0, (cset.q * ux, cset.q * uy), divergence_form(cset.q, u0, grid))


def solve_quasilinear(
    cset: CoefficientSet,
    f=None,
    guess=None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> ForwardSolution:
    """Damped Newton iteration for the quasilinear Dirichlet problem.

    Parameters
    ----------
    cset : CoefficientSet
    f : array, optional
        Boundary trace; defaults to ``cset.f0``.
    guess : array, optional
        Initial iterate; its boundary values are overwritten by ``f``.
        Defaults to the solution of the linear problem with coefficient sigma.
    tol : float
        Stop once the interior max-norm of the residual is below ``tol``.
    max_iter : int
        Newton step budget.
    """
    grid = cset.grid
    f = cset.f0 if f is None else np.asarray(f, dtype=float)
    u = linear_guess(cset, f) if guess is None else grid.with_boundary(np.real(guess), f)
    u = np.asarray(u, dtype=float)
    _check_ellipticity(cset, u)

    inner = grid.interior_mask.ravel()
    r = residual(cset, u)
    rnorm = _interior_max(r)
    history = [rnorm]
    it = 0
    while rnorm > tol:
        if it >= max_iter:
            raise ForwardError(
                f"Newton did not converge in {max_iter} iterations (residual {rnorm:.3e})",
                history,
            )
        J = jacobian(cset, u)[:, inner]
        step, _ = elliptic.solve_linear_system(J, -r[1:-1, 1:-1].ravel(), tol=1e-12)
        du = np.zeros(grid.shape)
        du[1:-1, 1:-1] = step.reshape(grid.n - 2, grid.n - 2)
        # half-step damping while the residual grows or ellipticity is lost
        lam = 1.0
        while True:
            trial = u + lam * du
            if np.min(cset.sigma + cset.q * trial) > 0:
                r = residual(cset, trial)
                if _interior_max(r) < rnorm or lam < 1e-6:
                    break
            elif lam < 1e-6:
                break
            lam *= 0.5
        u = trial
        _check_ellipticity(cset, u)
        rnorm = _interior_max(r)
        history.append(rnorm)
        it += 1
        log.debug("newton %d: residual %.3e (step %.3g)", it, rnorm, lam)

    return ForwardSolution(
        u0=u,
        newton_iters=it,
        final_residual=rnorm,
        history=history,
        linearization=frozen_coefficients(cset, u),
    )


# --------------------------------------------------------------------------
# manufactured solution and presets


def manufactured_solution(grid: GridSpec, choice: str = "square_poly"):
    """Exact solution for ``sigma = q = 1`` built from a quadratic ``w``.

    With ``w = x(1-x) + y(1-y)`` we have ``lap w = -4`` and ``w >= 0``, and
    ``u0 = -1 + sqrt(1 + 2w)`` solves ``div((1 + u) grad u) = lap w``.
    Returns ``(CoefficientSet, exact_u0)``.
    """
    if choice != "square_poly":
        raise ValueError(f"unknown manufactured solution {choice!r}")
    X, Y = grid.X, grid.Y
    w = X * (1 - X) + Y * (1 - Y)
    u_exact = -1.0 + np.sqrt(1.0 + 2.0 * w)
    cset = CoefficientSet(
        grid=grid,
        sigma=np.ones(grid.shape),
        q=np.ones(grid.shape),
        F=np.full(grid.shape, -4.0),
        f0=grid.boundary_values(u_exact).copy(),
        name="manufactured",
    )
    return cset, u_exact


PRESETS = ("manufactured", "affine", "affine_source", "constant", "linear")


def preset(name: str, grid: GridSpec) -> CoefficientSet:
    """Named analytic coefficient sets used by the CLI and the experiments.

    ``manufactured``  sigma = q = 1, F = -4, f0 from the exact solution
    ``affine``        sigma = 2 + x, q = 1, F = 0, f0 = 0 (so u0 = 0)
    ``affine_source`` sigma = 2 + x, q = 1, F = -1, f0 = 0
    ``constant``      sigma = 2, q = 1, F = -1, f0 = 0
    ``linear``        sigma = 1 + x/2, q = 0, F = -1, f0 = 0
    """
    if name == "manufactured":
        return manufactured_solution(grid)[0]
    if name == "affine":
        return make_set(grid, lambda x, y: 2.0 + x, 1.0, 0.0, 0.0, name)
    if name == "affine_source":
        return make_set(grid, lambda x, y: 2.0 + x, 1.0, -1.0, 0.0, name)
    if name == "constant":
        return make_set(grid, 2.0, 1.0, -1.0, 0.0, name)
    if name == "linear":
        return make_set(grid, lambda x, y: 1.0 + 0.5 * x, 0.0, -1.0, 0.0, name)
    raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


# --------------------------------------------------------------------------
# well-posedness conditions


@dataclass(frozen=True)
class ConditionReport:
    ellipticity_margin: float  # min (sigma + q u0)
    sign_margin: float  # max div(q grad u0)
    nondegeneracy_margin: float  # min |q|
    structural_margin: float  # min |grad(sigma/q)|
    sign_slack: float
    ellipticity: bool
    sign: bool
    nondegeneracy: bool
    structural: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def check_conditions(cset: CoefficientSet, u0: np.ndarray) -> ConditionReport:
    """Evaluate the four structural conditions on every grid node.

    The sign condition is tested with slack ``10 h^2`` to absorb
    discretization noise.
    """
    grid = cset.grid
    theta = cset.sigma + cset.q * u0
    ell = float(np.min(theta))
    sign = float(np.max(np.real(divergence_form(cset.q, u0, grid))))
    slack = 10.0 * grid.h**2
    absq = np.abs(cset.q)
    nondeg = float(np.min(absq))
    if nondeg > 0.0:
        gx, gy = gradient(cset.sigma / cset.q, grid)
        struct = float(np.min(np.hypot(gx, gy)))
    else:
        struct = 0.0
    return ConditionReport(
        ellipticity_margin=ell,
        sign_margin=sign,
        nondegeneracy_margin=nondeg,
        structural_margin=struct,
        sign_slack=slack,
        ellipticity=ell > 0.0,
        sign=sign <= slack,
        nondegeneracy=nondeg > 0.0,
        structural=struct > 0.0,
    )
