"""
Deterministic recovery steps: boundary determination of sigma, the B = 1 and
A = 1 verifications, the coupled-system residual, and the end-to-end
discrimination harness.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import cgo, dnmap, elliptic, forward, linops
from .forward import CoefficientSet
from .mesh import divergence, gradient

DELTA = 1e-6  # probe degeneracy threshold
CERTIFICATE_FACTOR = 0.5
PROBE_COORDS = (0.3, 0.5, 0.7)


def probe_points(grid, coords=PROBE_COORDS) -> tuple:
    """The 3x3 probe grid snapped to the nearest grid nodes."""
    snapped = [round(c / grid.h) * grid.h for c in coords]
    return tuple((x, y) for x in snapped for y in snapped)


# --------------------------------------------------------------------------
# boundary determination


@dataclass(frozen=True)
class BoundaryNode:
    index: int  # boundary enumeration index
    point: tuple[float, float]
    sigma_hat: complex
    grad_sigma_hat: tuple[complex, complex]
    margin: float  # |A - A_check|
    status: str  # determined | indeterminate


@dataclass(frozen=True)
class BoundaryReport:
    nodes: tuple[BoundaryNode, ...]
    delta: float

    @property
    def determined(self):
        return [nd for nd in self.nodes if nd.status == "determined"]

    @property
    def indeterminate(self):
        return [nd for nd in self.nodes if nd.status == "indeterminate"]

    @property
    def max_sigma_hat(self) -> float:
        vals = [abs(nd.sigma_hat) for nd in self.determined]
        return max(vals) if vals else float("nan")

    @property
    def max_grad_sigma_hat(self) -> float:
        vals = [max(abs(nd.grad_sigma_hat[0]), abs(nd.grad_sigma_hat[1])) for nd in self.determined]
        return max(vals) if vals else float("nan")


def _jet_data(cset: CoefficientSet, u: np.ndarray):
    """``A`` and ``G = 2i q u A - 2 q grad u - u grad q`` so that ``grad sigma - 2i A sigma = G``."""
    mag = linops.build_magnetic(cset, u)
    ux, uy = gradient(u, cset.grid)
    qx, qy = gradient(cset.q, cset.grid)
    Ax, Ay = mag.A
    q = cset.q
    Gx = 2j * q * u * Ax - 2 * q * ux - u * qx
    Gy = 2j * q * u * Ay - 2 * q * uy - u * qy
    return (Ax, Ay), (Gx, Gy)


def boundary_sigma_determination(
    setA: CoefficientSet, setB: CoefficientSet, f_check=None, amplitude: float = 0.5, tol: float = forward.DEFAULT_TOL
) -> BoundaryReport:
    """Recover ``sigma_hat = sigma_A - sigma_B`` and its gradient at every non-corner boundary node.

    Each set obeys ``grad sigma - 2i A sigma = G`` for every background.
    Subtracting the two sets at the backgrounds from ``f0`` and ``f_check``
    (default ``f0 + amplitude * sin1``) gives a 4x3 complex system for
    ``(sigma_hat, grad sigma_hat)`` per node, solved by least squares.  A node
    whose backgrounds give ``|A - A_check| <= DELTA`` is indeterminate.
    """
    grid = setA.grid
    if f_check is None:
        basis = dnmap.fourier_basis(grid, k_max=1)
        f_check = setA.f0 + amplitude * basis[basis.index("sin1")]
    fields = []
    for f in (setA.f0, np.asarray(f_check)):
        uA = forward.solve_quasilinear(setA, f=f, tol=tol).u0
        uB = forward.solve_quasilinear(setB, f=f, tol=tol).u0
        (AA, GA), (AB, GB) = _jet_data(setA, uA), _jet_data(setB, uB)
        rho = tuple(GA[k] - GB[k] + 2j * setB.sigma * (AA[k] - AB[k]) for k in range(2))
        fields.append((AA, rho))

    (A1, r1), (A2, r2) = fields
    nodes = []
    for k in grid.non_corner:
        i, j = grid.boundary_nodes[k]
        a1 = np.array([A1[0][i, j], A1[1][i, j]])
        a2 = np.array([A2[0][i, j], A2[1][i, j]])
        margin = float(np.max(np.abs(a1 - a2)))
        if margin <= DELTA:
            nodes.append(BoundaryNode(int(k), (i * grid.h, j * grid.h), np.nan, (np.nan, np.nan), margin, "indeterminate"))
            continue
        M = np.array(
            [
                [-2j * a1[0], 1, 0],
                [-2j * a1[1], 0, 1],
                [-2j * a2[0], 1, 0],
                [-2j * a2[1], 0, 1],
            ],
            dtype=complex,
        )
        b = np.array([r1[0][i, j], r1[1][i, j], r2[0][i, j], r2[1][i, j]])
        x = np.linalg.lstsq(M, b, rcond=None)[0]
        nodes.append(BoundaryNode(int(k), (i * grid.h, j * grid.h), complex(x[0]), (complex(x[1]), complex(x[2])), margin, "determined"))
    return BoundaryReport(tuple(nodes), DELTA)


# --------------------------------------------------------------------------
# B and A verifications


@dataclass(frozen=True)
class BReport:
    error: float  # max |B - 1|
    flags: tuple[str, ...]


def verify_B_recovery(q: np.ndarray, grid, trace=None, tol: float = elliptic.DEFAULT_TOL) -> BReport:
    """Solve ``div(q grad B) = 0`` with trace ``trace`` (default 1) and report ``max |B - 1|``."""
    q = np.asarray(q)
    if np.min(np.abs(q)) == 0.0:
        raise ValueError("verify_B_recovery needs q != 0 everywhere")
    flags = () if np.min(q) > 0 else ("q not positive: discrete maximum principle not guaranteed",)
    trace = np.ones(grid.num_boundary) if trace is None else np.asarray(trace)
    B = elliptic.solve_dirichlet(elliptic.make_problem(grid, a=q, trace=trace), tol=tol)
    return BReport(float(np.max(np.abs(B - 1.0))), flags)


@dataclass(frozen=True)
class Certificate:
    x0: tuple[float, float]
    tau: float
    D: complex
    P: complex
    certified: bool
    candidate_defect: float | None = None  # |A_candidate(x0) - 1| at certified points


@dataclass(frozen=True)
class AReport:
    certificates: tuple[Certificate, ...]
    tau: float
    structural_margin: float
    delta: float = DELTA
    factor: float = CERTIFICATE_FACTOR
    flags: tuple[str, ...] = ()

    @property
    def count(self) -> int:
        return sum(c.certified for c in self.certificates)

    @property
    def candidate_excluded(self) -> bool:
        """A candidate gauge differing from 1 at some certified point is ruled out."""
        return any(c.certified and c.candidate_defect is not None and c.candidate_defect > DELTA for c in self.certificates)


def verify_A_recovery(
    cset: CoefficientSet,
    u0: np.ndarray,
    x0_list=None,
    taus=(5.0, 10.0, 20.0),
    d=(1.0, 0.0),
    candidate=None,
    tol: float = elliptic.DEFAULT_TOL,
) -> AReport:
    """CGO certificates that ``(1 - A)(x0) = 0`` for any gauge candidate ``A``.

    At the largest resolved ``tau``, ``x0`` is certified iff ``|P(x0)| > DELTA``
    and ``|D(tau)| >= |P(x0)| / 2``.  ``candidate`` (a grid function, e.g.
    ``exp(2i phi)``) is evaluated at certified points.  ``x0_list`` defaults
    to :func:`probe_points`.
    """
    grid = cset.grid
    if x0_list is None:
        x0_list = probe_points(grid)
    cond = forward.check_conditions(cset, u0)
    flags = () if cond.structural else ("structural condition fails",)
    resolved = [t for t in taus if t * grid.h <= cgo.RESOLUTION_LIMIT]
    if not resolved:
        raise cgo.ResolutionError(f"no tau in {taus} is resolved at n = {grid.n}")
    tau = max(resolved)
    freq = cgo.make_frequency(d, tau)
    sol = cgo.build_cgo(cset, u0, freq, tol=tol)
    certs = []
    for x0 in x0_list:
        D = cgo.nonvanishing_probe(sol, cset, u0, x0)
        P = cgo.predicted_limit(cset, u0, freq, x0)
        ok = abs(P) > DELTA and abs(D) >= CERTIFICATE_FACTOR * abs(P)
        defect = None
        if candidate is not None:
            i, j = grid.node_index(*x0)
            defect = float(abs(candidate[i, j] - 1.0))
        certs.append(Certificate(tuple(x0), tau, D, P, bool(ok), defect))
    return AReport(tuple(certs), tau, cond.structural_margin, flags=flags)


# --------------------------------------------------------------------------
# coupled system


@dataclass(frozen=True, eq=False)
class SystemResidual:
    r1: np.ndarray  # -2i div(A - A~)
    r2: np.ndarray  # Q - Q~
    M: np.ndarray  # (2, 2, n, n)
    detM: np.ndarray
    det_identity_gap: float  # max |detM + q / Theta^2|
    floor: float

    def norms(self) -> tuple[float, float]:
        inner = (slice(1, -1), slice(1, -1))
        return float(np.max(np.abs(self.r1[inner]))), float(np.max(np.abs(self.r2[inner])))


def system_residual(setA: CoefficientSet, uA: np.ndarray, setB: CoefficientSet, uB: np.ndarray) -> SystemResidual:
    """Rows ``r1 = -2i div(A - A~)``, ``r2 = Q - Q~`` and the matrix ``M`` of ``setA``.

    ``floor`` is ``64 eps`` times the size of the terms being subtracted.
    """
    grid = setA.grid
    ma, mb = linops.build_magnetic(setA, uA), linops.build_magnetic(setB, uB)
    divA = divergence(ma.A[0], ma.A[1], grid)
    divB = divergence(mb.A[0], mb.A[1], grid)
    r1 = -2j * (divA - divB)
    r2 = ma.Q - mb.Q
    theta, q = ma.Theta, setA.q
    M = np.array([[1.0 / theta, q / theta], [1.0 / (2 * theta), -q / (2 * theta)]])
    detM = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    scale = max(1.0, float(np.max(np.abs(divA))), float(np.max(np.abs(ma.Q))))
    gap = float(np.max(np.abs(detM + q / theta**2)))
    return SystemResidual(r1, r2, M, detM, gap, 64 * np.finfo(float).eps * scale)


# --------------------------------------------------------------------------
# discrimination harness


@dataclass(frozen=True)
class UniquenessRow:
    label: str
    margins: dict  # order -> (max gap, mode label)
    floors: dict  # order -> floor
    verdict: str  # indistinguishable | discriminated | inconclusive
    order: int | None = None
    mode: str | None = None


def uniqueness_experiment(
    setA: CoefficientSet,
    setB: CoefficientSet,
    label: str = "pair",
    modes=("const", "cos1", "sin1", "cos2", "sin2"),
    pairs=(("cos1", "cos1"), ("cos1", "sin1")),
    eps: float = dnmap.DEFAULT_EPS,
    tol: float = forward.DEFAULT_TOL,
) -> UniquenessRow:
    """Compare DN data of orders 0-2 and classify the pair.

    All margins at or below their floors: indistinguishable at resolution.
    Any margin above ``10 x`` floor: discriminated, with the first such order
    and mode.  Otherwise inconclusive.
    """
    grid = setA.grid
    basis = dnmap.fourier_basis(grid)
    idx = [basis.index(m) for m in modes]
    sub = dnmap.BoundaryBasis(grid, basis.modes[idx], tuple(modes), basis.k_max)
    margins, floors = {}, {}

    a0, b0 = dnmap.dn_matrix(setA, sub, tol=tol), dnmap.dn_matrix(setB, sub, tol=tol)
    gap0 = np.max(np.abs(a0.entries - b0.entries), axis=0)
    margins[0] = (float(gap0.max()), modes[int(gap0.argmax())])
    scale = max(1.0, float(np.max(np.abs(forward.solve_quasilinear(setA, tol=tol).u0))))
    for k in (0, 1, 2):
        floors[k] = dnmap.dn_floor(grid, tol, scale, order=k, eps=eps)

    a1 = dnmap.fd_linearize(setA, None, basis, 1, eps, modes=idx, tol=tol)
    b1 = dnmap.fd_linearize(setB, None, basis, 1, eps, modes=idx, tol=tol)
    gap1 = np.max(np.abs(a1.entries - b1.entries), axis=0)
    margins[1] = (float(gap1.max()), modes[int(gap1.argmax())])

    pidx = [(basis.index(p), basis.index(r)) for p, r in pairs]
    a2 = dnmap.fd_linearize(setA, None, basis, 2, eps, pairs=pidx, tol=tol)
    b2 = dnmap.fd_linearize(setB, None, basis, 2, eps, pairs=pidx, tol=tol)
    gap2 = [float(np.max(np.abs(a2.values[p] - b2.values[p]))) for p in pidx]
    k2 = int(np.argmax(gap2))
    margins[2] = (gap2[k2], "x".join(pairs[k2]))

    for k in (0, 1, 2):
        if margins[k][0] > dnmap.AGREEMENT_FACTOR * floors[k]:
            return UniquenessRow(label, margins, floors, "discriminated", k, margins[k][1])
    if all(margins[k][0] <= floors[k] for k in (0, 1, 2)):
        return UniquenessRow(label, margins, floors, "indistinguishable")
    return UniquenessRow(label, margins, floors, "inconclusive")


def example_table(n: int = 33, tol: float = forward.DEFAULT_TOL) -> list[UniquenessRow]:
    """The three reference pairs: identical, interior sigma bump, linear counterexample."""
    from .gauge import beta, build_linear_counterexample
    from .mesh import build_grid

    grid = build_grid(n)
    base = forward.make_set(grid, lambda x, y: 2.0 + x, 1.0, -1.0, 0.0, name="affine_source")
    bumped = base.replace(sigma=base.sigma + 0.01 * beta(grid) ** 2, name="affine_source+bump")
    pair = build_linear_counterexample(grid, lambda x, y: 2.0 + x, -1.0)
    return [
        uniqueness_experiment(base, base, "identical", tol=tol),
        uniqueness_experiment(base, bumped, "sigma bump", tol=tol),
        uniqueness_experiment(pair.base, pair.transformed, "linear counterexample", tol=tol),
    ]
