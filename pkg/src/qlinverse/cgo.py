"""
Complex geometric optics solutions of ``L* V0 = 0`` and the probes built on them.

``V0 = exp(zeta . x + phi)(1 + r)`` with ``zeta . zeta = 0``.  The phase
``phi`` solves the transport equation ``zeta . grad phi = zeta . Z / 2``,
a d-bar type equation in the frame ``(d, d_perp)``, inverted spectrally on a
periodic box after smooth extension and cutoff.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import RectBivariateSpline

from . import elliptic, linops
from .forward import CoefficientSet
from .mesh import GridError, GridSpec, divergence_form, gradient

RESOLUTION_LIMIT = 1.5  # max tau * h
CUTOFF_WIDTH = 0.1  # 1.2-dilation of the unit square
PROBE_MARGIN = 0.25


class ResolutionError(ValueError):
    pass


@dataclass(frozen=True)
class ComplexFrequency:
    zeta: tuple[complex, complex]
    tau: float
    d: tuple[float, float]
    d_perp: tuple[float, float]

    @property
    def zeta_hat(self) -> np.ndarray:
        return np.asarray(self.zeta) / self.tau

    def dot(self, vx, vy):
        """Bilinear ``zeta . v``."""
        return self.zeta[0] * vx + self.zeta[1] * vy

    def phase(self, grid: GridSpec) -> np.ndarray:
        return self.dot(grid.X, grid.Y)


def make_frequency(d, tau: float) -> ComplexFrequency:
    """``zeta = (tau / sqrt 2)(d + i d_perp)`` with ``d_perp`` = ``d`` turned by +90 degrees."""
    d = np.asarray(d, dtype=float)
    norm = float(np.hypot(*d))
    if norm == 0.0:
        raise ValueError("direction d must be nonzero")
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    d = d / norm
    dp = np.array([-d[1], d[0]])
    z = tau / np.sqrt(2.0) * (d + 1j * dp)
    return ComplexFrequency((complex(z[0]), complex(z[1])), float(tau), (d[0], d[1]), (dp[0], dp[1]))


# --------------------------------------------------------------------------
# transport equation


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def _extend_axis(g: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """Pad axis 0 by ``lo``/``hi`` nodes with the C^2 reflection ``6g(t) - 8g(2t) + 3g(3t)``.

    Nodes farther than a third of the grid are filled with zero; the cutoff
    removes them anyway.
    """
    n = g.shape[0]
    out = np.zeros((lo + n + hi,) + g.shape[1:], dtype=g.dtype)
    out[lo : lo + n] = g
    for k in range(1, max(lo, hi) + 1):
        if 3 * k > n - 1:
            break
        if k <= lo:
            out[lo - k] = 6 * g[k] - 8 * g[2 * k] + 3 * g[3 * k]
        if k <= hi:
            out[lo + n - 1 + k] = 6 * g[n - 1 - k] - 8 * g[n - 1 - 2 * k] + 3 * g[n - 1 - 3 * k]
    return out


def _box(grid: GridSpec):
    """Periodic box of length 2 with spacing h, holding the unit square at offset ``lo``."""
    m = grid.n - 1
    N = 2 * m
    lo = m // 2
    hi = N - lo - grid.n
    t = (np.arange(N) - lo) * grid.h
    return N, lo, hi, t


def extend_to_box(g: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Smooth extension of ``g`` times a C^2 cutoff, with zero box mean."""
    N, lo, hi, t = _box(grid)
    ext = _extend_axis(_extend_axis(g, lo, hi).swapaxes(0, 1), lo, hi).swapaxes(0, 1)
    dist = np.maximum(np.maximum(-t, t - 1.0), 0.0)
    chi1 = _smoothstep(1.0 - dist / CUTOFF_WIDTH)
    G = ext * np.outer(chi1, chi1)
    # compensate the mean with a bump at the box corner, outside the dilation
    s = np.minimum(np.abs(t - t[0]), np.abs(t - (t[0] + 2.0)))
    b1 = np.where(s < 0.35, (1.0 - (s / 0.35) ** 2) ** 3, 0.0)
    bump = np.outer(b1, b1)
    G = G - bump * (G.sum() / bump.sum())
    if not np.all(np.isfinite(G)):
        raise FloatingPointError("non-finite values in the extended transport source")
    return G


def transport_source(mag: linops.MagneticData, freq: ComplexFrequency) -> np.ndarray:
    """``(d + i d_perp) . Z / 2``, the right side in the rotated frame."""
    (dx, dy), (px, py) = freq.d, freq.d_perp
    Zx, Zy = mag.Z
    return 0.5 * ((dx + 1j * px) * Zx + (dy + 1j * py) * Zy)


def solve_transport(mag: linops.MagneticData, freq: ComplexFrequency) -> np.ndarray:
    """Phase ``phi`` with ``(d_d + i d_{d_perp}) phi = (d + i d_perp) . Z / 2`` on the square.

    The zero mode of the periodic solution is set to zero.
    """
    grid = mag.grid
    G = extend_to_box(transport_source(mag, freq), grid)
    N, lo, _, _ = _box(grid)
    k = 2.0 * np.pi * np.fft.fftfreq(N, d=grid.h)
    KX, KY = np.meshgrid(k, k, indexing="ij")
    (dx, dy), (px, py) = freq.d, freq.d_perp
    symbol = 1j * (KX * dx + KY * dy) - (KX * px + KY * py)
    Ghat = np.fft.fft2(G)
    symbol[0, 0] = 1.0
    phat = Ghat / symbol
    phat[0, 0] = 0.0
    phi = np.fft.ifft2(phat)
    return phi[lo : lo + grid.n, lo : lo + grid.n]


def transport_residual(mag: linops.MagneticData, freq: ComplexFrequency, phi: np.ndarray) -> float:
    """``max |zeta . grad phi - zeta . Z / 2| / tau`` with FD gradients."""
    px, py = gradient(phi, mag.grid)
    lhs = freq.dot(px, py)
    rhs = 0.5 * freq.dot(*mag.Z)
    tau = freq.tau if freq.tau > 0 else 1.0
    return float(np.max(np.abs(lhs - rhs)) / tau)


# --------------------------------------------------------------------------
# CGO solutions


@dataclass(frozen=True, eq=False)
class CGOSolution:
    freq: ComplexFrequency
    phase: np.ndarray
    V0: np.ndarray
    remainder: np.ndarray
    transport_residual: float
    solve_residual: float  # interior max |L* V0| / max |V0|
    remainder_sup: float  # on [0.25, 0.75]^2


def _subsquare(grid: GridSpec, lo=0.25, hi=0.75):
    c = grid.coords
    sel = (c >= lo - 1e-12) & (c <= hi + 1e-12)
    return np.ix_(sel, sel)


def build_cgo(
    cset: CoefficientSet, u0: np.ndarray, freq: ComplexFrequency, phase=None, tol: float = elliptic.DEFAULT_TOL
) -> CGOSolution:
    """Solve ``L* V0 = 0`` with trace ``exp(zeta . x + phi)`` and split off the remainder."""
    grid = cset.grid
    if freq.tau * grid.h > RESOLUTION_LIMIT:
        raise ResolutionError(
            f"tau*h = {freq.tau * grid.h:.3f} exceeds {RESOLUTION_LIMIT}; refine the grid or lower tau"
        )
    mag = linops.build_magnetic(cset, u0)
    if phase is None:
        phase = solve_transport(mag, freq)
    _, Lstar = linops.build_linearized(cset, u0)
    ansatz = np.exp(freq.phase(grid) + phase)
    problem = Lstar.with_data(rhs=np.zeros(grid.shape, dtype=complex), trace=grid.boundary_values(ansatz))
    V0 = elliptic.solve_dirichlet(problem, tol=tol)
    res = elliptic.apply_operator(problem, V0)
    remainder = V0 / ansatz - 1.0
    return CGOSolution(
        freq=freq,
        phase=phase,
        V0=V0,
        remainder=remainder,
        transport_residual=transport_residual(mag, freq, phase),
        solve_residual=float(np.max(np.abs(res)) / np.max(np.abs(V0))),
        remainder_sup=float(np.max(np.abs(remainder[_subsquare(grid)]))),
    )


def _probe_node(grid: GridSpec, x0):
    x, y = x0
    if min(x, y, 1 - x, 1 - y) < PROBE_MARGIN - 1e-12:
        raise GridError(f"probe point {x0} is closer than {PROBE_MARGIN} to the boundary")
    return grid.node_index(x, y)


def nonvanishing_probe(sol: CGOSolution, cset: CoefficientSet, u0, x0) -> complex:
    """``D(tau) = exp(-(zeta . x0 + phi(x0))) div(q grad V0)(x0) / tau``."""
    grid = cset.grid
    i, j = _probe_node(grid, x0)
    div = divergence_form(cset.q, sol.V0, grid)[i, j]
    z = sol.freq.dot(grid.coords[i], grid.coords[j]) + sol.phase[i, j]
    return complex(np.exp(-z) * div / sol.freq.tau)


def predicted_limit(cset: CoefficientSet, u0, freq: ComplexFrequency, x0) -> complex:
    """``P = (q Z + grad q) . zeta_hat`` at ``x0``."""
    grid = cset.grid
    i, j = _probe_node(grid, x0)
    mag = linops.build_magnetic(cset, u0)
    qx, qy = gradient(cset.q, grid)
    q = cset.q[i, j]
    zh = freq.zeta_hat
    return complex((q * mag.Z[0][i, j] + qx[i, j]) * zh[0] + (q * mag.Z[1][i, j] + qy[i, j]) * zh[1])


@dataclass(frozen=True)
class ProbeRow:
    tau: float
    D: complex
    P: complex
    remainder_sup: float
    transport_residual: float

    @property
    def error(self) -> float:
        return abs(self.D - self.P)


def probe_sweep(cset, u0, x0, taus, d=(1.0, 0.0), tol=elliptic.DEFAULT_TOL) -> list[ProbeRow]:
    """``D(tau)`` against ``P`` for each resolved ``tau``; unresolved values are skipped."""
    grid = cset.grid
    mag = linops.build_magnetic(cset, u0)
    rows = []
    for tau in taus:
        if tau * grid.h > RESOLUTION_LIMIT:
            continue
        freq = make_frequency(d, tau)
        sol = build_cgo(cset, u0, freq, solve_transport(mag, freq), tol=tol)
        rows.append(
            ProbeRow(
                tau, nonvanishing_probe(sol, cset, u0, x0), predicted_limit(cset, u0, freq, x0),
                sol.remainder_sup, sol.transport_residual,
            )
        )
    return rows


# --------------------------------------------------------------------------
# stationary phase


def smooth_cutoff(r, r0: float, r1: float):
    """C-infinity radial cutoff: 1 for ``r <= r0``, 0 for ``r >= r1``."""
    t = np.clip((np.asarray(r, dtype=float) - r0) / (r1 - r0), 0.0, 1.0)

    def e(s):
        with np.errstate(divide="ignore"):
            return np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)

    return e(1.0 - t) / (e(1.0 - t) + e(t))


def _support_radius(z0) -> float:
    x0, y0 = z0
    return float(min(x0, y0, 1 - x0, 1 - y0))


def gaussian_bump(z0, width: float = 0.15, support: float | None = None):
    """Gaussian at ``z0`` cut off smoothly between ``support/2`` and ``support``.

    ``support`` defaults to the distance from ``z0`` to the boundary.
    """
    x0, y0 = z0
    R = _support_radius(z0) if support is None else support

    def f(x, y):
        r = np.hypot(x - x0, y - y0)
        return np.exp(-0.5 * (r / width) ** 2) * smooth_cutoff(r, 0.5 * R, R)

    return f


def ring_bump(z0, radius: float = 0.25, width: float = 0.05, support: float | None = None):
    """Gaussian ring around ``z0``; identically zero within 0.02 of ``z0``."""
    x0, y0 = z0
    R = _support_radius(z0) if support is None else support

    def f(x, y):
        r = np.hypot(x - x0, y - y0)
        ring = np.exp(-0.5 * ((r - radius) / width) ** 2)
        return ring * (1.0 - smooth_cutoff(r, 0.02, 0.06)) * smooth_cutoff(r, 0.8 * R, R)

    return f


def oscillatory_integral(f, z0, hp: float, radius: float | None = None, order: int = 16, panels=None) -> complex:
    """``int f exp((Phi - conj Phi)/h')`` for ``Phi = (z - z0)^2`` by tensor Gauss-Legendre.

    ``Phi - conj Phi = 4 i (x - x0)(y - y0)``.  ``f`` must vanish outside the
    square of half-width ``radius`` (default: distance to the boundary)
    around ``z0``.  Panels are sized so each spans at most ~1.3 local
    wavelengths.
    """
    x0, y0 = z0
    radius = _support_radius(z0) if radius is None else radius
    if panels is None:
        panels = max(16, int(np.ceil(4.0 * radius * radius / (3.0 * hp))))
    nodes, weights = leggauss(order)
    edges = np.linspace(-radius, radius, panels + 1)
    half = 0.5 * (edges[1] - edges[0])
    mid = 0.5 * (edges[1:] + edges[:-1])
    s = (mid[:, None] + half * nodes[None, :]).ravel()
    w = np.tile(half * weights, panels)
    SX, SY = np.meshgrid(s, s, indexing="ij")
    vals = f(x0 + SX, y0 + SY) * np.exp(4j * SX * SY / hp)
    return complex(w @ vals @ w)


def calibrate_constant(width: float = 0.15, z0=(0.5, 0.5), h_pair=(1 / 256, 1 / 512)) -> float:
    """Limit of ``I(h') / (h' f(z0))`` from a Gaussian reference, Richardson-extrapolated in ``h'^2``.

    The ``h'^2`` rate holds for radial references, whose mixed second
    derivative vanishes at ``z0``.
    """
    f = gaussian_bump(z0, width)
    a, b = h_pair
    ia = np.real(oscillatory_integral(f, z0, a)) / a
    ib = np.real(oscillatory_integral(f, z0, b)) / b
    ratio = (a / b) ** 2
    return float((ratio * ib - ia) / (ratio - 1.0)) / float(f(*z0))


@dataclass(frozen=True)
class StationaryPhaseReport:
    h_list: tuple
    scaled: tuple  # I(h') / h'
    ratios: tuple  # successive scaled values
    constant: float
    target: complex  # c f(z0)
    rel_errors: tuple  # |I/h' - c f(z0)| / |c f(z0)| (absolute when the target vanishes)


def stationary_phase_probe(f, z0, h_list, grid: GridSpec | None = None, constant: float | None = None):
    """Scaled oscillatory integrals ``I(h')/h'`` and their approach to ``c f(z0)``.

    ``f`` is a callable ``f(x, y)`` or a grid function on ``grid`` (then
    interpolated bicubically and multiplied by a cutoff supported in the
    probe disc).  ``c`` is calibrated by :func:`calibrate_constant` unless
    given.
    """
    x0, y0 = z0
    if min(x0, y0, 1 - x0, 1 - y0) < PROBE_MARGIN - 1e-12:
        raise GridError(f"z0 = {z0} is closer than {PROBE_MARGIN} to the boundary")
    if not callable(f):
        if grid is None:
            raise ValueError("a grid function needs its grid")
        spline = RectBivariateSpline(grid.coords, grid.coords, np.real(np.asarray(f)), kx=3, ky=3)
        R = _support_radius(z0)
        f = lambda x, y, s=spline: s.ev(x, y) * smooth_cutoff(np.hypot(x - x0, y - y0), 0.5 * R, R)  # noqa: E731
    c = calibrate_constant() if constant is None else constant
    scaled = tuple(oscillatory_integral(f, z0, hp) / hp for hp in h_list)
    ratios = tuple(scaled[k + 1] / scaled[k] if scaled[k] != 0 else np.nan for k in range(len(scaled) - 1))
    target = c * complex(f(x0, y0))
    denom = abs(target) if target != 0 else 1.0
    errs = tuple(abs(v - target) / denom for v in scaled)
    return StationaryPhaseReport(tuple(h_list), scaled, ratios, c, target, errs)
