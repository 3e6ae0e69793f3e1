"""
Command-line front end.

    qlinverse <command> [options]

Commands: forward, dn, linearize, verify, gauge-demo, cgo-probe, recon.
Options may also come from a ``key = value`` config file (``--config``);
command-line flags win.  Each run writes ``report.txt`` and CSV files into
the output directory.  Exit status: 0 all verdicts pass, 1 some verdict
failed, 2 usage error.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import cgo, dnmap, forward, gauge, linops, recon
from .mesh import MIN_NODES, build_grid, read_field_csv, write_field_csv

log = logging.getLogger(__name__)

COMMANDS = ("forward", "dn", "linearize", "verify", "gauge-demo", "cgo-probe", "recon")
DEFAULT_PRESET = {
    "forward": "manufactured",
    "dn": "manufactured",
    "linearize": "manufactured",
    "verify": "manufactured",
    "gauge-demo": "affine_source",
    "cgo-probe": "affine",
    "recon": "affine_source",
}
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class RunConfig:
    command: str
    grid_n: int = 33
    eps: float = 1e-3
    tol: float = 1e-10
    tau_list: tuple = (5.0, 10.0, 20.0)
    seed: int = 7
    preset: str | None = None
    sigma_csv: str | None = None
    q_csv: str | None = None
    F_csv: str | None = None
    output_dir: str = "qlinverse-out"
    linear: bool = False

    def __post_init__(self):
        if self.preset is None:
            self.preset = DEFAULT_PRESET.get(self.command, "manufactured")


# --------------------------------------------------------------------------
# configuration


_CASTS = {
    "grid_n": int,
    "eps": float,
    "tol": float,
    "seed": int,
    "tau_list": lambda s: tuple(float(t) for t in str(s).replace(",", " ").split()),
    "preset": str,
    "sigma_csv": str,
    "q_csv": str,
    "F_csv": str,
    "output_dir": str,
    "linear": lambda s: str(s).strip().lower() in ("1", "true", "yes", "on"),
}


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qlinverse", description=__doc__.split("\n\n")[1])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="key = value file ([run] section or top level)")
    p.add_argument("--grid-n", dest="grid_n")
    p.add_argument("--eps")
    p.add_argument("--tol")
    p.add_argument("--tau-list", dest="tau_list", help="comma-separated")
    p.add_argument("--seed")
    p.add_argument("--preset", choices=forward.PRESETS)
    p.add_argument("--sigma-csv", dest="sigma_csv")
    p.add_argument("--q-csv", dest="q_csv")
    p.add_argument("--F-csv", dest="F_csv")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--linear", action="store_const", const="true", default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _read_config_file(path) -> dict:
    cp = configparser.ConfigParser()
    text = Path(path).read_text()
    if not text.lstrip().startswith("["):
        text = "[run]\n" + text
    cp.read_string(text)
    out = {}
    for section in cp.sections():
        for key, val in cp.items(section):
            out[key.replace("-", "_")] = val
    return out


def _validate(cfg: RunConfig) -> RunConfig:
    if cfg.command not in COMMANDS:
        raise ConfigError("command", f"unknown command {cfg.command!r}")
    if not MIN_NODES <= cfg.grid_n <= 513:
        raise ConfigError("grid_n", f"{cfg.grid_n} outside [{MIN_NODES}, 513]")
    lo, hi = dnmap.EPS_RANGE
    if not lo <= cfg.eps <= hi:
        raise ConfigError("eps", f"{cfg.eps:g} outside [{lo:g}, {hi:g}]")
    if not 0.0 < cfg.tol <= 1e-4:
        raise ConfigError("tol", f"{cfg.tol:g} outside (0, 1e-4]")
    if not cfg.tau_list or any(t <= 0 for t in cfg.tau_list):
        raise ConfigError("tau_list", "needs one or more positive values")
    if cfg.seed < 0:
        raise ConfigError("seed", "must be nonnegative")
    if cfg.preset not in forward.PRESETS:
        raise ConfigError("preset", f"unknown preset {cfg.preset!r}")
    return cfg


def parse_config(argv=None, file=None) -> RunConfig:
    """Merge defaults, an optional config file and command-line flags."""
    parser = _build_parser()
    args = parser.parse_args(argv)
    values: dict = {}
    path = file or args.config
    if path is not None:
        try:
            values.update(_read_config_file(path))
        except (OSError, configparser.Error) as exc:
            raise ConfigError("config", str(exc)) from exc
    for key in _CASTS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    values.pop("command", None)
    kwargs = {}
    for key, raw in values.items():
        if key not in _CASTS:
            raise ConfigError(key, "unknown configuration key")
        try:
            kwargs[key] = _CASTS[key](raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(key, f"cannot parse {raw!r}: {exc}") from exc
    return _validate(RunConfig(command=args.command, **kwargs))


# --------------------------------------------------------------------------
# report


@dataclass
class Report:
    metrics: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)  # name -> (status, value, threshold, note)
    provenance: dict = field(default_factory=dict)

    def metric(self, name, value):
        self.metrics[name] = value

    def check(self, name, value, threshold, kind="<=", note=""):
        ok = value <= threshold if kind == "<=" else value >= threshold
        self.verdicts[name] = ("PASS" if ok else "FAIL", value, threshold, f"{kind} {note}".strip())
        return ok

    def mark(self, name, status, note="", value=float("nan"), threshold=float("nan")):
        self.verdicts[name] = (status, value, threshold, note)

    @property
    def failed(self) -> bool:
        return any(v[0] == "FAIL" for v in self.verdicts.values())

    def to_text(self) -> str:
        lines = ["[metrics]"]
        for k, v in self.metrics.items():
            lines.append(f"{k} = {_fmt(v)}")
        lines.append("")
        lines.append("[verdicts]")
        for k, (status, value, thr, note) in self.verdicts.items():
            lines.append(f"{k} = {status} (value {_fmt(value)}, threshold {_fmt(thr)}{', ' + note if note else ''})")
        lines.append("")
        lines.append("[provenance]")
        for k, v in self.provenance.items():
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, complex):
        return f"{v.real:.17g}{v.imag:+.17g}j"
    try:
        return f"{float(v):.17g}"
    except (TypeError, ValueError):
        return str(v)


def _version() -> str:
    try:
        from importlib.metadata import version

        return version("artifact")
    except Exception:  # pragma: no cover - not installed
        return "unknown"


# --------------------------------------------------------------------------
# commands


def _coefficients(cfg: RunConfig, grid):
    cset = forward.preset(cfg.preset, grid)
    changes = {}
    for key, attr in (("sigma_csv", "sigma"), ("q_csv", "q"), ("F_csv", "F")):
        path = getattr(cfg, key)
        if path is None:
            continue
        try:
            values, g = read_field_csv(path)
        except (OSError, ValueError) as exc:
            raise ConfigError(key, str(exc)) from exc
        if g.n != grid.n:
            raise ConfigError(key, f"field has {g.n} nodes per side, grid_n is {grid.n}")
        changes[attr] = np.real(values)
    if changes:
        cset = cset.replace(name=f"{cset.name}+csv", **changes)
    return cset


def _cmd_forward(cfg, grid, cset, out: Path, rep: Report):
    sol = forward.solve_quasilinear(cset, tol=cfg.tol)
    rep.metric("newton_iters", sol.newton_iters)
    rep.metric("final_residual", sol.final_residual)
    rep.check("newton_converged", sol.final_residual, cfg.tol)
    cond = forward.check_conditions(cset, sol.u0)
    for k, v in cond.as_dict().items():
        rep.metric(f"condition_{k}", v)
    rep.check("ellipticity", cond.ellipticity_margin, 0.0, ">=")
    if cset.name == "manufactured":
        _, exact = forward.manufactured_solution(grid)
        rep.metric("error_inf", float(np.max(np.abs(sol.u0 - exact))))
    write_field_csv(out / "u0.csv", sol.u0, grid)


def _cmd_dn(cfg, grid, cset, out, rep):
    basis = dnmap.fourier_basis(grid)
    dn = dnmap.dn_matrix(cset, basis, tol=cfg.tol)
    dn.to_csv(out / "dn_matrix.csv")
    rep.metric("basis_size", len(basis))
    rep.metric("dn_floor", dn.floor)
    rep.metric("dn_max_abs", float(np.max(np.abs(dn.entries))))
    rep.check("dn_finite", float(np.all(np.isfinite(dn.entries))), 1.0, ">=")
    if not np.any(cset.q) and not np.any(cset.F):
        lin = dnmap.dn_matrix(cset, basis, f0=np.zeros(grid.num_boundary), tol=cfg.tol)
        rep.check("dn_symmetry", dnmap.dn_symmetry_gap(lin, basis), 2.0 * grid.h, note="C h with C = 2")


def _cmd_linearize(cfg, grid, cset, out, rep):
    basis = dnmap.fourier_basis(grid)
    modes = [m for m in basis.names if m == "const" or int(m[3:]) <= 4]
    fd = dnmap.fd_linearize(cset, None, basis, 1, cfg.eps, modes=modes, tol=cfg.tol)
    fd.to_csv(out / "fd_linearization.csv")
    u0 = fd.base_point[1]
    L, _ = linops.build_linearized(cset, u0)
    gaps, V = [], {}
    for name in modes:
        V[name] = dnmap.solve_linearized(L, basis[basis.index(name)], tol=cfg.tol)
        direct = dnmap._dn_samples(V[name], grid)
        gaps.append(float(np.max(np.abs(fd.column(name) - direct)) / np.max(np.abs(direct))))
    rep.metric("fd1_floor", fd.floor)
    rep.check("fd1_vs_solve", max(gaps), 1e-3, note="relative, modes k <= 4")
    j, k = basis.index("cos1"), basis.index("sin1")
    second = dnmap.fd_linearize(cset, None, basis, 2, cfg.eps, pairs=[(j, k)], tol=cfg.tol)
    w = dnmap.solve_second(L, V["cos1"], V["sin1"], tol=cfg.tol)
    direct = dnmap._dn_samples(w, grid)
    scale = float(np.max(np.abs(direct)))
    if scale == 0.0:
        rep.metric("fd2_abs_gap", float(np.max(np.abs(second.values[(j, k)]))))
        rep.check("fd2_vs_solve", float(np.max(np.abs(second.values[(j, k)]))), second.floor, note="q = 0: floor")
    else:
        rep.check("fd2_vs_solve", float(np.max(np.abs(second.values[(j, k)] - direct)) / scale), 1e-2, note="relative")


def _cmd_verify(cfg, grid, cset, out, rep):
    sol = forward.solve_quasilinear(cset, tol=cfg.tol)
    L, Ls = linops.build_linearized(cset, sol.u0)
    mag = linops.build_magnetic(cset, sol.u0)
    h2 = grid.h**2
    X, Y = grid.X, grid.Y
    phi = 1j * gauge.beta(grid) ** 2
    v = np.exp(X + Y)
    rep.check("adjoint_pairing_gap", linops.verify_adjoint_pairing(L, 20, cfg.seed, Lstar=Ls).value, 100 * h2, note="100 h^2")
    rep.check("gauge_conjugation_residual", linops.verify_gauge_conjugation(mag, phi, v).value, 100 * h2, note="100 h^2")
    rep.check("gauge_conjugation_phi0", linops.verify_gauge_conjugation(mag, 0 * phi, v).value, 1e-12)
    rep.check("magnetic_consistency", linops.magnetic_consistency(L, mag, v).value, 100 * h2, note="100 h^2")
    rep.check("q_two_route_gap", linops.q_route_gap(mag).value, 100 * h2, note="100 h^2")


def _cmd_gauge(cfg, grid, cset, out, rep):
    pair = gauge.build_linear_counterexample(grid, cset.sigma, cset.F)
    basis = dnmap.fourier_basis(grid)
    a = dnmap.dn_matrix(pair.base, basis, tol=cfg.tol)
    b = dnmap.dn_matrix(pair.transformed, basis, tol=cfg.tol)
    dF = float(np.max(np.abs(pair.transformed.F - pair.base.F)))
    rep.metric("linear_dn_floor", a.floor)
    rep.metric("linear_F_change", dF)
    rep.check("linear_dn_equality", a.max_gap(b), 10 * a.floor, note="10 x floor")
    rep.check("linear_F_distinct", dF, 0.1, ">=")
    write_field_csv(out / "phi.csv", pair.phi, grid)
    write_field_csv(out / "F_change.csv", pair.transformed.F - pair.base.F, grid)
    if cfg.linear:
        return
    const = forward.preset("constant", grid)
    sp = gauge.build_scaling_gauge(const)
    a, b = dnmap.dn_matrix(const, basis, tol=cfg.tol), dnmap.dn_matrix(sp.transformed, basis, tol=cfg.tol)
    rep.check("scaling_dn_equality", a.max_gap(b), 10 * a.floor, note="10 x floor")
    flagged = gauge.build_scaling_gauge(cset)
    if flagged.flags:
        a, b = dnmap.dn_matrix(cset, basis, tol=cfg.tol), dnmap.dn_matrix(flagged.transformed, basis, tol=cfg.tol)
        rep.check("scaling_flagged_margin", a.max_gap(b), 100 * a.floor, ">=", "100 x floor")
    br = gauge.gauge_break_experiment(cset, eps=cfg.eps, tol=cfg.tol)
    for k in (0, 1, 2):
        rep.metric(f"break_margin_order{k}", br.margins[k])
        rep.metric(f"break_control_order{k}", br.control[k])
        rep.metric(f"break_floor_order{k}", br.floors[k])
    rep.check("gauge_breaking", br.margins[1], 10 * br.control[1], ">=", "10 x linear control, order 1")


def _cmd_cgo(cfg, grid, cset, out, rep):
    u0 = forward.solve_quasilinear(cset, tol=cfg.tol).u0
    x0 = recon.probe_points(grid, (0.5,))[0]
    rows = cgo.probe_sweep(cset, u0, x0, cfg.tau_list, tol=cfg.tol)
    skipped = [t for t in cfg.tau_list if t * grid.h > cgo.RESOLUTION_LIMIT]
    rep.metric("tau_cap", cgo.RESOLUTION_LIMIT / grid.h)
    rep.metric("tau_skipped", len(skipped))
    with open(out / "cgo_probe.csv", "w") as fh:
        fh.write("tau,re_D,im_D,re_P,im_P,remainder_sup\n")
        for r in rows:
            fh.write(
                ",".join(f"{v:.17g}" for v in (r.tau, r.D.real, r.D.imag, r.P.real, r.P.imag, r.remainder_sup)) + "\n"
            )
    if not rows:
        rep.mark("probe_limit", "INDETERMINATE", "no resolved tau")
        return
    for r in rows:
        rep.metric(f"probe_error_tau{r.tau:g}", r.error)
        rep.metric(f"transport_residual_tau{r.tau:g}", r.transport_residual)
    P = rows[-1].P
    rep.metric("predicted_limit_abs", abs(P))
    errs = [r.error for r in rows]
    monotone = all(b < a for a, b in zip(errs, errs[1:]))
    rep.mark("probe_decreasing", "PASS" if monotone else "INDETERMINATE", "resolution report", float(monotone), 1.0)
    if abs(P) > recon.DELTA:
        rep.check("probe_limit", errs[-1] / abs(P), 0.1, note="relative at largest tau")
    else:
        rep.metric("probe_level", abs(rows[-1].D))


def _cmd_recon(cfg, grid, cset, out, rep):
    if np.all(cset.q > 0):
        rep.check("B_recovery", recon.verify_B_recovery(cset.q, grid, tol=cfg.tol).error, 1e-8)
    u0 = forward.solve_quasilinear(cset, tol=cfg.tol).u0
    bumped = cset.replace(sigma=cset.sigma + 0.01 * gauge.beta(grid) ** 2, name=f"{cset.name}+bump")
    ub = forward.solve_quasilinear(bumped, tol=cfg.tol).u0
    same = recon.system_residual(cset, u0, cset, u0)
    diff = recon.system_residual(cset, u0, bumped, ub)
    rep.check("detM_identity", diff.det_identity_gap, 1e-12)
    rep.check("equal_set_residual", max(same.norms()), same.floor, note="machine floor")
    rep.check("bump_residual", min(diff.norms()), 100 * same.floor, ">=", "100 x floor")
    write_field_csv(out / "r1.csv", diff.r1, grid)
    write_field_csv(out / "r2.csv", diff.r2, grid)
    write_field_csv(out / "detM.csv", diff.detM, grid)
    bd = recon.boundary_sigma_determination(cset, bumped, tol=cfg.tol)
    rep.metric("boundary_determined", len(bd.determined))
    rep.metric("boundary_indeterminate", len(bd.indeterminate))
    if bd.determined:
        rep.check("boundary_sigma_hat", bd.max_sigma_hat, 1e-6)
    try:
        ar = recon.verify_A_recovery(cset, u0, taus=cfg.tau_list, tol=cfg.tol)
        rep.metric("A_certified", ar.count)
        rep.metric("A_tau", ar.tau)
        status = "PASS" if ar.count == len(ar.certificates) else "INDETERMINATE"
        rep.mark("A_recovery", status, "resolution report", ar.count, len(ar.certificates))
    except cgo.ResolutionError as exc:
        rep.mark("A_recovery", "INDETERMINATE", str(exc))
    expected = {"identical": "indistinguishable", "sigma bump": "discriminated", "linear counterexample": "indistinguishable"}
    for row in recon.example_table(grid.n, tol=cfg.tol):
        key = row.label.replace(" ", "_")
        for k, (m, _) in row.margins.items():
            rep.metric(f"uniqueness_{key}_order{k}", m)
        ok = row.verdict == expected[row.label]
        rep.mark(f"uniqueness_{key}", "PASS" if ok else "FAIL", f"{row.verdict}, expected {expected[row.label]}")


_DISPATCH = {
    "forward": _cmd_forward,
    "dn": _cmd_dn,
    "linearize": _cmd_linearize,
    "verify": _cmd_verify,
    "gauge-demo": _cmd_gauge,
    "cgo-probe": _cmd_cgo,
    "recon": _cmd_recon,
}


def run(cfg: RunConfig) -> Report:
    """Run one command, write ``report.txt`` and CSVs, and return the report."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rep = Report()
    start = time.perf_counter()
    grid = build_grid(cfg.grid_n)
    try:
        cset = _coefficients(cfg, grid)
        _DISPATCH[cfg.command](cfg, grid, cset, out, rep)
    except ConfigError:
        raise
    except Exception as exc:  # module failure becomes a FAIL verdict
        log.debug("command failed", exc_info=True)
        rep.mark("run", "FAIL", f"{type(exc).__name__}: {exc}")
    for k, v in asdict(cfg).items():
        rep.provenance[f"config.{k}"] = v
    rep.provenance["version"] = _version()
    rep.provenance["wall_time_s"] = f"{time.perf_counter() - start:.3f}"
    (out / "report.txt").write_text(rep.to_text())
    return rep


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = parse_config(argv)
    except SystemExit as exc:  # argparse usage errors
        return EXIT_USAGE if exc.code else EXIT_OK
    except ConfigError as exc:
        print(f"qlinverse: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if "-v" in argv or "--verbose" in argv else logging.WARNING)
    try:
        rep = run(cfg)
    except ConfigError as exc:
        print(f"qlinverse: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for name, (status, value, thr, note) in rep.verdicts.items():
        print(f"{status:13s} {name}  value={_fmt(value)} threshold={_fmt(thr)} {note}".rstrip())
    print(f"report: {Path(cfg.output_dir) / 'report.txt'}")
    return EXIT_FAIL if rep.failed else EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
