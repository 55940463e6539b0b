"""Command-line front end.

Exit codes: 0 pass, 1 verification failure, 2 usage or domain error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from . import counterdiabatic as cd
from . import flows, oscillator as osc, twolevel as tl
from .config import ConfigError, RunConfig, build_config
from .invariant import ProtocolPair, Schedule, boundary_check, sampled_pair_check
from .operators import SX, SY, SZ, ValidationError, gell_mann_basis, pauli_basis
from .propagate import TimeGrid

log = logging.getLogger("stadyn")

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
FLOAT_FMT = "%.12g"


class UsageError(Exception):
    pass


# --- output helpers ----------------------------------------------------------

def write_csv(path: Path, header: list[str], columns) -> Path:
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, data, fmt=FLOAT_FMT, delimiter=",", header=",".join(header), comments="")
    return path


def read_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"no such file: {path}")
    with path.open() as fh:
        header = fh.readline().strip().split(",")
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None
    if data.shape[1] != len(header):
        raise UsageError(f"{path}: header has {len(header)} columns, rows have {data.shape[1]}")
    return header, data


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def write_json(path: Path, payload: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def _tag(v: float) -> str:
    return f"{v:g}".replace(".", "p").replace("-", "m")


# --- design two-level ----------------------------------------------------------

def _twolevel_columns(sched: tl.BlochSchedule, proto: tl.FieldProtocol):
    t = sched.grid.times
    e = sched.e(t)
    n = proto.n
    return (["t", "theta", "e_x", "e_y", "e_z", "n_x", "n_y", "n_z", "h"],
            [t, sched.theta, e[:, 0], e[:, 1], e[:, 2], n[:, 0], n[:, 1], n[:, 2], proto.h])


def cmd_design_twolevel(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    grid = TimeGrid(0.0, cfg.tf, cfg.steps)
    sched = tl.polynomial_theta(cfg.theta0, cfg.thetaf, grid)
    h0 = tl.threshold_field(cfg.theta0, cfg.thetaf, cfg.tf)
    yaxis = tl.y_axis_protocol(sched)
    if cfg.field == "y-axis":
        proto = yaxis
    else:
        try:
            proto = tl.field_from_invariant(sched, cfg.h_over_h0 * h0)
        except tl.ThresholdError as exc:
            print(f"threshold violation: {exc} (threshold h0 = {h0:.12g})", file=sys.stderr)
            write_json(out / "twolevel_report.json", {
                "passed": False, "h0": h0, "h": cfg.h_over_h0 * h0, "threshold_node": exc.node,
                "threshold_time": exc.time, "required_h": exc.required_h})
            return EXIT_USAGE
    header, cols = _twolevel_columns(sched, proto)
    write_csv(out / "twolevel.csv", header, cols)
    for name, p in (("fig1a_h0", tl.field_from_invariant(sched, h0)),
                    ("fig1a_2h0", tl.field_from_invariant(sched, 2.0 * h0)),
                    ("fig1b_yaxis", yaxis)):
        write_csv(out / f"{name}.csv", *_twolevel_columns(sched, p))
    pair = tl.as_pair(proto, sched)
    write_csv(out / "pair_H.csv", ["t", "x", "y", "z"], [grid.times, *pair.h.values.T])
    write_csv(out / "pair_I.csv", ["t", "x", "y", "z"], [grid.times, *pair.b.values.T])

    report = tl.verify_protocol(proto, sched, fidelity_tol=1e-8)
    report.passed = bool(report.passed and report.boundary_ok)
    ypk = int(np.argmax(yaxis.h))
    payload = report.to_dict()
    payload.update({"h0": h0, "h0_closed_form": 3 * abs(cfg.thetaf - cfg.theta0) / (2 * cfg.tf),
                    "h": float(np.max(proto.h)), "field": cfg.field,
                    "y_axis_peak": float(yaxis.h[ypk]), "y_axis_peak_time": float(grid.times[ypk]),
                    "hbar": cfg.hbar, "energy_scale_h0": cfg.hbar * h0})
    write_json(out / "twolevel_report.json", payload)
    print(f"two-level: fidelity_min={report.fidelity_min:.15f} residual={report.residual_max:.3e} "
          f"passed={report.passed}")
    return EXIT_PASS if report.passed else EXIT_FAIL


# --- design oscillator -------------------------------------------------------

def _oscillator_run(omega0: float, omegaf: float, tf: float, steps: int):
    sol = osc.polynomial_b(omega0, omegaf, TimeGrid(0.0, tf, steps))
    return sol, osc.omega_from_b(sol)


def _write_oscillator(path: Path, sol, proto):
    return write_csv(path, ["t", "b", "bdot", "omega_sq"], [sol.grid.times, sol.b, sol.bdot, proto.omega_sq])


def cmd_design_oscillator(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    tf = cfg.oscillator_tf
    sol, proto = _oscillator_run(cfg.omega0, cfg.omegaf, tf, cfg.steps)
    _write_oscillator(out / "oscillator.csv", sol, proto)

    panels = []
    for wt in osc.FIG_OMEGA0_TF:
        for r in osc.FIG_RATIOS:
            s, p = _oscillator_run(cfg.omega0, r * cfg.omega0, wt / cfg.omega0, cfg.steps)
            _write_oscillator(out / f"fig2_w{_tag(wt)}_r{_tag(r)}.csv", s, p)
            panels.append({"omega0_tf": wt, "ratio": r, "min_omega_sq": p.min_omega_sq, "negative": p.negative})

    x = osc.default_x_grid(sol)
    dumps = []
    for frac in cfg.fractions("psi_times"):
        t = frac * tf
        wf = osc.ground_wavefunction(sol, x, t)
        write_csv(out / f"psi_t{_tag(t)}.csv", ["x", "re_psi", "im_psi"], [x, wf.psi.real, wf.psi.imag])
        dumps.append({"t": t, "norm": wf.norm, "alpha": wf.alpha,
                      "invariant_expectation": osc.invariant_expectation(sol, x, t)})
    e0, ef = proto.endpoint_errors()
    norm_ok = all(abs(d["norm"] - 1) < 1e-8 for d in dumps)
    passed = e0 < 1e-9 and ef < 1e-9 and norm_ok
    write_json(out / "oscillator_report.json", {
        "passed": passed, "omega0": cfg.omega0, "omegaf": cfg.omegaf, "tf": tf,
        "endpoint_rel_error": [e0, ef], "negative_omega_sq": proto.negative,
        "min_omega_sq": proto.min_omega_sq, "panels": panels, "wavefunctions": dumps})
    print(f"oscillator: omega0*tf={cfg.omega0 * tf:g} min omega^2={proto.min_omega_sq:.6g} "
          f"negative={proto.negative} passed={passed}")
    return EXIT_PASS if passed else EXIT_FAIL


# --- flows -------------------------------------------------------------------

def toda_initial(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """J in U(0, 1), h in U(-1, 1) from a seeded generator."""
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, 1.0, n - 1), rng.uniform(-1.0, 1.0, n)


def cmd_flow(cfg: RunConfig, kind: str) -> int:
    out = Path(cfg.out)
    if kind == "wegner":
        h = flows.random_hermitian(cfg.N, cfg.seed)
        res = flows.wegner_flow(h, s_max=cfg.s_max, dt=cfg.dt)
        tr = res.trace
        idx = np.searchsorted(tr.times, tr.snapshot_times - 1e-12)
        ev = np.sort(np.linalg.eigvalsh(h))
        final_err = float(np.max(np.abs(np.sort(res.final.diagonal().real) - ev)))
        decay = flows.offdiag_decay_check(tr)
        header = ["s", "offdiag_norm_sq"] + [f"eig_{k}" for k in range(cfg.N)]
        write_csv(out / "wegner_trace.csv", header, [tr.snapshot_times, tr.offdiag_norm_sq[idx], *tr.eigenvalue_snapshots.T])
        passed = tr.drift < 1e-8 and tr.monotone and final_err < 1e-6
        summary = {"kind": kind, "N": cfg.N, "seed": cfg.seed, "s_max": float(tr.times[-1]), "drift": tr.drift,
                   "monotone": tr.monotone, "final_diag_error": final_err, "stalled": res.stalled,
                   "decay_max_relative_mismatch": decay.max_relative_mismatch, "warnings": tr.warnings}
    elif kind == "toda":
        J0, h0 = toda_initial(cfg.N, cfg.seed)
        grid = TimeGrid(0.0, cfg.t_end, cfg.steps)
        res = flows.toda_flow(J0, h0, grid)
        tr = res.trace
        every = max(1, cfg.steps // 1000)
        sl = slice(None, None, every)
        rows = np.arange(len(grid))[sl]
        if rows[-1] != len(grid) - 1:
            rows = np.append(rows, len(grid) - 1)
        header = ["t", "sum_h", "offdiag_norm_sq"] + [f"eig_{k}" for k in range(cfg.N)]
        write_csv(out / "toda_trace.csv", header,
                  [tr.times[rows], res.h[rows].sum(axis=1), tr.offdiag_norm_sq[rows], *tr.eigenvalue_snapshots[rows].T])
        passed = tr.drift < 1e-8 and res.sum_h_drift < 1e-10
        summary = {"kind": kind, "N": cfg.N, "seed": cfg.seed, "t_end": cfg.t_end, "steps": cfg.steps,
                   "drift": tr.drift, "sum_h_drift": res.sum_h_drift}
    else:
        x = np.linspace(-cfg.x_half, cfg.x_half, cfg.points)
        times = np.linspace(0.0, 1.0, 11)   # the soliton moves by 4 kappa^2 over this span
        trace = flows.kdv_boundstate_check(cfg.kappa, x, times)
        exact = -cfg.kappa**2
        err = float(np.max(np.abs(trace.energies - exact)))
        write_csv(out / "kdv_trace.csv", ["t", "E0"], [trace.times, trace.energies])
        passed = err < 1e-3 and trace.drift < 1e-4
        summary = {"kind": kind, "kappa": cfg.kappa, "points": cfg.points, "x_half": cfg.x_half,
                   "E0_exact": exact, "E0_max_error": err, "drift": trace.drift, "warnings": trace.warnings}
    summary["passed"] = bool(passed)
    write_json(out / f"{kind}_summary.json", summary)
    print(f"flow {kind}: drift={summary['drift']:.3e} passed={passed}")
    return EXIT_PASS if passed else EXIT_FAIL


# --- verify ------------------------------------------------------------------

def _basis_for(name: str, channels: int):
    if name == "pauli":
        return pauli_basis()
    if name == "gell-mann":
        dim = int(round(np.sqrt(channels + 1)))
        if dim * dim - 1 != channels:
            raise UsageError(f"{channels} channels do not match a traceless basis of any dimension")
        return gell_mann_basis(dim)
    raise UsageError(f"unknown basis {name!r}")


def cmd_verify(h_file: str, i_file: str, basis_name: str, tol: float, out: str) -> int:
    hh, hd = read_csv(h_file)
    ih, idata = read_csv(i_file)
    if hh[0] != "t" or ih[0] != "t":
        raise UsageError("first column of both files must be 't'")
    if hd.shape != idata.shape or not np.array_equal(hd[:, 0], idata[:, 0]):
        raise UsageError("H and I files are sampled on different time grids")
    if hh[1:] != ih[1:]:
        raise UsageError(f"coefficient labels differ: {hh[1:]} vs {ih[1:]}")
    t = hd[:, 0]
    steps = len(t) - 1
    grid = TimeGrid(float(t[0]), float(t[-1]), steps)
    if steps < 2 or np.max(np.abs(t - grid.times)) > 1e-9 * max(1.0, abs(grid.tf)):
        raise UsageError("time column is not a uniform grid")
    basis = _basis_for(basis_name, hd.shape[1] - 1)
    if len(basis) != hd.shape[1] - 1:
        raise UsageError(f"basis {basis_name} has {len(basis)} elements, files have {hd.shape[1] - 1} channels")
    rates = CubicSpline(t, idata[:, 1:], axis=0)(t, 1)
    pair = ProtocolPair(basis, Schedule(grid, hd[:, 1:]), Schedule(grid, idata[:, 1:], rates=rates))
    check = sampled_pair_check(pair)
    ok_b, offending = boundary_check(pair, tol_rate=max(tol, 1e-8))
    passed = check.residual <= tol and check.spectrum_drift <= 1e-8 and ok_b
    report = {"passed": passed, "residual_max": check.residual, "worst_node": check.node,
              "worst_time": float(t[check.node]), "eigenvalue_drift_max": check.spectrum_drift,
              "boundary_ok": ok_b, "boundary_offending": offending, "tolerance": tol, "nodes": len(t)}
    write_json(Path(out) / "verify_report.json", report)
    print(json.dumps(report, sort_keys=True, default=_jsonable))
    return EXIT_PASS if passed else EXIT_FAIL


# --- counterdiabatic -----------------------------------------------------------

def rotating_hamiltonian(cfg: RunConfig):
    """H0(t) = (h/2)(cos theta sigma_z + sin theta sigma_x) on the polynomial angle schedule."""
    grid = TimeGrid(0.0, cfg.tf, cfg.steps)
    sched = tl.polynomial_theta(cfg.theta0, cfg.thetaf, grid)
    h = cfg.h_over_h0 * tl.threshold_field(cfg.theta0, cfg.thetaf, cfg.tf)

    def H0(t):
        th = float(sched.theta_fn(t))
        return 0.5 * h * (np.cos(th) * SZ + np.sin(th) * SX)
    return H0, sched


def _complex_matrix(m: np.ndarray) -> dict:
    return {"re": m.real, "im": m.imag}


def cmd_cd_term(cfg: RunConfig) -> int:
    H0, sched = rotating_hamiltonian(cfg)
    rows = []
    passed = True
    for frac in cfg.fractions("cd_times"):
        t = frac * cfg.tf
        h1 = cd.cd_term(H0, t)
        expected = 0.5 * float(sched.theta_dot_fn(t))
        coeff = float(np.real(np.trace(h1 @ SY) / 2))
        err = float(np.max(np.abs(h1 - expected * SY)))
        r = cd.h01_residual(H0, lambda s: cd.cd_term(H0, s), t)
        passed &= err < 1e-8 and r < 1e-6
        rows.append({"t": t, "H1": _complex_matrix(cfg.hbar * h1), "sigma_y_coefficient": cfg.hbar * coeff,
                     "expected": cfg.hbar * expected, "max_abs_error": err, "h01_residual": r})
    write_json(Path(cfg.out) / "cd_term.json", {"passed": bool(passed), "hbar": cfg.hbar, "slices": rows})
    print(f"cd-term: {len(rows)} slices passed={passed}")
    return EXIT_PASS if passed else EXIT_FAIL


def cmd_cd_variational(cfg: RunConfig, with_identity: bool) -> int:
    H0, sched = rotating_hamiltonian(cfg)
    ansatz = pauli_basis(with_identity=with_identity)
    rows = []
    passed = True
    for frac in cfg.fractions("cd_times"):
        t = frac * cfg.tf
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fit = cd.variational_cd(H0, ansatz, t)
        expected = 0.5 * float(sched.theta_dot_fn(t))
        iy = list(ansatz.labels).index("y")
        err = abs(fit.coefficients[iy] - expected)
        passed &= err < 1e-8 and fit.h01 < 1e-6
        rows.append({"t": t, "labels": list(ansatz.labels), "coefficients": cfg.hbar * fit.coefficients,
                     "expected_y": cfg.hbar * expected, "objective": cfg.hbar * fit.objective,
                     "h01_residual": fit.h01, "rank": fit.rank, "warnings": fit.warnings})
    write_json(Path(cfg.out) / "cd_variational.json", {"passed": bool(passed), "hbar": cfg.hbar, "slices": rows})
    print(f"cd-variational: {len(rows)} slices passed={passed}")
    return EXIT_PASS if passed else EXIT_FAIL


# --- sweep -------------------------------------------------------------------

def _sweep_oscillator_point(args):
    omega0, wt, r, steps = args
    _, p = _oscillator_run(omega0, r * omega0, wt / omega0, steps)
    e0, ef = p.endpoint_errors()
    return [wt, r, p.min_omega_sq, float(p.negative), e0, ef]


def _sweep_twolevel_point(args):
    cfg, ratio = args
    grid = TimeGrid(0.0, cfg.tf, cfg.steps)
    sched = tl.polynomial_theta(cfg.theta0, cfg.thetaf, grid)
    h0 = tl.threshold_field(cfg.theta0, cfg.thetaf, cfg.tf)
    try:
        proto = tl.field_from_invariant(sched, ratio * h0)
    except tl.ThresholdError as exc:
        return [ratio, 0.0, float("nan"), float(exc.node)]
    rep = tl.verify_protocol(proto, sched)
    return [ratio, 1.0, rep.fidelity_min, -1.0]


def cmd_sweep(cfg: RunConfig, kind: str, values: str | None, workers: int) -> int:
    out = Path(cfg.out)
    if kind == "oscillator":
        points = [(cfg.omega0, wt, r, cfg.steps) for wt in osc.FIG_OMEGA0_TF for r in osc.FIG_RATIOS]
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_sweep_oscillator_point, points))
        header = ["omega0_tf", "ratio", "min_omega_sq", "negative", "rel_err_t0", "rel_err_tf"]
    else:
        ratios = [float(v) for v in (values or "0.5,0.9,1,1.01,2,4").split(",")]
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_sweep_twolevel_point, [(cfg, r) for r in ratios]))
        header = ["h_over_h0", "feasible", "fidelity_min", "threshold_node"]
    write_csv(out / f"sweep_{kind.replace('-', '')}.csv", header, np.array(rows).T)
    print(f"sweep {kind}: {len(rows)} runs")
    return EXIT_PASS


# --- argument parsing --------------------------------------------------------

def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("configuration (flags override --config)")
    g.add_argument("--config", help="key=value configuration file")
    for name, typ in (("tf", float), ("theta0", float), ("thetaf", float), ("h-over-h0", float),
                      ("omega0", float), ("omegaf", float), ("omega0-tf", float), ("kappa", float),
                      ("N", int), ("seed", int), ("steps", int), ("dt", float), ("s-max", float),
                      ("t-end", float), ("x-half", float), ("points", int), ("hbar", float), ("mass", float)):
        g.add_argument(f"--{name}", type=typ, default=None)
    g.add_argument("--field", choices=("invariant", "y-axis"), default=None)
    g.add_argument("--psi-times", default=None, help="comma list of fractions of tf")
    g.add_argument("--cd-times", default=None, help="comma list of fractions of tf")
    g.add_argument("--out", default=None, help="output directory")


CONFIG_KEYS = ("tf", "theta0", "thetaf", "h_over_h0", "omega0", "omegaf", "omega0_tf", "kappa", "N", "seed",
               "steps", "dt", "s_max", "t_end", "x_half", "points", "hbar", "mass", "field", "psi_times",
               "cd_times", "out")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stadyn", description="Invariant-based shortcuts to adiabaticity.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    design = sub.add_parser("design", help="inverse-engineer a protocol")
    design.add_argument("system", choices=("two-level", "oscillator"))
    _add_config_flags(design)

    flow = sub.add_parser("flow", help="isospectral flows")
    flow.add_argument("kind", choices=("wegner", "toda", "kdv"))
    _add_config_flags(flow)

    ver = sub.add_parser("verify", help="check a sampled (H, I) coefficient pair")
    ver.add_argument("--h-file", required=True)
    ver.add_argument("--i-file", required=True)
    ver.add_argument("--basis", default="pauli", choices=("pauli", "gell-mann"))
    ver.add_argument("--tol", type=float, default=1e-6)
    ver.add_argument("--out", default="out")

    cdt = sub.add_parser("cd-term", help="spectral counterdiabatic term for a rotating two-level H0")
    _add_config_flags(cdt)
    cdv = sub.add_parser("cd-variational", help="least-squares counterdiabatic fit over the Pauli basis")
    cdv.add_argument("--with-identity", action="store_true")
    _add_config_flags(cdv)

    sw = sub.add_parser("sweep", help="parameter sweeps")
    sw.add_argument("kind", choices=("oscillator", "two-level"))
    sw.add_argument("--values", default=None, help="comma list of h/h0 ratios (two-level)")
    sw.add_argument("--workers", type=int, default=4)
    _add_config_flags(sw)
    return ap


def _config_from_args(args) -> RunConfig:
    overrides = {k: getattr(args, k, None) for k in CONFIG_KEYS}
    return build_config(args.config, **overrides)


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        if args.command == "verify":
            return cmd_verify(args.h_file, args.i_file, args.basis, args.tol, args.out)
        cfg = _config_from_args(args)
        if args.command == "design":
            return cmd_design_twolevel(cfg) if args.system == "two-level" else cmd_design_oscillator(cfg)
        if args.command == "flow":
            return cmd_flow(cfg, args.kind)
        if args.command == "cd-term":
            return cmd_cd_term(cfg)
        if args.command == "cd-variational":
            return cmd_cd_variational(cfg, args.with_identity)
        return cmd_sweep(cfg, args.kind, args.values, args.workers)
    except (UsageError, ConfigError, ValidationError, osc.InputError, flows.DomainError,
            tl.UnsupportedSchedule, tl.SingularityError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
