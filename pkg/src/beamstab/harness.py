"""Configuration parsing, run orchestration and the command-line front-end.

Config files are INI-style with a strict schema: unknown sections or keys
are rejected so that typos cannot silently change a run.  All run products
(trace CSV, checkpoint, reports) carry the config hash.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import math
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import diagnostics, feedback, geometry, timestepper
from .admissibility import (build_report, constant_schedule, decaying_schedule)
from .discretization import assemble, project_initial_data
from .errors import (ConfigError, FitUndefinedError, InadmissiblePartitionError,
                     InvalidArgumentError, StepFailureError)
from .fields import make_field
from .timestepper import StepControl, integrate

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INADMISSIBLE = 2
EXIT_STEP_FAILURE = 3
EXIT_USAGE = 64

_SCHEMA = {
    "mesh": {"kind", "length", "nodes", "lx", "ly", "nx", "ny", "x0"},
    "problem": {"alpha1", "alpha2", "mu", "mu_c", "mu_c0", "mu_lambda"},
    "feedback": {"law1", "law1_params", "law2", "law2_params"},
    "initial": {"u0", "u0_amplitude", "v0", "v0_amplitude",
                "u1", "u1_amplitude", "v1", "v1_amplitude"},
    "time": {"dt", "T"},
    "output": {"dir", "prefix", "plot"},
    "sweep": {"alpha", "laws"},
}


@dataclass
class RunConfig:
    mesh_kind: str = "interval"
    length: float = 1.0
    nodes: int = 201
    lx: float = 1.0
    ly: float = 1.0
    nx: int = 16
    ny: int = 16
    x0: np.ndarray = field(default_factory=lambda: np.zeros(1))
    alpha1: float = 0.1
    alpha2: float = 0.1
    mu_kind: str = "constant"
    mu_c: float = 1.0
    mu_c0: float = 1.0
    mu_lambda: float = 0.0
    law1_name: str = "identity"
    law1_params: dict = field(default_factory=dict)
    law2_name: str = "identity"
    law2_params: dict = field(default_factory=dict)
    u0: str = "sine"
    u0_amplitude: float = 1.0
    v0: str = "zero"
    v0_amplitude: float = 0.0
    u1: str = "zero"
    u1_amplitude: float = 0.0
    v1: str = "zero"
    v1_amplitude: float = 0.0
    dt: float = 1e-3
    T: float = 1.0
    out_dir: str = "out"
    prefix: str = "run"
    plot: bool = False
    sweep_alphas: tuple = ()
    sweep_laws: tuple = ()
    raw_text: str = ""
    hash: str = ""


def _parse_law_params(text):
    params = {}
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if "=" not in chunk:
            raise ConfigError(f"law parameter '{chunk}' is not key=value")
        k, _, v = chunk.partition("=")
        try:
            params[k.strip()] = float(v)
        except ValueError as exc:
            raise ConfigError(f"law parameter '{chunk}' is not numeric") from exc
    return params


def parse_config(path=None, text=None):
    """Read a config file (or literal text) into a validated RunConfig."""
    if text is None:
        if path is None:
            raise ConfigError("no config given")
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc

    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key in parser[section]:
            if key not in {k.lower() for k in _SCHEMA[section]}:
                raise ConfigError(f"unknown key '{key}' in section [{section}]")

    cfg = RunConfig(raw_text=text, hash=timestepper.config_hash(text))

    def get(section, key, cast, default):
        if parser.has_option(section, key):
            raw = parser.get(section, key)
            try:
                return cast(raw)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from exc
        return default

    cfg.mesh_kind = get("mesh", "kind", str, cfg.mesh_kind)
    if cfg.mesh_kind not in ("interval", "rect"):
        raise ConfigError(f"unknown mesh kind '{cfg.mesh_kind}'")
    cfg.length = get("mesh", "length", float, cfg.length)
    cfg.nodes = get("mesh", "nodes", int, cfg.nodes)
    cfg.lx = get("mesh", "lx", float, cfg.lx)
    cfg.ly = get("mesh", "ly", float, cfg.ly)
    cfg.nx = get("mesh", "nx", int, cfg.nx)
    cfg.ny = get("mesh", "ny", int, cfg.ny)
    dim = 1 if cfg.mesh_kind == "interval" else 2
    x0_raw = get("mesh", "x0", str, " ".join("0" for _ in range(dim)))
    try:
        cfg.x0 = np.array([float(v) for v in x0_raw.split()], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"bad x0: {x0_raw!r}") from exc
    if len(cfg.x0) != dim:
        raise ConfigError(f"x0 needs {dim} component(s), got {len(cfg.x0)}")

    cfg.alpha1 = get("problem", "alpha1", float, cfg.alpha1)
    cfg.alpha2 = get("problem", "alpha2", float, cfg.alpha2)
    if cfg.alpha1 <= 0 or cfg.alpha2 <= 0:
        raise ConfigError("alpha1 and alpha2 must be positive")
    cfg.mu_kind = get("problem", "mu", str, cfg.mu_kind)
    if cfg.mu_kind not in ("constant", "decaying"):
        raise ConfigError(f"unknown coefficient schedule '{cfg.mu_kind}'")
    cfg.mu_c = get("problem", "mu_c", float, cfg.mu_c)
    cfg.mu_c0 = get("problem", "mu_c0", float, cfg.mu_c0)
    cfg.mu_lambda = get("problem", "mu_lambda", float, cfg.mu_lambda)
    if cfg.mu_lambda < 0:
        raise ConfigError("mu_lambda must be >= 0 (nonincreasing coefficient)")

    cfg.law1_name = get("feedback", "law1", str, cfg.law1_name)
    cfg.law2_name = get("feedback", "law2", str, cfg.law2_name)
    cfg.law1_params = _parse_law_params(get("feedback", "law1_params", str, ""))
    cfg.law2_params = _parse_law_params(get("feedback", "law2_params", str, ""))

    for name in ("u0", "v0", "u1", "v1"):
        setattr(cfg, name, get("initial", name, str, getattr(cfg, name)))
        amp = get("initial", f"{name}_amplitude", float, getattr(cfg, f"{name}_amplitude"))
        setattr(cfg, f"{name}_amplitude", amp)

    cfg.dt = get("time", "dt", float, cfg.dt)
    cfg.T = get("time", "t", float, cfg.T)
    if cfg.dt <= 0 or cfg.T <= 0:
        raise ConfigError("dt and T must be positive")

    cfg.out_dir = get("output", "dir", str, cfg.out_dir)
    cfg.prefix = get("output", "prefix", str, cfg.prefix)
    cfg.plot = get("output", "plot", lambda s: s.lower() in ("1", "true", "yes"), cfg.plot)

    if parser.has_section("sweep"):
        alphas = get("sweep", "alpha", str, "")
        laws = get("sweep", "laws", str, "")
        try:
            cfg.sweep_alphas = tuple(float(v) for v in alphas.split())
        except ValueError as exc:
            raise ConfigError(f"bad sweep alphas: {alphas!r}") from exc
        cfg.sweep_laws = tuple(laws.split())
    return cfg


def apply_overrides(cfg, dt=None, T=None, refine=0, out=None, plot=None):
    if dt is not None:
        if dt <= 0:
            raise ConfigError("dt must be positive")
        cfg.dt = dt
    if T is not None:
        if T <= 0:
            raise ConfigError("T must be positive")
        cfg.T = T
    for _ in range(refine):
        cfg.nodes = 2 * (cfg.nodes - 1) + 1
        cfg.nx *= 2
        cfg.ny *= 2
        cfg.dt /= 2.0
    if out is not None:
        cfg.out_dir = out
    if plot is not None:
        cfg.plot = plot
    return cfg


# ---------------------------------------------------------------------------
# builders

def build_mesh(cfg):
    if cfg.mesh_kind == "interval":
        return geometry.build_interval_mesh(cfg.length, cfg.nodes)
    return geometry.build_rect_mesh(cfg.lx, cfg.ly, cfg.nx, cfg.ny)


def build_schedule(cfg):
    if cfg.mu_kind == "constant":
        return constant_schedule(cfg.mu_c)
    return decaying_schedule(cfg.mu_c0, cfg.mu_lambda, cfg.T)


def build_laws(cfg):
    return (feedback.law_from_spec(cfg.law1_name, cfg.law1_params),
            feedback.law_from_spec(cfg.law2_name, cfg.law2_params))


def build_problem(cfg):
    """Mesh, partition, semi-discrete system and laws for a config."""
    mesh = build_mesh(cfg)
    partition = geometry.classify_boundary(mesh, cfg.x0)
    schedule = build_schedule(cfg)
    law1, law2 = build_laws(cfg)
    system = assemble(mesh, partition, cfg.alpha1, cfg.alpha2, schedule, law1, law2)
    return mesh, partition, system


def build_certificate(cfg, mesh, partition, system):
    gc = geometry.geometric_constants(mesh, partition)
    emb = geometry.embedding_constants(mesh, partition)
    return build_report(mesh.dimension, emb["M"], emb["N"], gc["R"], gc["tau0"],
                        system.schedule, system.law1, system.law2,
                        cfg.alpha1, cfg.alpha2, partition)


def _initial_fields(cfg, mesh):
    return (make_field(cfg.u0, mesh, cfg.u0_amplitude),
            make_field(cfg.v0, mesh, cfg.v0_amplitude),
            make_field(cfg.u1, mesh, cfg.u1_amplitude),
            make_field(cfg.v1, mesh, cfg.v1_amplitude))


# ---------------------------------------------------------------------------
# subcommands

def run_check(cfg, out=None, stream=None):
    stream = sys.stdout if stream is None else stream
    mesh, partition, system = build_problem(cfg)
    report = build_certificate(cfg, mesh, partition, system)
    stream.write(report.as_text() + "\n")
    if out is not None:
        outdir = Path(out)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / f"{cfg.prefix}_check.csv").write_text(report.as_csv())
    return EXIT_OK if report.admissible else EXIT_INADMISSIBLE


def run_simulate(cfg, stream=None):
    stream = sys.stdout if stream is None else stream
    mesh, partition, system = build_problem(cfg)
    certificate = None
    if system.law1.b > 0 and system.law2.b > 0:
        certificate = build_certificate(cfg, mesh, partition, system)
        if not certificate.admissible:
            log.warning("coupling parameters fail the smallness conditions; "
                        "the run proceeds without a certified envelope")
    state0, compat = project_initial_data(system, *_initial_fields(cfg, mesh))

    recorder = diagnostics.TraceRecorder(
        system,
        certificate=certificate if certificate and certificate.admissible else None,
        metadata={"config_hash": cfg.hash, "compat_norm": compat["norm"]})
    control = StepControl(dt=cfg.dt)
    outdir = Path(cfg.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        final = integrate(system, state0, cfg.T, control, observers=(recorder,))
    except StepFailureError as exc:
        stream.write(f"step failure at t={exc.t:.17g} (residual {exc.residual:.3e}); "
                     f"retry with a smaller dt\n")
        return EXIT_STEP_FAILURE

    trace = recorder.trace()
    trace.write_csv(outdir / f"{cfg.prefix}_trace.csv")
    timestepper.save_checkpoint(outdir / f"{cfg.prefix}_final.ckpt", final,
                                config_hash=cfg.hash)
    if cfg.plot:
        trace.write_svg(outdir / f"{cfg.prefix}_energy.svg")

    violations = 0
    env = trace.envelope()
    if np.all(np.isfinite(env)):
        violations += int(np.sum(trace.E > env * (1.0 + 1e-9)))
    for name, sl in trace.slacks().items():
        if np.all(np.isfinite(sl)):
            violations += int(np.sum(sl < -1e-12))

    lines = [f"config {cfg.hash}",
             f"samples {len(trace)}",
             f"E0 {trace.E0:.17g}",
             f"E_final {trace.E[-1]:.17g}",
             f"compat_residual {compat['norm']:.17g}",
             f"bound_violations {violations}"]
    if certificate is not None and certificate.admissible:
        lines.append(f"eta {certificate.eta:.17g}")
    try:
        fit = diagnostics.fit_decay_rate(trace)
        lines.append(f"fitted_rate {fit.rate:.17g}")
        lines.append(f"fit_r_squared {fit.r_squared:.17g}")
    except FitUndefinedError:
        lines.append("fitted_rate undefined")
    summary = "\n".join(lines) + "\n"
    stream.write(summary)
    (outdir / f"{cfg.prefix}_summary.txt").write_text(summary)
    return EXIT_OK


VERIFY_SUITES = ("assembly", "rellich", "strauss", "convergence")


def _verify_assembly(cfg, corrupt):
    from .fields import quadratic_field
    mesh, partition, system = build_problem(cfg)
    K = system.stiffness.toarray()
    if corrupt == "stiffness":
        K[0, -1] += 1e-3
    checks = []
    checks.append(("stiffness-symmetry", float(np.max(np.abs(K - K.T))), 1e-12))
    M = system.mass.toarray()
    checks.append(("mass-symmetry", float(np.max(np.abs(M - M.T))), 1e-12))
    volume = float(np.prod(mesh.nodes.max(axis=0) - mesh.nodes.min(axis=0)))
    checks.append(("mass-total", abs(float(M.sum()) - volume), 1e-12 * max(1.0, volume)))
    checks.append(("stiffness-nullspace", float(np.max(np.abs(K.sum(axis=1)))), 1e-10))
    gauss = system.coupling + system.coupling.T - system.boundary_sum_nu
    checks.append(("coupling-gauss-identity", float(np.max(np.abs(gauss.toarray()))), 1e-12))
    return [(f"assembly/{name}", err <= tol, f"defect {err:.3e} (tol {tol:.1e})")
            for name, err, tol in checks]


def _verify_rellich(cfg, corrupt):
    from .fields import quadratic_field
    results = []
    for kind in ("interval", "rect"):
        mismatches = []
        for level in (0, 1):
            sub = RunConfig(mesh_kind=kind, length=1.0, nodes=20 * (2 ** level) + 1,
                            nx=8 * (2 ** level), ny=8 * (2 ** level),
                            x0=np.zeros(1 if kind == "interval" else 2))
            mesh = build_mesh(sub)
            fld = quadratic_field(mesh)
            out = diagnostics.rellich_check(mesh, fld, sub.x0)
            mismatches.append(abs(out["mismatch_standard"]))
        if corrupt == "rellich":
            mismatches[1] = mismatches[0]
        order = math.log(mismatches[0] / mismatches[1]) / math.log(2.0) \
            if mismatches[1] > 0 else float("inf")
        ok = mismatches[1] == 0 or abs(order - 2.0) <= 0.3
        results.append((f"rellich/{kind}", ok,
                        f"mismatches {mismatches[0]:.3e} -> {mismatches[1]:.3e}"))
    return results


def _verify_strauss(cfg, corrupt):
    law = feedback.saturating_law(1.0, 2.0)
    s = np.linspace(-3.0, 3.0, 2001)
    errors = []
    slope_ok = True
    for level in (1, 2, 4, 8):
        approx = feedback.strauss_approximate(law, level)
        errors.append(float(np.max(np.abs(approx(s) - law(s)))))
        slope_ok &= bool(np.all(approx.slopes >= law.b - 1e-12))
    if corrupt == "strauss":
        errors[-1] = errors[0]
    decreasing = all(a > b for a, b in zip(errors, errors[1:]))
    return [("strauss/sup-error-decreasing", decreasing,
             "errors " + " ".join(f"{e:.3e}" for e in errors)),
            ("strauss/slopes-monotone", slope_ok, f"b = {law.b:g}")]


def _verify_convergence(cfg, corrupt):
    # compatible initial data keep the trajectory smooth from t = 0, which is
    # what makes the asymptotic second-order regime visible at these dt's
    base = RunConfig(mesh_kind="interval", nodes=21, T=0.5,
                     u0="bump", u0_amplitude=16.0)
    mesh, partition, system = build_problem(base)
    state0, _ = project_initial_data(system, *_initial_fields(base, mesh))
    dts = (0.0125, 0.00625, 0.003125)
    finals = {dt: integrate(system, state0, base.T, StepControl(dt=dt))
              for dt in dts + (dts[-1] / 32,)}
    ref = finals[dts[-1] / 32]
    errs = [sum(float(np.linalg.norm(getattr(finals[dt], nm) - getattr(ref, nm)))
                for nm in ("u", "v", "du", "dv")) for dt in dts]
    if corrupt == "convergence":
        errs[-1] = errs[0]
    orders = diagnostics.observed_orders(errs)
    ok = bool(np.all(np.abs(orders - 2.0) <= 0.25))
    return [("convergence/timestepper-order", ok,
             "orders " + " ".join(f"{o:.2f}" for o in orders))]


def run_verify(cfg, suites=None, corrupt=None, stream=None):
    stream = sys.stdout if stream is None else stream
    suites = tuple(suites) if suites is not None else VERIFY_SUITES
    if not suites:
        raise ConfigError("empty verification suite selection")
    unknown = set(suites) - set(VERIFY_SUITES)
    if unknown:
        raise ConfigError(f"unknown verification suites: {sorted(unknown)}")
    runners = {"assembly": _verify_assembly, "rellich": _verify_rellich,
               "strauss": _verify_strauss, "convergence": _verify_convergence}
    all_ok = True
    for suite in suites:
        for name, ok, detail in runners[suite](cfg, corrupt):
            stream.write(f"{'PASS' if ok else 'FAIL'} {name}: {detail}\n")
            all_ok &= ok
    return EXIT_OK if all_ok else 1


def run_sweep(cfg, stream=None):
    stream = sys.stdout if stream is None else stream
    if not cfg.sweep_alphas or not cfg.sweep_laws:
        raise ConfigError("sweep requires [sweep] alpha and laws lists")
    rows = []
    for alpha in cfg.sweep_alphas:
        for law_name in cfg.sweep_laws:
            # copy, not re-parse: command-line overrides must reach each point
            point = replace(cfg)
            point.alpha1 = point.alpha2 = alpha
            point.law1_name = point.law2_name = law_name
            point.law1_params = point.law2_params = {}
            mesh, partition, system = build_problem(point)
            cert = build_certificate(point, mesh, partition, system)
            eta = f"{cert.eta:.17g}" if cert.admissible else ""
            rate = ""
            if cert.admissible:
                state0, _ = project_initial_data(system, *_initial_fields(point, mesh))
                recorder = diagnostics.TraceRecorder(system, certificate=cert)
                integrate(system, state0, point.T, StepControl(dt=point.dt),
                          observers=(recorder,))
                try:
                    rate = f"{diagnostics.fit_decay_rate(recorder.trace()).rate:.17g}"
                except FitUndefinedError:
                    rate = ""
            rows.append((f"{alpha:.17g}", f"{alpha:.17g}", law_name, law_name,
                         str(cert.admissible).lower(), eta, rate))
    rows.sort()
    outdir = Path(cfg.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    body = "alpha1,alpha2,law1,law2,admissible,eta,fitted_rate\n"
    body += "".join(",".join(r) + "\n" for r in rows)
    (outdir / f"{cfg.prefix}_sweep.csv").write_text(body)
    stream.write(body)
    return EXIT_OK


def run_fit(trace_path, window=None, stream=None):
    stream = sys.stdout if stream is None else stream
    trace = read_trace_csv(trace_path)
    fit = diagnostics.fit_decay_rate(trace, window=window)
    stream.write(f"rate {fit.rate:.17g}\n"
                 f"intercept {fit.intercept:.17g}\n"
                 f"r_squared {fit.r_squared:.17g}\n")
    return EXIT_OK


def read_trace_csv(path):
    """Rebuild an EnergyTrace from a trace CSV (post-processing columns only)."""
    try:
        with open(path) as fh:
            lines = [ln for ln in fh.read().splitlines() if ln and not ln.startswith("#")]
    except OSError as exc:
        raise ConfigError(f"cannot read trace: {exc}") from exc
    if not lines or lines[0].split(",")[:8] != list(diagnostics.TRACE_COLUMNS[:8]):
        raise ConfigError(f"not a trace CSV: {path}")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    zeros = np.zeros(len(data))
    return diagnostics.EnergyTrace(
        t=data[:, 0], E=data[:, 1], F=data[:, 2], G=data[:, 3],
        lyapunov=data[:, 4], D_u=data[:, 5], D_v=data[:, 6], E_star=data[:, 7],
        stiff_u=zeros, mu_prime_term=zeros, bdry_u_sq=zeros, bdry_v_sq=zeros)


# ---------------------------------------------------------------------------
# CLI

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="beamstab",
        description="Simulator and verification harness for a boundary-damped "
                    "coupled wave system.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        p.add_argument("--config", required=needs_config, help="INI config file")
        p.add_argument("--out", help="output directory override")
        p.add_argument("--dt", type=float, help="time step override")
        p.add_argument("--T", type=float, dest="T", help="final time override")
        p.add_argument("--refine", type=int, default=0, metavar="K",
                       help="halve h and dt K times")
        p.add_argument("--plot", action="store_true", help="emit an SVG energy plot")

    common(sub.add_parser("check", help="evaluate the decay-rate certificate"))
    common(sub.add_parser("simulate", help="run and record a full trace"))
    verify = sub.add_parser("verify", help="run invariant verification suites")
    common(verify)
    verify.add_argument("--suite", action="append", dest="suites",
                        metavar="NAME", help=f"one of {', '.join(VERIFY_SUITES)}; "
                        "repeatable (default: all)")
    common(sub.add_parser("sweep", help="grid over coupling strengths and laws"))
    fit = sub.add_parser("fit", help="fit a decay rate to an existing trace CSV")
    fit.add_argument("trace", help="trace CSV produced by simulate")
    fit.add_argument("--window", type=float, nargs=2, metavar=("TA", "TB"))
    return parser


def main(argv=None):
    logging.basicConfig(level=os.environ.get("BEAMSTAB_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        if args.command == "fit":
            window = tuple(args.window) if args.window else None
            return run_fit(args.trace, window=window)
        cfg = parse_config(args.config)
        apply_overrides(cfg, dt=args.dt, T=args.T, refine=args.refine,
                        out=args.out, plot=args.plot or None)
        if args.command == "check":
            return run_check(cfg, out=args.out)
        if args.command == "simulate":
            return run_simulate(cfg)
        if args.command == "verify":
            return run_verify(cfg, suites=args.suites)
        if args.command == "sweep":
            return run_sweep(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvalidArgumentError, InadmissiblePartitionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StepFailureError as exc:
        print(f"step failure at t={exc.t:.17g}", file=sys.stderr)
        return EXIT_STEP_FAILURE
    return EXIT_USAGE


def cli():
    sys.exit(main())
