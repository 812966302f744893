"""Command-line front end: figure data, sweeps and run manifests.

Every subcommand writes its data files plus ``manifest.json`` into an
existing ``--out`` directory.  Nothing is written unless the whole run
succeeds.  Exit codes: 0 success, 2 configuration error, 3 numerical failure;
errors are reported as one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import platform
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .fock import StateVector, basis_new, state_to_csv
from .hamiltonian import (
    NumericalError,
    TmsjjParams,
    build_hamiltonian,
    detect_lambda_cr,
    ground_state,
    noon_fidelity,
    spectrum,
)
from .loss import SWEEP_COLUMNS, loss_decompose, qfi_upper_bound, sigma_sweep
from .metrology import SingularFisherError, bound_table, chi_qfi_pm, qfi_phase_shift
from .semiclassical import (
    SemiclassicalState,
    SingularStateError,
    eom_rhs_raw,
    heff,
    heff_raw,
    integrate,
)

WORKERS_ENV = "SOLITON_SENSORNET_WORKERS"
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

DEFAULT_LAMBDA = {
    "spectrum": "0:6:121",
    "ground": "0,3.30272,3.305",
    "sweep-sigma": "0:6:61",
    "semiclassical": "1.0",
    "chi": "1e-9",
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    N: list[int]
    k: list[int]
    lambdas: list[float]
    etas: list[float]
    out: str
    tol: float | None = None
    workers: int = 1
    fmt: str = "csv"
    seed: int = 0
    extra: dict = field(default_factory=dict)


def parse_grid(text: str) -> list[float]:
    """``start:stop:count`` (inclusive endpoints), a comma list, or one number."""
    text = text.strip()
    try:
        if ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise ConfigError(f"grid {text!r} must be start:stop:count")
            start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
            if count < 1:
                raise ConfigError("grid count must be >= 1")
            if count == 1:
                return [start]
            return [float(x) for x in np.linspace(start, stop, count)]
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"cannot parse grid {text!r}: {exc}") from None
    if not values:
        raise ConfigError("empty grid")
    return values


def parse_int_list(text: str, name: str) -> list[int]:
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"--{name} expects integers, got {text!r}") from None
    if not values:
        raise ConfigError(f"--{name} is empty")
    return values


def fmt_float(x) -> str:
    """Shortest round-trip decimal for a double."""
    return repr(float(x))


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"{type(o).__name__} is not JSON serializable")


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, default=_json_default) + "\n"


def _table(name: str, columns, rows, fmt: str) -> dict[str, str]:
    if fmt == "json":
        records = [dict(zip(columns, (v.item() if isinstance(v, np.generic) else v for v in r))) for r in rows]
        return {f"{name}.json": _json_text(records)}
    return {f"{name}.csv": _csv_text(columns, rows)}


def _pool_map(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


def _single(values, name):
    if len(values) != 1:
        raise ConfigError(f"--{name} takes a single value for this command")
    return values[0]


def _spectrum_point(job):
    N, lam = job
    return spectrum(build_hamiltonian(TmsjjParams(N, lam))).eigenvalues


def cmd_spectrum(cfg: RunConfig) -> dict[str, str]:
    N = _single(cfg.N, "N")
    results = _pool_map(_spectrum_point, [(N, lam) for lam in cfg.lambdas], cfg.workers)
    rows = []
    for lam, w in zip(cfg.lambdas, results):
        rows.extend((lam, i, float(x), 2.0 * float(x)) for i, x in enumerate(w))
    return _table("spectrum", ("Lambda", "eigen_index", "lambda", "E_over_kappaN"), rows, cfg.fmt)


def _ground_point(job):
    N, lam = job
    return ground_state(build_hamiltonian(TmsjjParams(N, lam)))


def cmd_ground(cfg: RunConfig) -> dict[str, str]:
    N = _single(cfg.N, "N")
    files = {}
    for i, (lam, gs) in enumerate(
        zip(cfg.lambdas, _pool_map(_ground_point, [(N, lam) for lam in cfg.lambdas], cfg.workers))
    ):
        stem = f"ground_{i:03d}"
        files[f"{stem}.csv"] = state_to_csv(gs.state)
        files[f"{stem}.json"] = _json_text({
            "N": N,
            "Lambda": lam,
            "lambda0": gs.energy,
            "E_over_kappaN": gs.energy_per_particle,
            "noon_fidelity": noon_fidelity(gs.state),
            "edge_population": gs.state.edge_population(),
            "degenerate": gs.degenerate,
            "gap": gs.gap,
        })
    return files


def cmd_sweep_sigma(cfg: RunConfig) -> dict[str, str]:
    N = _single(cfg.N, "N")
    files = {}
    failures = []
    for k in cfg.k:
        rows = sigma_sweep(N, k, cfg.lambdas, cfg.etas, workers=cfg.workers)
        failures += [r for r in rows if r["error"]]
        files.update(_table(
            f"sweep_k{k}", SWEEP_COLUMNS,
            [tuple(r[c] for c in SWEEP_COLUMNS) for r in rows], cfg.fmt,
        ))
    if failures:
        files["sweep_failures.json"] = _json_text(
            [{"Lambda": r["Lambda"], "eta": r["eta"], "k": r["k"], "error": r["error"]} for r in failures]
        )
    return files


def cmd_semiclassical(cfg: RunConfig) -> dict[str, str]:
    lam = _single(cfg.lambdas, "lambda")
    n0 = cfg.extra["n0"]
    theta0 = cfg.extra["theta0"]
    tau = cfg.extra["tau"]
    tol = cfg.tol if cfg.tol is not None else 1e-8
    s0 = SemiclassicalState(tuple(n0), tuple(theta0))
    try:
        s0.check(1e-8)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    traj = integrate(s0, lam, tau, tol=tol, n_out=cfg.extra["samples"])
    cols = ("tau", "n1", "n2", "n3", "Theta12", "Theta23", "Theta31", "Heff")
    rows = [(t, *s.n, *s.theta, heff(s, lam)) for t, s in traj]
    return _table("trajectory", cols, rows, cfg.fmt)


def cmd_chi(cfg: RunConfig) -> dict[str, str]:
    lam = _single(cfg.lambdas, "lambda")
    rows = []
    for N in cfg.N:
        for branch in ("in", "out"):
            r = chi_qfi_pm(N, lam, branch)
            rows.append((N, branch, lam, r.theta, r.dtheta_dlambda, r.F, r.sigma, r.sigma * N**3))
    cols = ("N", "branch", "Lambda", "Theta", "dTheta_dLambda", "F", "sigma_chi", "sigma_times_N3")
    return _table("chi", cols, rows, cfg.fmt)


def cmd_lambda_cr(cfg: RunConfig) -> dict[str, str]:
    lo, hi = cfg.extra["bracket"]
    tol = cfg.tol if cfg.tol is not None else 1e-5
    rows = []
    for N in cfg.N:
        try:
            lam_cr = detect_lambda_cr(N, lo, hi, tol)
        except ValueError as exc:
            raise NumericalError(str(exc)) from None
        rows.append({"N": N, "Lambda_cr": lam_cr, "bracket": [lo, hi], "tol": tol})
    if cfg.fmt == "csv":
        return {"lambda_cr.csv": _csv_text(
            ("N", "Lambda_cr", "lo", "hi", "tol"),
            [(r["N"], r["Lambda_cr"], float(lo), float(hi), float(tol)) for r in rows],
        )}
    return {"lambda_cr.json": _json_text(rows)}


def cmd_bounds(cfg: RunConfig) -> dict[str, str]:
    d = cfg.extra["d"]
    rows = []
    for N in cfg.N:
        for k in cfg.k:
            rows += bound_table(d, N, k)
    cols = ("d", "N", "k", "eps", "sigma", "label")
    return _table("bounds", cols, [tuple(r[c] for c in cols) for r in rows], cfg.fmt)


def _random_state(rng, N):
    basis = basis_new(N)
    a = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
    return StateVector(basis, a / np.linalg.norm(a))


def cmd_check(cfg: RunConfig) -> dict[str, str]:
    """Randomized self-checks of the invariants that need no reference data."""
    rng = np.random.default_rng(cfg.seed)
    trials = cfg.extra["trials"]
    worst = {"loss_normalization": 0.0, "lossless_bound_vs_pure": 0.0, "eom_vs_gradient": 0.0}
    for _ in range(trials):
        N = int(rng.integers(1, max(cfg.N) + 1))
        psi = _random_state(rng, N)
        eta = float(rng.choice(cfg.etas))
        dec = loss_decompose(psi, eta)
        worst["loss_normalization"] = max(worst["loss_normalization"], abs(dec.probabilities().sum() - 1))
        k = int(rng.choice(cfg.k))
        F_pure = qfi_phase_shift(psi, k)
        F_ub = qfi_upper_bound(psi, 1.0, k)
        rel = np.abs(F_ub - F_pure).max() / max(np.abs(F_pure).max(), 1e-300)
        worst["lossless_bound_vs_pure"] = max(worst["lossless_bound_vs_pure"], float(rel))

        n = rng.dirichlet([1.0, 1.0, 1.0])
        th = rng.uniform(-math.pi, math.pi, 3)
        lam = float(rng.uniform(0, 5))
        y = SemiclassicalState.from_absolute(n, th).as_array()
        h = 1e-6
        grad_th, grad_n = np.empty(3), np.empty(3)
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            grad_th[j] = (heff_raw(n, th + e, lam) - heff_raw(n, th - e, lam)) / (2 * h)
            grad_n[j] = -(heff_raw(n + e, th, lam) - heff_raw(n - e, th, lam)) / (2 * h)
        fd = np.concatenate([grad_th, [grad_n[1] - grad_n[0], grad_n[2] - grad_n[1], grad_n[0] - grad_n[2]]])
        worst["eom_vs_gradient"] = max(worst["eom_vs_gradient"], float(np.abs(eom_rhs_raw(y, lam) - fd).max()))
    limits = {"loss_normalization": 1e-12, "lossless_bound_vs_pure": 1e-8, "eom_vs_gradient": 1e-6}
    report = {
        "seed": cfg.seed,
        "trials": trials,
        "checks": {k: {"worst": worst[k], "limit": limits[k], "pass": bool(worst[k] <= limits[k])} for k in worst},
    }
    files = {"check.json": _json_text(report)}
    if not all(c["pass"] for c in report["checks"].values()):
        raise NumericalError("self-check failed: " + json.dumps(report["checks"]))
    return files


COMMANDS = {
    "spectrum": cmd_spectrum,
    "ground": cmd_ground,
    "sweep-sigma": cmd_sweep_sigma,
    "semiclassical": cmd_semiclassical,
    "chi": cmd_chi,
    "lambda-cr": cmd_lambda_cr,
    "bounds": cmd_bounds,
    "check": cmd_check,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="soliton-sensornet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, N="20", k="1", eta="1.0"):
        p.add_argument("--N", default=N, help="particle number(s), comma separated")
        p.add_argument("--k", default=k, help="phase exponent(s), comma separated")
        p.add_argument("--lambda", dest="lam", default=None, help="start:stop:count, list, or value")
        p.add_argument("--eta", default=eta, help="transparencies, comma separated")
        p.add_argument("--out", required=True, help="existing output directory")
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--format", dest="fmt", choices=("csv", "json"), default="csv")
        p.add_argument("--seed", type=int, default=0)
        return p

    common(sub.add_parser("spectrum", help="full TMSJJ spectrum over a Lambda grid"))
    common(sub.add_parser("ground", help="ground-state distributions with JSON sidecars"))
    common(sub.add_parser("sweep-sigma", help="lossy accuracy bound over Lambda and eta"),
           k="1,3", eta="1.0,0.99,0.9,0.8")
    p = common(sub.add_parser("semiclassical", help="Hartree-model trajectory"))
    p.add_argument("--n0", default="0.3333333333333333,0.3333333333333333,0.3333333333333334")
    p.add_argument("--theta0", default="0,0,0", help="Theta12,Theta23,Theta31")
    p.add_argument("--tau", type=float, default=100.0)
    p.add_argument("--samples", type=int, default=101)
    common(sub.add_parser("chi", help="chi accuracy with in-/out-of-phase N00N states"))
    p = common(sub.add_parser("lambda-cr", help="locate the ground-state transition"))
    p.add_argument("--bracket", default="3.0:3.6")
    p = common(sub.add_parser("bounds", help="closed-form benchmark accuracies"))
    p.add_argument("--d", type=int, default=2)
    p = common(sub.add_parser("check", help="randomized invariant self-checks"),
               N="12", k="1,2,3", eta="0.5,0.9,0.99")
    p.add_argument("--trials", type=int, default=50)
    return parser


def _resolve_workers(flag: int | None) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    else:
        value = flag if flag is not None else (os.cpu_count() or 1)
    if value < 1:
        raise ConfigError("worker count must be >= 1")
    return value


def config_from_args(args) -> RunConfig:
    lam_text = args.lam if args.lam is not None else DEFAULT_LAMBDA.get(args.command, "0")
    cfg = RunConfig(
        command=args.command,
        N=parse_int_list(args.N, "N"),
        k=parse_int_list(args.k, "k"),
        lambdas=parse_grid(lam_text),
        etas=parse_grid(args.eta),
        out=args.out,
        tol=args.tol,
        workers=_resolve_workers(args.workers),
        fmt=args.fmt,
        seed=args.seed,
    )
    if min(cfg.N) < 1:
        raise ConfigError("N must be >= 1")
    if min(cfg.k) < 1:
        raise ConfigError("k must be >= 1")
    if any(lam < 0 for lam in cfg.lambdas):
        raise ConfigError("Lambda must be >= 0")
    if any(not 0 < e <= 1 for e in cfg.etas):
        raise ConfigError("eta must lie in (0, 1]")
    if cfg.tol is not None and not cfg.tol > 0:
        raise ConfigError("--tol must be positive")
    if args.command == "semiclassical":
        cfg.extra = {
            "n0": parse_grid(args.n0),
            "theta0": parse_grid(args.theta0),
            "tau": args.tau,
            "samples": args.samples,
        }
        if len(cfg.extra["n0"]) != 3 or len(cfg.extra["theta0"]) != 3:
            raise ConfigError("--n0 and --theta0 need three values each")
    elif args.command == "lambda-cr":
        try:
            lo, hi = (float(x) for x in args.bracket.split(":"))
        except ValueError:
            raise ConfigError(f"--bracket must be lo:hi, got {args.bracket!r}") from None
        if not lo < hi:
            raise ConfigError("--bracket needs lo < hi")
        cfg.extra = {"bracket": (lo, hi)}
    elif args.command == "bounds":
        if args.d < 1:
            raise ConfigError("--d must be >= 1")
        cfg.extra = {"d": args.d}
    elif args.command == "check":
        cfg.extra = {"trials": args.trials}
    return cfg


def _write_all(out: Path, files: dict[str, str]) -> None:
    """Stage every file in a temp dir inside ``out`` and move them in at the end."""
    with tempfile.TemporaryDirectory(dir=out, prefix=".staging-") as stage:
        for name, text in files.items():
            with open(Path(stage) / name, "w", newline="") as fh:
                fh.write(text)
        for name in files:
            os.replace(Path(stage) / name, out / name)


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        cfg = config_from_args(args)
        out = Path(cfg.out)
        if not out.is_dir():
            raise ConfigError(f"output directory {str(out)!r} does not exist")
        if not os.access(out, os.W_OK):
            raise ConfigError(f"output directory {str(out)!r} is not writable")
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))

    start = time.perf_counter()
    try:
        files = COMMANDS[cfg.command](cfg)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))
    except (NumericalError, SingularFisherError, SingularStateError, np.linalg.LinAlgError,
            ArithmeticError) as exc:
        return _fail(EXIT_NUMERICAL, "numerical", f"{type(exc).__name__}: {exc}")
    except ValueError as exc:
        return _fail(EXIT_NUMERICAL, "numerical", f"{type(exc).__name__}: {exc}")

    manifest = {
        "command": cfg.command,
        "argv": argv,
        "config": asdict(cfg),
        "outputs": sorted(files),
        "solver": {
            "eigensolver": "LAPACK dsyev (tridiagonalization + implicit QL/QR)",
            "degeneracy_tol": 1e-10,
            "semiclassical_integrator": "DOP853 adaptive Runge-Kutta",
        },
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "wall_time_s": time.perf_counter() - start,
    }
    files["manifest.json"] = _json_text(manifest)
    _write_all(out, files)
    return 0


if __name__ == "__main__":
    sys.exit(main())
