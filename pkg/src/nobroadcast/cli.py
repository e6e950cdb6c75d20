"""Command-line front end.

    nobroadcast relent            entropy property suite on seeded random states
    nobroadcast broadcast         copier check and optimizer probe for a source pair
    nobroadcast classical-limit   hbar sweep of the moment integrals, or V-matrix checks
    nobroadcast dynamics          kernel limit and quantum/classical correspondence

Exit codes: 0 all checks pass, 1 a check failed, 2 bad arguments or inputs.
Output is a pure function of the arguments, so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import broadcasting as bc
from . import dynamics as dyn
from . import entropy as ent
from . import phase_space as ps
from . import quantum_state as qs
from .errors import NoBroadcastError, ValidationError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class ExperimentConfig:
    command: str
    seed: int = 0
    fmt: str = "csv"
    out: str | None = None
    tol: float | None = None
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise UsageError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.tol is not None and not self.tol > 0:
            raise UsageError("tolerance must be positive")
        if self.fmt not in ("csv", "json"):
            raise UsageError(f"unknown format {self.fmt!r}")


@dataclass
class Report:
    """Tables for CSV output plus a JSON document; `passed` drives the exit code."""

    passed: bool
    tables: list[tuple[Sequence[str], list[Sequence[Any]]]]
    document: dict[str, Any]


# -- argument helpers ---------------------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _ints(text: str) -> list[int]:
    """'2,3,4' or an inclusive range '2..8'."""
    try:
        if ".." in text:
            lo, hi = text.split("..")
            vals = list(range(int(lo), int(hi) + 1))
        else:
            vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected integers like '2,3' or '2..8', got {text!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _pair(text: str) -> tuple[float, float]:
    vals = _floats(text)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"expected two numbers, got {text!r}")
    return vals[0], vals[1]


def _num(v) -> Any:
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return _num(obj)


def _render(report: Report, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(_jsonable(report.document), indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    for i, (header, rows) in enumerate(report.tables):
        if i:
            buf.write("\n")
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([repr(_num(v)) if isinstance(_num(v), float) else _num(v) for v in row])
    return buf.getvalue()


def _write(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# -- relent ---------------------------------------------------------------------------


def _check_row(name, count, worst, threshold, passed):
    return {"check": name, "instances": count, "worst": worst, "threshold": threshold, "passed": bool(passed)}


def cmd_relent(cfg: ExperimentConfig) -> Report:
    p = cfg.params
    rng = np.random.default_rng(cfg.seed)
    dims = p["dims"] or [2, 3, 4]
    if any(d < 2 for d in dims):
        raise UsageError("state dimensions must be >= 2")
    n = p["samples"]
    if n < 1:
        raise UsageError("--samples must be >= 1")
    tol_u = cfg.tol or 1e-8
    tol_t = cfg.tol or 1e-9
    tol_m = cfg.tol or 1e-8
    tol_e = cfg.tol or 1e-9
    checks = []

    if p["selftest_negative"]:
        try:
            qs.new_density(np.diag([1.2, -0.2]))
            checks.append(_check_row("selftest-negative", 1, 0.0, 0.0, True))
        except NoBroadcastError as exc:
            row = _check_row("selftest-negative", 1, -0.2, 0.0, False)
            row["error"] = f"{type(exc).__name__}: {exc}"
            checks.append(row)

    worst_neg, worst_u, worst_t = math.inf, 0.0, 0.0
    for i in range(n):
        d = dims[i % len(dims)]
        r1 = qs.random_density(d, rng)
        r2 = qs.random_density(d, rng)
        u = qs.random_unitary(d, rng)
        tau = qs.random_density(2, rng)
        sig = qs.random_density(2, rng)
        worst_neg = min(worst_neg, ent.quantum_relative_entropy(r1, r2))
        worst_u = max(worst_u, ent.unitary_invariance_residual(r1, r2, u))
        worst_t = max(worst_t, ent.tensoring_invariance_residual(r1, r2, tau, sig))
    checks.append(_check_row("nonnegativity", n, worst_neg, 0.0, worst_neg >= 0.0))
    checks.append(_check_row("unitary-invariance", n, worst_u, tol_u, worst_u <= tol_u))
    checks.append(_check_row("tensoring-invariance", n, worst_t, tol_t, worst_t <= tol_t))

    worst_gap = math.inf
    for i in range(n):
        da, db = (2, 2) if i % 2 == 0 else (2, 3)
        r1 = qs.random_density(da * db, rng, dims=(da, db))
        r2 = qs.random_density(da * db, rng, dims=(da, db))
        worst_gap = min(worst_gap, ent.monotonicity_gap(r1, r2, [0]))
    checks.append(_check_row("monotonicity", n, worst_gap, -tol_m, worst_gap >= -tol_m))

    m = max(1, n // 5)
    worst_eq_gap, worst_eq_res = 0.0, 0.0
    for i in range(m):
        da, db = (2, 2) if i % 2 == 0 else (2, 3)
        tau = qs.random_density(da, rng)
        s1 = qs.random_density(db, rng)
        s2 = qs.random_density(db, rng)
        r1, r2 = qs.tensor(tau, s1), qs.tensor(tau, s2)
        worst_eq_gap = max(worst_eq_gap, abs(ent.monotonicity_gap(r1, r2, [1])))
        worst_eq_res = max(worst_eq_res, ent.equality_condition_residual(r1, r2, [1]))
    checks.append(_check_row("equality-gap", m, worst_eq_gap, tol_m, worst_eq_gap <= tol_m))
    checks.append(_check_row("equality-residual", m, worst_eq_res, tol_e, worst_eq_res <= tol_e))

    header = ("check", "instances", "worst", "threshold", "passed")
    passed = all(c["passed"] for c in checks)
    rows = [[c[h] for h in header] for c in checks]
    return Report(passed, [(header, rows)], {"command": "relent", "seed": cfg.seed, "passed": passed, "checks": checks})


# -- broadcast ------------------------------------------------------------------------------

PRESETS = {
    "commuting-diagonal": dict(dims=(2, 2, 2), restarts=2, max_evals=100_000, target=1e-7),
    "zero-plus": dict(dims=(2, 2, 4), restarts=20, max_evals=30_000, target=1e-9),
    "custom": dict(dims=None, restarts=20, max_evals=30_000, target=1e-9),
}


def _preset_sources(name: str) -> list[qs.DensityMatrix]:
    if name == "commuting-diagonal":
        return [qs.new_density(np.diag([0.7, 0.3])), qs.new_density(np.diag([0.2, 0.8]))]
    if name == "zero-plus":
        return [qs.basis_state(0, 2), qs.pure([1.0, 1.0])]
    raise UsageError(f"unknown preset {name!r}")


def _load_sources(path: str) -> list[qs.DensityMatrix]:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read sources from {path}: {exc}") from exc
    recs = doc["sources"] if isinstance(doc, dict) and "sources" in doc else doc
    if not isinstance(recs, list) or len(recs) != 2:
        raise UsageError("a sources file holds exactly two matrix records")
    states = [qs.density_from_json(r) for r in recs]
    if states[0].dim != states[1].dim:
        raise UsageError(f"source dimensions differ: {states[0].dim} vs {states[1].dim}")
    return states


def _cert_row(probe: str, cert: bc.BroadcastCertificate, seed: int, restarts: int) -> dict:
    return cert.to_record(probe=probe, seed=seed, restarts=restarts)


def cmd_broadcast(cfg: ExperimentConfig) -> Report:
    p = cfg.params
    preset = "custom" if p["sources"] else p["preset"]
    defaults = PRESETS[preset]
    sources = _load_sources(p["sources"]) if p["sources"] else _preset_sources(preset)
    d = sources[0].dim
    dims = tuple(p["dims"]) if p["dims"] else (defaults["dims"] or (d, d, d * d))
    if len(dims) != 3:
        raise UsageError("--dims takes source,target,machine")
    if dims[0] != d or dims[1] != d:
        raise UsageError(f"--dims {dims} does not match {d}-dimensional sources")
    restarts = p["restarts"] if p["restarts"] is not None else defaults["restarts"]
    max_evals = p["max_evals"] if p["max_evals"] is not None else defaults["max_evals"]
    if restarts < 1 or max_evals < 10:
        raise UsageError("need at least one restart and ten evaluations")
    task = bc.BroadcastTask.with_defaults(sources, dims[2])
    opt = bc.OptimizerConfig(seed=cfg.seed, restarts=restarts, max_evals=max_evals, target=defaults["target"])

    records, checks = [], []
    cert_task = bc.reduced_task(task, p["lam"])
    if preset == "commuting-diagonal":
        u = bc.classical_copier(d, dims[2])
        cert = bc.entropy_gap_certificate(cert_task, u)
        records.append(_cert_row("copier", cert, cfg.seed, 0))
        checks.append(cert.residual <= 1e-10 and abs(cert.gap) <= 1e-9)

    result, summary = bc.probe_no_broadcast(task, opt, p["lam"], p["window"], p["gap_tol"])
    u = bc.unitary_from_params(result.best, task.total_dim)
    cert = bc.entropy_gap_certificate(cert_task, u)
    rec = _cert_row("optimizer", cert, cfg.seed, restarts)
    records.append(rec)
    if preset == "commuting-diagonal":
        tol = cfg.tol or 1e-6
        checks.append(cert.residual <= tol and abs(cert.gap) <= math.sqrt(tol))
    elif preset == "zero-plus":
        checks.append(summary.floor > 1e-3 and summary.no_broadcast)

    passed = all(checks)
    header = ("probe", "residual", "entropy_in", "entropy_out", "gap", "seed", "restarts")
    rows = [[r[h] for h in header] for r in records]
    doc = {
        "command": "broadcast",
        "preset": preset,
        "dims": list(dims),
        "passed": passed,
        "certificates": records,
        "probe": {
            "floor": summary.floor,
            "restart_residuals": list(summary.restart_residuals),
            "best_restart": result.best_restart,
            "window": summary.window,
            "gap_tol": summary.gap_tol,
            "in_window": summary.in_window,
            "min_gap_in_window": summary.min_gap_in_window,
            "violations": summary.violations,
            "max_evals": max_evals,
            "mixture_weight": p["lam"] if cert_task is not task else None,
        },
    }
    return Report(passed, [(header, rows)], doc)


# -- classical-limit ----------------------------------------------------------------------------


def _distribution(path, center, sigma, nodes, span) -> ps.PhaseSpaceDistribution:
    if path:
        return ps.PhaseSpaceDistribution.from_csv(path)
    return ps.PhaseSpaceDistribution.gaussian(center=center, sigma=sigma, nodes=nodes, span=span)


def _vmatrix_report(ns: list[int]) -> Report:
    rows, checks = [], []
    for n in ns:
        r = ps.verify_v_matrix(n)
        ok = (
            r["normality"] <= 1e-12
            and r["eigen_residual"] <= 1e-10
            and r["zero_eigenvalues"] == 2
            and r["multiset_error"] <= 1e-10
            and (n != 2 or (abs(r["nonzero_min"] - 2) <= 1e-12 and abs(r["nonzero_max"] - 2) <= 1e-12))
        )
        r["passed"] = bool(ok)
        checks.append(r)
    header = ("n", "normality", "eigen_residual", "zero_eigenvalues", "multiset_error", "passed")
    rows = [[c[h] for h in header] for c in checks]
    passed = all(c["passed"] for c in checks)
    return Report(passed, [(header, rows)], {"command": "classical-limit", "vmatrix": checks, "passed": passed})


def cmd_classical_limit(cfg: ExperimentConfig) -> Report:
    p = cfg.params
    if p["vmatrix"]:
        if min(p["vmatrix"]) < 2:
            raise UsageError("V-matrix block counts must be >= 2")
        return _vmatrix_report(p["vmatrix"])
    if p["n"] < 2:
        raise UsageError("the moment order n must be >= 2")
    if p["grid"] < 3:
        raise UsageError("--grid needs at least 3 nodes")
    P1 = _distribution(p["p1"], p["center"], p["sigma"], p["grid"], p["span"])
    if p["p2"] or p["center2"] is not None or p["sigma2"] is not None:
        P2 = _distribution(p["p2"], p["center2"] or p["center"], p["sigma2"] or p["sigma"], p["grid"], p["span"])
    else:
        P2 = P1
    rows = ps.hbar_sweep(P1, P2, p["n"], p["hbar_schedule"])
    errs = [r.rel_error for r in rows]
    passed = all(b < a for a, b in zip(errs, errs[1:]))
    tables = [(ps.SweepRow.CSV_FIELDS, [[getattr(r, f) for f in ps.SweepRow.CSV_FIELDS] for r in rows])]
    doc = {
        "command": "classical-limit",
        "n": p["n"],
        "passed": passed,
        "check": "rel_error strictly decreasing",
        "rows": [
            {f: getattr(r, f) for f in ps.SweepRow.CSV_FIELDS + ("quantum_raw", "fock_dim")} for r in rows
        ],
    }
    if p["entropy"]:
        ent_rows = ps.entropy_limit_sweep(P1, P2, p["hbar_schedule"])
        tables.append((("hbar", "quantum_entropy", "classical_entropy"), [list(r) for r in ent_rows]))
        doc["entropy"] = [dict(zip(("hbar", "quantum_entropy", "classical_entropy"), r)) for r in ent_rows]
    return Report(passed, tables, doc)


# -- dynamics ---------------------------------------------------------------------------------------


def _nonincreasing(vals: Sequence[float], floor: float) -> bool:
    return all(b <= a + floor for a, b in zip(vals, vals[1:]))


def cmd_dynamics(cfg: ExperimentConfig) -> Report:
    p = cfg.params
    if p["grid"] < 3:
        raise UsageError("--grid needs at least 3 nodes")
    nodes = p["grid"] if p["grid"] % 2 else p["grid"] + 1
    P0 = ps.PhaseSpaceDistribution.gaussian(
        center=p["center"], sigma=p["sigma"], nodes=nodes, extent=p["extent"]
    )
    lam_grid = None
    if p["hamiltonian_csv"]:
        H = dyn.CharacteristicFunction.from_csv(p["hamiltonian_csv"])
        lam_grid = (H.lam, H.mu)
    else:
        H = dyn.PolynomialHamiltonian.preset(p["hamiltonian"], p["coefficient"], p["quartic"])
    if p["t_final"] < 0 or p["dt"] <= 0:
        raise UsageError("t_final must be >= 0 and dt > 0")
    schedule = p["hbar_schedule"]

    lo, hi = p["kernel_box"]
    kernel_rows = []
    for h in p["kernel_hbar"]:
        dev = dyn.kernel_deviation([lo] * 4, [hi] * 4, h, p["samples"])
        kernel_rows.append((h, dev, dev / h))
    ratios = [r[2] for r in kernel_rows]
    kernel_ok = min(ratios) > 0 and max(ratios) / min(ratios) <= 3.0

    rows = dyn.correspondence_report(P0, H, schedule, p["t_final"], p["dt"], p["fock_margin"], lam_grid)
    floor = cfg.tol or 1e-6
    cols = ("dx_mean", "dp_mean", "dx2", "dp2")
    corr_ok = all(_nonincreasing([getattr(r, c) for r in rows], floor) for c in cols)
    passed = kernel_ok and corr_ok

    corr_header = dyn.CorrespondenceRow.CSV_FIELDS
    tables = [
        (corr_header, [[getattr(r, f) for f in corr_header] for r in rows]),
        (("hbar", "kernel_deviation", "ratio"), [list(r) for r in kernel_rows]),
    ]
    doc = {
        "command": "dynamics",
        "hamiltonian": p["hamiltonian_csv"] or p["hamiltonian"],
        "passed": passed,
        "checks": {"kernel_ratio_band": kernel_ok, "deviations_nonincreasing": corr_ok, "floor": floor},
        "correspondence": [
            dict({f: getattr(r, f) for f in corr_header}, fock_dim=r.fock_dim, quantum=r.quantum, classical=r.classical)
            for r in rows
        ],
        "kernel": [dict(zip(("hbar", "kernel_deviation", "ratio"), r)) for r in kernel_rows],
    }
    return Report(passed, tables, doc)


# -- parser -----------------------------------------------------------------------------------------

COMMANDS = {
    "relent": cmd_relent,
    "broadcast": cmd_broadcast,
    "classical-limit": cmd_classical_limit,
    "dynamics": cmd_dynamics,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed of the single random generator")
    common.add_argument("--format", choices=("csv", "json"), default="csv", dest="fmt")
    common.add_argument("--out", metavar="PATH", help="write the report here instead of stdout")
    common.add_argument("--tol", type=float, help="override the pass threshold of the checks")

    parser = argparse.ArgumentParser(prog="nobroadcast", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    r = sub.add_parser("relent", parents=[common], help="relative-entropy property suite")
    r.add_argument("--samples", type=int, default=1000)
    r.add_argument("--dims", type=_ints, help="state dimensions to cycle through (default 2,3,4)")
    r.add_argument("--selftest-negative", action="store_true", help="inject a non-positive matrix; must fail")

    b = sub.add_parser("broadcast", parents=[common], help="broadcasting probe for two sources")
    b.add_argument("--preset", choices=("commuting-diagonal", "zero-plus"), default="commuting-diagonal")
    b.add_argument("--sources", metavar="PATH", help="JSON file with two matrix records (overrides --preset)")
    b.add_argument("--dims", type=_ints, help="source,target,machine dimensions")
    b.add_argument("--restarts", type=int)
    b.add_argument("--max-evals", type=int, dest="max_evals")
    b.add_argument("--lam", type=float, default=0.5, help="mixing weight for infinite-entropy pairs")
    b.add_argument("--window", type=float, default=0.05, help="residual window for certificates")
    b.add_argument("--gap-tol", type=float, default=1e-3, dest="gap_tol")

    c = sub.add_parser("classical-limit", parents=[common], help="hbar sweep of the moment integrals")
    c.add_argument("--n", type=int, default=2, help="moment order (>= 2)")
    c.add_argument("--hbar-schedule", type=_floats, default=[1.0, 0.5, 0.25, 0.125], dest="hbar_schedule")
    c.add_argument("--grid", type=int, default=129, help="nodes per phase-space axis")
    c.add_argument("--span", type=float, default=6.0, help="grid half-width in standard deviations")
    c.add_argument("--center", type=_pair, default=(0.0, 0.0))
    c.add_argument("--sigma", type=float, default=1.0)
    c.add_argument("--center2", type=_pair)
    c.add_argument("--sigma2", type=float)
    c.add_argument("--p1", metavar="CSV", help="first distribution as x,p,value rows")
    c.add_argument("--p2", metavar="CSV", help="second distribution as x,p,value rows")
    c.add_argument("--entropy", action="store_true", help="add the S vs KL comparison")
    c.add_argument("--vmatrix", type=_ints, metavar="N", help="verify the V matrix for these sizes, e.g. 2..8")

    d = sub.add_parser("dynamics", parents=[common], help="kernel limit and dynamical correspondence")
    d.add_argument("--hamiltonian", choices=("zero", "free", "harmonic", "quartic"), default="harmonic")
    d.add_argument("--hamiltonian-csv", metavar="CSV", dest="hamiltonian_csv",
                   help="sampled characteristic function of H as lam,mu,re,im rows")
    d.add_argument("--coefficient", type=float, default=1.0)
    d.add_argument("--quartic", type=float, default=0.1)
    d.add_argument("--hbar-schedule", type=_floats, default=[0.2, 0.1, 0.05], dest="hbar_schedule")
    d.add_argument("--t-final", type=float, default=math.pi / 2, dest="t_final")
    d.add_argument("--dt", type=float, default=0.01)
    d.add_argument("--grid", type=int, default=65)
    d.add_argument("--extent", type=float, default=5.0)
    d.add_argument("--center", type=_pair, default=(2.0, 0.5))
    d.add_argument("--sigma", type=float, default=0.5)
    d.add_argument("--fock-margin", type=int, default=20, dest="fock_margin")
    d.add_argument("--kernel-box", type=_pair, default=(-2.0, 2.0), dest="kernel_box")
    d.add_argument("--kernel-hbar", type=_floats, default=[0.2, 0.1, 0.05, 0.025], dest="kernel_hbar")
    d.add_argument("--samples", type=int, default=10_000)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on bad usage
    params = {k: v for k, v in vars(args).items() if k not in ("command", "seed", "fmt", "out", "tol")}
    try:
        cfg = ExperimentConfig(args.command, args.seed, args.fmt, args.out, args.tol, params)
        report = COMMANDS[args.command](cfg)
    except (UsageError, ValidationError, OSError) as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NoBroadcastError as exc:
        print(f"{parser.prog} {args.command}: check failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    _write(_render(report, cfg.fmt), cfg.out)
    return EXIT_OK if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
