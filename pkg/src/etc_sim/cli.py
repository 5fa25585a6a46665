"""Command-line entry point: ``etc-sim run|compare|certify|validate <scenario>``."""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

from .analysis import check_lyapunov_decrease, convergence_report, trigger_stats
from .errors import (
    BudgetExceeded,
    CertificateDegenerate,
    EmptyLog,
    LyapunovResidualTooLarge,
    NonFinite,
    NotHurwitz,
    ParseError,
    RhoViolated,
    SingularLyapunov,
    ValidationError,
    ZenoSuspect,
)
from .models import phi_lipschitz_check
from .output import (
    certificate_lines,
    convergence_lines,
    format_report,
    stats_lines,
    write_csv,
    write_report,
    write_svg,
)
from .scenario import load_scenario
from .simulator import run_ideal_validation, simulate, simulate_periodic_baseline
from .triggering import LyapunovPair, build_certificate

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED = 0, 1, 2
SETTLE_THRESHOLD = 1e-2
BASELINE_DELTA = 0.05
VALIDATE_T_END = 0.002
# the ideal policies fire almost every step; a fine grid leaves samples clear of transmissions
VALIDATE_DT = 1e-7
VALIDATE_EVENT_TOL = 1e-9
LIPSCHITZ_SAMPLES = 2000
LIPSCHITZ_RADIUS = 10.0

_INVALID = (ParseError, ValidationError, FileNotFoundError, IsADirectoryError, BudgetExceeded, NotHurwitz, RhoViolated,
            SingularLyapunov, LyapunovResidualTooLarge, CertificateDegenerate)
_DIVERGED = (NonFinite, ZenoSuspect)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="etc-sim", description="Event-triggered observer-based control simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("scenario", help="scenario file path or built-in name")
        p.add_argument("--dt", type=float, default=None, help="override the integrator step")
        p.add_argument("--out", default=None, help="output directory (default: current; ETC_SIM_OUT wins)")
        p.add_argument("--seed", type=int, default=0, help="seed for sampled Lipschitz estimates")

    common(sub.add_parser("run", help="simulate and write CSV, SVG and report"))
    p = sub.add_parser("compare", help="event-triggered run against a periodic baseline")
    common(p)
    p.add_argument("--delta", type=float, default=BASELINE_DELTA, help="baseline sampling period")
    common(sub.add_parser("certify", help="compute the stability certificate only"))
    p = sub.add_parser("validate", help="check the sampling-error budget under ideal node policies")
    common(p)
    p.add_argument("--t-end", type=float, default=VALIDATE_T_END, help="validation horizon")
    return parser


def _out_dir(arg: str | None) -> Path:
    return Path(os.environ.get("ETC_SIM_OUT") or arg or ".")


def _certificate(sc):
    ctrl, obs = sc.controller(), sc.observer()
    lyap = LyapunovPair.from_gains(sc.plant, ctrl, obs)
    return lyap, build_certificate(sc.plant, ctrl, obs, lyap)


def _scenario_section(sc) -> dict:
    return {"name": sc.name, "model": sc.model_name or "inline", "t_end": sc.t_end, "dt": sc.dt,
            "event_tol": sc.event_tol, "budget": sc.budget}


def _path(sc, out: Path, kind: str, suffix: str) -> Path:
    name = sc.outputs.get(kind) or f"{sc.name}{suffix}"
    return out / Path(name).name if not Path(name).is_absolute() else Path(name)


def _cmd_run(sc, args, out: Path) -> int:
    result = simulate(sc)
    sections = [("scenario", _scenario_section(sc))]
    try:
        _, cert = _certificate(sc)
        sections.append(("certificate", certificate_lines(cert)))
    except _INVALID as exc:
        sections.append(("certificate", [f"unavailable: {exc}"]))
    try:
        sections.append(("triggers event", stats_lines(trigger_stats(result))))
    except EmptyLog:
        sections.append(("triggers event", ["total: 0"]))
    sections.append(("convergence", convergence_lines(convergence_report(result, SETTLE_THRESHOLD))))
    csv = write_csv(result, _path(sc, out, "csv", ".csv"))
    svg = write_svg(result, _path(sc, out, "svg", ".svg"), title=sc.name)
    rep = write_report(sections, _path(sc, out, "report", ".report"))
    for path in (csv, svg, rep):
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_compare(sc, args, out: Path) -> int:
    event = simulate(sc)
    periodic = simulate_periodic_baseline(sc, args.delta)
    sections = [
        ("scenario", _scenario_section(sc) | {"baseline_delta": args.delta}),
        ("triggers event", stats_lines(trigger_stats(event))),
        ("triggers periodic", stats_lines(trigger_stats(periodic))),
        ("convergence event", convergence_lines(convergence_report(event, SETTLE_THRESHOLD))),
        ("convergence periodic", convergence_lines(convergence_report(periodic, SETTLE_THRESHOLD))),
    ]
    path = write_report(sections, out / f"{sc.name}.compare.report")
    print(format_report(sections), end="")
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_certify(sc, args, out: Path) -> int:
    _, cert = _certificate(sc)
    est = phi_lipschitz_check(sc.plant, LIPSCHITZ_SAMPLES, LIPSCHITZ_RADIUS, seed=args.seed)
    lip = {"rho": sc.plant.rho, "sampled_phi_lipschitz": est, "radius": LIPSCHITZ_RADIUS, "seed": args.seed}
    act, _ = cert.relative_factors()
    lip["actuator_threshold_factor_min"] = min(act) if act else None
    sections = [("scenario", _scenario_section(sc)), ("certificate", certificate_lines(cert)), ("lipschitz", lip)]
    path = write_report(sections, out / f"{sc.name}.certificate.report")
    print(format_report(sections), end="")
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_validate(sc, args, out: Path) -> int:
    lyap, cert = _certificate(sc)
    horizon = min(args.t_end, sc.t_end)
    fine = {} if args.dt is not None else {"dt": VALIDATE_DT, "event_tol": VALIDATE_EVENT_TOL}
    sc = dataclasses.replace(sc, disturbances=[d for d in sc.disturbances if d.time < horizon], t_end=horizon, **fine)
    report = run_ideal_validation(sc, cert)
    check = check_lyapunov_decrease(report.result, lyap, cert)
    sections = [
        ("scenario", _scenario_section(sc)),
        ("budget", {"samples_checked": report.samples_checked, "violations": len(report.violations),
                    "sigma_prime": cert.sigma_prime, "worst_ratio": report.worst_ratio}),
        ("lyapunov", {"status": check.status, "checked": check.checked, "excluded": len(check.excluded),
                      "violations": len(check.violations)}),
    ]
    path = write_report(sections, out / f"{sc.name}.validate.report")
    print(format_report(sections), end="")
    print(f"wrote {path}")
    return EXIT_OK if report.ok and not check.violations else EXIT_INVALID


_COMMANDS = {"run": _cmd_run, "compare": _cmd_compare, "certify": _cmd_certify, "validate": _cmd_validate}


def cli_main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sc = load_scenario(args.scenario)
        if args.dt is not None:
            sc = dataclasses.replace(sc, dt=args.dt)
        return _COMMANDS[args.command](sc, args, _out_dir(args.out))
    except _DIVERGED as exc:
        print(f"etc-sim: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except _INVALID as exc:
        print(f"etc-sim: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"etc-sim: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main() -> None:
    sys.exit(cli_main())
