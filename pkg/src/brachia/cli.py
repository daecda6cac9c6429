"""Command-line interface: ``brachia <subcommand> --scenario NAME | --file PATH``.

Exit codes: 0 success, 2 the run completed but a hypothesis or PASS check
failed, 1 invalid input.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .bench import Scenario, get_scenario, scenario_from_dict, scenario_oracle
from .certify import certify_all, classify_3_2, overall_verdict
from .errors import (
    BootstrapInconsistent,
    BrachiaError,
    ExprSyntaxError,
    NoRoot,
    NormalFormMissing,
    NotOnLocus,
    ScenarioError,
    WrongDimensions,
)
from .extremal import arc_to_csv, hamiltonian_data, integrate_arc, rho_tolerance
from .junction import analyze_switch, stitch_broken_extremal
from .serialize import dumps, plain
from .variation import campaign

TOL_ENV = "BRACHIA_TOL_OVERRIDES"

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_HYPOTHESIS = 2


class InputError(Exception):
    pass


def load_tolerance_overrides(environ=None) -> tuple[Optional[str], dict]:
    env = os.environ if environ is None else environ
    path = env.get(TOL_ENV)
    if not path:
        return None, {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"{TOL_ENV}={path}: {exc}") from exc
    if not isinstance(data, dict):
        raise InputError(f"{TOL_ENV}={path}: tolerance file must hold a JSON object")
    return path, data


def load_scenario(path: str, extra_tolerances: Optional[dict] = None) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ScenarioError("<file>", f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError("<file>", f"invalid JSON: {exc}") from exc
    return scenario_from_dict(data, extra_tolerances)


# --- subcommands -------------------------------------------------------------

def _simulate(sc: Scenario, args) -> tuple[int, dict, Optional[str]]:
    sys_, lam, tols = sc.system, sc.lam, sc.tolerances
    hd = hamiltonian_data(sys_, lam)
    if hd.rho <= rho_tolerance(sys_, lam.q, lam.p, tols):
        broken = stitch_broken_extremal(sys_, lam, sc.horizon, tols)
        rows, header = broken.rows(), broken.csv_header()
        payload = {
            "kind": "broken",
            "switch": broken.switch.to_dict(),
            "t_bar": broken.t_bar,
            "pre_arc": _arc_summary(broken.pre_arc),
            "post_arc": _arc_summary(broken.post_arc),
        }
    else:
        back = integrate_arc(sys_, lam, (0.0, sc.horizon[0]), tols)
        fwd = integrate_arc(sys_, lam, (0.0, sc.horizon[1]), tols)
        order = np.argsort(back.t, kind="stable")
        rows = np.vstack([back.rows()[order][:-1], fwd.rows()])
        header = fwd.csv_header()
        payload = {"kind": "smooth", "backward_arc": _arc_summary(back), "forward_arc": _arc_summary(fwd)}
    payload["samples"] = int(rows.shape[0])
    payload["columns"] = header
    if args.format == "csv":
        return EXIT_OK, payload, arc_to_csv(rows, header)
    payload["trajectory"] = rows
    return EXIT_OK, payload, None


def _arc_summary(arc) -> dict:
    return {
        "t_start": float(arc.t[0]),
        "t_end": float(arc.t[-1]),
        "reason": arc.reason,
        "steps": len(arc.segments),
        "H_drift": arc.H_drift(),
        "q_end": arc.q[-1],
        "p_end": arc.p[-1],
        "t_event": arc.t_event,
        "t_locus": arc.t_locus,
    }


def _jump(sc: Scenario, args):
    rec = analyze_switch(sc.system, sc.lam, sc.tolerances)
    payload = rec.to_dict()
    ok = rec.d is not None
    payload["transversality"] = ok
    payload["margin_tol"] = sc.tolerances.margin_tol
    return (EXIT_OK if ok else EXIT_HYPOTHESIS), payload, None


def _certify(sc: Scenario, args):
    seed = 0 if args.seed is None else args.seed
    certs = certify_all(sc.system, sc.lam, sc.tolerances, seed=seed)
    cls = None
    if sc.n == 3 and sc.k == 2:
        cls = classify_3_2(sc.system, sc.lam, sc.tolerances)
    overall = overall_verdict(certs, cls)
    payload = {
        "certificates": [c.to_dict() for c in certs],
        "verdicts": {c.theorem: c.verdict.value for c in certs},
        "overall": overall.value,
        "classification": None if cls is None else cls.to_dict(),
        "seed": seed,
    }
    code = EXIT_OK if any(c.optimal for c in certs) else EXIT_HYPOTHESIS
    return code, payload, None


def _classify(sc: Scenario, args):
    cls = classify_3_2(sc.system, sc.lam, sc.tolerances)
    return EXIT_OK, cls.to_dict(), None


def _perturb(sc: Scenario, args):
    rec = analyze_switch(sc.system, sc.lam, sc.tolerances)
    if rec.d is None:
        raise NoRoot(f"transversality margin {rec.margin!r} too small for a broken extremal")
    if not rec.has_normal_form:
        raise NormalFormMissing("perturbation analysis needs exactly two controls")
    seed = 0 if args.seed is None else args.seed
    res = campaign(
        sc.system, sc.lam, rec, args.samples, args.pieces, args.eps, seed,
        const=args.const, keep_records=args.records,
    )
    payload = {"switch": rec.to_dict(), "campaign": res.to_dict()}
    ok = res.violations == 0 and res.bound_violations == 0
    return (EXIT_OK if ok else EXIT_HYPOTHESIS), payload, None


def _oracle(sc: Scenario, args):
    seed = 42 if args.seed is None else args.seed
    rep = scenario_oracle(
        sc, args.samples, args.segments, seed, args.delta, args.slack, args.inflate
    )
    payload = rep.to_dict()
    payload["inflate"] = args.inflate
    return (EXIT_OK if rep.passed else EXIT_HYPOTHESIS), payload, None


COMMANDS = {
    "simulate": _simulate,
    "jump": _jump,
    "certify": _certify,
    "classify": _classify,
    "perturb": _perturb,
    "oracle": _oracle,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="brachia", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"brachia {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", metavar="NAME", help="built-in scenario name")
    src.add_argument("--file", metavar="PATH", help="scenario JSON file")
    common.add_argument("--out", metavar="PATH", help="write the report here instead of stdout")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--format", choices=("json", "csv"), default="json")

    sub.add_parser("simulate", parents=[common], help="integrate the (broken) extremal")
    sub.add_parser("jump", parents=[common], help="transversality, gap parameter and control jump")
    sub.add_parser("certify", parents=[common], help="all optimality certificates")
    sub.add_parser("classify", parents=[common], help="n=3, k=2 case classification")
    p = sub.add_parser("perturb", parents=[common], help="J-functional sampling campaign")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--pieces", type=int, default=8)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--const", type=float, default=None)
    p.add_argument("--records", action="store_true", help="include per-sample records")
    o = sub.add_parser("oracle", parents=[common], help="brute-force time-optimality evidence")
    o.add_argument("--samples", type=int, default=2000)
    o.add_argument("--segments", type=int, default=8)
    o.add_argument("--delta", type=float, default=None)
    o.add_argument("--slack", type=float, default=1e-3)
    o.add_argument("--inflate", type=float, default=1.0, help="scale the reference time (sanity inversion)")
    return parser


def run(command: str, scenario: Scenario, args, tol_source: Optional[str] = None, tol_env: Optional[dict] = None):
    """Dispatch one subcommand; returns ``(exit_code, report, text)``.

    ``text`` is set for CSV output; otherwise the report is the output.
    """
    if args.format == "csv" and command != "simulate":
        raise InputError("--format csv is only valid for simulate")
    report = {
        "tool": "brachia",
        "version": __version__,
        "subcommand": command,
        "scenario": scenario.echo(),
        "tolerances": scenario.tolerances.as_dict(),
        "tolerance_overrides": {"env": TOL_ENV, "source": tol_source, "values": tol_env or {}},
    }
    try:
        code, payload, text = COMMANDS[command](scenario, args)
    except (NoRoot, NotOnLocus, BootstrapInconsistent) as exc:
        code, payload, text = EXIT_HYPOTHESIS, {"error": f"{type(exc).__name__}: {exc}"}, None
    report["result"] = payload
    report["exit_code"] = code
    return code, plain(report), text


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        tol_source, tol_env = load_tolerance_overrides()
        if args.file:
            scenario = load_scenario(args.file, tol_env)
        else:
            scenario = get_scenario(args.scenario, tol_env)
        code, report, text = run(args.command, scenario, args, tol_source, tol_env)
    except (InputError, ScenarioError, ExprSyntaxError, WrongDimensions, NormalFormMissing) as exc:
        print(f"brachia {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except BrachiaError as exc:
        print(f"brachia {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    out = text if text is not None else dumps(report)
    if args.out:
        with io.open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(out)
    else:
        sys.stdout.write(out)
    return code


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
