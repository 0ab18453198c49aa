"""Command-line interface.

Subcommands cover the whole workbench: symmetry verification, quadratic
algebra recovery, Casimir search, coupling-constant transform, the
metric/symmetry duality, metric/potential classification, and trajectory
integration with drift measurement.

Exit codes: 0 all checks pass, 1 at least one check failed, 2 usage or
input error. Reports are deterministic JSON (see report.py); QUADRALG_SEED
overrides the default sampling seed.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass

from . import expressions as ex
from . import report as report_mod
from .sampling import DEFAULT_SEED

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


@dataclass(frozen=True)
class RunConfig:
    seed: int
    samples: int
    tolerance: float
    parallelism: int = 1
    output: str = None

    def as_dict(self):
        return {"seed": self.seed, "samples": self.samples,
                "tolerance": self.tolerance,
                "parallelism": self.parallelism,
                "output": self.output or "-"}


def _default_seed() -> int:
    env = os.environ.get("QUADRALG_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise SystemExit(f"QUADRALG_SEED must be an integer, got {env!r}")
    return DEFAULT_SEED


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quadralg",
        description="verification workbench for 2D second-order "
                    "superintegrable systems")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, tol=1e-8, samples=64):
        p.add_argument("system", help="builtin name or JSON file path")
        p.add_argument("--samples", type=int, default=samples)
        p.add_argument("--tol", type=float, default=tol)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="report path (default stdout)")

    common(sub.add_parser("verify", help="constancy of declared symmetries"))
    common(sub.add_parser("algebra", help="bracket closure relations"))
    common(sub.add_parser("casimir", help="polynomial relation among generators"))
    p = sub.add_parser("stackel", help="coupling-constant transform")
    common(p)
    p.add_argument("--u", required=True, help="multiplier expression")
    common(sub.add_parser("dual", help="metric/symmetry duality"))
    common(sub.add_parser("classify",
                          help="curvature, canonical coefficients, Killing vector"))
    p = sub.add_parser("trajectory", help="integrate and measure drift")
    common(p, tol=1e-6)
    p.add_argument("--x0", required=True,
                   help="initial state q1,q2,p1,p2 (comma separated)")
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--t-end", type=float, default=10.0)
    p.add_argument("--method", choices=("rk4", "leapfrog"), default="rk4")
    p.add_argument("--param", action="append", default=[],
                   metavar="NAME=VALUE", help="system parameter value")
    p.add_argument("--csv", default=None, help="write the trajectory as CSV")
    return parser


def _resolve(args):
    from . import catalog
    system = catalog.resolve(args.system, verify=False)
    seed = args.seed if args.seed is not None else _default_seed()
    box = system.box.with_seed(seed)
    config = RunConfig(seed=seed, samples=args.samples, tolerance=args.tol,
                       output=args.out)
    return system, box, config


def _result(check: str, verdict: bool, max_residual: float, details=None):
    return {"check": check, "verdict": "pass" if verdict else "fail",
            "max_residual": float(max_residual), "details": details or {}}


def _report_result(check: str, rep, details=None):
    d = dict(details or {})
    d["parts"] = {s.name: s.max_residual for s in rep.parts}
    return _result(check, rep.verdict, rep.max_residual, d)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_verify(args):
    from .observables import is_constant_of_motion
    system, box, config = _resolve(args)
    h = system.hamiltonian()
    results = []
    for name, obs in system.symmetries.items():
        rep = is_constant_of_motion(h, obs, box, samples=args.samples,
                                    tol=args.tol)
        results.append(_report_result(f"constancy:{name}", rep,
                                      {"order": system.symmetry_orders[name]}))
    from .catalog import validate
    for issue in validate(system, samples=min(args.samples, 32), tol=args.tol):
        if issue.code == "constancy":
            continue  # already reported per symmetry above
        results.append(_result(f"{issue.code}:{issue.location}",
                               issue.severity != "error", float("nan"),
                               {"message": issue.message,
                                "severity": issue.severity}))
    return system, config, results


def _cmd_algebra(args):
    from .algebra import closure_table, NotInSpanError
    system, box, config = _resolve(args)
    results = []
    try:
        relations = closure_table(system, box, samples=args.samples,
                                  tol=max(args.tol, 1e-6))
    except NotInSpanError as err:
        r = err.result
        results.append(_result(f"closure:{r.target_name}", False, r.residual,
                               r.as_dict()))
        return system, config, results
    for r in relations:
        results.append(_result(f"closure:{r.target_name}", r.accepted,
                               r.residual, r.as_dict()))
    return system, config, results


def _cmd_casimir(args):
    from .algebra import casimir, NullityError
    system, box, config = _resolve(args)
    try:
        r = casimir(system, box, samples=args.samples)
    except NullityError as err:
        return system, config, [_result("casimir", False, float("inf"),
                                        {"nullity": err.nullity})]
    return system, config, [_result("casimir", r.residual < max(args.tol, 1e-6),
                                    r.residual, r.as_dict())]


def _cmd_stackel(args):
    from .stackel import transform, TransformError
    system, box, config = _resolve(args)
    try:
        u_expr = ex.parse(args.u, param_names=system.parameters)
    except ex.ExprSyntaxError as err:
        raise SystemExit(f"--u: {err}")
    try:
        new_def, record = transform(system, u_expr, box,
                                    samples=args.samples, tol=args.tol)
    except TransformError as err:
        return system, config, [_result("stackel-transform", False,
                                        float("inf"), {"error": str(err)})]
    results = []
    for name, rep in record.reports.items():
        results.append(_report_result(
            f"stackel:{name}", rep, {"variant": record.variants[name]}))
    results.append(_result("stackel-transform", True, 0.0, {
        "multiplier": ex.to_text(record.multiplier),
        "new_potential": ex.to_text(new_def.potential),
        "instance_values": {k: v for k, v in record.instance_values.items()},
    }))
    return system, config, results


def _triple_of(system):
    """(mu, a12, B) read off a conformal system with a potential."""
    from .conditions import one_param_coeffs, PotentialDegenerateError
    if system.conformal_lambda is None:
        raise SystemExit(f"system {system.name!r} has no conformal factor; "
                         f"duality needs one")
    mu = system.conformal_lambda
    a12 = None
    for name, order in system.symmetry_orders.items():
        if name.upper() == "H":
            continue
        cand = system.a_matrix(name)[0][1]
        if cand is not ex.ZERO:
            a12 = cand
            break
        if order == 1:
            obs = system.symmetries[name]
            xi, eta = obs.coeff(1, 0), obs.coeff(0, 1)
            prod = ex.simplify_basic(ex.mul(xi, eta))
            if prod is not ex.ZERO:
                a12 = prod
                break
    if a12 is None:
        raise SystemExit(f"system {system.name!r} declares no symmetry with "
                         f"a nonzero off-diagonal coefficient")
    if system.potential is ex.ZERO:
        b1 = ex.ZERO
    else:
        x, y = system.coordinates
        v1 = ex.differentiate(system.potential, x)
        v2 = ex.differentiate(system.potential, y)
        if v2 is ex.ZERO:
            raise SystemExit("potential independent of the second coordinate")
        b1 = ex.simplify_basic(ex.div(v1, v2))
    return mu, a12, b1


def _cmd_dual(args):
    from .stackel import duality, verify_duality_conditions
    system, box, config = _resolve(args)
    mu, a12, b1 = _triple_of(system)
    coords = system.coordinates
    rep = verify_duality_conditions(mu, a12, b1, box, samples=args.samples,
                                    tol=args.tol, coords=coords)
    mu_d, a12_d, b_d = duality(mu, a12, b1, coords=coords, box=box)
    details = {"mu": ex.to_text(mu), "a12": ex.to_text(a12),
               "B": ex.to_text(b1),
               "dual_mu": ex.to_text(mu_d), "dual_a12": ex.to_text(a12_d),
               "dual_B": ex.to_text(b_d)}
    return system, config, [_report_result("duality-conditions", rep, details)]


def _cmd_classify(args):
    from .conditions import (curvature_invariants, one_param_coeffs,
                             killing_vector_analysis,
                             PotentialDegenerateError)
    system, box, config = _resolve(args)
    results = []
    lam = system.conformal_lambda
    coords = system.coordinates
    if lam is None:
        results.append(_result("constant-curvature", True, 0.0,
                               {"applicable": False,
                                "reason": "no conformal factor declared"}))
        return system, config, results
    k1, k2, rep = curvature_invariants(lam, box, samples=args.samples,
                                       tol=args.tol, coords=coords)
    # classification outcome, not a pass/fail check
    results.append(_result("constant-curvature", True, rep.max_residual, {
        "constant_curvature": rep.verdict,
        "K1": ex.to_text(k1), "K2": ex.to_text(k2),
        "parts": {s.name: s.max_residual for s in rep.parts}}))
    if system.potential is not ex.ZERO:
        try:
            b1, b12, b22, prep = one_param_coeffs(
                system.potential, lam, box, samples=args.samples,
                tol=args.tol, coords=coords)
        except PotentialDegenerateError as err:
            results.append(_result("one-parameter-coefficients", False,
                                   float("inf"), {"error": str(err)}))
            return system, config, results
        results.append(_report_result("one-parameter-coefficients", prep,
                                      dict(prep.details)))
        krep, payload = killing_vector_analysis(
            b1, lam, box, samples=args.samples, tol=args.tol, coords=coords)
        kdetails = {k: (ex.to_text(v) if isinstance(v, ex.Expression)
                        else v) for k, v in payload.items()
                    if not str(k).endswith("_grid") and k not in
                    ("grid_x", "grid_y")}
        kdetails["has_killing_vector"] = krep.verdict
        kdetails["parts"] = {s.name: s.max_residual for s in krep.parts}
        results.append(_result("killing-vector", True, krep.max_residual,
                               kdetails))
    return system, config, results


def _cmd_trajectory(args):
    from .dynamics import integrate, conservation_drift, DynamicsError
    system, box, config = _resolve(args)
    try:
        parts = [float(v) for v in args.x0.split(",")]
        if len(parts) != 4:
            raise ValueError
    except ValueError:
        raise SystemExit("--x0 must be four comma-separated numbers")
    params = {}
    for item in args.param:
        if "=" not in item:
            raise SystemExit(f"--param expects NAME=VALUE, got {item!r}")
        name, _, value = item.partition("=")
        try:
            params[name.strip()] = float(value)
        except ValueError:
            raise SystemExit(f"--param {name}: bad number {value!r}")
    method = "leapfrog-split" if args.method == "leapfrog" else args.method
    try:
        tr = integrate(system, tuple(parts), dt=args.dt, t_end=args.t_end,
                       method=method, params=params)
        drifts = conservation_drift(system, tr, params=params)
    except DynamicsError as err:
        raise SystemExit(str(err))
    if args.csv:
        tr.to_csv(args.csv)
    results = [_result("trajectory-complete", tr.completed, 0.0,
                       {"steps": len(tr) - 1, "integrator": tr.integrator,
                        "abort_reason": tr.abort_reason})]
    for name, drift in drifts.items():
        results.append(_result(f"drift:{name}", drift < args.tol, drift,
                               {"threshold": args.tol}))
    return system, config, results


_COMMANDS = {"verify": _cmd_verify, "algebra": _cmd_algebra,
             "casimir": _cmd_casimir, "stackel": _cmd_stackel,
             "dual": _cmd_dual, "classify": _cmd_classify,
             "trajectory": _cmd_trajectory}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_USAGE if err.code not in (0,) else 0
    try:
        system, config, results = _COMMANDS[args.command](args)
    except SystemExit as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    rep = report_mod.build_report(config.as_dict(), system.name, results)
    text = report_mod.render_report(rep)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    failed = any(r["verdict"] == "fail" for r in results)
    return EXIT_FAIL if failed else EXIT_PASS


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
