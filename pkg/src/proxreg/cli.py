"""Command-line front end.

    proxreg run <scenario> [--out DIR] [--seed N]
    proxreg batch <dir> [--out DIR] [--workers N]
    proxreg convergence <scenario> --h-list H [H ...] [--out DIR]
    proxreg list

Each run writes CSV artifacts and ``report.txt`` with one
``CHECK <name>: PASS|FAIL margin=<v>`` line per check, where the margin is a
signed slack (nonnegative means satisfied). Exit codes: 0 when every check
passes, 2 when a check or a hypothesis fails, 1 on errors.
"""

import argparse
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
import math
from pathlib import Path
import sys

import numpy as np

from .errors import (
    ConditionFailed,
    DomainViolation,
    HypothesisViolation,
    ProxRegError,
    RadiusViolation,
    SubsetViolation,
)
from .geometry import LevelSetPolyhedral, sample_points, set_from_dict
from .lyapunov import (
    LyapunovCandidate,
    SamplerSpec,
    certify_on_samples,
    draw_samples,
    invariance_certificate,
    trajectory_decay_check,
)
from .monotone import choose_cap, dim_integrate, equivalence_check
from .observer import (
    LureSystem,
    ObserverSetup,
    lure_inclusion_residual,
    ndcs_build,
    observer_run,
    simulate_lure,
    stability_radius,
    verify_passivity,
)
from .scenario import bundled_scenarios, parse_scenario, resolve
from .solver import (
    IntegratorConfig,
    check_growth_bounds,
    check_semigroup,
    check_velocity_orthogonality,
    convergence_study,
    integrate,
)

EXIT_OK, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2
HYPOTHESIS_ERRORS = (HypothesisViolation, ConditionFailed, DomainViolation, SubsetViolation,
                     RadiusViolation)


@dataclass
class Check:
    name: str
    passed: bool
    margin: float
    detail: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        text = f"CHECK {self.name}: {status} margin={self.margin + 0.0:.6g}"
        return f"{text} ({self.detail})" if self.detail else text


def _slack(name, slack, detail=""):
    return Check(name, bool(slack >= 0), float(slack), detail)


def _sampler(task, seed):
    s = task.get("sampler", {})
    return SamplerSpec(s.get("method", "grid"), float(s.get("spacing", 0.05)),
                       int(s.get("n", 256)), None, seed, bool(s.get("include_boundary", True)))


def _candidate(block):
    kind = block.get("V", "half_norm_squared")
    a = float(block.get("a", 0.0))
    W = None
    if "W" in block:
        w = float(block["W"])
        W = lambda x: w  # noqa: E731
    domain = set_from_dict(block["domain"]) if "domain" in block else None
    if kind == "half_norm_squared":
        return LyapunovCandidate(lambda x: 0.5 * float(x @ x), lambda x: x, W, a, domain, kind)
    if kind == "linear":
        c = np.asarray(block["c"], dtype=float)
        return LyapunovCandidate(lambda x: float(c @ x), lambda x: c, W, a, domain, kind)
    if kind == "indicator":
        dim = domain.dim
        return LyapunovCandidate(lambda x: 0.0, lambda x: np.zeros(dim), W, a, domain, kind)
    raise ValueError(f"unknown candidate {kind!r}")


# -- task runners --------------------------------------------------------------

def task_simulate(sc, out):
    traj = integrate(sc.set, sc.field, sc.initial, sc.config)
    traj.to_csv(out / "trajectory.csv")
    h = sc.config.h
    checks = []
    dist = max(sc.set.distance(x) for x in traj.states)
    checks.append(_slack("feasibility", sc.config.tol.tol_mem - dist))
    orth = check_velocity_orthogonality(traj)
    budget = 10 * h * (1 + float(np.max(traj.field_norms)) ** 2)
    checks.append(_slack("velocity_orthogonality", budget - orth.max_residual,
                         f"max residual {orth.max_residual:.3g}"))
    growth = check_growth_bounds(traj)
    checks.append(_slack("speed_bound", growth.min_speed_slack))
    checks.append(_slack("drift_bound", growth.min_drift_slack))
    s = traj.times[len(traj) // 2]
    sg = check_semigroup(sc.set, sc.field, sc.initial, s, traj.times[-1] - s, sc.config)
    checks.append(_slack("semigroup", sg.tol - sg.discrepancy))
    if sc.reference is not None:
        err = max(float(np.linalg.norm(x - sc.reference(t))) for t, x in zip(traj.times, traj.states))
        factor = float(sc.task.get("reference_factor", 5.0))
        checks.append(_slack("reference_error", factor * h - err, f"sup error {err:.3g}"))
    if "expect_final" in sc.task:
        target = np.asarray(sc.task["expect_final"], dtype=float)
        tol = float(sc.task.get("final_tol", 5e-3))
        checks.append(_slack("final_state", tol - float(np.linalg.norm(traj.final - target))))
    if isinstance(sc.set, LevelSetPolyhedral):
        _, extract = ndcs_build(sc.field, sc.set.H, sc.set.c)
        comp = extract(traj)
        np.savetxt(out / "multipliers.csv",
                   np.column_stack([traj.times[:-1], comp.multipliers, comp.constraint_values]),
                   fmt="%.17g", delimiter=",", comments="",
                   header=",".join(["t"] + [f"lambda_{i}" for i in range(comp.multipliers.shape[1])]
                                   + [f"g_{i}" for i in range(comp.multipliers.shape[1])]))
        worst = max(-comp.min_multiplier, -comp.min_constraint, comp.max_product)
        checks.append(_slack("complementarity", 1e-5 - worst))
        if "expect_activation" in sc.task:
            gap = abs(comp.activation_time - float(sc.task["expect_activation"]))
            checks.append(_slack("activation_time", 2 * h - gap,
                                 f"activation at t={comp.activation_time:.6g}"))
    return checks, []


def task_certify(sc, out):
    cand = _candidate(sc.task.get("candidate", {}))
    spec = _sampler(sc.task, sc.seed)
    try:
        rep = certify_on_samples(sc.set, sc.field, cand, spec, bool(sc.task.get("strict", False)))
    except DomainViolation as exc:
        return [Check("domain_guard", False, -1.0, str(exc))], []
    checks = [Check("domain_guard", True, 0.0)]
    rep.to_csv(out / "certificate.csv")
    (out / "certificate.txt").write_text(rep.to_text())
    detail = rep.verdict
    if rep.witness is not None:
        detail += " witness=(" + ", ".join(f"{v:.6g}" for v in rep.witness) + ")"
    checks.append(Check("certificate", rep.certified, -rep.worst_margin, detail))
    if rep.certified:
        starts = draw_samples(sc.set, spec)
        rng = np.random.default_rng(sc.seed)
        pick = starts[rng.choice(len(starts), size=min(10, len(starts)), replace=False)]
        worst = -math.inf
        for x0 in pick:
            d = trajectory_decay_check(integrate(sc.set, sc.field, x0, sc.config), cand)
            worst = max(worst, d.max_increase, d.max_excess)
        checks.append(_slack("trajectory_decay", 1e-4 - worst))
    return checks, []


def task_invariance(sc, out):
    subset = set_from_dict(sc.task["subset"])
    spec = _sampler(sc.task, sc.seed)
    try:
        rep = invariance_certificate(sc.set, subset, sc.field, spec)
    except SubsetViolation as exc:
        return [Check("subset", False, -1.0, str(exc))], []
    rep.to_csv(out / "invariance.csv")
    checks = [Check("subset", True, 0.0),
              Check("tangency", rep.certified, -rep.worst_margin, rep.verdict),
              Check("dual_vote", rep.extras["dual_vote_agrees"], -rep.extras["dual_vote_max"])]
    rng = np.random.default_rng(sc.seed)
    starts = sample_points(subset, 5, rng)
    worst = 0.0
    for x0 in starts:
        traj = integrate(sc.set, sc.field, x0, sc.config)
        worst = max(worst, max(subset.distance(x) for x in traj.states))
    checks.append(_slack("stays_in_subset", 10 * sc.config.h - worst))
    return checks, []


def task_observe(sc, out):
    ob = sc.task["observer"]
    setup = ObserverSetup(ob["G"], ob["L"], float(ob["delta"]), float(ob["epsilon"]),
                          float(ob["eta"]), ob.get("m"), ob.get("M"))
    rep = observer_run(sc.set, sc.field, ob["L"], ob["G"], sc.initial, ob["z0"], setup,
                       sc.config)
    rep.to_csv(out / "observer.csv")
    checks = [Check(c.name, c.passed, c.margin) for c in rep.checks]
    excess = float(np.max(rep.errors - rep.bound * (1 + 1e-3)))
    checks.append(Check("pointwise_bound", rep.pointwise_ok, -excess))
    checks.append(_slack("rate", -rep.beta / 2 + 0.05 - rep.slope,
                         f"fitted slope {rep.slope:.4g}, beta/2 = {rep.beta / 2:.4g}"))
    return checks, [f"fitted_slope: {rep.slope:.6g}", f"beta: {rep.beta:.6g}"]


def task_equivalence(sc, out):
    rep = equivalence_check(sc.set, sc.field, sc.initial, sc.config,
                            float(sc.task.get("c_eq", 10.0)))
    rep.to_csv(out / "gap.csv")
    checks = [_slack("equivalence_gap", rep.c_eq * rep.h - rep.sup_gap),
              Check("resolvent_feasibility", not rep.infeasible_steps,
                    -float(len(rep.infeasible_steps)))]
    return checks, [rep.verdict()]


def task_convergence(sc, out, h_list=None):
    h_list = h_list or sc.task.get("h_list")
    if not h_list:
        raise ValueError("convergence needs an h list")
    schemes = sc.task.get("schemes", ["catching_up"])
    T = sc.config.T
    rows, checks = [], []
    for scheme in schemes:
        if scheme == "catching_up":
            runner = None
        elif scheme == "dim":
            cap = choose_cap(sc.set, sc.field, sc.initial, T).m
            runner = lambda s, f, x, c, m=cap: dim_integrate(s, f, x, c, m)  # noqa: E731
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
        rep = convergence_study(sc.set, sc.field, sc.initial, T, h_list, sc.reference, runner)
        for i, e in enumerate(rep.errors):
            p = rep.orders[i - 1] if i >= 1 and i - 1 < len(rep.orders) else math.nan
            rows.append((scheme, rep.h_list[i], e, p))
        order = rep.order
        checks.append(_slack(f"order_{scheme}", (order - 0.8) if math.isfinite(order) else
                             (math.inf if order > 0 else -math.inf),
                             "errors at round-off" if order == math.inf else f"order {order:.3g}"))
    with open(out / "convergence.csv", "w") as fh:
        fh.write("scheme,h,error,order\n")
        for scheme, h, e, p in rows:
            fh.write(f"{scheme},{h:.17g},{e:.17g},{p:.17g}\n")
    return checks, []


def task_lure(sc, out):
    t = sc.task
    system = LureSystem(t["A"], t["B"], t["D"], sc.set, sc.initial)
    P, delta = np.asarray(t["P"], dtype=float), float(t["delta"])
    pas = verify_passivity(P, system.A, system.B, system.D, delta)
    checks = [Check("p_positive_definite", pas.pd_ok, pas.min_eig_P),
              Check("p_b_equals_d_transpose", pas.equality_ok, -pas.equality_residual),
              Check("dissipation_inequality", pas.lmi_ok, -pas.lmi_max_eig)]
    if not pas.passed:
        return checks, []
    rho = stability_radius(system, P, delta)
    checks.append(_slack("radius_guard", rho - float(np.linalg.norm(sc.initial)), f"rho={rho:.6g}"))
    run = simulate_lure(system, P, sc.config, delta)
    np.savetxt(out / "lure.csv", np.column_stack([run.trajectory.times, run.states, run.bound]),
               fmt="%.17g", delimiter=",", comments="",
               header=",".join(["t"] + [f"x_{i}" for i in range(system.dim)] + ["bound"]))
    checks.append(_slack("decay_bound", -run.max_excess))
    res = lure_inclusion_residual(system, run.states, sc.config.h)
    checks.append(_slack("inclusion_residual", 10 * sc.config.h - res))
    return checks, []


RUNNERS = {
    "simulate": task_simulate,
    "certify": task_certify,
    "invariance": task_invariance,
    "observe": task_observe,
    "equivalence": task_equivalence,
    "convergence": task_convergence,
    "lure": task_lure,
}


def _write_report(out, sc, checks, notes, error=None):
    lines = [f"scenario: {sc.name}" if sc else "scenario: <unparsed>"]
    if sc:
        lines.append(f"task: {sc.task_type}")
    lines += [c.line() for c in checks]
    lines += notes
    if error:
        lines.append(f"error: {error}")
    (out / "report.txt").write_text("\n".join(lines) + "\n")


def run(scenario, out_dir, seed=None, h_list=None):
    """Execute a parsed scenario, write artifacts under ``out_dir`` and return an exit code."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if seed is not None:
        scenario.seed = int(seed)
    runner = RUNNERS[scenario.task_type]
    try:
        if scenario.task_type == "convergence":
            checks, notes = runner(scenario, out, h_list)
        else:
            checks, notes = runner(scenario, out)
    except HYPOTHESIS_ERRORS as exc:
        name = getattr(exc, "condition", type(exc).__name__)
        checks = [Check(f"hypothesis_{name}", False, -1.0, str(exc))]
        _write_report(out, scenario, checks, [])
        return EXIT_VIOLATION
    except (ProxRegError, ValueError, ArithmeticError) as exc:
        _write_report(out, scenario, [], [], f"{type(exc).__name__}: {exc}")
        return EXIT_ERROR
    _write_report(out, scenario, checks, notes)
    return EXIT_OK if all(c.passed for c in checks) else EXIT_VIOLATION


def run_path(path, out_dir, seed=None, h_list=None):
    """Parse and run one file; parse failures are reported and give exit code 1."""
    out = Path(out_dir)
    try:
        sc = parse_scenario(path)
    except (ProxRegError, OSError) as exc:
        out.mkdir(parents=True, exist_ok=True)
        _write_report(out, None, [], [], f"{type(exc).__name__}: {exc}")
        print(f"{path}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return run(sc, out, seed, h_list)


def _batch_one(args):
    path, out = args
    return Path(path).stem, run_path(path, out)


def batch(directory, out_dir, workers=None):
    """Run every ``*.yaml`` scenario in a directory, each into its own output folder."""
    paths = sorted(Path(directory).glob("*.yaml"))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(str(p), str(out / p.stem)) for p in paths]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(_batch_one, jobs))
    (out / "summary.txt").write_text("".join(f"{name}: exit {code}\n" for name, code in results))
    codes = [c for _, c in results]
    if EXIT_ERROR in codes:
        return EXIT_ERROR
    return EXIT_VIOLATION if EXIT_VIOLATION in codes else EXIT_OK


def _print_report(out):
    report = Path(out) / "report.txt"
    if report.exists():
        print(report.read_text(), end="")


def main(argv=None):
    parser = argparse.ArgumentParser(prog="proxreg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one scenario")
    p_run.add_argument("scenario", help="scenario file or bundled scenario name")
    p_run.add_argument("--out", default=None, help="output directory (default: out/<name>)")
    p_run.add_argument("--seed", type=int, default=None)
    p_batch = sub.add_parser("batch", help="run every scenario in a directory")
    p_batch.add_argument("directory")
    p_batch.add_argument("--out", default="out")
    p_batch.add_argument("--workers", type=int, default=None)
    p_conv = sub.add_parser("convergence", help="convergence study for a scenario")
    p_conv.add_argument("scenario")
    p_conv.add_argument("--h-list", type=float, nargs="+", required=True)
    p_conv.add_argument("--out", default=None)
    sub.add_parser("list", help="list bundled scenarios")
    args = parser.parse_args(argv)

    if args.command == "list":
        for p in bundled_scenarios():
            print(p.stem)
        return EXIT_OK
    if args.command == "batch":
        code = batch(args.directory, args.out, args.workers)
        print((Path(args.out) / "summary.txt").read_text(), end="")
        return code
    try:
        path = resolve(args.scenario)
    except FileNotFoundError as exc:
        print(exc, file=sys.stderr)
        return EXIT_ERROR
    out = args.out or str(Path("out") / path.stem)
    if args.command == "run":
        code = run_path(path, out, args.seed)
    else:
        try:
            sc = parse_scenario(path)
        except ProxRegError as exc:
            print(f"{path}: {exc}", file=sys.stderr)
            return EXIT_ERROR
        sc.task = {**sc.task, "type": "convergence"}
        code = run(sc, out, h_list=args.h_list)
    _print_report(out)
    return code


if __name__ == "__main__":
    sys.exit(main())
