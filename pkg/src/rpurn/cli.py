"""Command-line entry point.

Subcommands: ``constants``, ``simulate``, ``gof``, ``estimate-lambda``,
``cluster-test``, ``couple``, ``verify``.  Parameters arrive as a JSON file,
bulk data as CSV; reports leave as JSON (floats in shortest round-trip form,
so emit -> parse -> emit is the identity) and bulk output as CSV.  Passing
``--figures DIR`` on the report paths additionally renders PNG figures next
to the delimited output.

Exit status: 0 success, 1 usage error, 2 unreadable input or validation
error, 3 null-hypothesis rejection (or a failed verification check) when
``--fail-on-reject`` is set.  stdout is for humans; files are for machines.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import clusters as clusters_mod
from . import coupling as coupling_mod
from . import gof as gof_mod
from . import montecarlo as mc
from .model import ModelParams, derive_constants
from .simulate import simulate_trajectory, trajectory_to_csv

DEFAULT_SEED = 20240
DEFAULT_STEPS = 20000
DEFAULT_REPLICATES = 2000
DEFAULT_THETA = 0.05
DEFAULT_LEVEL = 0.95

USAGE_ERROR, DATA_ERROR, REJECT_ERROR = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})") from None


def _load_params(path) -> ModelParams:
    if path is None:
        raise ValueError("this command requires --params")
    return ModelParams.from_dict(_load_json(path))


def _emit_json(payload: dict, out, echo: bool = False) -> None:
    text = json.dumps(payload, indent=2)
    if out:
        Path(out).write_text(text + "\n")
        print(f"wrote {out}")
    if echo or not out:
        print(text)


def _parse_vector(text: str, name: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise ValueError(f"--{name} must be a comma-separated list of numbers, got {text!r}") from None


def _figures_dir(args) -> Path | None:
    if getattr(args, "figures", None) is None:
        return None
    directory = Path(args.figures)
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def cmd_constants(args) -> int:
    params = _load_params(args.params)
    consts = derive_constants(params)
    _emit_json(consts.to_dict(), args.out, echo=True)
    return 0


def cmd_simulate(args) -> int:
    params = _load_params(args.params)
    if args.out is None:
        raise ValueError("simulate requires --out for the trajectory CSV")
    traj = simulate_trajectory(params, args.steps, args.seed, record_psi=args.record_psi)
    trajectory_to_csv(traj, args.out)
    print(f"wrote {args.out} ({traj.n_steps} steps, seed {args.seed})")
    figdir = _figures_dir(args)
    if figdir is not None:
        from . import figures

        out = figures.trajectory_figure(traj, figdir / "trajectory.png")
        print(f"wrote {out}")
    return 0


def _single_counts(args) -> np.ndarray:
    if args.counts is not None:
        return _parse_vector(args.counts, "counts")
    if args.data is not None:
        sample = clusters_mod.read_clustered_csv(args.data)
        if sample.n_clusters != 1:
            raise ValueError(
                f"{args.data} holds {sample.n_clusters} clusters; use cluster-test for clustered data"
            )
        return sample.counts[0]
    raise ValueError("gof requires either --counts or --data")


def cmd_gof(args) -> int:
    counts = _single_counts(args)
    if args.probs is not None:
        probs = _parse_vector(args.probs, "probs")
    else:
        probs = np.full(counts.size, 1.0 / counts.size)
    report = gof_mod.gof_test(counts, probs, args.lam, args.theta)
    _emit_json(report.to_dict(), args.out)
    verdict = "reject" if report.reject else "no rejection"
    print(
        f"statistic={report.statistic:.6g} critical={report.critical_value:.6g} "
        f"p={report.p_value:.6g} -> {verdict}"
    )
    for note in report.warnings:
        print(f"warning: {note}")
    if report.reject and args.fail_on_reject:
        return REJECT_ERROR
    return 0


def _null_probs(args, sample):
    mode = args.null_mode.replace("-", "_")
    first = None
    if args.first_period_data is not None:
        first = clusters_mod.read_clustered_csv(args.first_period_data)
    return clusters_mod.build_null_probs(
        mode, sample, first_period=first, benchmark_id=args.benchmark_cluster
    )


def cmd_estimate_lambda(args) -> int:
    sample = clusters_mod.read_clustered_csv(args.data) if args.data else None
    if sample is None:
        raise ValueError("estimate-lambda requires --data")
    probs = _null_probs(args, sample)
    estimate = clusters_mod.estimate_lambda(sample, probs)
    payload = {"estimate": estimate.to_dict(), "confidence_interval": None}
    if estimate.lambda_hat > 0:
        lo, hi = clusters_mod.lambda_confidence_interval(estimate, args.level)
        payload["confidence_interval"] = {"level": args.level, "lower": lo, "upper": hi}
        print(
            f"lambda_hat={estimate.lambda_hat:.6g} "
            f"{args.level:.0%} CI [{lo:.6g}, {hi:.6g}] over {estimate.L} clusters"
        )
    else:
        print(f"lambda_hat={estimate.lambda_hat:.6g} (no positive confidence interval)")
    for note in estimate.warnings:
        print(f"warning: {note}")
    _emit_json(payload, args.out)
    return 0


def cmd_cluster_test(args) -> int:
    if args.data is None:
        raise ValueError("cluster-test requires --data")
    sample = clusters_mod.read_clustered_csv(args.data)
    probs = _null_probs(args, sample)
    if args.lam is not None:
        lam: object = args.lam
        estimate = None
    else:
        estimate = clusters_mod.estimate_lambda(sample, probs)
        if estimate.lambda_hat <= 0:
            raise ValueError("estimated lambda is not positive; supply --lambda explicitly")
        lam = estimate
    reports = clusters_mod.cluster_test(sample, probs, lam, args.theta)
    rejected = [cid for cid, rep in reports.items() if rep.reject]
    payload = {
        "theta": args.theta,
        "lambda": lam.lambda_hat if estimate is not None else lam,
        "lambda_source": "estimated (plug-in)" if estimate is not None else "supplied",
        "estimate": estimate.to_dict() if estimate is not None else None,
        "reports": {cid: rep.to_dict() for cid, rep in reports.items()},
        "rejected": rejected,
    }
    _emit_json(payload, args.out)
    print(f"tested {len(reports)} clusters at theta={args.theta:g}: {len(rejected)} rejected")
    for cid in rejected:
        print(f"  reject {cid}: p={reports[cid].p_value:.6g}")
    if rejected and args.fail_on_reject:
        return REJECT_ERROR
    return 0


def cmd_couple(args) -> int:
    config = _load_json(args.params)
    try:
        shared = {"alpha": config["alpha"], "beta": config["beta"], "b0": config["b0"]}
        B0_1 = config.get("B0_1", config.get("B0"))
        B0_2 = config["B0_2"]
        if B0_1 is None:
            raise KeyError("B0 (or B0_1)")
    except KeyError as exc:
        raise ValueError(f"couple parameter file is missing field {exc}") from None
    allow = bool(config.get("allow_zero_intrinsic", False))
    params1 = ModelParams(**shared, B0=B0_1, allow_zero_intrinsic=allow)
    params2 = ModelParams(**shared, B0=B0_2, allow_zero_intrinsic=allow)
    distances = coupling_mod.coupled_distance_matrix(
        params1, params2, args.steps, args.replicates, args.seed
    )
    diag = coupling_mod.contraction_diagnostic_from_distances(distances, params1, params2)
    _emit_json(diag.to_dict(), args.out)
    final = diag.mean_distance[-1]
    print(
        f"{args.replicates} pairs, {args.steps} steps: mean distance "
        f"{diag.mean_distance[0]:.6g} -> {final:.6g} (envelope {diag.envelope[-1]:.6g})"
    )
    figdir = _figures_dir(args)
    if figdir is not None:
        from . import figures

        out = figures.contraction_figure(diag, figdir / "contraction.png")
        print(f"wrote {out}")
    return 0


def _default_targets(params: ModelParams) -> list[str]:
    targets = []
    if params.alpha > 0 and 0 <= params.beta < 1 and params.b0_total > 0:
        targets.append("clt")
    if params.beta > 1:
        targets.append("beta-gt1")
    if params.b0_total == 0 or params.alpha == 0:
        targets.append("edge")
    return targets


def cmd_verify(args) -> int:
    params = _load_params(args.params)
    plan = mc.ReplicationPlan(
        params=params,
        n_steps=args.steps,
        replicates=args.replicates,
        master_seed=args.seed,
        targets=tuple(args.targets.split(",")) if args.targets else (),
    )
    targets = list(plan.targets) or _default_targets(params)
    if not targets:
        raise ValueError("no verification targets apply; pass --targets explicitly")
    reports = []
    records = None
    for target in targets:
        if target == "clt":
            records = mc.run_replications(plan)
            reports.append(mc.verify_clt(plan, records=records))
        elif target == "beta-gt1":
            reports.append(mc.verify_beta_gt1(plan))
        elif target == "edge":
            reports.append(mc.verify_edge_laws(plan))
        else:
            raise ValueError(f"unknown verification target {target!r}")
    payload = {"reports": [rep.to_dict() for rep in reports]}
    _emit_json(payload, args.out)
    all_passed = True
    for rep in reports:
        for check in rep.checks:
            status = "PASS" if check.passed else "FAIL"
            all_passed &= check.passed
            print(
                f"[{status}] {rep.name}/{check.name}: discrepancy={check.discrepancy:.6g} "
                f"tolerance={check.tolerance:.6g}"
            )
    if args.replicate_csv:
        if records is None:
            records = mc.run_replications(plan)
        mc.write_replicates_csv(records, args.replicate_csv)
        print(f"wrote {args.replicate_csv}")
    figdir = _figures_dir(args)
    if figdir is not None:
        from . import figures

        if "clt" in targets:
            if records is None:
                records = mc.run_replications(plan)
            consts = derive_constants(params)
            out = figures.chi_squared_figure(
                records.chi_squared(), params.k - 1, consts.lam, figdir / "chi_squared_limit.png"
            )
            print(f"wrote {out}")
        for rep in reports:
            for check in rep.checks:
                if check.name == "predictive-mean-geometric-decay":
                    out = figures.decay_figure(
                        check.details["grid"], check.empirical, check.tolerance,
                        params.beta, figdir / "decay.png",
                    )
                    print(f"wrote {out}")
    if not all_passed and args.fail_on_reject:
        return REJECT_ERROR
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="rpurn", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--params", help="JSON parameter file (alpha, beta, b0, B0)")
        p.add_argument("--data", help="CSV data file")
        p.add_argument("--out", help="output artifact path")
        p.add_argument("--seed", type=int, default=DEFAULT_SEED,
                       help=f"master seed (default {DEFAULT_SEED})")
        p.add_argument("--steps", type=int, default=DEFAULT_STEPS,
                       help=f"steps per trajectory (default {DEFAULT_STEPS})")
        p.add_argument("--replicates", type=int, default=DEFAULT_REPLICATES,
                       help=f"replicate / pair count (default {DEFAULT_REPLICATES})")
        p.add_argument("--theta", type=float, default=DEFAULT_THETA,
                       help=f"significance level (default {DEFAULT_THETA})")
        p.add_argument("--level", type=float, default=DEFAULT_LEVEL,
                       help=f"confidence level (default {DEFAULT_LEVEL})")
        p.add_argument("--null-mode", default="uniform",
                       choices=["uniform", "first-period", "benchmark"])
        p.add_argument("--benchmark-cluster", help="benchmark cluster id")
        p.add_argument("--first-period-data", help="first-period CSV for --null-mode first-period")
        p.add_argument("--fail-on-reject", action="store_true",
                       help="exit 3 on rejection / failed check")
        p.add_argument("--record-psi", action="store_true",
                       help="record the predictive-mean path")
        p.add_argument("--figures", help="directory for PNG figures")
        return p

    add("constants", cmd_constants, "print the derived constants as JSON")

    add("simulate", cmd_simulate, "simulate one trajectory to CSV")

    p = add("gof", cmd_gof, "inflated goodness-of-fit test on one count vector")
    p.add_argument("--counts", help="comma-separated counts, e.g. 3,1")
    p.add_argument("--probs", help="comma-separated null probabilities (default uniform)")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0,
                   help="inflation factor (default 1 = classical Pearson)")

    add("estimate-lambda", cmd_estimate_lambda, "estimate the inflation factor from clustered data")

    p = add("cluster-test", cmd_cluster_test, "per-cluster inflated tests")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="inflation factor; omitted = plug-in estimate from the same data")

    add("couple", cmd_couple, "coupled-pair contraction diagnostic")

    p = add("verify", cmd_verify, "Monte Carlo verification of the limit laws")
    p.add_argument("--targets", help="comma list of clt,beta-gt1,edge (default: regime-appropriate)")
    p.add_argument("--replicate-csv", help="dump per-replicate statistics as CSV")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else USAGE_ERROR
    try:
        return args.func(args)
    except (ValueError, OverflowError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
