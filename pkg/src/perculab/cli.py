"""Command-line front end.

Five subcommands: simulate, boundaries, distance, experiment, verify.
Exit codes: 0 success, 2 usage, 3 file format, 4 invariant violation,
5 resource limit.  All file formats are the plain-text ones in fileio.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .errors import (
    FormatError,
    InvariantViolationError,
    ResourceLimitError,
    UsageError,
)
from . import fileio
from .dynamics import RULE_NAMES, rule_from_name, run, sample_initial
from .lattice import Cell, Window

PROG = "perculab"

EXPERIMENT_NAMES = (
    "scaling", "coupling", "decay", "fixation", "percolation", "cluster",
    "ancestor", "star_triangle", "sync_decomposition", "sync_independence",
    "energy",
)


def _prob(text):
    v = float(text)
    if not (0.0 <= v <= 1.0):
        raise argparse.ArgumentTypeError("lambda must lie in [0, 1]")
    return v


def _radius(text):
    v = int(text)
    if v < 4:
        raise argparse.ArgumentTypeError("radius must be at least 4")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be nonnegative")
    return v


def _pos_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _pos_real(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _steps(text):
    if text == "fixation":
        return text
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("steps must be nonnegative or 'fixation'")
    return v


def _obs_time(text):
    if text == "all":
        return text
    return _steps(text)


def parse_seeds(text):
    """Seed list syntax: '7', '3,5,9', or a half-open range '0:200'."""
    text = text.strip()
    if ":" in text:
        lo_s, _, hi_s = text.partition(":")
        lo, hi = int(lo_s), int(hi_s)
        if hi <= lo:
            raise argparse.ArgumentTypeError("empty seed range %r" % text)
        return tuple(range(lo, hi))
    if "," in text:
        return tuple(int(t) for t in text.split(",") if t.strip())
    return (int(text),)


def _reals(text):
    return tuple(float(t) for t in text.split(",") if t.strip())


def _times(text):
    return tuple(_steps(t.strip()) for t in text.split(",") if t.strip())


def _ints(text):
    return tuple(int(t) for t in text.split(",") if t.strip())


@dataclasses.dataclass(frozen=True)
class CliConfig:
    """Flat record of one invocation, written into experiment manifests.

    Rebuilding the argument list from a saved manifest and re-running
    reproduces the output byte for byte.
    """

    command: str
    params: dict

    def to_dict(self):
        return {"command": self.command, "params": dict(self.params)}

    @staticmethod
    def from_dict(d):
        return CliConfig(command=d["command"], params=dict(d["params"]))


def build_parser():
    p = argparse.ArgumentParser(
        prog=PROG,
        description="Dependent-percolation cellular automata on the "
                    "triangular lattice: simulation, interface geometry, "
                    "curve-family distances, and batch experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one trajectory, write a snapshot")
    sim.add_argument("--rule", choices=RULE_NAMES, default="T")
    sim.add_argument("--lambda", dest="lam", type=_prob, default=None,
                     help="plus-density of the product initial law")
    sim.add_argument("--delta", type=_pos_real, default=1.0,
                     help="lattice spacing of the embedding")
    sim.add_argument("--radius", type=_radius, default=64,
                     help="cell-graph radius of the observed window")
    sim.add_argument("--margin", type=_nonneg_int, default=0,
                     help="extra rings consumed by shrink-mode steps")
    sim.add_argument("--steps", type=_steps, default="fixation",
                     help="step count, or 'fixation'")
    sim.add_argument("--mode", choices=("shrink", "frozen"), default=None,
                     help="default: shrink for counted runs, frozen for fixation")
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--initial", default=None, metavar="SNAPSHOT",
                     help="start from a snapshot file instead of sampling")
    sim.add_argument("--output", default=None, metavar="FILE",
                     help="snapshot destination (default: stdout)")

    bnd = sub.add_parser("boundaries",
                         help="extract signed interface curves from a snapshot")
    bnd.add_argument("--input", required=True, metavar="SNAPSHOT")
    bnd.add_argument("--output", default=None, metavar="FILE",
                     help="curves destination (default: stdout)")

    dst = sub.add_parser("distance",
                         help="compactified distance between two curve files")
    dst.add_argument("--a", required=True, metavar="CURVES")
    dst.add_argument("--b", required=True, metavar="CURVES")
    dst.add_argument("--densify-step", type=_pos_real, default=None,
                     help="arc-length resampling step before comparing")
    dst.add_argument("--metric", choices=("family", "hausdorff"),
                     default="family")

    exp = sub.add_parser("experiment", help="run a batch study, write CSV rows")
    exp.add_argument("--name", choices=EXPERIMENT_NAMES, required=True)
    exp.add_argument("--rule", choices=RULE_NAMES, default="T")
    exp.add_argument("--lambda", dest="lam", type=_prob, default=0.5)
    exp.add_argument("--delta", type=_pos_real, default=1.0)
    exp.add_argument("--delta-list", type=_reals, default=None,
                     help="comma-separated spacings (scaling/coupling)")
    exp.add_argument("--n-list", type=_times, default=None,
                     help="comma-separated times, each an int or 'fixation'")
    exp.add_argument("--m-list", type=_ints, default=None,
                     help="comma-separated segment scales (decay)")
    exp.add_argument("--n", type=_obs_time, default=0,
                     help="observation time: an int, 'fixation', or 'all'")
    exp.add_argument("--n-max", type=_pos_int, default=10,
                     help="step horizon for ancestor/equivalence checks")
    exp.add_argument("--radius", type=_radius, default=48)
    exp.add_argument("--margin", type=_nonneg_int, default=0)
    exp.add_argument("--seeds", type=parse_seeds, default=(0,),
                     help="'7', '3,5,9', or '0:200'")
    exp.add_argument("--threads", type=_pos_int, default=1)
    exp.add_argument("--output", default=None, metavar="CSV",
                     help="result rows destination (default: stdout)")
    exp.add_argument("--manifest", default=None, metavar="JSON",
                     help="write a reproducibility manifest next to the rows")

    ver = sub.add_parser("verify",
                         help="replay steps from a snapshot and check invariants")
    ver.add_argument("--input", required=True, metavar="SNAPSHOT")
    ver.add_argument("--steps", type=_pos_int, default=5)
    ver.add_argument("--lambda", dest="lam", type=_prob, default=None,
                     help="unused; accepted so saved command lines replay")

    return p


def _load_initial(args, parser):
    if args.initial is not None:
        if args.lam is not None or args.seed is not None:
            parser.error("--initial is mutually exclusive with --lambda/--seed")
        config = fileio.read_snapshot(args.initial)
        rule = rule_from_name(args.rule)
        if config.lattice != rule.lattice:
            raise UsageError("snapshot lattice %r does not match rule %r"
                             % (config.lattice, args.rule))
        return config
    lam = 0.5 if args.lam is None else args.lam
    seed = 0 if args.seed is None else args.seed
    rule = rule_from_name(args.rule)
    window = Window(center=Cell(0, 0), radius_cells=args.radius,
                    spacing=args.delta, margin_cells=args.margin)
    return sample_initial(window, lam, seed, lattice=rule.lattice)


def _emit(text, path):
    if path is None:
        sys.stdout.write(text)


def cmd_simulate(args, parser):
    config = _load_initial(args, parser)
    rule = rule_from_name(args.rule)
    final, record = run(config, rule, steps=args.steps, mode=args.mode)
    data = fileio.write_snapshot(final, args.output)
    _emit(data, args.output)
    status = "steps=%d fixated=%s" % (record.steps_taken, record.fixated)
    if record.cycle_period:
        status += " cycle_period=%d" % record.cycle_period
    print(status, file=sys.stderr)
    return 0


def cmd_boundaries(args):
    from .topology import boundaries
    config = fileio.read_snapshot(args.input)
    if config.lattice != "T":
        raise UsageError("boundary extraction needs a lattice 'T' snapshot")
    curves = boundaries(config)
    data = fileio.write_curves(curves, config.window.spacing,
                              config.time_index, args.output)
    _emit(data, args.output)
    print("curves=%d" % len(curves), file=sys.stderr)
    return 0


def cmd_distance(args):
    from . import geometry
    fam_a, da, _ = fileio.read_curves(args.a)
    fam_b, db, _ = fileio.read_curves(args.b)
    curves_a = [rec.to_curve() for rec in fam_a]
    curves_b = [rec.to_curve() for rec in fam_b]
    step = args.densify_step
    if step is None:
        step = geometry.DEFAULT_STEP * min(da, db, 1.0)
    if args.metric == "family":
        d = geometry.family_distance(curves_a, curves_b, step=step)
    else:
        d = geometry.hausdorff_family_distance(curves_a, curves_b, step=step)
    print("%.17g" % d)
    return 0


def _experiment_dispatch(args):
    """Returns (rows, extra_manifest_fields)."""
    from . import experiments as ex

    rule = rule_from_name(args.rule)
    window = Window(center=Cell(0, 0), radius_cells=args.radius,
                    spacing=args.delta, margin_cells=args.margin)
    seeds = args.seeds
    name = args.name

    if name in ("scaling", "coupling"):
        if not args.delta_list or not args.n_list:
            raise UsageError("%s needs --delta-list and --n-list" % name)
        spec = ex.ExperimentSpec(rule=rule, lam=args.lam,
                                 delta_list=args.delta_list,
                                 n_list=args.n_list, seeds=seeds,
                                 threads=args.threads)
        if name == "scaling":
            return ex.scaling_experiment(spec), {}
        return ex.scaling_coupling_diagnostic(spec), {}

    if name == "decay":
        if not args.m_list:
            raise UsageError("decay needs --m-list")
        rows, slope = ex.stable_edge_decay(args.m_list, seeds, window,
                                           lam=args.lam, threads=args.threads)
        return rows, {"log_rate_slope": slope}

    if name == "fixation":
        summary = ex.fixation_stats(rule, window, seeds, lam=args.lam,
                                    threads=args.threads)
        return summary.rows, {"all_fixated": summary.all_fixated,
                              "max_steps": summary.max_steps}

    if name == "percolation":
        summary = ex.percolation_probe(args.lam, rule, args.n, window,
                                       seeds, threads=args.threads)
        return summary.rows, {
            "plus_crossing_frequency": summary.frequency("plus_crossing"),
            "minus_crossing_frequency": summary.frequency("minus_crossing")}

    if name == "cluster":
        summary = ex.cluster_size_stats(args.lam, args.n, window, seeds,
                                        rule=rule, threads=args.threads)
        return summary.rows, {"mean_origin_cluster": summary.mean_size,
                              "tail_exponent": summary.tail_exponent}

    if name == "ancestor":
        result = ex.ancestor_check(seeds, window, args.n_max, lam=args.lam,
                                   threads=args.threads)
        bad = result.diameter_violations + result.parent_violations
        if bad:
            raise InvariantViolationError(
                "%d ancestor violations; first: %s"
                % (bad, result.details[0] if result.details else "?"))
        return [], {"loops_checked": result.loops_checked,
                    "seeds_checked": result.seeds}

    if name == "star_triangle":
        ok = ex.star_triangle_equivalence_check(seeds, window, args.n_max,
                                                lam=args.lam)
        return [], {"equivalent": bool(ok)}

    if name == "sync_decomposition":
        ok = ex.synchronous_decomposition_check(seeds, window, args.n_max,
                                                lam=args.lam)
        return [], {"decomposes": bool(ok)}

    if name == "sync_independence":
        if not isinstance(args.n, int):
            raise UsageError("sync_independence needs an integer --n")
        table, chi2, pvalue = ex.sync_independence_diagnostic(
            seeds, window, args.n, lam=args.lam)
        return [], {"table": [list(map(int, r)) for r in table],
                    "chi2": chi2, "p_value": pvalue}

    if name == "energy":
        result = ex.energy_monotonicity_check(seeds, window, args.n_max,
                                              lam=args.lam,
                                              threads=args.threads)
        bad = (result.energy_violations + result.strictness_violations
               + result.certificate_violations + result.stable_edge_violations)
        if bad:
            raise InvariantViolationError(
                "%d energy/soundness violations; first: %s"
                % (bad, result.details[0] if result.details else "?"))
        return [], {"regions_checked": result.regions_checked,
                    "region_steps": result.region_steps}

    raise UsageError("unknown experiment %r" % name)


def cmd_experiment(args, argv):
    rows, extra = _experiment_dispatch(args)
    if rows:
        data = fileio.write_results(rows, args.output)
        _emit(data, args.output)
    if args.manifest is not None or not rows:
        params = {k: v for k, v in vars(args).items()
                  if k not in ("command", "func") and v is not None}
        params["seeds"] = list(args.seeds)
        for key in ("delta_list", "n_list", "m_list"):
            if params.get(key) is not None:
                params[key] = list(params[key])
        from . import __version__
        info = CliConfig(command="experiment", params=params).to_dict()
        info["version"] = __version__
        info["argv"] = list(argv)
        info.update(extra)
        data = fileio.write_manifest(info, args.manifest)
        if args.manifest is None:
            sys.stdout.write(data)
    return 0


def cmd_verify(args):
    from .experiments import verify_trajectory
    config = fileio.read_snapshot(args.input)
    report = verify_trajectory(config, args.steps)
    print("steps=%d regions=%d loops=%d violations=%d"
          % (report.steps, report.regions_checked, report.loops_checked,
             len(report.violations)), file=sys.stderr)
    for v in report.violations:
        print(v, file=sys.stderr)
    if not report.ok:
        raise InvariantViolationError(
            "%d verification failures" % len(report.violations))
    print("ok")
    return 0


def main(argv=None):
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        if args.command == "simulate":
            return cmd_simulate(args, parser)
        if args.command == "boundaries":
            return cmd_boundaries(args)
        if args.command == "distance":
            return cmd_distance(args)
        if args.command == "experiment":
            return cmd_experiment(args, argv)
        if args.command == "verify":
            return cmd_verify(args)
        parser.error("unknown command %r" % args.command)
    except SystemExit as e:  # parser.error inside a handler
        return int(e.code or 0)
    except UsageError as e:
        print("%s: error: %s" % (PROG, e), file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print("%s: error: %s" % (PROG, e), file=sys.stderr)
        return 2
    except FormatError as e:
        print("%s: format error: %s" % (PROG, e), file=sys.stderr)
        return 3
    except InvariantViolationError as e:
        print("%s: invariant violation: %s" % (PROG, e), file=sys.stderr)
        return 4
    except ResourceLimitError as e:
        print("%s: resource limit: %s" % (PROG, e), file=sys.stderr)
        return 5
    return 0


if __name__ == "__main__":
    sys.exit(main())
