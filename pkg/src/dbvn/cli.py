"""Command-line front end (``python -m dbvn`` or ``dbvn``).

Exit status: 0 on success, 1 when input is rejected or a computation cannot
be completed, 2 when ``compare`` finds a violated bound.
"""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import harness, schedule
from .errors import DBvNError
from .sim import SwitchState

EXIT_OK, EXIT_INVALID, EXIT_BOUNDS = 0, 1, 2


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _spec(args) -> harness.SweepSpec:
    if not args.config:
        raise harness.ConfigError("--config is required")
    spec = harness.load_config(args.config)
    kw = {}
    if args.seed is not None:
        kw["switch"] = spec.switch.replace(seed=args.seed)
    if args.points:
        kw["points"] = harness.parse_points(args.points)
    if args.slots is not None:
        kw["slots_per_point"] = args.slots
    return spec.replace(**kw) if kw else spec


def cmd_decompose(args):
    if args.matrix in (None, "-"):
        text = sys.stdin.read()
    else:
        with open(args.matrix) as fh:
            text = fh.read()
    m = schedule.validate_capacity_matrix(schedule.read_matrix(text),
                                          tol=args.tol)
    d = schedule.birkhoff_decompose(m)
    if args.frame:
        _emit(schedule.format_schedule(
            schedule.build_frame_schedule(d, args.frame)), args.out)
    else:
        _emit(schedule.format_decomposition(d), args.out)
    err = np.abs(d.reconstruct() - m.entries).max()
    print(f"{len(d)} terms, max reconstruction error {err:.3g}",
          file=sys.stderr)


def cmd_analyze(args):
    spec = _spec(args).replace(slots_per_point=None)
    _emit(harness.run_sweep(spec).to_csv(), args.out)


def cmd_simulate(args):
    spec = _spec(args)
    if not spec.simulated:
        raise harness.ConfigError("[run] slots (or --slots) is required")
    p, k = spec.point(spec.points[0])
    rows = []
    trace_text = None
    for seed in spec.seeds:
        cfg = spec.switch_config(p, k, seed)
        st = SwitchState(cfg, trace=bool(args.trace))
        if spec.slots_per_point <= cfg.warmup_slots:
            raise harness.ConfigError(
                f"slots ({spec.slots_per_point}) must exceed warmup "
                f"({cfg.warmup_slots})")
        st.advance(spec.slots_per_point)
        if args.drain:
            st.drain()
        rows.append((seed, st.metrics()))
        if args.trace and trace_text is None:
            trace_text = st.trace_csv()
    if trace_text is not None:
        with open(args.trace, "w") as fh:
            fh.write(trace_text)
    head = "".join(f"# {ln}\n" for ln in
                   harness.spec_to_ini(spec).splitlines())
    _emit(head + harness.metrics_csv(rows), args.out)


def cmd_sweep(args):
    spec = _spec(args)
    _emit(harness.run_sweep(spec).to_csv(), args.out)


def cmd_critical_k(args):
    spec = _spec(args)
    if args.target is not None:
        spec = spec.replace(loss_target=args.target)
    res = harness.find_critical_k(spec, start=args.start)
    lines = [f"# target = {res.loss_target!r}",
             f"# monotone = {str(res.monotone).lower()}", "K,sim_pl"]
    lines += [f"{k},{v!r}" for k, v in res.probes.items()]
    lines.append(f"# critical_k = {res.k}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_compare(args):
    spec = _spec(args)
    result = harness.run_sweep(spec)
    rep = harness.compare_report(result, pd_rel_tol=args.pd_rel_tol)
    _emit("\n".join(rep.lines()) + "\n", args.out)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(result.to_csv())
    if rep.applicable and not rep.passed:
        return EXIT_BOUNDS
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="dbvn", description="BvN / deflection-compensated BvN switch "
        "analysis and simulation")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="experiment config file")
            p.add_argument("--seed", type=int, help="override [run] seed")
            p.add_argument("--points", help="override sweep points, "
                           "e.g. '40,75,113' or '50:150:25'")
            p.add_argument("--slots", type=int, help="override [run] slots")
        p.add_argument("--out", help="write output here instead of stdout")
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("decompose", help="BvN decomposition of a matrix")
    p.add_argument("--matrix", help="matrix file ('-' or omitted: stdin)")
    p.add_argument("--frame", type=int, help="emit a frame schedule of this "
                   "many slots instead of the weighted terms")
    p.add_argument("--tol", type=float, default=1e-6)
    common(p, config=False)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("analyze", help="analytic sweep table")
    common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="simulate the base point, one CSV "
                       "line of metrics per seed")
    common(p)
    p.add_argument("--drain", action="store_true",
                   help="stop the sources and empty the switch at the end")
    p.add_argument("--trace", help="write the event trace of the first "
                   "seed to this CSV file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="analytics and simulation per point")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("critical-k", help="smallest simulated K meeting "
                       "the loss target")
    common(p)
    p.add_argument("--target", type=float, help="override loss_target")
    p.add_argument("--start", type=int, help="first K to probe")
    p.set_defaults(func=cmd_critical_k)

    p = sub.add_parser("compare", help="check the bounding relations; exit "
                       "2 on a violation")
    common(p)
    p.add_argument("--csv", help="also write the sweep table here")
    p.add_argument("--pd-rel-tol", type=float,
                   help="also require |sim P_d/ideal P_d - 1| <= this "
                   "for K >= Kdot")
    p.set_defaults(func=cmd_compare)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        rc = args.func(args)
    except (DBvNError, OSError, ValueError) as e:
        print(f"dbvn {args.command}: error: {e}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK if rc is None else rc
