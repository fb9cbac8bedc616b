"""Command line interface: run / batch / bench / validate."""

import argparse
import os
import sys

from .runlog import BatchRunError
from .runner import run_batch, run_scenario, timing_report
from .scenario import ScenarioError, load_scenario


def _load(args):
    spec = load_scenario(args.scenario)
    if getattr(args, "mode", None):
        spec = spec.with_mode(args.mode)
    if getattr(args, "horizon", None):
        spec = spec.with_horizon(args.horizon)
    return spec


def _outdir(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def cmd_run(args):
    spec = _load(args)
    out = _outdir(args)
    log = run_scenario(spec, args.seed, deterministic=args.deterministic,
                       snapshot_every=args.snapshot_every, outdir=out)
    base = os.path.basename(str(spec.name)).replace(".yaml", "").replace(".yml", "")
    from .agents import layout_to_csv
    from .scenario import build_chain, build_layout

    layout_to_csv(build_layout(spec, build_chain(spec), args.seed),
                  os.path.join(out, f"agents_{base}_seed{args.seed}.csv"))
    path = os.path.join(out, f"run_{base}_{spec.control.mode}_seed{args.seed}.csv")
    log.to_csv(path, deterministic=args.deterministic)
    s = log.summary()
    print(f"wrote {path}")
    print(f"records={s['records']} final_eps={s['final_eps']:.6g} "
          f"steps_to_contact={s['steps_to_contact']} mean_step_ms={s['mean_step_ms']:.3f}")
    return 0


def cmd_batch(args):
    spec = _load(args)
    out = _outdir(args)
    if args.seed_list:
        seeds = [int(s) for s in args.seed_list.split(",")]
    else:
        seeds = list(range(args.seed_start, args.seed_start + args.seeds))
    try:
        batch, logs = run_batch(spec, seeds, jobs=args.jobs,
                                deterministic=args.deterministic)
    except BatchRunError as exc:
        print(f"batch aborted: {exc}", file=sys.stderr)
        return 1
    base = os.path.basename(str(spec.name)).replace(".yaml", "").replace(".yml", "")
    if spec.contact is not None:
        path = os.path.join(out, f"contact_{base}_{spec.control.mode}.csv")
        batch.to_contact_csv(path)
        steps = [s for s in batch.contact_steps if s >= 0]
        print(f"wrote {path}")
        print(f"contacts={len(steps)}/{len(seeds)} "
              f"median_steps={sorted(steps)[len(steps) // 2] if steps else 'n/a'}")
    else:
        path = os.path.join(out, f"aggregate_{base}_{spec.control.mode}.csv")
        batch.to_aggregate_csv(path)
        print(f"wrote {path}")
        print(f"final mean_eps={batch.mean_eps()[-1]:.6g} "
              f"std_eps={batch.std_eps()[-1]:.6g}")
    if args.per_run:
        for seed, log in zip(sorted(seeds), logs):
            log.to_csv(os.path.join(
                out, f"run_{base}_{spec.control.mode}_seed{seed}.csv"),
                deterministic=args.deterministic)
    return 0


def cmd_bench(args):
    spec = _load(args)
    report = timing_report(spec, seed=args.seed, n_steps=args.steps)
    stats = report.stats()
    for phase in ("total", "diffusion", "control"):
        st = stats[phase]
        print(f"{phase:>9}: mean {st['mean']:8.3f} ms   median {st['median']:8.3f} ms"
              f"   p95 {st['p95']:8.3f} ms")
    if args.out:
        out = _outdir(args)
        path = os.path.join(out, "bench.csv")
        report.to_csv(path)
        print(f"wrote {path}")
    return 0


def cmd_validate(args):
    try:
        spec = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"invalid scenario ({exc.field}): {exc}", file=sys.stderr)
        return 1
    except Exception as exc:   # unparseable file
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return 1
    print(f"ok: {spec.name} mode={spec.control.mode} horizon={spec.horizon} "
          f"domain={'x'.join(str(n) for n in spec.domain.shape)}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="ergoarm",
                                description="whole-body ergodic exploration simulator")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario + seed, write its run-log CSV")
    run.add_argument("--scenario", required=True)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", default="out")
    run.add_argument("--mode", help="override the scenario's controller mode")
    run.add_argument("--horizon", type=int, help="override the scenario horizon")
    run.add_argument("--deterministic", action="store_true",
                     help="single-thread reference mode; omits wall-clock columns")
    run.add_argument("--snapshot-every", type=int, default=0,
                     help="write binary field snapshots every N steps")
    run.set_defaults(func=cmd_run)

    batch = sub.add_parser("batch", help="seed sweep -> aggregate CSV")
    batch.add_argument("--scenario", required=True)
    batch.add_argument("--seeds", type=int, default=10)
    batch.add_argument("--seed-start", type=int, default=0)
    batch.add_argument("--seed-list", help="comma-separated explicit seeds")
    batch.add_argument("--jobs", type=int, default=1)
    batch.add_argument("--out", default="out")
    batch.add_argument("--mode")
    batch.add_argument("--horizon", type=int)
    batch.add_argument("--deterministic", action="store_true")
    batch.add_argument("--per-run", action="store_true",
                       help="also write each run's CSV")
    batch.set_defaults(func=cmd_batch)

    bench = sub.add_parser("bench", help="per-step timing report")
    bench.add_argument("--scenario", required=True)
    bench.add_argument("--steps", type=int, default=50)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--mode")
    bench.add_argument("--out", default="")
    bench.set_defaults(func=cmd_bench)

    val = sub.add_parser("validate", help="scenario lint")
    val.add_argument("--scenario", required=True)
    val.set_defaults(func=cmd_validate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
