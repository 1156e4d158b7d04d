"""Command-line front end.

Machine-readable results go to stdout, human summaries to stderr; every
subcommand is deterministic given its flags and seed. Report-producing
subcommands accept ``--plot FILE`` to render a figure next to the CSV.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import io as evio
from .events import (
    EventStream,
    FilterParams,
    GlobalUpdate,
    ParamError,
    StreamError,
    validate_stream,
)
from .filtering import apply_filter, discard_curve, filter_stream
from .metrics import (
    bench_throughput,
    estimate_noise_floor,
    evaluate,
    render_eval_csv,
    render_histogram_csv,
    render_sweep_csv,
    sweep,
    timestamp_histogram,
)
from .pipeline import PipelineConfig, SaturationError, effective_throughput, run_events
from .synth import MovingObject, SceneSpec, generate_scene, inject_noise

DEFAULT_RATES = "0,200,500,1000,2000,5000,10000,20000"
DEFAULT_IDLE_TIMES = ",".join(str(t) for t in range(1000, 10001, 1000))


def _say(*parts) -> None:
    print(*parts, file=sys.stderr)


def _add_filter_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scale", type=int, default=16, help="area side length in pixels")
    p.add_argument("--filter-length-us", type=int, default=200)
    p.add_argument("--update-factor-log2", type=int, default=2,
                   help="k such that the update factor is 2^-k")
    p.add_argument("--global-update", default="none",
                   help="none | time:<us> | count:<n> | packet")
    p.add_argument("--init", choices=["zero", "first-ts"], default="zero")


def _add_io_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=["csv", "bin"], default=None,
                   help="override the format inferred from file suffixes")


def _params(args, width: int, height: int) -> FilterParams:
    return FilterParams(
        sensor_width=width,
        sensor_height=height,
        scale=args.scale,
        filter_length_us=args.filter_length_us,
        update_factor_log2=args.update_factor_log2,
        global_update=GlobalUpdate.parse(args.global_update),
        init_state=args.init,
    )


def _check_flags(args) -> None:
    """Reject invalid filter-flag combinations before touching any file."""
    _params(args, 64, 64)


def _load(args, path) -> EventStream:
    return evio.load_stream(path, getattr(args, "format", None))


def _ensure_labels(stream: EventStream) -> EventStream:
    if stream.labels is not None:
        return stream
    _say("input has no label column; treating every event as original")
    return EventStream(
        width=stream.width, height=stream.height, ts=stream.ts, x=stream.x,
        y=stream.y, polarity=stream.polarity,
        labels=np.zeros(len(stream), np.uint8), packet_last=stream.packet_last,
    )


def _int_list(text: str) -> list[int]:
    return [int(p) for p in text.split(",") if p.strip() != ""]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_filter(args) -> int:
    _check_flags(args)
    stream = _load(args, args.input)
    if args.packet_every:
        stream = evio.packetize(stream, args.packet_every)
    params = _params(args, stream.width, stream.height)
    if args.annotate:
        if evio.sniff_format(args.output, args.format) != "csv":
            _say("--annotate needs a CSV output (the binary format has no "
                 "correct column)")
            return 1
        result = filter_stream(stream, params)
        text = evio.write_csv(stream).splitlines()
        text[1] += ",correct"
        for i in range(len(stream)):
            text[2 + i] += f",{int(result.passed[i])}"
        with open(args.output, "w") as fh:
            fh.write("\n".join(text) + "\n")
        n_out = result.n_passed
    else:
        result = filter_stream(stream, params)
        filtered = apply_filter(stream, params)
        evio.save_stream(filtered, args.output, args.format)
        n_out = len(filtered)
    _say(f"events in: {len(stream)}  out: {n_out}  "
         f"rejected: {result.reject_fraction:.4f}")
    return 0


def cmd_inject_noise(args) -> int:
    stream = _load(args, args.input)
    merged = inject_noise(stream, args.rate, seed=args.seed)
    evio.save_stream(merged, args.output, args.format)
    n_noise = int((merged.labels != 0).sum())
    _say(f"original: {len(merged) - n_noise}  injected noise: {n_noise}  "
         f"rate: {args.rate} ev/ms  seed: {args.seed}")
    return 0


def cmd_eval(args) -> int:
    _check_flags(args)
    stream = _load(args, args.input)
    if stream.labels is None:
        _say("eval needs a labeled stream (inject-noise produces one)")
        return 1
    params = _params(args, stream.width, stream.height)
    result = filter_stream(stream, params)
    report = evaluate(stream, result.passed, params)
    sys.stdout.write(render_eval_csv(report))
    _say(f"filtered {len(stream)} events with scale={params.scale} "
         f"filter_length={params.filter_length_us}us")
    return 0


def cmd_sweep(args) -> int:
    _check_flags(args)
    stream = _ensure_labels(_load(args, args.input))
    params = _params(args, stream.width, stream.height)
    rates = _int_list(args.rates)
    rows = sweep(stream, rates, params, seed=args.seed)
    sys.stdout.write(render_sweep_csv(rows))
    if args.plot:
        from .plotting import save_sweep_figure

        save_sweep_figure(rows, args.plot)
        _say(f"figure written to {args.plot}")
    return 0


def cmd_estimate_noise(args) -> int:
    stream = _load(args, args.input)
    report = timestamp_histogram(stream, args.bin_width_us)
    if len(report.counts) == 0:
        _say("empty stream: nothing to estimate")
        sys.stdout.write("bin_start_us,count\n")
        return 0
    report = estimate_noise_floor(report)
    sys.stdout.write(render_histogram_csv(report))
    frac = report.estimated_noise_fraction
    _say(f"estimated noise events (lower limit): "
         f"{report.estimated_noise_events:.0f} of {report.total} "
         f"({100 * frac:.2f}%); the true share is almost certainly higher")
    if args.plot:
        from .plotting import save_histogram_figure

        save_histogram_figure(report, args.plot)
        _say(f"figure written to {args.plot}")
    return 0


def cmd_discard_curve(args) -> int:
    params = _params(args, args.width, args.height)
    rows = discard_curve(params, _int_list(args.idle_times),
                         burst_spacing_us=args.burst_spacing_us)
    print("idle_time_us,discarded")
    for idle, count in rows:
        print(f"{idle},{count}")
    if args.plot:
        from .plotting import save_discard_curve_figure

        save_discard_curve_figure(rows, args.plot)
        _say(f"figure written to {args.plot}")
    return 0


def cmd_pipeline(args) -> int:
    _check_flags(args)
    stream = _load(args, args.input)
    if args.packet_every:
        stream = evio.packetize(stream, args.packet_every)
    params = _params(args, stream.width, stream.height)
    config = PipelineConfig(
        params=params,
        mem_read_latency=args.mem_read_latency,
        forward_depth=args.forward_depth,
        post_tlast_drain=args.post_tlast_drain,
        post_update_drain=args.post_update_drain,
    )
    run = run_events(
        config, stream,
        ready_duty=args.stall_duty, ready_seed=args.stall_seed,
        trace=args.trace is not None,
    )
    reference = filter_stream(stream, params)
    match = (
        np.array_equal(run.passed, reference.passed)
        and np.array_equal(run.map.states, reference.map.states)
        and np.array_equal(run.map.active, reference.map.active)
    )
    if args.trace is not None:
        run.trace.write(args.trace)
        _say(f"trace written to {args.trace}")
    header = "events,outputs,cycles,blocked_cycles,global_updates,match"
    row = (f"{len(stream)},{len(run.passed)},{run.cycles},"
           f"{run.blocked_cycles},{run.updates},{int(match)}")
    if args.clock_hz:
        meps = effective_throughput(config, args.clock_hz,
                                    args.update_period_us) / 1e6
        header += ",effective_meps"
        row += f",{meps:.1f}"
    print(header)
    print(row)
    if not match:
        _say("MISMATCH: pipeline disagrees with the functional filter")
        return 1
    _say(f"pipeline matches the functional filter on {len(stream)} events")
    return 0


def cmd_bench(args) -> int:
    _check_flags(args)
    stream = _load(args, args.input)
    params = _params(args, stream.width, stream.height)
    report = bench_throughput(args.engine, stream, params, runs=args.runs)
    print("engine,events,runs,meps_median")
    print(f"{report.engine},{report.n_events},{len(report.runs)},"
          f"{report.meps_median:.2f}")
    _say("per-run MEPS: " + ", ".join(f"{r / 1e6:.2f}" for r in report.runs))
    return 0


def _parse_ball(text: str) -> MovingObject:
    parts = [float(p) for p in text.split(",")]
    if len(parts) == 5:
        parts.append(1.0)
    if len(parts) != 6:
        raise ParamError(
            "--ball expects x0,y0,vx_px_per_ms,vy_px_per_ms,radius[,density]"
        )
    return MovingObject(*parts[:5], density=parts[5])


def cmd_synth(args) -> int:
    objects = [_parse_ball(b) for b in args.ball or []]
    rng = np.random.default_rng(args.seed)
    n_random = args.balls if args.balls is not None else (0 if objects else 3)
    for _ in range(n_random):
        objects.append(
            MovingObject(
                x0=float(rng.uniform(args.radius, args.width - args.radius)),
                y0=-args.radius,
                vx_px_per_ms=0.0,
                vy_px_per_ms=args.speed,
                radius_px=args.radius,
                density=args.density,
            )
        )
    spec = SceneSpec(
        width=args.width,
        height=args.height,
        duration_us=args.duration_ms * 1000,
        objects=tuple(objects),
        seed=args.seed,
    )
    scene = generate_scene(spec)
    if args.noise_rate > 0:
        scene = inject_noise(scene, args.noise_rate, seed=args.seed + 1)
    validate_stream(scene)
    evio.save_stream(scene, args.output, args.format)
    n_noise = 0 if scene.labels is None else int((scene.labels != 0).sum())
    _say(f"wrote {len(scene)} events ({n_noise} noise) to {args.output}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evfilter",
        description="Area-based IIR noise filter for event-camera streams",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("filter", help="filter a stream file")
    p.add_argument("input")
    p.add_argument("output")
    _add_filter_flags(p)
    _add_io_flags(p)
    p.add_argument("--annotate", action="store_true",
                   help="keep rejected events, append a correct column (CSV)")
    p.add_argument("--packet-every", type=int, default=0,
                   help="set packet_last on every n-th event before filtering")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("inject-noise", help="merge labeled random noise")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--rate", type=float, required=True, help="events per ms")
    p.add_argument("--seed", type=int, default=0)
    _add_io_flags(p)
    p.set_defaults(func=cmd_inject_noise)

    p = sub.add_parser("eval", help="filtering efficiency of a labeled stream")
    p.add_argument("input")
    _add_filter_flags(p)
    _add_io_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="efficiency table over noise rates")
    p.add_argument("input")
    p.add_argument("--rates", default=DEFAULT_RATES,
                   help=f"comma list of ev/ms rates (default {DEFAULT_RATES})")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--plot", default=None, help="also render a figure to FILE")
    _add_filter_flags(p)
    _add_io_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("estimate-noise", help="timestamp histogram + noise floor")
    p.add_argument("input")
    p.add_argument("--bin-width-us", type=int, default=1000)
    p.add_argument("--plot", default=None, help="also render a figure to FILE")
    _add_io_flags(p)
    p.set_defaults(func=cmd_estimate_noise)

    p = sub.add_parser("discard-curve",
                       help="rejected events vs idle time before a burst")
    p.add_argument("--idle-times", default=DEFAULT_IDLE_TIMES,
                   help="comma list of idle durations in us")
    p.add_argument("--burst-spacing-us", type=int, default=1)
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=480)
    p.add_argument("--plot", default=None, help="also render a figure to FILE")
    _add_filter_flags(p)
    p.set_defaults(func=cmd_discard_curve)

    p = sub.add_parser("pipeline",
                       help="cycle-level run, checked against the filter")
    p.add_argument("input")
    p.add_argument("--trace", default=None, help="write the per-cycle trace here")
    p.add_argument("--packet-every", type=int, default=0)
    p.add_argument("--stall-duty", type=float, default=1.0,
                   help="downstream ready duty cycle in (0,1]")
    p.add_argument("--stall-seed", type=int, default=0)
    p.add_argument("--mem-read-latency", type=int, default=2)
    p.add_argument("--forward-depth", type=int, default=3)
    p.add_argument("--post-tlast-drain", type=int, default=3)
    p.add_argument("--post-update-drain", type=int, default=3)
    p.add_argument("--clock-hz", type=float, default=None,
                   help="report effective throughput at this clock")
    p.add_argument("--update-period-us", type=float, default=1000.0)
    _add_filter_flags(p)
    _add_io_flags(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("bench", help="software throughput (MEPS)")
    p.add_argument("input")
    p.add_argument("--engine", choices=["functional", "pipeline"],
                   default="functional")
    p.add_argument("--runs", type=int, default=5)
    _add_filter_flags(p)
    _add_io_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", help="generate a synthetic labeled scene")
    p.add_argument("output")
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=480)
    p.add_argument("--duration-ms", type=int, default=300)
    p.add_argument("--balls", type=int, default=None,
                   help="number of falling balls to generate "
                        "(default 3, or 0 when --ball is given)")
    p.add_argument("--ball", action="append",
                   help="explicit object: x0,y0,vx,vy,radius[,density]; repeatable")
    p.add_argument("--speed", type=float, default=0.4, help="fall speed px/ms")
    p.add_argument("--radius", type=float, default=8.0)
    p.add_argument("--density", type=float, default=1.0)
    p.add_argument("--noise-rate", type=float, default=0.0,
                   help="also inject labeled noise at this ev/ms rate")
    p.add_argument("--seed", type=int, default=0)
    _add_io_flags(p)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParamError, StreamError, evio.FormatError, SaturationError,
            ValueError, OSError) as exc:
        _say(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
