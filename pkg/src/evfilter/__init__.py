"""Area-based IIR noise filtering for event-camera (DVS) streams.

One IIR filter state per square pixel area holds a timestamp-like cut-off;
an event passes when it arrives within the filter length of its area's
state. The package bundles the functional filter, a cycle-level model of
its streaming hardware pipeline, synthetic input generation, filtering
efficiency metrics, stream file formats and a CLI.
"""

from .events import (
    BoundsError,
    Event,
    EventStream,
    FilterDecision,
    FilterParams,
    GlobalUpdate,
    MonotonicityError,
    ParamError,
    StreamError,
    TimeMap,
    cell_of,
    event_stream_bytes,
    per_pixel_storage_bits,
    timemap_storage_bits,
    validate_stream,
)
from .filtering import (
    FilterEngine,
    StreamResult,
    apply_filter,
    discard_curve,
    filter_stream,
    iir_update,
)
from .io import (
    FormatError,
    load_stream,
    packetize,
    read_bin,
    read_csv,
    save_stream,
    write_bin,
    write_csv,
)
from .metrics import (
    BenchReport,
    EvalReport,
    HistogramReport,
    SweepRow,
    bench_throughput,
    estimate_noise_floor,
    evaluate,
    sweep,
    timestamp_histogram,
)
from .pipeline import (
    CycleInput,
    OutputBeat,
    PipelineConfig,
    PipelineRun,
    PipelineSimulator,
    PipelineTrace,
    SaturationError,
    blocked_cycles_per_update,
    effective_throughput,
    global_update_sequence,
    run_events,
    run_trace,
)
from .synth import (
    MovingObject,
    NoiseSpec,
    SceneSpec,
    generate_noise,
    generate_scene,
    inject_noise,
    merge_streams,
)

__version__ = "0.1.0"

__all__ = [
    "BenchReport",
    "BoundsError",
    "CycleInput",
    "EvalReport",
    "Event",
    "EventStream",
    "FilterDecision",
    "FilterEngine",
    "FilterParams",
    "FormatError",
    "GlobalUpdate",
    "HistogramReport",
    "MonotonicityError",
    "MovingObject",
    "NoiseSpec",
    "OutputBeat",
    "ParamError",
    "PipelineConfig",
    "PipelineRun",
    "PipelineSimulator",
    "PipelineTrace",
    "SaturationError",
    "SceneSpec",
    "StreamError",
    "StreamResult",
    "SweepRow",
    "TimeMap",
    "apply_filter",
    "bench_throughput",
    "blocked_cycles_per_update",
    "cell_of",
    "discard_curve",
    "effective_throughput",
    "estimate_noise_floor",
    "evaluate",
    "event_stream_bytes",
    "filter_stream",
    "generate_noise",
    "generate_scene",
    "global_update_sequence",
    "inject_noise",
    "iir_update",
    "load_stream",
    "merge_streams",
    "packetize",
    "per_pixel_storage_bits",
    "read_bin",
    "read_csv",
    "run_events",
    "run_trace",
    "save_stream",
    "sweep",
    "timemap_storage_bits",
    "timestamp_histogram",
    "validate_stream",
    "write_bin",
    "write_csv",
]
