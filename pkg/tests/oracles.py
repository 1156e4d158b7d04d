"""Independent reference implementations used to cross-check the package.

Everything here is deliberately written in the plainest possible style
(scalar loops over lists, no numpy state, no shared code with the package)
so it can act as an independent oracle for the production paths.
"""


def transcribe_filter(
    events,
    width,
    height,
    scale,
    filter_length,
    k,
    policy="none",
    period=0,
    count_limit=0,
):
    """Straight-line per-event filter: verify, update, optional global update.

    ``events`` is a list of (ts, x, y, packet_last) tuples. Returns
    (results, time_map, active) with plain Python lists.
    """
    shift = scale.bit_length() - 1
    cells_x = -(-width // scale)
    cells_y = -(-height // scale)
    time_map = [[0] * cells_x for _ in range(cells_y)]
    active = [[False] * cells_x for _ in range(cells_y)]
    results = []
    time_of_last_update = None
    events_since_update = 0

    def global_update(now):
        nonlocal events_since_update, time_of_last_update
        for y_cell in range(cells_y):
            for x_cell in range(cells_x):
                if not active[y_cell][x_cell]:
                    thr = time_map[y_cell][x_cell]
                    time_map[y_cell][x_cell] = thr + ((now - thr) >> k)
                active[y_cell][x_cell] = False
        events_since_update = 0
        time_of_last_update = now

    for ts, x, y, last in events:
        if time_of_last_update is None:
            time_of_last_update = ts
        x_cell = x >> shift
        y_cell = y >> shift
        thr = time_map[y_cell][x_cell]
        diff = ts - thr
        results.append(diff < filter_length)
        time_map[y_cell][x_cell] = thr + ((ts - thr) >> k)
        active[y_cell][x_cell] = True
        events_since_update += 1
        if policy == "time" and ts - time_of_last_update >= period:
            global_update(ts)
        elif policy == "count" and events_since_update >= count_limit:
            global_update(ts)
        elif policy == "packet" and last:
            global_update(ts)
    return results, time_map, active


def burst_rejects(initial_diff, filter_length, k, spacing):
    """Rejected events of a burst starting ``initial_diff`` behind the state."""
    diff = initial_diff
    rejected = 0
    while diff >= filter_length:
        rejected += 1
        diff = diff - (diff >> k) + spacing
    return rejected


def idle_lag_real(period, k, iterations=20):
    """Real-valued steady lag behind the clock under periodic updates."""
    lag = 0.0
    factor = 1.0 - 2.0 ** -k
    for _ in range(iterations):
        lag = (lag + period) * factor
    return lag


def idle_lag_integer(period, k, iterations=40):
    """Integer steady lag right after each periodic update."""
    lag = 0
    for _ in range(iterations):
        diff = lag + period
        lag = diff - (diff >> k)
    return lag
