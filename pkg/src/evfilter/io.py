"""Event stream serialization: line-oriented CSV and a compact binary format.

Binary layout (all integers little-endian):

    header, 24 bytes:
        0   4s  magic  b"EVS1"
        4   u16 version (currently 1)
        6   u16 sensor width
        8   u16 sensor height
        10  u16 flags, bit 0 = labels present
        12  4   reserved (zero)
        16  u64 event count
    one 16-byte record per event:
        0   u64 timestamp, microseconds
        8   u16 x
        10  u16 y
        12  u8  polarity (0/1)
        13  u8  flags, bit 0 = noise label, bit 1 = packet_last
        14  2   padding (zero)

CSV: an optional `# width=W,height=H` comment, then a header row
`ts_us,x,y,polarity[,label][,last]` and one row per event.
"""
from __future__ import annotations

import struct
from typing import Optional

import numpy as np

from .events import EventStream, MAX_COORD

MAGIC = b"EVS1"
VERSION = 1
HEADER_BYTES = 24
RECORD_BYTES = 16
FLAG_LABELS = 1 << 0

_HEADER_STRUCT = struct.Struct("<4sHHHH4sQ")

_RECORD_DTYPE = np.dtype(
    [
        ("ts", "<u8"),
        ("x", "<u2"),
        ("y", "<u2"),
        ("polarity", "u1"),
        ("flags", "u1"),
        ("pad", "<u2"),
    ]
)


class FormatError(ValueError):
    """Malformed stream file; ``line`` is 1-based when it applies."""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def write_csv(stream: EventStream) -> str:
    labeled = stream.labels is not None
    with_last = bool(stream.packet_last.any())
    cols = "ts_us,x,y,polarity"
    if labeled:
        cols += ",label"
    if with_last:
        cols += ",last"
    lines = [f"# width={stream.width},height={stream.height}", cols]
    for i in range(len(stream)):
        row = f"{int(stream.ts[i])},{int(stream.x[i])},{int(stream.y[i])},{int(stream.polarity[i])}"
        if labeled:
            row += f",{int(stream.labels[i])}"
        if with_last:
            row += f",{int(stream.packet_last[i])}"
        lines.append(row)
    return "\n".join(lines) + "\n"


def _parse_geometry(line: str, lineno: int) -> tuple[int, int]:
    body = line.lstrip("#").strip()
    parts = dict(
        kv.split("=", 1) for kv in (p.strip() for p in body.split(",")) if "=" in kv
    )
    try:
        return int(parts["width"]), int(parts["height"])
    except (KeyError, ValueError):
        raise FormatError("geometry comment must be '# width=W,height=H'", lineno)


def read_csv(text: str, *, width: Optional[int] = None, height: Optional[int] = None) -> EventStream:
    """Parse CSV text; geometry comes from the comment unless given."""
    lines = text.splitlines()
    lineno = 0
    header = None
    for raw in lines:
        lineno += 1
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if "width" in line and "height" in line:
                width, height = _parse_geometry(line, lineno)
            continue
        header = line
        break
    if header is None:
        raise FormatError("no header row found", lineno or 1)
    if width is None or height is None:
        raise FormatError("no geometry: add a '# width=W,height=H' comment", 1)
    names = [c.strip() for c in header.split(",")]
    if names[:4] != ["ts_us", "x", "y", "polarity"]:
        raise FormatError("header must start with ts_us,x,y,polarity", lineno)
    extras = names[4:]
    if any(c not in ("label", "last") for c in extras):
        raise FormatError(f"unknown columns {extras}", lineno)
    has_label = "label" in extras
    has_last = "last" in extras
    n_cols = len(names)

    ts, xs, ys, pol = [], [], [], []
    labels = [] if has_label else None
    lasts = []
    for i in range(lineno, len(lines)):
        line = lines[i].strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != n_cols:
            raise FormatError(f"expected {n_cols} fields, got {len(parts)}", i + 1)
        try:
            values = [int(p) for p in parts]
        except ValueError:
            raise FormatError(f"non-integer field in {line!r}", i + 1)
        t, x, y, p = values[:4]
        if t < 0:
            raise FormatError("negative timestamp", i + 1)
        if not (0 <= x <= MAX_COORD and 0 <= y <= MAX_COORD):
            raise FormatError("coordinate exceeds 16 bits", i + 1)
        if p not in (0, 1):
            raise FormatError("polarity must be 0 or 1", i + 1)
        rest = values[4:]
        if has_label:
            label = rest.pop(0)
            if label not in (0, 1):
                raise FormatError("label must be 0 or 1", i + 1)
            labels.append(label)
        if has_last:
            last = rest.pop(0)
            if last not in (0, 1):
                raise FormatError("last flag must be 0 or 1", i + 1)
            lasts.append(bool(last))
        else:
            lasts.append(False)
        ts.append(t)
        xs.append(x)
        ys.append(y)
        pol.append(p)
    return EventStream(
        width=width,
        height=height,
        ts=np.array(ts, np.int64),
        x=np.array(xs, np.uint16),
        y=np.array(ys, np.uint16),
        polarity=np.array(pol, np.uint8),
        labels=None if labels is None else np.array(labels, np.uint8),
        packet_last=np.array(lasts, np.bool_),
    )


# ---------------------------------------------------------------------------
# Binary
# ---------------------------------------------------------------------------

def write_bin(stream: EventStream) -> bytes:
    flags = FLAG_LABELS if stream.labels is not None else 0
    header = _HEADER_STRUCT.pack(
        MAGIC, VERSION, stream.width, stream.height, flags, b"\x00" * 4, len(stream)
    )
    records = np.zeros(len(stream), dtype=_RECORD_DTYPE)
    records["ts"] = stream.ts.astype(np.uint64)
    records["x"] = stream.x
    records["y"] = stream.y
    records["polarity"] = stream.polarity
    rec_flags = np.zeros(len(stream), np.uint8)
    if stream.labels is not None:
        rec_flags |= (stream.labels & 1).astype(np.uint8)
    rec_flags |= (stream.packet_last.astype(np.uint8) << 1)
    records["flags"] = rec_flags
    return header + records.tobytes()


def read_bin(data: bytes) -> EventStream:
    if len(data) < HEADER_BYTES:
        raise FormatError(f"file shorter than the {HEADER_BYTES}-byte header")
    magic, version, width, height, flags, _reserved, count = _HEADER_STRUCT.unpack(
        data[:HEADER_BYTES]
    )
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    body = data[HEADER_BYTES:]
    if len(body) != count * RECORD_BYTES:
        raise FormatError(
            f"count says {count} events ({count * RECORD_BYTES} bytes) "
            f"but file carries {len(body)} bytes"
        )
    records = np.frombuffer(body, dtype=_RECORD_DTYPE)
    if len(records) and int(records["ts"].max()) > np.iinfo(np.int64).max:
        raise FormatError("timestamp exceeds the supported 63-bit range")
    ts = records["ts"].astype(np.int64)
    return EventStream(
        width=width,
        height=height,
        ts=ts,
        x=records["x"].copy(),
        y=records["y"].copy(),
        polarity=records["polarity"].copy(),
        labels=(records["flags"] & 1).astype(np.uint8) if flags & FLAG_LABELS else None,
        packet_last=(records["flags"] >> 1 & 1).astype(np.bool_),
    )


# ---------------------------------------------------------------------------
# File helpers
# ---------------------------------------------------------------------------

def sniff_format(path: str, override: Optional[str] = None) -> str:
    if override in ("csv", "bin"):
        return override
    if override is not None:
        raise FormatError(f"unknown format {override!r}")
    name = str(path).lower()
    if name.endswith(".csv"):
        return "csv"
    if name.endswith((".bin", ".evs")):
        return "bin"
    raise FormatError(f"cannot infer format of {path!r}; pass --format")


def load_stream(path: str, fmt: Optional[str] = None) -> EventStream:
    fmt = sniff_format(path, fmt)
    if fmt == "csv":
        with open(path, "r") as fh:
            return read_csv(fh.read())
    with open(path, "rb") as fh:
        return read_bin(fh.read())


def save_stream(stream: EventStream, path: str, fmt: Optional[str] = None) -> None:
    fmt = sniff_format(path, fmt)
    if fmt == "csv":
        with open(path, "w") as fh:
            fh.write(write_csv(stream))
    else:
        with open(path, "wb") as fh:
            fh.write(write_bin(stream))


# ---------------------------------------------------------------------------
# Packetization
# ---------------------------------------------------------------------------

def packetize(stream: EventStream, events_per_packet: int) -> EventStream:
    """Set packet_last on every n-th event and on the final event."""
    if events_per_packet < 1:
        raise ValueError("events_per_packet must be >= 1")
    n = len(stream)
    flags = np.zeros(n, np.bool_)
    if n:
        flags[events_per_packet - 1 :: events_per_packet] = True
        flags[n - 1] = True
    return EventStream(
        width=stream.width,
        height=stream.height,
        ts=stream.ts,
        x=stream.x,
        y=stream.y,
        polarity=stream.polarity,
        labels=stream.labels,
        packet_last=flags,
    )
