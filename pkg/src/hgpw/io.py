"""File formats: photon records, histograms, sweep tables, spectral curves, budgets.

All writers go through ``atomic_write`` (temp file + rename in the target
directory), and floats are written with 17 significant digits so that a
write/read cycle is exact.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .correlation import CorrelationHistogram, LifetimeHistogram
from .coupling import CouplingBudget, Curve, Measured
from .modesolver import SWEEP_COLUMNS
from .photophysics import ORIGINS, PhotonStream

RECORD_DTYPE = np.dtype([("channel", "u1"), ("timestamp", "<u8")])
FLOAT_FMT = "%.17g"


class RecordFormatError(ValueError):
    """Malformed or unsorted photon record file."""


def atomic_write(path, data: bytes | str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _fmt(x):
    return FLOAT_FMT % x


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return atomic_write(path, buf.getvalue())


def write_json(path, obj):
    return atomic_write(path, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def read_numeric_csv(path, columns):
    """Read a headed CSV into a dict of float arrays; ``columns`` must all be present."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise RecordFormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    missing = [c for c in columns if c not in header]
    if missing:
        raise RecordFormatError(f"{path}: missing column(s) {missing}; header is {header}")
    idx = [header.index(c) for c in columns]
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not v.strip() for v in row):
            continue
        try:
            data.append([float(row[i]) for i in idx])
        except (ValueError, IndexError):
            raise RecordFormatError(f"{path}:{lineno}: malformed row {row!r}") from None
    arr = np.array(data, float).reshape(-1, len(columns))
    return {c: arr[:, k] for k, c in enumerate(columns)}


# --- photon records ---------------------------------------------------------

def _merge(streams):
    streams = [streams] if isinstance(streams, PhotonStream) else list(streams)
    chans = [s.channel for s in streams]
    if len(set(chans)) != len(chans):
        raise ValueError("duplicate channel numbers")
    if any(not 0 <= c < 256 for c in chans):
        raise ValueError("channel numbers must fit in one byte")
    n = sum(len(s) for s in streams)
    ch = np.concatenate([np.full(len(s), s.channel, np.uint8) for s in streams]) if streams else np.empty(0, np.uint8)
    t = np.concatenate([s.timestamps for s in streams]) if streams else np.empty(0, np.int64)
    has_origin = bool(streams) and all(s.origin is not None for s in streams) and n > 0
    org = np.concatenate([s.origin for s in streams]).astype(np.uint8) if has_origin else None
    order = np.lexsort((ch, t))  # by timestamp, ties by channel
    return ch[order], t[order], (org[order] if has_origin else None)


def _split(ch, t, org):
    out = []
    for c in np.unique(ch):
        sel = ch == c
        out.append(PhotonStream(int(c), t[sel].astype(np.int64), None if org is None else org[sel]))
    return out


def write_photon_records(streams, path, fmt=None, origin=True):
    """Write one or more PhotonStreams as a single time-ordered record file.

    ``fmt`` is 'csv' or 'bin' (default: from the suffix). The binary form
    carries channel and timestamp only.
    """
    path = Path(path)
    fmt = fmt or ("bin" if path.suffix == ".bin" else "csv")
    ch, t, org = _merge(streams)
    if fmt == "bin":
        rec = np.empty(t.size, RECORD_DTYPE)
        rec["channel"], rec["timestamp"] = ch, t
        return atomic_write(path, rec.tobytes())
    if fmt != "csv":
        raise ValueError(f"unknown record format {fmt!r}")
    with_origin = origin and org is not None
    header = "channel,timestamp_ps,origin\n" if with_origin else "channel,timestamp_ps\n"
    if t.size == 0:
        return atomic_write(path, header)
    if with_origin:
        names = np.array(ORIGINS)[org]
        body = "\n".join(f"{c},{x},{o}" for c, x, o in zip(ch.tolist(), t.tolist(), names.tolist()))
    else:
        body = "\n".join(f"{c},{x}" for c, x in zip(ch.tolist(), t.tolist()))
    return atomic_write(path, header + body + "\n")


def _check_sorted(t, path, first_line, unit="line"):
    if t.size > 1:
        bad = np.flatnonzero(np.diff(t) < 0)
        if bad.size:
            raise RecordFormatError(f"{path}:{unit} {bad[0] + 1 + first_line}: timestamps decrease "
                                    f"({t[bad[0]]} -> {t[bad[0] + 1]})")


def read_photon_records(path, fmt=None):
    """Read a record file into PhotonStreams, one per channel present, sorted by channel."""
    path = Path(path)
    fmt = fmt or ("bin" if path.suffix == ".bin" else "csv")
    if fmt == "bin":
        raw = path.read_bytes()
        if len(raw) % RECORD_DTYPE.itemsize:
            raise RecordFormatError(f"{path}: size {len(raw)} is not a multiple of "
                                    f"{RECORD_DTYPE.itemsize}-byte records")
        rec = np.frombuffer(raw, RECORD_DTYPE)
        t = rec["timestamp"]
        if t.size and t.max() > np.iinfo(np.int64).max:
            raise RecordFormatError(f"{path}: timestamp overflows int64")
        t = t.astype(np.int64)
        _check_sorted(t, path, 0, unit="record")
        return _split(rec["channel"].copy(), t, None)
    if fmt != "csv":
        raise ValueError(f"unknown record format {fmt!r}")
    with open(path, newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise RecordFormatError(f"{path}:1: missing header")
    header = [h.strip() for h in lines[0].split(",")]
    if header not in (["channel", "timestamp_ps"], ["channel", "timestamp_ps", "origin"]):
        raise RecordFormatError(f"{path}:1: bad header {lines[0]!r}")
    ncol = len(header)
    codes = {name: k for k, name in enumerate(ORIGINS)}
    ch = np.empty(len(lines) - 1, np.int64)
    t = np.empty(len(lines) - 1, np.int64)
    org = np.empty(len(lines) - 1, np.uint8) if ncol == 3 else None
    n = 0
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        try:
            if len(parts) != ncol:
                raise ValueError
            c, x = int(parts[0]), int(parts[1])
            if not 0 <= c < 256 or x < 0:
                raise ValueError
            if org is not None:
                org[n] = codes[parts[2].strip()]
        except (ValueError, KeyError):
            raise RecordFormatError(f"{path}:{lineno}: malformed row {line!r}") from None
        ch[n], t[n] = c, x
        if n and x < t[n - 1]:
            raise RecordFormatError(f"{path}:{lineno}: timestamp {x} decreases from {t[n - 1]}")
        n += 1
    return _split(ch[:n], t[:n], None if org is None else org[:n])


def stream_for(streams, channel):
    for s in streams:
        if s.channel == channel:
            return s
    return PhotonStream(channel, np.empty(0, np.int64))


# --- histograms -------------------------------------------------------------

def write_histogram(hist, path):
    """Raw ``tau_ps,counts``, or ``tau_ps,g2,g2_err`` for a normalized g2 histogram."""
    if isinstance(hist, CorrelationHistogram) and hist.normalized:
        return write_csv(path, ["tau_ps", "g2", "g2_err"],
                         zip(map(float, hist.centers_ps), map(float, hist.values), map(float, hist.errors)))
    return write_csv(path, ["tau_ps", "counts"],
                     ((float(c), int(n)) for c, n in zip(hist.centers_ps, hist.counts)))


def _bin_width(centers, path):
    if centers.size < 2:
        raise RecordFormatError(f"{path}: need >= 2 bins")
    d = np.diff(centers)
    if np.any(np.abs(d - d[0]) > 1e-6 * abs(d[0])):
        raise RecordFormatError(f"{path}: bins are not uniform")
    return float(d[0])


def read_g2_histogram(path) -> CorrelationHistogram:
    d = read_numeric_csv(path, ["tau_ps", "g2", "g2_err"])
    bw = _bin_width(d["tau_ps"], path)
    return CorrelationHistogram(bw, d["tau_ps"], np.full(d["g2"].size, np.nan), normalized=True,
                                values=d["g2"], errors=d["g2_err"])


def read_lifetime_histogram(path, floor_fraction=0.1) -> LifetimeHistogram:
    d = read_numeric_csv(path, ["tau_ps", "counts"])
    bw = _bin_width(d["tau_ps"], path)
    counts = d["counts"]
    tail = counts[int(np.floor((1 - floor_fraction) * counts.size)):]
    floor = float(tail.mean()) if tail.size else 0.0
    return LifetimeHistogram(bw, d["tau_ps"], counts, floor, counts - floor)


# --- sweep, curves, budget --------------------------------------------------

def write_sweep(rows, path):
    return write_csv(path, SWEEP_COLUMNS, [[float(v) for v in r] for r in rows])


def read_curve(path, name=""):
    d = read_numeric_csv(path, ["wavelength_nm", "value"])
    return Curve(d["wavelength_nm"], d["value"], name or Path(path).stem)


BUDGET_KEYS = ("tau_ns", "alpha", "r_inf", "eta")


def budget_from_sections(sections: dict) -> CouplingBudget:
    """CouplingBudget from {quantity: {'value': v, 'sigma': s}}."""
    return CouplingBudget(**{k: Measured(float(sections[k]["value"]), float(sections[k].get("sigma", 0.0)))
                             for k in BUDGET_KEYS})


def read_budget(path) -> CouplingBudget:
    cp = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        cp.read_file(fh)
    return budget_from_sections({s: dict(cp[s]) for s in cp.sections()})
