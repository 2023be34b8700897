"""Binary file formats and CSV export.

Every binary file is little-endian and starts with a fixed 40-byte header:

    offset  size  field
    0       8     magic b"CAPSRT01"
    8       1     record kind (0 dataset, 1 master, 2 trace)
    9       1     scalar width in bytes (4 = f32, 8 = f64)
    10      2     reserved, zero
    12      4     N_i (u32)
    16      4     N_j (u32)
    20      4     d_h (u32)
    24      8     record count (u64)
    32      4     metadata length L (u32)
    36      4     reserved, zero
    40      L     metadata, UTF-8 JSON

Payloads, in record order:

    dataset  per example: label (u32), then N_i*N_j*d_h scalars in (i, j, k) order
    master   N_i*N_j scalars row-major (count is 1; d_h is that of the source data)
    trace    per example: label (u32), then r*N_i*N_j coefficients in (t, i, j)
             order, then N_j*d_h outputs; r comes from metadata["iterations"]
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from caproute.errors import FormatError, ValidationError
from caproute.master import MasterMatrix
from caproute.synth import LabeledDataset

MAGIC = b"CAPSRT01"
KIND_DATASET, KIND_MASTER, KIND_TRACE = 0, 1, 2
_HEADER = struct.Struct("<8sBBHIIIQII")
HEADER_SIZE = _HEADER.size
_WIDTHS = {4: "<f4", 8: "<f8"}


@dataclass
class FileHeader:
    kind: int
    n_lower: int
    n_upper: int
    dim: int
    count: int
    scalar_width: int
    metadata: dict

    @property
    def scalar_dtype(self) -> np.dtype:
        return np.dtype(_WIDTHS[self.scalar_width])


@dataclass
class TraceRecord:
    """Routing results for a dataset: per-iteration coefficients and outputs."""

    coefficients: np.ndarray  # (M, r, N_i, N_j); r may be 0 for fast routing
    outputs: np.ndarray  # (M, N_j, d_h)
    labels: np.ndarray
    metadata: dict


def _width(scalar_width: int) -> str:
    if scalar_width not in _WIDTHS:
        raise ValidationError(f"scalar width must be 4 or 8 bytes, got {scalar_width}")
    return _WIDTHS[scalar_width]


def _pack_header(kind, dims, count, scalar_width, metadata) -> bytes:
    meta = json.dumps(metadata, sort_keys=True).encode("utf-8")
    n_i, n_j, d = dims
    return _HEADER.pack(MAGIC, kind, scalar_width, 0, n_i, n_j, d, count, len(meta), 0) + meta


def _write(path, chunks) -> None:
    with open(path, "wb") as fh:
        for chunk in chunks:
            fh.write(chunk)


def read_header(buf: bytes, expected_kind: int | None = None) -> tuple[FileHeader, int]:
    """Parse and validate a header; returns it with the payload offset."""
    if len(buf) < HEADER_SIZE:
        raise FormatError("file shorter than header", len(buf))
    magic, kind, width, res0, n_i, n_j, d, count, meta_len, res1 = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if kind not in (KIND_DATASET, KIND_MASTER, KIND_TRACE):
        raise FormatError(f"unknown record kind {kind}", 8)
    if expected_kind is not None and kind != expected_kind:
        raise FormatError(f"record kind {kind}, expected {expected_kind}", 8)
    if width not in _WIDTHS:
        raise FormatError(f"unsupported scalar width {width}", 9)
    if res0 or res1:
        raise FormatError("reserved header bytes are not zero", 10 if res0 else 36)
    if min(n_i, n_j, d) < 1:
        raise FormatError("dimensions must be >= 1", 12)
    end = HEADER_SIZE + meta_len
    if len(buf) < end:
        raise FormatError("metadata truncated", len(buf))
    try:
        metadata = json.loads(buf[HEADER_SIZE:end].decode("utf-8")) if meta_len else {}
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable metadata: {exc}", HEADER_SIZE) from exc
    if not isinstance(metadata, dict):
        raise FormatError("metadata is not an object", HEADER_SIZE)
    return FileHeader(kind, n_i, n_j, d, count, width, metadata), end


def _check_size(buf: bytes, offset: int, record_size: int, count: int) -> None:
    expected = offset + record_size * count
    if len(buf) < expected:
        raise FormatError(f"payload truncated: expected {expected} bytes, found {len(buf)}", len(buf))
    if len(buf) > expected:
        raise FormatError(f"{len(buf) - expected} trailing bytes after payload", expected)


def _records(buf: bytes, offset: int, count: int, fields: list[tuple[str, str, tuple]]) -> np.ndarray:
    dtype = np.dtype([(name, fmt, shape) for name, fmt, shape in fields])
    _check_size(buf, offset, dtype.itemsize, count)
    return np.frombuffer(buf, dtype=dtype, count=count, offset=offset)


def write_dataset(d: LabeledDataset, path, scalar_width: int = 8) -> None:
    n_i, n_j, dim = d.dims
    fmt = _width(scalar_width)
    meta = {"n_classes": d.n_classes, "provenance": d.provenance}
    rec = np.zeros(len(d), dtype=[("label", "<u4"), ("values", fmt, (n_i, n_j, dim))])
    rec["label"] = d.labels
    rec["values"] = d.predictions
    _write(path, [_pack_header(KIND_DATASET, d.dims, len(d), scalar_width, meta), rec.tobytes()])


def read_dataset(path) -> LabeledDataset:
    buf = Path(path).read_bytes()
    h, off = read_header(buf, KIND_DATASET)
    rec = _records(buf, off, h.count, [("label", "<u4", ()), ("values", h.scalar_dtype.str, (h.n_lower, h.n_upper, h.dim))])
    try:
        return LabeledDataset(
            rec["values"].astype(np.float64),
            rec["label"].astype(np.int64),
            h.metadata.get("n_classes", h.n_upper),
            h.metadata.get("provenance", {}),
        )
    except ValidationError as exc:
        raise FormatError(f"invalid dataset contents: {exc}", off) from exc


def write_master(m: MasterMatrix, path, scalar_width: int = 8, dim: int = 1) -> None:
    """``dim`` records d_h of the data the master is meant for (header needs d_h >= 1)."""
    fmt = _width(scalar_width)
    meta = m.metadata()
    _write(
        path,
        [_pack_header(KIND_MASTER, (*m.shape, dim), 1, scalar_width, meta),
         np.ascontiguousarray(m.values, dtype=fmt).tobytes()],
    )


def read_master(path) -> MasterMatrix:
    buf = Path(path).read_bytes()
    h, off = read_header(buf, KIND_MASTER)
    if h.count != 1:
        raise FormatError(f"master file must hold one record, header says {h.count}", 24)
    rec = _records(buf, off, 1, [("values", h.scalar_dtype.str, (h.n_lower, h.n_upper))])
    try:
        return MasterMatrix.from_metadata(rec["values"][0].astype(np.float64), h.metadata)
    except (ValidationError, TypeError, KeyError) as exc:
        raise FormatError(f"invalid master metadata: {exc}", HEADER_SIZE) from exc


def write_trace(t: TraceRecord, path, scalar_width: int = 8) -> None:
    m, r, n_i, n_j = t.coefficients.shape
    dim = t.outputs.shape[-1]
    fmt = _width(scalar_width)
    meta = dict(t.metadata, iterations=r)
    rec = np.zeros(m, dtype=[("label", "<u4"), ("coefficients", fmt, (r, n_i, n_j)), ("outputs", fmt, (n_j, dim))])
    rec["label"] = t.labels
    rec["coefficients"] = t.coefficients
    rec["outputs"] = t.outputs
    _write(path, [_pack_header(KIND_TRACE, (n_i, n_j, dim), m, scalar_width, meta), rec.tobytes()])


def read_trace(path) -> TraceRecord:
    buf = Path(path).read_bytes()
    h, off = read_header(buf, KIND_TRACE)
    r = h.metadata.get("iterations")
    if not isinstance(r, int) or r < 0:
        raise FormatError("trace metadata lacks a valid 'iterations' entry", HEADER_SIZE)
    fmt = h.scalar_dtype.str
    rec = _records(
        buf, off, h.count,
        [("label", "<u4", ()), ("coefficients", fmt, (r, h.n_lower, h.n_upper)), ("outputs", fmt, (h.n_upper, h.dim))],
    )
    meta = {k: v for k, v in h.metadata.items() if k != "iterations"}
    return TraceRecord(
        rec["coefficients"].astype(np.float64).reshape(h.count, r, h.n_lower, h.n_upper),
        rec["outputs"].astype(np.float64),
        rec["label"].astype(np.int64),
        meta,
    )


def format_value(x: float) -> str:
    """Nine significant digits, trailing zeros kept (1 -> "1.00000000")."""
    return f"{float(x):#.9g}".rstrip(".")


def write_csv(path, header: list[str], rows: list[list]) -> None:
    def cell(v):
        return v if isinstance(v, str) else format_value(v) if isinstance(v, (float, np.floating)) else str(v)

    lines = [",".join(header)] + [",".join(cell(v) for v in row) for row in rows]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def export_csv(obj, path) -> None:
    """Write a CorrelationMatrix, TuningCurves or AccuracyReport as CSV."""
    from caproute.analysis import AccuracyReport

    if isinstance(obj, AccuracyReport):
        rows = [["overall", float(obj.overall), int(obj.counts.sum())]]
        rows += [[str(k), float(r), int(n)] for k, (r, n) in enumerate(zip(obj.per_class, obj.counts))]
        write_csv(path, ["class", "accuracy", "count"], rows)
        return
    values = np.atleast_2d(np.asarray(obj.values, dtype=np.float64))
    rows_l = obj.row_labels or [str(i) for i in range(values.shape[0])]
    cols_l = obj.col_labels or [str(j) for j in range(values.shape[1])]
    write_csv(path, ["label", *cols_l], [[rows_l[i], *map(float, values[i])] for i in range(values.shape[0])])


def read_csv_matrix(path) -> tuple[list[str], list[str], np.ndarray]:
    """Inverse of ``export_csv`` for labelled matrices."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    return header[1:], [r[0] for r in rows], np.array([[float(v) for v in r[1:]] for r in rows])
