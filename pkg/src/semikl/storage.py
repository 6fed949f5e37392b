"""On-disk formats: binary checkpoints, CSV series, JSON summaries.

Checkpoint layout (all little-endian, fixed by format not by host):

    bytes 0..3    magic b"SMKL"
    u16           format version (currently 1)
    u16           kind: 1 quantum mixture, 2 classical ensemble
    u32           spatial dimension d
    u64           grid points per axis (quantum) or particle count (classical)
    f64           hbar
    f64           box length
    u32           component count J (quantum) or grid points per axis
                  (classical ensembles keep a grid for deposits and forces)
    payload       '<f8' / '<c16' arrays, see save_checkpoint
    u32           zlib.crc32 of everything above

Readers refuse version mismatches (reporting both versions) and raise a
structured corruption error on bad magic, truncation, or CRC mismatch.
"""

from __future__ import annotations

import datetime
import hashlib
import json
import struct
import zlib

import numpy as np

from .core import ClassicalEnsemble, QuantumMixedState, SimParams
from .errors import CheckpointCorruptError, CheckpointVersionError
from .observables import MomentSeries

MAGIC = b"SMKL"
VERSION = 1
KIND_QUANTUM = 1
KIND_CLASSICAL = 2

_HEADER = struct.Struct("<4sHHIQddI")
_CRC = struct.Struct("<I")


def save_checkpoint(path: str, obj) -> None:
    """Write a quantum mixture or classical ensemble to ``path``.

    Quantum payload: weights (J f64), then psi (J * N^d c16, row-major).
    Classical payload: positions (count*d f64), velocities (count*d f64),
    weights (count f64).
    """
    if isinstance(obj, QuantumMixedState):
        kind = KIND_QUANTUM
        big = obj.params.grid_points
        small = obj.rank
        payload = (
            np.ascontiguousarray(obj.weights, dtype="<f8").tobytes()
            + np.ascontiguousarray(obj.psi, dtype="<c16").tobytes()
        )
    elif isinstance(obj, ClassicalEnsemble):
        kind = KIND_CLASSICAL
        big = obj.count
        small = obj.params.grid_points
        payload = (
            np.ascontiguousarray(obj.positions, dtype="<f8").tobytes()
            + np.ascontiguousarray(obj.velocities, dtype="<f8").tobytes()
            + np.ascontiguousarray(obj.weights, dtype="<f8").tobytes()
        )
    else:
        raise TypeError(f"cannot checkpoint {type(obj).__name__}")
    body = _HEADER.pack(
        MAGIC,
        VERSION,
        kind,
        obj.params.d,
        big,
        obj.params.hbar,
        obj.params.box_length,
        small,
    ) + payload
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(_CRC.pack(zlib.crc32(body) & 0xFFFFFFFF))


def load_checkpoint(path: str):
    """Read a checkpoint back; returns the same type that was saved."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size + _CRC.size:
        raise CheckpointCorruptError(
            f"truncated checkpoint: {len(blob)} bytes, header alone needs "
            f"{_HEADER.size + _CRC.size}"
        )
    body, tail = blob[: -_CRC.size], blob[-_CRC.size :]
    if body[:4] != MAGIC:
        raise CheckpointCorruptError(f"bad magic {body[:4]!r}, expected {MAGIC!r}")
    _, version, kind, d, big, hbar, box_length, small = _HEADER.unpack_from(body)
    if version != VERSION:
        raise CheckpointVersionError(
            f"checkpoint has format version {version}, this reader supports "
            f"version {VERSION}"
        )
    (stored,) = _CRC.unpack(tail)
    computed = zlib.crc32(body) & 0xFFFFFFFF
    if stored != computed:
        raise CheckpointCorruptError(
            f"crc mismatch: stored {stored:#010x}, computed {computed:#010x}"
        )
    payload = body[_HEADER.size :]
    if kind == KIND_QUANTUM:
        params = SimParams(d=d, grid_points=big, box_length=box_length, hbar=hbar)
        j = small
        want = 8 * j + 16 * j * big**d
        if len(payload) != want:
            raise CheckpointCorruptError(
                f"quantum payload is {len(payload)} bytes, expected {want}"
            )
        weights = np.frombuffer(payload[: 8 * j], dtype="<f8").astype(float)
        psi = (
            np.frombuffer(payload[8 * j :], dtype="<c16")
            .astype(complex)
            .reshape((j,) + params.shape)
        )
        return QuantumMixedState(params, weights, psi)
    if kind == KIND_CLASSICAL:
        params = SimParams(d=d, grid_points=small, box_length=box_length, hbar=hbar)
        n = big
        want = 8 * (2 * n * d + n)
        if len(payload) != want:
            raise CheckpointCorruptError(
                f"classical payload is {len(payload)} bytes, expected {want}"
            )
        flat = np.frombuffer(payload, dtype="<f8").astype(float)
        positions = flat[: n * d].reshape(n, d)
        velocities = flat[n * d : 2 * n * d].reshape(n, d)
        weights = flat[2 * n * d :]
        return ClassicalEnsemble(params, positions, velocities, weights)
    raise CheckpointCorruptError(f"unknown checkpoint kind {kind}")


def ledger_hash(exponents: dict) -> str:
    """Short stable digest of an exponent dictionary.

    The CSV header and the JSON summary both carry this so a series file
    can be matched to the exponent conventions that produced it.
    """
    canon = json.dumps(exponents, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


_UNITS = {
    "t": "time",
    "mass": "1",
    "energy": "energy",
}


def _unit_for(name: str) -> str:
    if name in _UNITS:
        return _UNITS[name]
    if name[:1] == "M" and name[1:].isdigit():
        return f"velocity^{name[1:]}"
    if name[:1] in ("L", "N") and name[1:].isdigit():
        return f"length^{name[1:]}"
    if name.startswith("momentum_"):
        return "velocity"
    if name.startswith("lp_"):
        return "1"
    return "1"


def write_series_csv(path: str, series: MomentSeries, exponents: dict) -> None:
    """Write a moment series; byte-identical across reruns except for the
    timestamped line."""
    columns = ["t"] + series.columns
    stamp = datetime.datetime.now(datetime.timezone.utc).strftime(
        "%Y-%m-%dT%H:%M:%SZ"
    )
    lines = [
        f"# generated {stamp}",
        "# units: " + ", ".join(f"{c} [{_unit_for(c)}]" for c in columns),
        f"# ledger {ledger_hash(exponents)}",
    ]
    if series.meta.get("truncated"):
        lines.append(f"# truncated at t={series.meta.get('horizon_time')!r}")
    lines.append(",".join(columns))
    table = np.column_stack([series.times] + [series.data[c] for c in series.columns])
    for row in table:
        lines.append(",".join(format(v, ".17g") for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_series_csv(path: str) -> MomentSeries:
    header_meta = {}
    columns = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                text = line[1:].strip()
                if text.startswith("ledger "):
                    header_meta["ledger_hash"] = text.split()[1]
                elif text.startswith("truncated"):
                    header_meta["truncated"] = True
                continue
            if columns is None:
                columns = line.split(",")
                continue
            rows.append([float(v) for v in line.split(",")])
    if columns is None or not rows:
        raise ValueError(f"no data rows in {path}")
    table = np.asarray(rows, dtype=float)
    data = {name: table[:, i] for i, name in enumerate(columns) if name != "t"}
    return MomentSeries(table[:, columns.index("t")], data, header_meta)


def _schema():
    import importlib.resources as resources

    with resources.files("semikl").joinpath("schemas/summary.schema.json").open() as fh:
        return json.load(fh)


def write_summary_json(path: str, summary: dict) -> None:
    """Validate the run summary against the shipped schema, then write it."""
    import jsonschema

    jsonschema.validate(summary, _schema())
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def validate_summary(summary: dict) -> None:
    import jsonschema

    jsonschema.validate(summary, _schema())
