"""On-disk formats.

Text formats (scenarios, datasets, logs, manifests) are JSON; Python writes
floats with ``repr`` so every float64 round-trips exactly.  Model weights use
a small binary archive:

    offset  size  field
    0       4     magic b"MVNW"
    4       4     format version, uint32 LE
    8       8     total file length in bytes, uint64 LE
    16      4     CRC-32 of bytes 0..15, uint32 LE
    20      4     metadata length L, uint32 LE
    24      L     metadata, UTF-8 JSON (hyperparameters)
    ...           tensors, each:
                    uint16 name length, name bytes (UTF-8),
                    uint8 ndim, ndim x uint64 dims,
                    prod(dims) x float64 LE
    end-32  32    SHA-256 of every preceding byte

All writers go through a temp file and ``os.replace`` so readers never see a
partial file.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
import zlib

import numpy as np

from .costs import Scenario
from .errors import ChecksumError, FormatVersionError, StorageError, TruncatedFileError
from .gnn import GnnModel, LabeledSample, Snapshot
from .simulation import CollisionEvent, TrajectoryLog

WEIGHTS_MAGIC = b"MVNW"
WEIGHTS_VERSION = 1
TEXT_VERSION = 1
_FIXED = struct.Struct("<4sIQI")


def atomic_write(path, data: bytes):
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump(obj):
    return json.dumps(obj, sort_keys=True, allow_nan=True)


def _check_version(doc, kind):
    if not isinstance(doc, dict) or doc.get("format") != kind:
        raise StorageError(f"not a {kind} file")
    v = doc.get("version")
    if not isinstance(v, int) or v > TEXT_VERSION or v < 1:
        raise FormatVersionError(f"{kind} version {v!r} is not supported (max {TEXT_VERSION})")


def _read_json(path, kind):
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        doc = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise TruncatedFileError(f"{path}: cannot parse {kind} ({exc})") from exc
    _check_version(doc, kind)
    return doc


# -- scenarios -----------------------------------------------------------------

def scenario_to_dict(sc: Scenario):
    return dict(id=int(sc.scenario_id), starts=sc.starts.tolist(), targets=sc.targets.tolist(),
                obstacles=sc.obstacles.tolist(), bounds=list(sc.bounds))


def scenario_from_dict(d):
    return Scenario(np.array(d["starts"], dtype=float).reshape(-1, 4), np.array(d["targets"], dtype=float).reshape(-1, 3),
                    np.array(d["obstacles"], dtype=float).reshape(-1, 3), tuple(d["bounds"]), int(d["id"]))


def save_scenarios(path, scenarios, meta=None):
    doc = dict(format="mvnav-scenarios", version=TEXT_VERSION, meta=meta or {},
               scenarios=[scenario_to_dict(s) for s in scenarios])
    atomic_write(path, _dump(doc).encode())


def load_scenarios(path):
    doc = _read_json(path, "mvnav-scenarios")
    return [scenario_from_dict(d) for d in doc["scenarios"]]


def load_scenarios_meta(path):
    return _read_json(path, "mvnav-scenarios").get("meta", {})


# -- datasets (JSON lines) -----------------------------------------------------

def sample_to_dict(s: LabeledSample):
    return dict(scenario_id=int(s.scenario_id), t=int(s.timestep), states=s.snapshot.states.tolist(),
                targets=s.snapshot.targets.tolist(), obstacles=s.snapshot.obstacles.tolist(),
                labels=np.asarray(s.labels).tolist())


def sample_from_dict(d):
    snap = Snapshot(np.array(d["states"], dtype=float).reshape(-1, 4), np.array(d["targets"], dtype=float).reshape(-1, 3),
                    np.array(d["obstacles"], dtype=float).reshape(-1, 3))
    return LabeledSample(snap, np.array(d["labels"], dtype=float).reshape(-1, 2), int(d["scenario_id"]), int(d["t"]))


def save_dataset(path, samples, config_hash="", seed=None, meta=None):
    header = dict(format="mvnav-dataset", version=TEXT_VERSION, config_hash=config_hash, seed=seed,
                  count=len(samples), meta=meta or {})
    lines = [_dump(header)] + [_dump(sample_to_dict(s)) for s in samples]
    atomic_write(path, ("\n".join(lines) + "\n").encode())


def load_dataset(path, with_header=False):
    with open(path, "rb") as fh:
        lines = fh.read().decode("utf-8", errors="strict").splitlines()
    if not lines:
        raise TruncatedFileError(f"{path}: empty dataset file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise TruncatedFileError(f"{path}: bad header") from exc
    _check_version(header, "mvnav-dataset")
    body = [l for l in lines[1:] if l.strip()]
    if len(body) != header["count"]:
        raise TruncatedFileError(f"{path}: header declares {header['count']} records, found {len(body)}")
    try:
        samples = [sample_from_dict(json.loads(l)) for l in body]
    except (json.JSONDecodeError, KeyError) as exc:
        raise StorageError(f"{path}: malformed record ({exc})") from exc
    return (samples, header) if with_header else samples


# -- trajectory logs ------------------------------------------------------------

def log_to_dict(log: TrajectoryLog):
    return dict(scenario_id=int(log.scenario_id), states=log.states.tolist(), controls=log.controls.tolist(),
                events=[dict(t=e.timestep, kind=e.kind, participants=list(e.participants)) for e in log.events],
                reached=[bool(r) for r in log.reached], distance=float(log.distance_traveled))


def log_from_dict(d):
    states = np.array(d["states"], dtype=float)
    controls = np.array(d["controls"], dtype=float).reshape(states.shape[0] - 1, states.shape[1], 2)
    events = [CollisionEvent(int(e["t"]), e["kind"], tuple(e["participants"])) for e in d["events"]]
    return TrajectoryLog(states, controls, events, np.array(d["reached"], dtype=bool), float(d["distance"]),
                         int(d["scenario_id"]))


def save_logs(path, logs):
    doc = dict(format="mvnav-logs", version=TEXT_VERSION, logs=[log_to_dict(l) for l in logs])
    atomic_write(path, _dump(doc).encode())


def load_logs(path):
    return [log_from_dict(d) for d in _read_json(path, "mvnav-logs")["logs"]]


# -- manifests -------------------------------------------------------------------

def save_manifest(path, manifest, kind="mvnav-manifest"):
    doc = dict(manifest)
    doc.setdefault("format", kind)
    doc.setdefault("version", TEXT_VERSION)
    atomic_write(path, json.dumps(doc, sort_keys=True, indent=1).encode())


def load_manifest(path, kind="mvnav-manifest"):
    return _read_json(path, kind)


# -- model weights ------------------------------------------------------------------

def weights_to_bytes(model: GnnModel) -> bytes:
    meta = json.dumps(dict(hyper=model.hyper, tensors=sorted(model.params)), sort_keys=True).encode()
    body = bytearray(struct.pack("<I", len(meta)))
    body += meta
    for name in sorted(model.params):
        arr = np.ascontiguousarray(model.params[name], dtype="<f8")
        nb = name.encode()
        body += struct.pack("<H", len(nb)) + nb
        body += struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
        body += arr.tobytes()
    total = _FIXED.size + len(body) + 32
    head = struct.pack("<4sIQ", WEIGHTS_MAGIC, WEIGHTS_VERSION, total)
    out = head + struct.pack("<I", zlib.crc32(head)) + bytes(body)
    return out + hashlib.sha256(out).digest()


def weights_from_bytes(data: bytes) -> GnnModel:
    if len(data) < _FIXED.size + 32:
        raise TruncatedFileError(f"weight archive too short ({len(data)} bytes)")
    magic, version, total, crc = _FIXED.unpack_from(data, 0)
    if zlib.crc32(data[:16]) != crc:
        raise ChecksumError("weight archive header checksum mismatch")
    if magic != WEIGHTS_MAGIC:
        raise StorageError("not a weight archive")
    if len(data) < total:
        raise TruncatedFileError(f"weight archive truncated: {len(data)} of {total} bytes")
    if len(data) != total or hashlib.sha256(data[:-32]).digest() != data[-32:]:
        raise ChecksumError("weight archive checksum mismatch")
    if version > WEIGHTS_VERSION:
        raise FormatVersionError(f"weight archive version {version} is newer than supported {WEIGHTS_VERSION}")
    off = _FIXED.size
    (mlen,) = struct.unpack_from("<I", data, off)
    off += 4
    meta = json.loads(data[off:off + mlen])
    off += mlen
    params = {}
    end = len(data) - 32
    while off < end:
        (nlen,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off:off + nlen].decode()
        off += nlen
        (ndim,) = struct.unpack_from("<B", data, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}Q", data, off)
        off += 8 * ndim
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).astype(float).reshape(shape)
        off += 8 * count
        params[name] = arr
    if off != end or sorted(params) != meta["tensors"]:
        raise StorageError("weight archive tensor table does not match its metadata")
    hyper = {k: v for k, v in meta["hyper"].items() if k != "activation"}
    if meta["hyper"].get("activation", "tanh") != GnnModel.ACTIVATION:
        raise StorageError(f"unsupported activation {meta['hyper']['activation']!r}")
    return GnnModel(params=params, **hyper)


def save_model(path, model: GnnModel):
    atomic_write(path, weights_to_bytes(model))


def load_model(path) -> GnnModel:
    with open(path, "rb") as fh:
        return weights_from_bytes(fh.read())
