"""Scan-log text format and binary map files.

Scan log: one record per line, ``#`` starts a comment::

    timestamp px py pz qw qx qy qz  [dx dy dz radius status]...

with ``status`` one of ``h`` (hit), ``s`` (short range) or ``m`` (max
range) and directions in the sensor frame.

Map file (little-endian): 8-byte magic, then version, model, geometry,
prior and record count, followed by ``(index, H, M, R)`` records for every
voxel with data, indices strictly increasing.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np

from gridbelief.grid import GridGeometry, Pose, Scan, VoxelStatsGrid
from gridbelief.mapping import ModelKind, PriorParams

DIRECTION_TOL = 1e-6
STATUS_TOKENS = {"h": 0, "s": 1, "m": 2}
TOKEN_OF = {v: k for k, v in STATUS_TOKENS.items()}

MAGIC = b"GBELMAP\x00"
VERSION = 1
_MODEL_CODE = {ModelKind.REFLECTION: 0, ModelKind.DECAY: 1}
_HEADER = struct.Struct("<8sIB3x3qd3ddd Q")
_RECORD = np.dtype([("index", "<i8"), ("H", "<i8"), ("M", "<i8"), ("R", "<f8")])


class ScanLogError(ValueError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line


class MapFileError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ScanRecord:
    timestamp: float
    pose: Pose
    scan: Scan

    def __eq__(self, other) -> bool:
        return (isinstance(other, ScanRecord) and self.timestamp == other.timestamp
                and self.pose == other.pose and self.scan == other.scan)


# -- scan logs ----------------------------------------------------------------------

def format_record(rec: ScanRecord) -> str:
    parts = [repr(float(rec.timestamp))]
    parts += [repr(float(x)) for x in rec.pose.position]
    parts += [repr(float(x)) for x in rec.pose.orientation]
    for d, r, s in zip(rec.scan.directions, rec.scan.radii, rec.scan.status):
        parts += [repr(float(d[0])), repr(float(d[1])), repr(float(d[2])), repr(float(r)), TOKEN_OF[int(s)]]
    return " ".join(parts)


def write_scan_log(path, records: Iterable[ScanRecord]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(format_record(rec) + "\n")


def parse_record(line: str, lineno: int) -> ScanRecord:
    tok = line.split()
    if len(tok) < 8 or (len(tok) - 8) % 5:
        raise ScanLogError(lineno, f"expected 8 pose fields plus groups of 5 beam fields, got {len(tok)} fields")
    try:
        head = [float(x) for x in tok[:8]]
    except ValueError as err:
        raise ScanLogError(lineno, str(err)) from None
    try:
        pose = Pose(tuple(head[1:4]), tuple(head[4:8]))
    except ValueError as err:
        raise ScanLogError(lineno, str(err)) from None
    nb = (len(tok) - 8) // 5
    dirs = np.empty((nb, 3))
    radii = np.empty(nb)
    status = np.empty(nb, dtype=np.int64)
    for b in range(nb):
        f = tok[8 + 5 * b: 13 + 5 * b]
        try:
            dirs[b] = [float(x) for x in f[:3]]
            radii[b] = float(f[3])
        except ValueError as err:
            raise ScanLogError(lineno, f"beam {b}: {err}") from None
        if f[4] not in STATUS_TOKENS:
            raise ScanLogError(lineno, f"beam {b}: unknown status {f[4]!r}")
        status[b] = STATUS_TOKENS[f[4]]
        norm = math.sqrt(float(dirs[b] @ dirs[b]))
        if abs(norm - 1.0) > DIRECTION_TOL:
            raise ScanLogError(lineno, f"beam {b}: direction norm {norm:.9g} is not unit")
        if not radii[b] >= 0:
            raise ScanLogError(lineno, f"beam {b}: negative radius {radii[b]}")
        if status[b] == 0 and radii[b] == 0:
            raise ScanLogError(lineno, f"beam {b}: hit with zero radius")
    return ScanRecord(head[0], pose, Scan(dirs, radii, status))


def read_scan_log(path) -> Iterator[ScanRecord]:
    """Stream records from a scan log; errors name the offending line."""
    last = -math.inf
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            rec = parse_record(body, lineno)
            if rec.timestamp < last:
                raise ScanLogError(lineno, "timestamps must be non-decreasing")
            last = rec.timestamp
            yield rec


# -- map files ----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MapFile:
    model: ModelKind
    grid: VoxelStatsGrid
    prior: PriorParams

    def __eq__(self, other) -> bool:
        return (isinstance(other, MapFile) and self.model == other.model
                and self.grid == other.grid and self.prior == other.prior)


def map_bytes(mf: MapFile) -> bytes:
    g = mf.grid.geometry
    if mf.prior.model is not mf.model:
        raise MapFileError("prior model differs from map model")
    idx, h, m, r = mf.grid.to_arrays()
    rec = np.empty(idx.size, dtype=_RECORD)
    rec["index"], rec["H"], rec["M"], rec["R"] = idx, h, m, r
    head = _HEADER.pack(MAGIC, VERSION, _MODEL_CODE[mf.model], *g.dims, g.edge, *g.origin,
                        mf.prior.alpha, mf.prior.beta, idx.size)
    return head + rec.tobytes()


def write_map(path, mf: MapFile) -> None:
    Path(path).write_bytes(map_bytes(mf))


def parse_map(data: bytes, expect_model: Optional[ModelKind] = None) -> MapFile:
    if len(data) < _HEADER.size:
        raise MapFileError("file too short for a map header")
    magic, version, code, nx, ny, nz, edge, ox, oy, oz, alpha, beta, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MapFileError("not a map file (bad magic)")
    if version != VERSION:
        raise MapFileError(f"unsupported map version {version}")
    models = {v: k for k, v in _MODEL_CODE.items()}
    if code not in models:
        raise MapFileError(f"unknown model code {code}")
    model = models[code]
    if expect_model is not None and ModelKind(expect_model) is not model:
        raise MapFileError(f"map holds a {model.value} model, expected {ModelKind(expect_model).value}")
    body = data[_HEADER.size:]
    if len(body) != count * _RECORD.itemsize:
        raise MapFileError(f"expected {count} records, found {len(body) / _RECORD.itemsize:g}")
    rec = np.frombuffer(body, dtype=_RECORD)
    if count > 1 and np.any(np.diff(rec["index"]) <= 0):
        raise MapFileError("record indices are not strictly increasing")
    geom = GridGeometry((nx, ny, nz), edge, (ox, oy, oz))
    grid = VoxelStatsGrid.from_arrays(geom, rec["index"], rec["H"], rec["M"], rec["R"])
    return MapFile(model, grid, PriorParams(model, alpha, beta))


def read_map(path, expect_model: Optional[ModelKind] = None) -> MapFile:
    return parse_map(Path(path).read_bytes(), expect_model)
