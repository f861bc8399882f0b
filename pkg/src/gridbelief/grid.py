"""Voxel lattice geometry, poses, beams and the sparse sufficient-statistics grid."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

import numpy as np

UNIT_TOL = 1e-9


class BeamStatus(enum.Enum):
    HIT = "hit"
    SHORT_RANGE = "short_range"
    MAX_RANGE = "max_range"


class GeometryMismatch(ValueError):
    pass


@dataclass(frozen=True)
class GridGeometry:
    """Axis-aligned lattice of cubic voxels.

    ``origin`` is the world position of the minimal grid corner. Voxels are
    half-open boxes ``[low, high)`` along every axis and are linearised in
    x-fastest order.
    """

    dims: tuple[int, int, int]
    edge: float
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        origin = tuple(float(o) for o in self.origin)
        if len(dims) != 3 or len(origin) != 3:
            raise ValueError("dims and origin must be 3-vectors")
        if min(dims) < 1:
            raise ValueError(f"dims must be >= 1, got {dims}")
        if not (self.edge > 0 and math.isfinite(self.edge)):
            raise ValueError(f"edge must be positive, got {self.edge}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "edge", float(self.edge))

    @property
    def size(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    def linear_index(self, ijk) -> int:
        i, j, k = (int(v) for v in ijk)
        nx, ny, nz = self.dims
        if not (0 <= i < nx and 0 <= j < ny and 0 <= k < nz):
            raise IndexError(f"voxel {ijk} outside grid {self.dims}")
        return i + nx * (j + ny * k)

    def unravel(self, index: int) -> tuple[int, int, int]:
        if not 0 <= index < self.size:
            raise IndexError(f"linear index {index} outside grid of {self.size} voxels")
        nx, ny, _ = self.dims
        return index % nx, (index // nx) % ny, index // (nx * ny)

    def center_of(self, index: int) -> np.ndarray:
        ijk = np.asarray(self.unravel(index), dtype=float)
        return np.asarray(self.origin) + (ijk + 0.5) * self.edge

    def extent(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.asarray(self.origin, dtype=float)
        return lo, lo + np.asarray(self.dims, dtype=float) * self.edge


def voxel_index_of(geometry: GridGeometry, point) -> Optional[int]:
    """Linear index of the voxel containing ``point``, or None outside the grid.

    A point on a shared face belongs to the voxel with the larger index.
    """
    ijk = []
    for x, o, n in zip(point, geometry.origin, geometry.dims):
        c = math.floor((float(x) - o) / geometry.edge)
        if c < 0 or c >= n:
            return None
        ijk.append(c)
    return geometry.linear_index(ijk)


# -- poses -------------------------------------------------------------------

def _normalized(v, what: str, tol: float = UNIT_TOL) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    norm = float(np.linalg.norm(v))
    if abs(norm - 1.0) > tol:
        raise ValueError(f"{what} must have unit norm (got {norm:.12g})")
    return v


def quat_multiply(a, b) -> np.ndarray:
    """Hamilton product of (w, x, y, z) quaternions."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_from_rotvec(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    angle = float(np.linalg.norm(v))
    if angle < 1e-12:
        q = np.array([1.0, *(0.5 * v)])
        return q / np.linalg.norm(q)
    axis = v / angle
    return np.array([math.cos(angle / 2), *(math.sin(angle / 2) * axis)])


def quat_from_yaw(yaw: float) -> np.ndarray:
    return np.array([math.cos(yaw / 2), 0.0, 0.0, math.sin(yaw / 2)])


@dataclass(frozen=True)
class Pose:
    """Sensor pose: position in meters, orientation as a (w, x, y, z) unit quaternion."""

    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    orientation: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        p = tuple(float(x) for x in self.position)
        q = tuple(float(x) for x in _normalized(self.orientation, "orientation quaternion"))
        if len(p) != 3 or len(q) != 4:
            raise ValueError("pose needs a 3-vector position and a 4-vector quaternion")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "orientation", q)

    @classmethod
    def from_xyz_yaw(cls, x: float, y: float, z: float = 0.0, yaw: float = 0.0) -> "Pose":
        return cls((x, y, z), tuple(quat_from_yaw(yaw)))

    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    def compose(self, delta: "Pose") -> "Pose":
        """``self * delta``: apply ``delta`` expressed in this pose's frame."""
        p = np.asarray(self.position) + self.rotation() @ np.asarray(delta.position)
        q = quat_multiply(self.orientation, delta.orientation)
        return Pose(tuple(p), tuple(q / np.linalg.norm(q)))

    def inverse(self) -> "Pose":
        w, x, y, z = self.orientation
        qi = (w, -x, -y, -z)
        p = -(quat_to_matrix(qi) @ np.asarray(self.position))
        return Pose(tuple(p), qi)

    def relative_to(self, other: "Pose") -> "Pose":
        """Delta ``d`` with ``other.compose(d) == self``."""
        return other.inverse().compose(self)

    def euler_zyx(self) -> tuple[float, float, float]:
        """(yaw, pitch, roll) in radians, for human-readable output only."""
        w, x, y, z = self.orientation
        yaw = math.atan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z))
        pitch = math.asin(max(-1.0, min(1.0, 2 * (w * y - z * x))))
        roll = math.atan2(2 * (w * x + y * z), 1 - 2 * (x * x + y * y))
        return yaw, pitch, roll


@dataclass(frozen=True)
class Beam:
    origin: tuple[float, float, float]
    direction: tuple[float, float, float]
    radius: float
    status: BeamStatus = BeamStatus.HIT

    def __post_init__(self):
        d = tuple(float(x) for x in _normalized(self.direction, "beam direction"))
        if not self.radius >= 0:
            raise ValueError(f"beam radius must be non-negative, got {self.radius}")
        object.__setattr__(self, "origin", tuple(float(x) for x in self.origin))
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "status", BeamStatus(self.status))


@dataclass(frozen=True)
class BeamTrace:
    """Ordered (voxel, length) segments of one ray; ``terminal_hit`` marks the last voxel as reflecting."""

    segments: tuple[tuple[int, float], ...]
    terminal_hit: bool = False

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple((int(i), float(r)) for i, r in self.segments))
        if self.terminal_hit and not self.segments:
            raise ValueError("a terminal hit needs at least one segment")

    @property
    def indices(self) -> list[int]:
        return [i for i, _ in self.segments]

    @property
    def lengths(self) -> list[float]:
        return [r for _, r in self.segments]

    def total_length(self) -> float:
        return math.fsum(self.lengths)

    def deltas(self) -> list[int]:
        n = len(self.segments)
        return [1 if (self.terminal_hit and k == n - 1) else 0 for k in range(n)]

    def __add__(self, other: "BeamTrace") -> "BeamTrace":
        if self.terminal_hit:
            raise ValueError("cannot append segments after a terminal hit")
        return BeamTrace(self.segments + other.segments, other.terminal_hit)


_STATUS_CODE = {BeamStatus.HIT: 0, BeamStatus.SHORT_RANGE: 1, BeamStatus.MAX_RANGE: 2}
_CODE_STATUS = {v: k for k, v in _STATUS_CODE.items()}


def status_code(status) -> int:
    """Kernel integer code of a :class:`BeamStatus` (0 hit, 1 short range, 2 max range)."""
    return _STATUS_CODE[BeamStatus(status)]


def status_from_code(code: int) -> BeamStatus:
    return _CODE_STATUS[int(code)]


@dataclass(frozen=True, eq=False)
class Scan:
    """Beams of one sensor sweep in the sensor frame, stored as arrays.

    ``directions`` is (B, 3), ``radii`` (B,), ``status`` (B,) integer codes.
    """

    directions: np.ndarray
    radii: np.ndarray
    status: np.ndarray

    def __post_init__(self):
        d = np.ascontiguousarray(self.directions, dtype=float).reshape(-1, 3)
        r = np.ascontiguousarray(self.radii, dtype=float).reshape(-1)
        s = np.ascontiguousarray(self.status, dtype=np.int64).reshape(-1)
        if not (len(d) == len(r) == len(s)):
            raise ValueError("scan arrays differ in length")
        if np.any((s < 0) | (s > 2)):
            raise ValueError("unknown beam status code")
        object.__setattr__(self, "directions", d)
        object.__setattr__(self, "radii", r)
        object.__setattr__(self, "status", s)

    def __len__(self) -> int:
        return len(self.radii)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Scan) and np.array_equal(self.directions, other.directions)
                and np.array_equal(self.radii, other.radii) and np.array_equal(self.status, other.status))

    @classmethod
    def from_beams(cls, beams: Iterable[Beam]) -> "Scan":
        beams = list(beams)
        return cls(
            np.array([b.direction for b in beams], dtype=float).reshape(-1, 3),
            np.array([b.radius for b in beams], dtype=float),
            np.array([status_code(b.status) for b in beams], dtype=np.int64),
        )

    def subsample(self, every: int) -> "Scan":
        if every < 1:
            raise ValueError("subsampling step must be >= 1")
        return Scan(self.directions[::every], self.radii[::every], self.status[::every])

    def world_beams(self, pose: Pose) -> list[Beam]:
        """The beams as world-frame :class:`Beam` values emitted from ``pose``."""
        rot = pose.rotation()
        out = []
        for d, r, s in zip(self.directions @ rot.T, self.radii, self.status):
            out.append(Beam(pose.position, tuple(d / np.linalg.norm(d)), float(r), status_from_code(s)))
        return out


# -- statistics ----------------------------------------------------------------

@dataclass(frozen=True)
class VoxelStats:
    H: int = 0
    M: int = 0
    R: float = 0.0

    def __post_init__(self):
        if self.H < 0 or self.M < 0 or self.R < 0:
            raise ValueError(f"statistics must be non-negative: {self}")

    def __add__(self, other: "VoxelStats") -> "VoxelStats":
        return VoxelStats(self.H + other.H, self.M + other.M, self.R + other.R)

    def scaled(self, k: float) -> "VoxelStats":
        return VoxelStats(int(round(self.H * k)), int(round(self.M * k)), self.R * k)


_EMPTY = VoxelStats()


@dataclass
class VoxelStatsGrid:
    """Sparse per-voxel (H, M, R) statistics; absent voxels are (0, 0, 0)."""

    geometry: GridGeometry
    stats: dict[int, VoxelStats] = field(default_factory=dict)

    def __post_init__(self):
        n = self.geometry.size
        for i in self.stats:
            if not 0 <= i < n:
                raise IndexError(f"voxel index {i} outside grid of {n} voxels")

    def __getitem__(self, index: int) -> VoxelStats:
        return self.stats.get(index, _EMPTY)

    def __len__(self) -> int:
        return len(self.stats)

    def __iter__(self) -> Iterator[int]:
        return iter(sorted(self.stats))

    def items(self) -> Iterable[tuple[int, VoxelStats]]:
        for i in sorted(self.stats):
            yield i, self.stats[i]

    def copy(self) -> "VoxelStatsGrid":
        return VoxelStatsGrid(self.geometry, dict(self.stats))

    def add(self, index: int, H: int = 0, M: int = 0, R: float = 0.0) -> None:
        if not 0 <= index < self.geometry.size:
            raise IndexError(f"voxel index {index} outside grid of {self.geometry.size} voxels")
        self.stats[index] = self[index] + VoxelStats(H, M, R)

    def dense(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(H, M, R) as arrays over all voxels."""
        n = self.geometry.size
        H = np.zeros(n, dtype=np.int64)
        M = np.zeros(n, dtype=np.int64)
        R = np.zeros(n, dtype=np.float64)
        idx, h, m, r = self.to_arrays()
        H[idx], M[idx], R[idx] = h, m, r
        return H, M, R

    def to_arrays(self):
        """Sorted (index, H, M, R) arrays of the stored voxels."""
        idx = np.array(sorted(self.stats), dtype=np.int64)
        h = np.array([self.stats[i].H for i in idx], dtype=np.int64)
        m = np.array([self.stats[i].M for i in idx], dtype=np.int64)
        r = np.array([self.stats[i].R for i in idx], dtype=np.float64)
        return idx, h, m, r

    @classmethod
    def from_arrays(cls, geometry: GridGeometry, index, H, M, R) -> "VoxelStatsGrid":
        return cls(geometry, {
            int(i): VoxelStats(int(h), int(m), float(r))
            for i, h, m, r in zip(index, H, M, R)
        })

    @classmethod
    def from_dense(cls, geometry: GridGeometry, H, M, R) -> "VoxelStatsGrid":
        H, M, R = np.asarray(H), np.asarray(M), np.asarray(R, dtype=float)
        idx = np.flatnonzero((H > 0) | (M > 0) | (R > 0))
        return cls.from_arrays(geometry, idx, H[idx], M[idx], R[idx])

    def scaled(self, k: float) -> "VoxelStatsGrid":
        return VoxelStatsGrid(self.geometry, {i: s.scaled(k) for i, s in self.stats.items()})

    def __eq__(self, other) -> bool:
        if not isinstance(other, VoxelStatsGrid) or other.geometry != self.geometry:
            return False
        keys = set(self.stats) | set(other.stats)
        return all(self[i] == other[i] for i in keys)


def merge_stats(a: VoxelStatsGrid, b: VoxelStatsGrid) -> VoxelStatsGrid:
    if a.geometry != b.geometry:
        raise GeometryMismatch(f"cannot merge grids with {a.geometry} and {b.geometry}")
    out = dict(a.stats)
    for i, s in b.stats.items():
        out[i] = out[i] + s if i in out else s
    return VoxelStatsGrid(a.geometry, out)
