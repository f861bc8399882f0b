"""Synthetic 3-D worlds with known voxel values, a simulated lidar, and trajectories through them.

These replace recorded datasets for the map-quality metrics and the
particle-filter experiments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from gridbelief import kernels
from gridbelief.grid import GridGeometry, Pose, Scan, VoxelStatsGrid
from gridbelief.mapping import ModelKind, build_stats


@dataclass(frozen=True, eq=False)
class SyntheticWorld:
    """Ground-truth voxel values: reflection probabilities or decay rates (1/m)."""

    geometry: GridGeometry
    model: ModelKind
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.size != self.geometry.size:
            raise ValueError("one value per voxel required")
        object.__setattr__(self, "model", ModelKind(self.model))
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class SensorConfig:
    """Multi-ring lidar: ``azimuths`` beams per ring at the given elevation angles (rad)."""

    azimuths: int = 72
    elevations: tuple[float, ...] = (-0.25, -0.12, 0.0, 0.12)
    r_min: float = 0.2
    r_max: float = 8.0

    def directions(self) -> np.ndarray:
        az = np.arange(self.azimuths) * (2 * math.pi / self.azimuths)
        out = []
        for el in self.elevations:
            c = math.cos(el)
            out.append(np.stack([c * np.cos(az), c * np.sin(az), np.full_like(az, math.sin(el))], axis=1))
        return np.concatenate(out, axis=0)


def loop_poses(center, radii, count: int, height: float, phase: float = 0.0,
               turns: float = 1.0) -> list[Pose]:
    """Poses along an ellipse, heading along the tangent."""
    cx, cy = center
    ax, ay = radii
    out = []
    for k in range(count):
        th = phase + 2 * math.pi * turns * k / count
        x, y = cx + ax * math.cos(th), cy + ay * math.sin(th)
        yaw = math.atan2(ay * math.cos(th), -ax * math.sin(th))
        out.append(Pose.from_xyz_yaw(x, y, height, yaw))
    return out


def make_world(model: ModelKind, seed: int, dims=(24, 24, 5), edge: float = 0.5,
               keep_clear: Sequence[Pose] = (), clearance: float = 0.7,
               vegetation: float = 0.15) -> SyntheticWorld:
    """Open woodland: a dense ground layer and scattered vegetation voxels.

    A fraction ``vegetation`` of the voxels above ground carries a continuous
    value (reflection ~ Uniform(0, 1), decay ~ Gamma(1, 1) per meter); the
    rest is free space with value 0. Columns within ``clearance`` (m,
    horizontally) of any pose in ``keep_clear`` are kept free.
    """
    model = ModelKind(model)
    rng = np.random.default_rng(seed)
    nx, ny, nz = dims
    geom = GridGeometry(tuple(dims), edge, (0.0, 0.0, 0.0))
    veg = rng.uniform(size=(nx, ny, nz)) < vegetation
    veg[:, :, 0] = False
    ii, jj = np.meshgrid((np.arange(nx) + 0.5) * edge, (np.arange(ny) + 0.5) * edge, indexing="ij")
    for p in keep_clear:
        near = (ii - p.position[0]) ** 2 + (jj - p.position[1]) ** 2 < clearance ** 2
        veg[near, :] = False
    vals = np.zeros((nx, ny, nz))
    if model is ModelKind.DECAY:
        vals[veg] = rng.gamma(1.0, 1.0, size=int(veg.sum()))
        vals[:, :, 0] = rng.gamma(1.0, 1.0, size=(nx, ny)) + 2.0
    else:
        vals[veg] = rng.uniform(size=int(veg.sum()))
        vals[:, :, 0] = rng.uniform(0.5, 1.0, size=(nx, ny))
    # x-fastest linearisation
    return SyntheticWorld(geom, model, vals.transpose(2, 1, 0).reshape(-1))


def simulate_scan(world: SyntheticWorld, pose: Pose, sensor: SensorConfig,
                  rng: np.random.Generator) -> Scan:
    """Sample one scan at ``pose`` from the factorising forward model of ``world``."""
    g = world.geometry
    dirs = sensor.directions()
    world_dirs = dirs @ pose.rotation().T
    radii = np.empty(len(dirs))
    status = np.empty(len(dirs), dtype=np.int64)
    for b, d in enumerate(world_dirs):
        idx, lens, _ = kernels.trace(pose.position, d, sensor.r_max, False, g.dims, g.edge, g.origin)
        r = None
        if idx:
            idx = np.asarray(idx)
            lens = np.asarray(lens)
            starts = np.concatenate([[0.0], np.cumsum(lens)[:-1]])
            v = world.values[idx]
            if world.model is ModelKind.DECAY:
                with np.errstate(divide="ignore"):
                    t = rng.standard_exponential(v.size) / v
                stop = t < lens
                depth = t
            else:
                stop = rng.uniform(size=v.size) < v
                depth = rng.uniform(size=v.size) * lens
            if stop.any():
                k = int(np.argmax(stop))
                r = starts[k] + depth[k]
                # the trace starts at the grid entry when the sensor is outside
                r += _entry_offset(pose.position, d, g)
        if r is None:
            radii[b], status[b] = sensor.r_max, kernels.MAX_RANGE
        elif r < sensor.r_min:
            radii[b], status[b] = sensor.r_min, kernels.SHORT_RANGE
        else:
            radii[b], status[b] = r, kernels.HIT
    return Scan(dirs, radii, status)


def _entry_offset(origin, d, g: GridGeometry) -> float:
    lo, hi = g.extent()
    t0 = 0.0
    for a in range(3):
        if d[a] != 0:
            t1, t2 = (lo[a] - origin[a]) / d[a], (hi[a] - origin[a]) / d[a]
            t0 = max(t0, min(t1, t2))
    return t0


def map_from_scans(geometry: GridGeometry, poses: Sequence[Pose], scans: Sequence[Scan]) -> tuple[VoxelStatsGrid, int]:
    """Accumulate statistics from scans taken at known poses."""
    origins, dirs, radii, status = [], [], [], []
    for pose, scan in zip(poses, scans):
        origins.append(np.tile(pose.position, (len(scan), 1)))
        dirs.append(scan.directions @ pose.rotation().T)
        radii.append(scan.radii)
        status.append(scan.status)
    return build_stats(geometry, np.concatenate(origins), np.concatenate(dirs),
                       np.concatenate(radii), np.concatenate(status))


@dataclass(frozen=True, eq=False)
class WorldScenario:
    world: SyntheticWorld
    sensor: SensorConfig
    map_poses: list
    map_scans: list
    test_poses: list
    test_scans: list


def make_scenario(model: ModelKind, seed: int, dims=(24, 24, 5), edge: float = 0.5,
                  map_poses: int = 40, test_poses: int = 30, sensor: SensorConfig = SensorConfig(),
                  height: float = 1.1, vegetation: float = 0.15) -> WorldScenario:
    """World plus a mapping loop and a separate held-out test loop (both anticlockwise)."""
    nx, ny, _ = dims
    cx, cy = nx * edge / 2, ny * edge / 2
    mapping = loop_poses((cx, cy), (0.3 * nx * edge, 0.3 * ny * edge), map_poses, height)
    testing = loop_poses((cx, cy), (0.25 * nx * edge, 0.217 * ny * edge), test_poses, height,
                         phase=0.4)
    world = make_world(model, seed, dims, edge, keep_clear=mapping + testing, vegetation=vegetation)
    rng = np.random.default_rng([seed, 1])
    mscans = [simulate_scan(world, p, sensor, rng) for p in mapping]
    tscans = [simulate_scan(world, p, sensor, rng) for p in testing]
    return WorldScenario(world, sensor, mapping, mscans, testing, tscans)
