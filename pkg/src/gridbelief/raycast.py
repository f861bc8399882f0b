"""Decompose beams into per-voxel segment lengths."""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from gridbelief import kernels
from gridbelief.grid import UNIT_TOL, Beam, BeamStatus, BeamTrace, GridGeometry


def trace_beam(geometry: GridGeometry, beam: Beam) -> BeamTrace:
    """Voxels entered by ``beam`` with the distance travelled inside each.

    The ray is cut at ``beam.radius`` (the measured range, ``r_min`` or
    ``r_max`` depending on the status) or at the grid exit, whichever comes
    first. A beam starting outside the grid is fast-forwarded to its entry
    point; the skipped distance counts against the radius. Corner and edge
    crossings produce zero-length segments, which are dropped.

    A hit whose endpoint lies exactly on a face belongs to the voxel on the
    higher-index side; when that voxel was not otherwise entered it is
    appended with a zero-length segment.
    """
    d = np.asarray(beam.direction, dtype=float)
    norm = float(np.linalg.norm(d))
    if abs(norm - 1.0) > UNIT_TOL:
        raise ValueError(f"beam direction must be unit length (norm {norm:.12g})")
    if not beam.radius >= 0:
        raise ValueError(f"negative beam radius {beam.radius}")
    indices, lengths, terminal = kernels.trace(
        beam.origin, beam.direction, beam.radius, beam.status is BeamStatus.HIT,
        geometry.dims, geometry.edge, geometry.origin,
    )
    return BeamTrace(tuple(zip(indices, lengths)), terminal)


def trace_corridor(position: int, length_voxels: int, hit_voxel: Optional[int],
                   hit_depth: float = 1.0) -> BeamTrace:
    """Trace along a 1-D corridor of unit voxels, starting at the robot's voxel.

    Every voxel up to and including ``hit_voxel`` gets a unit segment, except
    the hit voxel, whose segment is ``hit_depth`` (the reflection depth inside
    it; 1.0 for the reflection model where depth is irrelevant). Without a hit
    the trace runs to the end of the corridor.
    """
    if not 0 <= position < length_voxels:
        raise ValueError(f"position {position} outside corridor of length {length_voxels}")
    if hit_voxel is None:
        return BeamTrace(tuple((i, 1.0) for i in range(position, length_voxels)), False)
    if not position <= hit_voxel < length_voxels:
        raise ValueError(f"hit voxel {hit_voxel} not in [{position}, {length_voxels})")
    if not 0.0 <= hit_depth <= 1.0 or math.isnan(hit_depth):
        raise ValueError(f"hit depth must lie in [0, 1], got {hit_depth}")
    segs = [(i, 1.0) for i in range(position, hit_voxel)]
    segs.append((hit_voxel, float(hit_depth)))
    return BeamTrace(tuple(segs), True)
