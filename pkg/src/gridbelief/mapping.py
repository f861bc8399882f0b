"""Sufficient-statistics accumulation, conjugate posteriors and prior fitting."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as st

from gridbelief import kernels
from gridbelief.grid import BeamTrace, GridGeometry, VoxelStats, VoxelStatsGrid

PRIOR_CLAMP = 1e-3
REFLECTION_DEFAULT = 0.5


class ModelKind(enum.Enum):
    REFLECTION = "reflection"
    DECAY = "decay"


@dataclass(frozen=True)
class PriorParams:
    """Beta(alpha, beta) prior over reflection probabilities or Gamma(alpha, beta) over decay rates.

    The Gamma rate ``beta`` may be 0: Gamma(1, 0) is the improper
    uninformative prior whose posterior mode is the maximum-likelihood rate.
    """

    model: ModelKind
    alpha: float
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "model", ModelKind(self.model))
        if not self.alpha > 0:
            raise ValueError(f"prior alpha must be positive, got {self.alpha}")
        if self.model is ModelKind.REFLECTION and not self.beta > 0:
            raise ValueError(f"Beta prior needs beta > 0, got {self.beta}")
        if self.model is ModelKind.DECAY and not self.beta >= 0:
            raise ValueError(f"Gamma prior needs beta >= 0, got {self.beta}")

    @classmethod
    def uniform(cls) -> "PriorParams":
        return cls(ModelKind.REFLECTION, 1.0, 1.0)

    @classmethod
    def uninformative(cls) -> "PriorParams":
        return cls(ModelKind.DECAY, 1.0, 0.0)

    @property
    def proper(self) -> bool:
        return self.beta > 0

    def mean(self) -> float:
        if self.model is ModelKind.REFLECTION:
            return self.alpha / (self.alpha + self.beta)
        if self.beta == 0:
            return math.inf
        return self.alpha / self.beta


@dataclass(frozen=True)
class PosteriorParams:
    """Beta(a, b) over a voxel's reflection probability or Gamma(a, b) (shape, rate) over its decay rate."""

    model: ModelKind
    a: float
    b: float

    def distribution(self):
        if self.model is ModelKind.REFLECTION:
            return st.beta(self.a, self.b)
        if self.b <= 0:
            raise ValueError("Gamma posterior with zero rate is improper")
        return st.gamma(self.a, scale=1.0 / self.b)

    def mean(self) -> float:
        return float(self.distribution().mean())

    def mode(self) -> float:
        a, b = self.a, self.b
        if self.model is ModelKind.REFLECTION:
            if a >= 1 and b >= 1 and a + b > 2:
                return (a - 1) / (a + b - 2)
            raise ValueError(f"Beta({a}, {b}) has no interior mode")
        if b <= 0:
            raise ValueError("Gamma posterior with zero rate has no mode")
        return max(a - 1.0, 0.0) / b

    def pdf(self, x):
        return self.distribution().pdf(x)


def update_stats(grid: VoxelStatsGrid, trace: BeamTrace) -> VoxelStatsGrid:
    """Fold one beam into ``grid`` (in place) and return it.

    Each traversed voxel accumulates the travelled distance; the reflecting
    voxel of a hit counts a hit, every other voxel a miss.
    """
    n = grid.geometry.size
    for i, _ in trace.segments:
        if not 0 <= i < n:
            raise IndexError(f"trace voxel {i} outside grid of {n} voxels")
    last = len(trace.segments) - 1
    for k, (i, r) in enumerate(trace.segments):
        if trace.terminal_hit and k == last:
            grid.add(i, H=1, R=r)
        else:
            grid.add(i, M=1, R=r)
    return grid


def build_stats(geometry: GridGeometry, origins, directions, radii, status) -> tuple[VoxelStatsGrid, int]:
    """Batch version of tracing plus :func:`update_stats` for many world-frame beams.

    ``status`` uses the kernel codes (0 hit, 1 short range, 2 max range).
    Short-range beams do not say where the reflection happened and are
    skipped. Returns the grid and the number of beams used.
    """
    H = np.zeros(geometry.size, dtype=np.int64)
    M = np.zeros(geometry.size, dtype=np.int64)
    R = np.zeros(geometry.size, dtype=np.float64)
    origins = np.asarray(origins, dtype=float).reshape(-1, 3)
    directions = np.asarray(directions, dtype=float).reshape(-1, 3)
    used = kernels.accumulate(
        origins, directions, np.asarray(radii, dtype=float), np.asarray(status, dtype=np.int64),
        geometry.dims, geometry.edge, geometry.origin, H, M, R,
    )
    return VoxelStatsGrid.from_dense(geometry, H, M, R), int(used)


def posterior(stats: VoxelStats, prior: PriorParams) -> PosteriorParams:
    if prior.model is ModelKind.REFLECTION:
        return PosteriorParams(prior.model, stats.H + prior.alpha, stats.M + prior.beta)
    return PosteriorParams(prior.model, stats.H + prior.alpha, stats.R + prior.beta)


def ml_value(stats: VoxelStats, model: ModelKind, default: float) -> float:
    """Most likely voxel value, or ``default`` for a voxel without data."""
    model = ModelKind(model)
    if model is ModelKind.REFLECTION:
        n = stats.H + stats.M
        return stats.H / n if n > 0 else default
    return stats.H / stats.R if stats.R > 0 else default


def ml_arrays(H, M, R, model: ModelKind, default: float) -> np.ndarray:
    """Vectorised :func:`ml_value` over dense statistics."""
    H = np.asarray(H, dtype=float)
    if ModelKind(model) is ModelKind.REFLECTION:
        n = H + np.asarray(M, dtype=float)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(n > 0, H / n, default)
    R = np.asarray(R, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(R > 0, H / R, default)


def moment_match_prior(values, model: ModelKind, clamp: float = PRIOR_CLAMP) -> PriorParams:
    """Prior whose mean and variance equal the empirical moments of ``values``.

    Both parameters are clamped below at ``clamp``; value sets concentrated on
    {0, 1} would otherwise drive the Beta parameters to zero.
    """
    model = ModelKind(model)
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise ValueError("moment matching needs at least two values")
    if model is ModelKind.REFLECTION and (np.any(v < 0) or np.any(v > 1)):
        raise ValueError("reflection values must lie in [0, 1]")
    E = float(v.mean())
    V = float(v.var())
    if not V > 0:
        raise ValueError("moment matching needs positive empirical variance")
    if model is ModelKind.REFLECTION:
        alpha = -E * (E * E - E + V) / V
        beta = (E - V + E * V - 2 * E * E + E ** 3) / V
    else:
        alpha = E * E / V
        beta = E / V
    return PriorParams(model, max(alpha, clamp), max(beta, clamp))


def observed_ml_values(grid: VoxelStatsGrid, model: ModelKind) -> np.ndarray:
    """ML values of every voxel that carries data for ``model``."""
    _, H, M, R = grid.to_arrays()
    if ModelKind(model) is ModelKind.REFLECTION:
        keep = (H + M) > 0
        return H[keep] / (H[keep] + M[keep])
    keep = R > 0
    return H[keep] / R[keep]


def fit_prior(grid: VoxelStatsGrid, model: ModelKind, clamp: float = PRIOR_CLAMP) -> PriorParams:
    """Moment-matched prior from the most likely map over all observed voxels."""
    return moment_match_prior(observed_ml_values(grid, model), model, clamp)


def default_ml(model: ModelKind, prior: PriorParams | None = None) -> float:
    """Value the most-likely map assigns to voxels without data."""
    if ModelKind(model) is ModelKind.REFLECTION:
        return REFLECTION_DEFAULT
    if prior is None or not prior.proper:
        raise ValueError("decay default needs a proper (moment-matched) prior")
    return prior.mean()
