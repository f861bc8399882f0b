"""Closed-form measurement likelihoods under the map posterior (FMP) or the most likely map (MLM).

All beam-level quantities are returned in the log domain.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from gridbelief import kernels
from gridbelief.grid import BeamStatus, BeamTrace, Pose, VoxelStats, VoxelStatsGrid
from gridbelief.mapping import ModelKind, PriorParams, default_ml


class Mode(enum.Enum):
    FMP = "fmp"
    MLM = "mlm"


@dataclass(frozen=True)
class LikelihoodMode:
    """How per-voxel likelihoods are formed.

    ``fallback_prior`` is used in FMP mode for voxels where ``prior`` is
    improper and no data exist (the uninformative Gamma(1, 0) on an unvisited
    voxel). ``floor`` clips each beam's log-likelihood from below when set.
    """

    mode: Mode
    model: ModelKind
    prior: Optional[PriorParams] = None
    ml_default: Optional[float] = None
    fallback_prior: Optional[PriorParams] = None
    floor: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "model", ModelKind(self.model))
        if self.mode is Mode.FMP:
            if self.prior is None or self.prior.model is not self.model:
                raise ValueError("FMP mode needs a prior of the same model kind")
        elif self.ml_default is None:
            raise ValueError("MLM mode needs a default value for unvisited voxels")
        elif self.model is ModelKind.REFLECTION and not 0 <= self.ml_default <= 1:
            raise ValueError("reflection default must lie in [0, 1]")
        elif self.ml_default < 0:
            raise ValueError("decay default must be non-negative")

    @classmethod
    def fmp(cls, prior: PriorParams, fallback_prior: Optional[PriorParams] = None,
            floor: Optional[float] = None) -> "LikelihoodMode":
        return cls(Mode.FMP, prior.model, prior=prior, fallback_prior=fallback_prior, floor=floor)

    @classmethod
    def mlm(cls, model: ModelKind, ml_default: Optional[float] = None,
            prior: Optional[PriorParams] = None, floor: Optional[float] = None) -> "LikelihoodMode":
        """MLM mode; the default value comes from ``prior`` (decay) when not given."""
        if ml_default is None:
            ml_default = default_ml(model, prior)
        return cls(Mode.MLM, ModelKind(model), ml_default=ml_default, floor=floor)


PriorLike = Union[PriorParams, tuple]


def _ab(prior: PriorLike) -> tuple[float, float]:
    if isinstance(prior, PriorParams):
        return prior.alpha, prior.beta
    a, b = prior
    return float(a), float(b)


# -- per-voxel closed forms ----------------------------------------------------

def l_ref(stats: VoxelStats, prior: PriorLike, delta: bool) -> float:
    """Posterior-predictive probability that a reflection-map voxel reflects (``delta``) or not.

    ``prior`` may be a plain ``(alpha, beta)`` pair to probe the alpha, beta -> 0 limit.
    """
    a, b = _ab(prior)
    hit, miss = stats.H + a, stats.M + b
    # the smaller side is computed directly, the larger as its complement:
    # accurate for tiny probabilities and the two outcomes sum to exactly one
    small = min(hit, miss) / (hit + miss)
    return small if (hit <= miss) == delta else 1.0 - small


def l_ref_mlm(stats: VoxelStats, default: float, delta: bool) -> float:
    n = stats.H + stats.M
    mu = stats.H / n if n > 0 else default
    return mu if delta else 1.0 - mu


def l_dec(stats: VoxelStats, prior: PriorLike, r: float, delta: bool) -> float:
    """Posterior-predictive likelihood of travelling ``r`` through a decay-map voxel.

    A probability for ``delta=False``; a density in ``r`` for ``delta=True``.
    """
    a, b = _ab(prior)
    if r < 0:
        raise ValueError(f"negative segment length {r}")
    A = stats.H + a
    B = stats.R + b
    if B + r == 0:
        if delta:
            raise ValueError("decay likelihood undefined for R + beta + r = 0 with a hit")
        return 1.0
    if B == 0:
        return 0.0
    val = (B / (B + r)) ** A
    if delta:
        val *= A / (B + r)
    return val


def l_dec_mlm(stats: VoxelStats, default: float, r: float, delta: bool) -> float:
    lam = stats.H / stats.R if stats.R > 0 else default
    val = math.exp(-lam * r)
    return val * lam if delta else val


# -- dense tables for the kernels ------------------------------------------------

@dataclass(frozen=True)
class VoxelTable:
    """Per-voxel parameters consumed by the traversal kernels.

    ``code`` selects the factor form: ``TABLE`` stores log pass / log hit
    probabilities, ``GAMMA`` stores posterior shape and rate, ``RATE`` stores
    the most likely decay rate (``pb`` unused).
    """

    code: int
    pa: np.ndarray
    pb: np.ndarray

    def log_factor(self, index, r, delta):
        """Vectorised log l(r_i, delta_i) for voxel ``index``."""
        index = np.asarray(index, dtype=np.int64)
        r = np.asarray(r, dtype=float)
        delta = np.asarray(delta, dtype=bool)
        pa, pb = self.pa[index], self.pb[index]
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.code == kernels.TABLE:
                return np.where(delta, pb, pa)
            if self.code == kernels.GAMMA:
                base = -pa * np.log1p(r / pb)
                return np.where(delta, base + np.log(pa / (pb + r)), base)
            base = -pa * r
            return np.where(delta, base + np.log(pa), base)


def voxel_table(grid: VoxelStatsGrid, mode: LikelihoodMode) -> VoxelTable:
    H, M, R = grid.dense()
    H = H.astype(float)
    M = M.astype(float)
    if mode.model is ModelKind.REFLECTION:
        if mode.mode is Mode.FMP:
            a, b = mode.prior.alpha, mode.prior.beta
            denom = H + a + M + b
            p_hit = (H + a) / denom
            p_pass = (M + b) / denom
        else:
            n = H + M
            with np.errstate(invalid="ignore", divide="ignore"):
                p_hit = np.where(n > 0, H / n, mode.ml_default)
            p_pass = 1.0 - p_hit
        with np.errstate(divide="ignore"):
            return VoxelTable(kernels.TABLE, np.log(p_pass), np.log(p_hit))
    if mode.mode is Mode.FMP:
        a, b = mode.prior.alpha, mode.prior.beta
        A = H + a
        B = R + b
        if not mode.prior.proper:
            empty = B <= 0
            if empty.any():
                fb = mode.fallback_prior
                if fb is None or not fb.proper:
                    raise ValueError("unvisited voxels under an improper prior need a proper fallback prior")
                A = np.where(empty, H + fb.alpha, A)
                B = np.where(empty, R + fb.beta, B)
        return VoxelTable(kernels.GAMMA, A, B)
    with np.errstate(invalid="ignore", divide="ignore"):
        lam = np.where(R > 0, H / R, mode.ml_default)
    return VoxelTable(kernels.RATE, lam, np.zeros_like(lam))


class MapLikelihood:
    """A statistics grid paired with a likelihood mode, with its voxel table precomputed."""

    def __init__(self, grid: VoxelStatsGrid, mode: LikelihoodMode):
        self.grid = grid
        self.mode = mode
        self.table = voxel_table(grid, mode)

    @property
    def geometry(self):
        return self.grid.geometry

    def beam(self, trace: BeamTrace) -> float:
        if not trace.segments:
            return 0.0
        idx, r = zip(*trace.segments)
        vals = self.table.log_factor(idx, r, trace.deltas())
        return float(np.sum(vals))

    def out_of_range(self, trace: BeamTrace, kind: BeamStatus) -> float:
        kind = BeamStatus(kind)
        if kind is BeamStatus.HIT:
            raise ValueError("out-of-range probability needs short_range or max_range")
        if trace.segments:
            idx, r = zip(*trace.segments)
            s = float(np.sum(self.table.log_factor(idx, r, np.zeros(len(idx), dtype=bool))))
        else:
            s = 0.0
        if kind is BeamStatus.MAX_RANGE:
            return s
        return math.log(-math.expm1(s)) if s < 0 else -math.inf

    def scan(self, poses, directions, radii, status) -> np.ndarray:
        """Summed log-likelihood of one scan (sensor-frame beams) at each pose."""
        if isinstance(poses, Pose):
            poses = [poses]
        positions = np.array([p.position for p in poses], dtype=float).reshape(-1, 3)
        rotations = np.array([p.rotation() for p in poses], dtype=float).reshape(-1, 3, 3)
        return self.scan_arrays(positions, rotations, directions, radii, status)

    def beam_matrix(self, positions, rotations, directions, radii, status) -> np.ndarray:
        """Unfloored per-beam log-likelihoods, shape (poses, beams)."""
        g = self.geometry
        return kernels.beam_loglik(
            np.ascontiguousarray(positions, dtype=float).reshape(-1, 3),
            np.ascontiguousarray(rotations, dtype=float).reshape(-1, 3, 3),
            np.ascontiguousarray(directions, dtype=float).reshape(-1, 3),
            np.ascontiguousarray(radii, dtype=float),
            np.ascontiguousarray(status, dtype=np.int64),
            g.dims, g.edge, g.origin, self.table.code, self.table.pa, self.table.pb,
        )

    def scan_arrays(self, positions, rotations, directions, radii, status) -> np.ndarray:
        g = self.geometry
        floor = -math.inf if self.mode.floor is None else float(self.mode.floor)
        return kernels.scan_loglik(
            np.ascontiguousarray(positions, dtype=float),
            np.ascontiguousarray(rotations, dtype=float),
            np.ascontiguousarray(directions, dtype=float).reshape(-1, 3),
            np.ascontiguousarray(radii, dtype=float),
            np.ascontiguousarray(status, dtype=np.int64),
            g.dims, g.edge, g.origin, self.table.code, self.table.pa, self.table.pb, floor,
        )


def beam_log_likelihood(grid: VoxelStatsGrid, mode: LikelihoodMode, trace: BeamTrace,
                        status: BeamStatus = BeamStatus.HIT) -> float:
    """log L(z, x) of a reflected beam: sum of per-voxel log factors along ``trace``.

    May be ``-inf`` in MLM mode. Out-of-range beams go through
    :func:`out_of_range_log_prob` instead.
    """
    if BeamStatus(status) is not BeamStatus.HIT:
        raise ValueError("out-of-range beams must use out_of_range_log_prob")
    return MapLikelihood(grid, mode).beam(trace)


def out_of_range_log_prob(grid: VoxelStatsGrid, mode: LikelihoodMode, trace: BeamTrace,
                          kind: BeamStatus) -> float:
    """log P(r < r_min) or log P(r > r_max) given the trace up to that range."""
    return MapLikelihood(grid, mode).out_of_range(trace, kind)
