"""Histogram filter for the discrete corridor and a particle filter for 3-D poses."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.spatial.transform import Rotation

from gridbelief.grid import Pose, Scan, VoxelStatsGrid, quat_multiply
from gridbelief.likelihood import LikelihoodMode, MapLikelihood

NORM_TOL = 1e-9


class ZeroMassError(ValueError):
    """Every hypothesis received zero likelihood."""


# -- histogram filter -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HistogramBelief:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float).reshape(-1)
        if p.size == 0 or np.any(p < 0) or abs(p.sum() - 1.0) > NORM_TOL:
            raise ValueError("belief must be non-negative and sum to one")
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, n: int) -> "HistogramBelief":
        return cls(np.full(n, 1.0 / n))

    def __len__(self) -> int:
        return self.probs.size


def shift_rows(probs: np.ndarray, shift: int) -> np.ndarray:
    """Shift mass along the last axis; mass pushed past either end piles up in the end cell."""
    probs = np.asarray(probs, dtype=float)
    n = probs.shape[-1]
    move = np.zeros((n, n))
    move[np.arange(n), np.clip(np.arange(n) + shift, 0, n - 1)] = 1.0
    return probs @ move


def histogram_predict(belief: HistogramBelief, shift: int) -> HistogramBelief:
    out = shift_rows(belief.probs, int(shift))
    return HistogramBelief(out / out.sum())


def bayes_rows(probs: np.ndarray, log_liks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise prior times likelihood, normalised.

    Returns ``(posterior, ok)``; rows whose total mass is zero are left as
    zeros and flagged ``False`` in ``ok``.
    """
    probs = np.asarray(probs, dtype=float)
    ll = np.asarray(log_liks, dtype=float)
    support = probs > 0
    masked = np.where(support, ll, -np.inf)
    top = masked.max(axis=-1, keepdims=True)
    ok = np.isfinite(top[..., 0])
    with np.errstate(invalid="ignore", over="ignore"):
        w = np.where(support & ok[..., None], probs * np.exp(masked - np.where(ok[..., None], top, 0.0)), 0.0)
    total = w.sum(axis=-1, keepdims=True)
    ok &= total[..., 0] > 0
    post = np.where(ok[..., None], w / np.where(total > 0, total, 1.0), 0.0)
    return post, ok


def histogram_update(belief: HistogramBelief, log_liks) -> HistogramBelief:
    ll = np.asarray(log_liks, dtype=float).reshape(-1)
    if ll.size != len(belief):
        raise ValueError(f"{ll.size} log-likelihoods for a belief over {len(belief)} cells")
    post, ok = bayes_rows(belief.probs, ll)
    if not ok:
        raise ZeroMassError("posterior has zero total mass")
    return HistogramBelief(post)


# -- particle filter ----------------------------------------------------------------

def _to_scipy(q):
    q = np.asarray(q, dtype=float)
    return q[..., [1, 2, 3, 0]]


def _from_scipy(q):
    q = np.asarray(q, dtype=float)
    return q[..., [3, 0, 1, 2]]


@dataclass(frozen=True, eq=False)
class ParticleSet:
    """Particles as arrays: positions (P, 3), (w, x, y, z) quaternions (P, 4) and log-weights (P,)."""

    positions: np.ndarray
    quaternions: np.ndarray
    log_weights: np.ndarray

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float).reshape(-1, 3)
        q = np.array(self.quaternions, dtype=float).reshape(-1, 4)
        lw = np.array(self.log_weights, dtype=float).reshape(-1)
        if not (len(pos) == len(q) == len(lw)) or len(pos) == 0:
            raise ValueError("particle arrays must be non-empty and of equal length")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "quaternions", q / np.linalg.norm(q, axis=1, keepdims=True))
        object.__setattr__(self, "log_weights", lw)

    def __len__(self) -> int:
        return len(self.log_weights)

    @property
    def weights(self) -> np.ndarray:
        lw = self.log_weights
        top = lw.max()
        if not np.isfinite(top):
            raise ZeroMassError("all particle weights are zero")
        w = np.exp(lw - top)
        return w / w.sum()

    @property
    def particles(self) -> list[tuple[Pose, float]]:
        return [(Pose(tuple(p), tuple(q)), float(lw))
                for p, q, lw in zip(self.positions, self.quaternions, self.log_weights)]

    def rotations(self) -> np.ndarray:
        return Rotation.from_quat(_to_scipy(self.quaternions)).as_matrix()

    def normalized(self) -> "ParticleSet":
        return ParticleSet(self.positions, self.quaternions, np.log(self.weights))

    def effective_size(self) -> float:
        w = self.weights
        return 1.0 / float(np.sum(w * w))


def pf_init(center: Pose, trans_sigma: float, rot_sigma: float, count: int, seed: int) -> ParticleSet:
    if count < 1:
        raise ValueError("need at least one particle")
    if trans_sigma < 0 or rot_sigma < 0:
        raise ValueError("sigmas must be non-negative")
    rng = np.random.default_rng(seed)
    pos = np.asarray(center.position) + rng.normal(0.0, 1.0, size=(count, 3)) * trans_sigma
    rv = rng.normal(0.0, 1.0, size=(count, 3)) * rot_sigma
    rot = Rotation.from_rotvec(rv) * Rotation.from_quat(_to_scipy(center.orientation))
    if rot_sigma == 0:
        quats = np.tile(np.asarray(center.orientation), (count, 1))
    else:
        quats = _from_scipy(rot.as_quat())
    return ParticleSet(pos, quats, np.full(count, -np.log(count)))


def systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Low-variance resampling: indices for one uniform offset and ``n`` equally spaced pointers."""
    n = len(weights)
    pointers = (rng.uniform() + np.arange(n)) / n
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, pointers, side="right").clip(0, n - 1)


def pf_move(pset: ParticleSet, odometry: Pose, motion_noise: tuple[float, float],
            rng: np.random.Generator) -> ParticleSet:
    """Compose every particle with ``odometry`` followed by a sampled body-frame perturbation."""
    ts, rs = motion_noise
    n = len(pset)
    cur = Rotation.from_quat(_to_scipy(pset.quaternions))
    odo = Rotation.from_quat(_to_scipy(odometry.orientation))
    step = np.asarray(odometry.position, dtype=float)
    if ts > 0:
        step = step + odo.apply(rng.normal(0.0, ts, size=(n, 3)))
    else:
        step = np.tile(step, (n, 1))
    pos = pset.positions + cur.apply(step)
    if rs > 0:
        rot = cur * odo * Rotation.from_rotvec(rng.normal(0.0, rs, size=(n, 3)))
        quats = _from_scipy(rot.as_quat())
    else:
        # Hamilton product directly, keeping the caller's quaternion sign
        quats = quat_multiply(pset.quaternions.T, odometry.orientation).T
    return ParticleSet(pos, quats, pset.log_weights)


def pf_weight(pset: ParticleSet, scan: Scan, model: MapLikelihood) -> ParticleSet:
    ll = model.scan_arrays(pset.positions, pset.rotations(), scan.directions, scan.radii, scan.status)
    return ParticleSet(pset.positions, pset.quaternions, pset.log_weights + ll)


def pf_step(pset: ParticleSet, odometry: Pose, motion_noise: tuple[float, float], scan: Scan,
            grid: Union[VoxelStatsGrid, MapLikelihood], mode: Optional[LikelihoodMode], seed) -> ParticleSet:
    """One motion, weighting and (conditional) resampling step.

    ``scan`` is a :class:`Scan` or a list of sensor-frame :class:`Beam`.
    ``grid`` may be a prepared :class:`MapLikelihood`, in which case ``mode``
    is ignored. ``seed`` is an int or a ``numpy`` Generator.
    """
    if not isinstance(scan, Scan):
        scan = Scan.from_beams(scan)
    if len(scan) == 0:
        raise ValueError("empty scan")
    model = grid if isinstance(grid, MapLikelihood) else MapLikelihood(grid, mode)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    moved = pf_move(pset, odometry, motion_noise, rng)
    weighted = pf_weight(moved, scan, model)
    try:
        w = weighted.weights
    except ZeroMassError:
        raise ZeroMassError("all particle weights collapsed to zero") from None
    n = len(w)
    if 1.0 / float(np.sum(w * w)) < n / 2:
        idx = systematic_resample(w, rng)
        return ParticleSet(weighted.positions[idx], weighted.quaternions[idx], np.full(n, -np.log(n)))
    return ParticleSet(weighted.positions, weighted.quaternions, np.log(w))


def quaternion_mean(quats: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted average rotation: principal eigenvector of sum w q q^T, sign chosen with w >= 0."""
    q = np.asarray(quats, dtype=float)
    A = np.einsum("i,ij,ik->jk", np.asarray(weights, dtype=float), q, q)
    _, vecs = np.linalg.eigh(A)
    m = vecs[:, -1]
    if m[0] < 0:
        m = -m
    return m / np.linalg.norm(m)


def pf_estimate(pset: ParticleSet) -> Pose:
    w = pset.weights
    pos = w @ pset.positions
    return Pose(tuple(pos), tuple(quaternion_mean(pset.quaternions, w)))


@dataclass(frozen=True, eq=False)
class MCLResult:
    estimates: list
    errors: np.ndarray


def run_mcl(model: MapLikelihood, poses, scans, particles: int = 3000, init_sigma=(0.1, 0.1),
            motion_noise=None, seed: int = 0, start: Optional[Pose] = None) -> MCLResult:
    """Monte-Carlo localization along a trajectory with exact odometry between consecutive poses.

    The filter starts around ``start`` (default: the first true pose) and
    weights with the first scan before any motion. ``motion_noise`` defaults
    to ``init_sigma``. ``errors`` are Euclidean position errors against
    ``poses``.
    """
    poses = list(poses)
    motion_noise = tuple(init_sigma) if motion_noise is None else tuple(motion_noise)
    rng = np.random.default_rng(seed)
    start = poses[0] if start is None else start
    pset = pf_init(start, init_sigma[0], init_sigma[1], particles, int(rng.integers(2 ** 63)))
    estimates, errors = [], []
    for t, (pose, scan) in enumerate(zip(poses, scans)):
        odo = Pose() if t == 0 else pose.relative_to(poses[t - 1])
        noise = (0.0, 0.0) if t == 0 else motion_noise
        try:
            pset = pf_step(pset, odo, noise, scan, model, None, rng)
        except ZeroMassError:
            raise ZeroMassError(f"particle weights collapsed at step {t}") from None
        est = pf_estimate(pset)
        estimates.append(est)
        errors.append(float(np.linalg.norm(np.subtract(est.position, pose.position))))
    return MCLResult(estimates, np.asarray(errors))
