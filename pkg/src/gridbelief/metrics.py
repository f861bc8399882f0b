"""Map-quality measures comparing most-likely-map and map-posterior likelihoods."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from gridbelief.grid import Pose, Scan, VoxelStatsGrid
from gridbelief.likelihood import LikelihoodMode, MapLikelihood
from gridbelief.mapping import PriorParams, default_ml, fit_prior


def paired_modes(grid: VoxelStatsGrid, prior: PriorParams,
                 floor: Optional[float] = None) -> tuple[LikelihoodMode, LikelihoodMode]:
    """(MLM, FMP) likelihood modes for ``grid`` under ``prior``.

    An improper decay prior gets the moment-matched prior of the map as
    fallback for unvisited voxels and as source of the MLM default value.
    """
    model = prior.model
    proper = prior if prior.proper else fit_prior(grid, model)
    fmp = LikelihoodMode.fmp(prior, fallback_prior=None if prior.proper else proper, floor=floor)
    mlm = LikelihoodMode.mlm(model, default_ml(model, proper), floor=floor)
    return mlm, fmp


def _as_scan(beams) -> Scan:
    return beams if isinstance(beams, Scan) else Scan.from_beams(beams)


def _pose_arrays(poses):
    pos = np.array([p.position for p in poses], dtype=float).reshape(-1, 3)
    rot = np.array([p.rotation() for p in poses], dtype=float).reshape(-1, 3, 3)
    return pos, rot


@dataclass(frozen=True)
class LoglikRatio:
    """Joint sums plus the split into hit beams (densities) and out-of-range beams (probabilities)."""

    ratio: float
    mlm_sum: float
    fmp_sum: float
    used: int
    excluded: int
    hit_mlm: float = 0.0
    hit_fmp: float = 0.0
    range_mlm: float = 0.0
    range_fmp: float = 0.0


def loglik_sums(mlm: MapLikelihood, fmp: MapLikelihood, scans) -> LoglikRatio:
    """Cumulated per-beam log-likelihoods at the given poses, skipping pairs where either is infinite."""
    parts = {k: [] for k in ("hm", "hf", "rm", "rf")}
    used, excluded = 0, 0
    for pose, beams in scans:
        scan = _as_scan(beams)
        pos, rot = _pose_arrays([pose])
        lm = mlm.beam_matrix(pos, rot, scan.directions, scan.radii, scan.status)[0]
        lf = fmp.beam_matrix(pos, rot, scan.directions, scan.radii, scan.status)[0]
        keep = np.isfinite(lm) & np.isfinite(lf)
        hit = scan.status == 0
        parts["hm"].extend(lm[keep & hit])
        parts["hf"].extend(lf[keep & hit])
        parts["rm"].extend(lm[keep & ~hit])
        parts["rf"].extend(lf[keep & ~hit])
        used += int(keep.sum())
        excluded += int((~keep).sum())
    if used == 0:
        raise ValueError("no beams left after excluding zero-likelihood beams")
    s = {k: math.fsum(v) for k, v in parts.items()}
    m_total = math.fsum(parts["hm"] + parts["rm"])
    f_total = math.fsum(parts["hf"] + parts["rf"])
    if f_total == 0:
        raise ValueError("FMP log-likelihood sum is zero; ratio undefined")
    return LoglikRatio(m_total / f_total, m_total, f_total, used, excluded,
                       s["hm"], s["hf"], s["rm"], s["rf"])


def loglik_ratio(grid: VoxelStatsGrid, scans: Sequence[tuple[Pose, object]], prior: PriorParams) -> LoglikRatio:
    """Ratio of cumulated MLM to FMP beam log-likelihoods at ground-truth poses.

    ``scans`` holds ``(pose, beams)`` pairs where ``beams`` is a :class:`Scan`
    or a list of sensor-frame :class:`Beam`. Beams with a zero MLM (or FMP)
    likelihood are dropped from both sums and counted in ``excluded``.
    """
    scans = list(scans)
    if not scans:
        raise ValueError("no scans given")
    mlm, fmp = paired_modes(grid, prior)
    return loglik_sums(MapLikelihood(grid, mlm), MapLikelihood(grid, fmp), scans)


def kl_grid(center: Pose, sigma: float, samples: int, seed: Optional[int] = None) -> np.ndarray:
    """Sample positions on a regular x-y lattice spanning +-4 sigma around ``center``.

    With a seed the whole lattice is shifted by a random sub-cell offset.
    """
    if samples < 100:
        raise ValueError("need at least 100 samples")
    side = int(round(math.sqrt(samples)))
    step = 8 * sigma / (side - 1)
    offs = np.linspace(-4 * sigma, 4 * sigma, side)
    shift = np.zeros(2)
    if seed is not None:
        shift = (np.random.default_rng(seed).uniform(size=2) - 0.5) * step
    gx, gy = np.meshgrid(offs + shift[0], offs + shift[1], indexing="ij")
    pts = np.tile(np.asarray(center.position, dtype=float), (side * side, 1))
    pts[:, 0] += gx.ravel()
    pts[:, 1] += gy.ravel()
    return pts


def kl_from_logs(log_p_gt: np.ndarray, log_p: np.ndarray) -> float:
    """Discrete KL divergence after normalising both unnormalised log densities over the samples."""
    lg = log_p_gt - np.logaddexp.reduce(log_p_gt)
    if not np.isfinite(np.max(log_p)):
        return math.inf
    lp = log_p - np.logaddexp.reduce(log_p)
    pg = np.exp(lg)
    support = pg > 0
    if np.any(support & ~np.isfinite(lp)):
        return math.inf
    return float(max(np.sum(pg[support] * (lg[support] - lp[support])), 0.0))


def kl_divergence_mc(p_gt_center: Pose, sigma: float, log_lik_fn: Callable[[np.ndarray], np.ndarray],
                     samples: int = 441, seed: Optional[int] = None) -> float:
    """KL(p_gt || p) of a Gaussian position prior against the measurement likelihood.

    ``log_lik_fn`` maps an (K, 3) array of positions (orientation held at the
    center's) to K log-likelihoods. Returns ``inf`` when p vanishes where the
    reference does not.
    """
    pts = kl_grid(p_gt_center, sigma, samples, seed)
    d = pts[:, :2] - np.asarray(p_gt_center.position[:2])
    log_gt = -0.5 * np.sum(d * d, axis=1) / sigma ** 2
    return kl_from_logs(log_gt, np.asarray(log_lik_fn(pts), dtype=float))


def scan_log_lik_fn(model: MapLikelihood, pose: Pose, scan: Scan) -> Callable[[np.ndarray], np.ndarray]:
    rot = pose.rotation()

    def fn(points):
        rots = np.broadcast_to(rot, (len(points), 3, 3))
        return model.scan_arrays(points, rots, scan.directions, scan.radii, scan.status)

    return fn


def kl_pair(mlm: MapLikelihood, fmp: MapLikelihood, pose: Pose, scan: Scan, sigma: float = 0.05,
            samples: int = 441) -> tuple[float, float, int]:
    """KL divergences of both modes for one scan at its true pose.

    Beams that are impossible under either mode at any sample pose are
    dropped from both, mirroring the pairwise exclusion of the
    log-likelihood sums. Returns (kl_mlm, kl_fmp, excluded beams).
    """
    pts = kl_grid(pose, sigma, samples)
    rots = np.broadcast_to(pose.rotation(), (len(pts), 3, 3))
    bm = mlm.beam_matrix(pts, rots, scan.directions, scan.radii, scan.status)
    bf = fmp.beam_matrix(pts, rots, scan.directions, scan.radii, scan.status)
    keep = np.isfinite(bm).all(axis=0) & np.isfinite(bf).all(axis=0)
    d = pts[:, :2] - np.asarray(pose.position[:2])
    log_gt = -0.5 * np.sum(d * d, axis=1) / sigma ** 2
    km = kl_from_logs(log_gt, bm[:, keep].sum(axis=1))
    kf = kl_from_logs(log_gt, bf[:, keep].sum(axis=1))
    return km, kf, int((~keep).sum())


@dataclass(frozen=True)
class EvalReport:
    loglik: LoglikRatio
    kl_mlm: float
    kl_fmp: float
    kl_ratio: float
    kl_excluded: int

    def as_rows(self) -> list[dict]:
        ll = self.loglik
        return [
            {"metric": "loglik_mlm", "value": ll.mlm_sum},
            {"metric": "loglik_fmp", "value": ll.fmp_sum},
            {"metric": "loglik_ratio", "value": ll.ratio},
            {"metric": "loglik_hit_mlm", "value": ll.hit_mlm},
            {"metric": "loglik_hit_fmp", "value": ll.hit_fmp},
            {"metric": "loglik_out_of_range_mlm", "value": ll.range_mlm},
            {"metric": "loglik_out_of_range_fmp", "value": ll.range_fmp},
            {"metric": "loglik_beams_used", "value": ll.used},
            {"metric": "loglik_beams_excluded", "value": ll.excluded},
            {"metric": "kl_mlm", "value": self.kl_mlm},
            {"metric": "kl_fmp", "value": self.kl_fmp},
            {"metric": "kl_ratio", "value": self.kl_ratio},
            {"metric": "kl_beams_excluded", "value": self.kl_excluded},
        ]


def evaluate(grid: VoxelStatsGrid, scans, prior: PriorParams, sigma: float = 0.05,
             samples: int = 441) -> EvalReport:
    """Cumulated log-likelihoods and KL divergences for both modes, and their MLM/FMP ratios."""
    scans = [(p, _as_scan(b)) for p, b in scans]
    if not scans:
        raise ValueError("no scans given")
    mlm_mode, fmp_mode = paired_modes(grid, prior)
    mlm, fmp = MapLikelihood(grid, mlm_mode), MapLikelihood(grid, fmp_mode)
    ll = loglik_sums(mlm, fmp, scans)
    km, kf, excluded = 0.0, 0.0, 0
    for pose, scan in scans:
        a, b, e = kl_pair(mlm, fmp, pose, scan, sigma, samples)
        km += a
        kf += b
        excluded += e
    ratio = km / kf if kf > 0 else math.nan
    return EvalReport(ll, km, kf, ratio, excluded)
