"""Closed-form map posteriors for reflection and decay-rate voxel maps, with localization on top.

Maps store per-voxel sufficient statistics (hits, misses, travelled
distance). Measurement likelihoods are computed either under the most
likely map (MLM) or integrated over the full map posterior (FMP).
"""

from gridbelief.grid import (
    Beam, BeamStatus, BeamTrace, GeometryMismatch, GridGeometry, Pose, Scan, VoxelStats,
    VoxelStatsGrid, merge_stats, voxel_index_of,
)
from gridbelief.kernels import BACKEND, HAVE_COMPILED
from gridbelief.likelihood import (
    LikelihoodMode, MapLikelihood, Mode, beam_log_likelihood, l_dec, l_dec_mlm, l_ref, l_ref_mlm,
    out_of_range_log_prob,
)
from gridbelief.localization import (
    HistogramBelief, ParticleSet, ZeroMassError, histogram_predict, histogram_update, pf_estimate,
    pf_init, pf_step, run_mcl,
)
from gridbelief.mapping import (
    ModelKind, PosteriorParams, PriorParams, build_stats, fit_prior, moment_match_prior, posterior,
    update_stats,
)
from gridbelief.raycast import trace_beam, trace_corridor

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "HAVE_COMPILED", "Beam", "BeamStatus", "BeamTrace", "GeometryMismatch", "GridGeometry",
    "HistogramBelief", "LikelihoodMode", "MapLikelihood", "Mode", "ModelKind", "ParticleSet", "Pose",
    "PosteriorParams", "PriorParams", "Scan", "VoxelStats", "VoxelStatsGrid", "ZeroMassError",
    "beam_log_likelihood", "build_stats", "fit_prior", "histogram_predict", "histogram_update",
    "l_dec", "l_dec_mlm", "l_ref", "l_ref_mlm", "merge_stats", "moment_match_prior",
    "out_of_range_log_prob", "pf_estimate", "pf_init", "pf_step", "posterior", "run_mcl",
    "trace_beam", "trace_corridor", "update_stats", "voxel_index_of",
]
