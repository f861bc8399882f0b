"""The 1-D corridor experiment: random maps, per-voxel mapping, and histogram localization.

The experiment is vectorised over runs. All compared methods inside one
call share the same maps, mapping data and localization beams, so their
per-run results are paired.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats as st

from gridbelief.grid import GridGeometry, VoxelStatsGrid
from gridbelief.localization import bayes_rows, shift_rows
from gridbelief.mapping import PRIOR_CLAMP, ModelKind

CHUNK = 500
DEFAULT_N_LIST = (1, 2, 3, 4, 5, 10, 20, 50, 100, 200)


class Method(enum.Enum):
    MLM = "mlm"
    FMP_UNIFORM = "fmp_uniform"
    FMP_CONJUGATE = "fmp_conjugate"


class DecayMapping(enum.Enum):
    """How a decay-map voxel is observed during the mapping phase.

    ``DIRECT``: every observation is an exponential free path drawn inside the
    voxel (H += 1, R += t). ``CENSORED``: draws longer than the unit voxel
    count as misses with R += 1.
    """

    DIRECT = "direct"
    CENSORED = "censored"


@dataclass(frozen=True)
class CorridorConfig:
    n: int
    model: ModelKind
    method: Method
    runs: int = 10_000
    seed: int = 0
    length: int = 100
    iterations: int = 100
    decay_mapping: DecayMapping = DecayMapping.DIRECT

    def __post_init__(self):
        object.__setattr__(self, "model", ModelKind(self.model))
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "decay_mapping", DecayMapping(self.decay_mapping))
        if self.length < 2:
            raise ValueError("corridor needs at least two voxels")
        if self.runs < 1 or self.n < 1 or self.iterations < 1:
            raise ValueError("runs, n and iterations must be positive")


@dataclass(frozen=True, eq=False)
class RunResult:
    rho: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.rho.mean())

    @property
    def var(self) -> float:
        return float(self.rho.var())

    @property
    def stderr(self) -> float:
        return math.sqrt(self.var / self.rho.size)


@dataclass(frozen=True)
class CorridorBeam:
    """Outcome of one localization beam: the reflecting voxel and depth inside it, or no return."""

    hit_voxel: Optional[int]
    depth: float = 1.0


# -- map generation and mapping phase ---------------------------------------------------

def _draw_values(rng, shape, model: ModelKind) -> np.ndarray:
    if model is ModelKind.REFLECTION:
        return rng.uniform(size=shape)
    return rng.gamma(1.0, 1.0, size=shape)


def synth_corridor_map(length: int, model: ModelKind, seed: int) -> np.ndarray:
    """True voxel values: Uniform(0, 1) reflection probabilities or Gamma(1, 1) decay rates."""
    return _draw_values(np.random.default_rng(seed), length, ModelKind(model))


def _mapping_arrays(values, n, model: ModelKind, rng, decay_mapping=DecayMapping.DIRECT):
    values = np.asarray(values, dtype=float)
    if model is ModelKind.REFLECTION:
        H = rng.binomial(n, values).astype(float)
        return H, n - H, np.full(values.shape, float(n))
    if DecayMapping(decay_mapping) is DecayMapping.DIRECT:
        # sum of n exponential free paths
        with np.errstate(divide="ignore"):
            R = rng.gamma(n, 1.0 / values)
        return np.full(values.shape, float(n)), np.zeros(values.shape), R
    H = np.zeros(values.shape)
    R = np.zeros(values.shape)
    for _ in range(n):
        t = rng.exponential(1.0 / values)
        hit = t < 1.0
        H += hit
        R += np.where(hit, t, 1.0)
    return H, n - H, R


def corridor_geometry(length: int) -> GridGeometry:
    return GridGeometry((length, 1, 1), 1.0, (0.0, 0.0, 0.0))


def simulate_mapping(values, n: int, model: ModelKind, seed: int,
                     decay_mapping: DecayMapping = DecayMapping.DIRECT) -> VoxelStatsGrid:
    """Observe every corridor voxel ``n`` times and return the accumulated statistics."""
    if n < 1:
        raise ValueError("n must be >= 1")
    values = np.asarray(values, dtype=float)
    H, M, R = _mapping_arrays(values, n, ModelKind(model), np.random.default_rng(seed), decay_mapping)
    return VoxelStatsGrid.from_dense(corridor_geometry(values.size), H.astype(np.int64), M.astype(np.int64), R)


# -- localization beams ------------------------------------------------------------

def _sample_beams(values, pos, model: ModelKind, rng):
    """Vectorised beam outcome per row: (hit voxel or -1, depth in the hit voxel)."""
    if model is ModelKind.REFLECTION:
        stop = rng.uniform(size=values.shape) < values
        depth = np.ones(values.shape)
    else:
        with np.errstate(divide="ignore"):
            depth = rng.exponential(1.0 / values)
        stop = depth < 1.0
    stop[:, :pos] = False
    any_hit = stop.any(axis=1)
    hv = np.where(any_hit, stop.argmax(axis=1), -1)
    d = np.where(any_hit, depth[np.arange(len(hv)), np.maximum(hv, 0)], 1.0)
    return hv, d


def simulate_beam(values, position: int, model: ModelKind, rng: np.random.Generator) -> CorridorBeam:
    """Fire one beam forward from ``position`` through the true corridor."""
    values = np.asarray(values, dtype=float)
    if not 0 <= position < values.size:
        raise ValueError(f"position {position} outside corridor of length {values.size}")
    hv, d = _sample_beams(values[None, :], position, ModelKind(model), rng)
    if hv[0] < 0:
        return CorridorBeam(None, 1.0)
    return CorridorBeam(int(hv[0]), float(d[0]))


# -- per-run likelihood tables ----------------------------------------------------------

def _fit_rows(v, model: ModelKind):
    """Row-wise moment-matched (alpha, beta); rows without spread get ``nan``."""
    E = v.mean(axis=1)
    V = v.var(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        if model is ModelKind.REFLECTION:
            a = -E * (E * E - E + V) / V
            b = (E - V + E * V - 2 * E * E + E ** 3) / V
        else:
            a = E * E / V
            b = E / V
    bad = ~(V > 0) | ~np.isfinite(a) | ~np.isfinite(b)
    a = np.where(bad, np.nan, np.maximum(a, PRIOR_CLAMP))
    b = np.where(bad, np.nan, np.maximum(b, PRIOR_CLAMP))
    return a[:, None], b[:, None]


class CorridorTables:
    """Per-run, per-voxel log pass factor for a unit voxel and log hit factor at a given depth."""

    def __init__(self, model: ModelKind, method: Method, H, M, R):
        self.model = model
        self.method = method
        if model is ModelKind.REFLECTION:
            if method is Method.MLM:
                p = H / (H + M)
            else:
                a, b = (1.0, 1.0) if method is Method.FMP_UNIFORM else _fit_rows(H / (H + M), model)
                a = np.where(np.isnan(a), 1.0, a)
                b = np.where(np.isnan(b), 1.0, b)
                p = (H + a) / (H + a + M + b)
            with np.errstate(divide="ignore"):
                self.pass_log = np.log1p(-p)
                self._hit = np.log(p)
            return
        if method is Method.MLM:
            self.lam = H / R
            self.pass_log = -self.lam
            return
        if method is Method.FMP_UNIFORM:
            a, b = 1.0, 0.0
        else:
            a, b = _fit_rows(H / R, model)
            a = np.where(np.isnan(a), 1.0, a)
            b = np.where(np.isnan(b), 0.0, b)
        self.A = H + a
        self.B = R + b
        self.pass_log = -self.A * np.log1p(1.0 / self.B)

    def hit_log(self, depth) -> np.ndarray:
        """(runs, voxels) log hit factor; ``depth`` is one value per run."""
        if self.model is ModelKind.REFLECTION:
            return self._hit
        d = np.asarray(depth, dtype=float)[:, None]
        with np.errstate(divide="ignore"):
            if self.method is Method.MLM:
                return np.log(self.lam) - self.lam * d
            return -self.A * np.log1p(d / self.B) + np.log(self.A / (self.B + d))


def _prefix(pass_log):
    """Cumulative sums of the finite pass logs plus counts of the infinite ones."""
    fin = np.isfinite(pass_log)
    rows = pass_log.shape[0]
    S = np.concatenate([np.zeros((rows, 1)), np.cumsum(np.where(fin, pass_log, 0.0), axis=1)], axis=1)
    C = np.concatenate([np.zeros((rows, 1), dtype=np.int64), np.cumsum(~fin, axis=1)], axis=1)
    return S, C


def corridor_log_likelihoods(pass_log, hit_log, hit_voxel, position, prefix=None) -> np.ndarray:
    """Log-likelihood of an observed beam for every hypothesised robot cell.

    ``pass_log`` and ``hit_log`` are (runs, L); ``hit_voxel`` holds the
    reflecting voxel per run (-1 for no return) as seen from the true
    ``position``. A hypothesis ``x`` explains a hit ``k`` voxels ahead by
    passing voxels ``x .. x+k-1`` and reflecting in ``x+k``; a no-return beam
    by passing every voxel to the corridor end.
    """
    pass_log = np.atleast_2d(pass_log)
    hit_log = np.atleast_2d(hit_log)
    hv = np.atleast_1d(np.asarray(hit_voxel))
    rows, L = pass_log.shape
    S, C = prefix if prefix is not None else _prefix(pass_log)
    xs = np.arange(L)[None, :]
    base = np.arange(rows)[:, None] * (L + 1)
    tgt = xs + (hv - position)[:, None]
    ok = tgt < L
    tg = base + np.minimum(tgt, L - 1)
    start = base + xs
    Sf, Cf = S.ravel(), C.ravel()
    hit_ll = Sf[tg] - Sf[start] + hit_log.ravel()[tg - base // (L + 1)]
    dead = ~ok | (Cf[tg] != Cf[start])
    max_ll = S[:, L:] - S[:, :L]
    max_dead = C[:, L:] != C[:, :L]
    is_hit = (hv >= 0)[:, None]
    out = np.where(is_hit, hit_ll, max_ll)
    return np.where(np.where(is_hit, dead, max_dead) | np.isnan(out), -np.inf, out)


# -- experiment ---------------------------------------------------------------------

def _chunk_rhos(model, n, methods, rows, rng, length, iterations, decay_mapping):
    values = _draw_values(rng, (rows, length), model)
    H, M, R = _mapping_arrays(values, n, model, rng, decay_mapping)
    tables = [CorridorTables(model, m, H, M, R) for m in methods]
    prefixes = [_prefix(t.pass_log) for t in tables]
    beliefs = [np.full((rows, length), 1.0 / length) for _ in methods]
    acc = [np.zeros(rows) for _ in methods]
    pos = 0
    for it in range(iterations):
        if it > 0:
            beliefs = [shift_rows(b, 1) for b in beliefs]
            pos = min(pos + 1, length - 1)
        hv, depth = _sample_beams(values, pos, model, rng)
        for j, tab in enumerate(tables):
            ll = corridor_log_likelihoods(tab.pass_log, tab.hit_log(depth), hv, pos, prefixes[j])
            post, ok = bayes_rows(beliefs[j], ll)
            # a zero-mass update restarts that run from the uniform belief
            beliefs[j] = np.where(ok[:, None], post, 1.0 / length)
            acc[j] += beliefs[j][:, pos]
    return [a / iterations for a in acc]


def corridor_sweep(model: ModelKind, n: int, methods: Sequence[Method], runs: int, seed: int,
                   length: int = 100, iterations: int = 100,
                   decay_mapping: DecayMapping = DecayMapping.DIRECT) -> dict[Method, RunResult]:
    """Paired corridor runs for several methods; identical randomness for every method."""
    model = ModelKind(model)
    methods = [Method(m) for m in methods]
    decay_mapping = DecayMapping(decay_mapping)
    children = np.random.SeedSequence(seed).spawn(math.ceil(runs / CHUNK))
    parts = {m: [] for m in methods}
    for c, ss in enumerate(children):
        rows = min(CHUNK, runs - c * CHUNK)
        rhos = _chunk_rhos(model, n, methods, rows, np.random.default_rng(ss), length, iterations,
                           decay_mapping)
        for m, r in zip(methods, rhos):
            parts[m].append(r)
    return {m: RunResult(np.concatenate(parts[m])) for m in methods}


def run_corridor_experiment(config: CorridorConfig) -> RunResult:
    return corridor_sweep(config.model, config.n, [config.method], config.runs, config.seed,
                          config.length, config.iterations, config.decay_mapping)[config.method]


def paired_ttest(a, b) -> tuple[float, float]:
    """One-tailed paired t-test of ``mean(a - b) > 0``: returns (t statistic, p-value)."""
    res = st.ttest_rel(np.asarray(a, dtype=float), np.asarray(b, dtype=float), alternative="greater")
    return float(res.statistic), float(res.pvalue)


def sweep_rows(model: ModelKind, n_list: Sequence[int], runs: int, seed: int,
               methods: Sequence[Method] = tuple(Method), length: int = 100, iterations: int = 100,
               decay_mapping: DecayMapping = DecayMapping.DIRECT) -> list[dict]:
    """One CSV-ready row per (n, method), with the paired p-value against MLM."""
    model = ModelKind(model)
    methods = [Method(m) for m in methods]
    rows = []
    for n in n_list:
        res = corridor_sweep(model, n, methods, runs, seed + 1_000_003 * int(n), length, iterations,
                             decay_mapping)
        for m in methods:
            p = ""
            if m is not Method.MLM and Method.MLM in res and runs > 1:
                p = paired_ttest(res[m].rho, res[Method.MLM].rho)[1]
            rows.append({
                "n": n, "method": m.value, "model": model.value, "mean_rho": res[m].mean,
                "var_rho": res[m].var, "runs": runs, "seed": seed, "p_greater_than_mlm": p,
            })
    return rows
