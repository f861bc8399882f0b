import math

import numpy as np
import pytest

from gridbelief.grid import BeamStatus, VoxelStats, VoxelStatsGrid
from gridbelief.likelihood import LikelihoodMode, MapLikelihood
from gridbelief.mapping import ModelKind, PriorParams, moment_match_prior
from gridbelief.raycast import trace_corridor
from gridbelief.sim import (
    CorridorConfig, CorridorTables, DecayMapping, Method, _prefix, corridor_geometry,
    corridor_log_likelihoods, corridor_sweep, paired_ttest, run_corridor_experiment, simulate_beam,
    simulate_mapping, sweep_rows, synth_corridor_map,
)

REF, DEC = ModelKind.REFLECTION, ModelKind.DECAY


def test_synth_corridor_map_moments():
    v = synth_corridor_map(10**5, REF, 1)
    assert abs(v.mean() - 0.5) < 0.005 and abs(v.var() - 1 / 12) < 0.002
    assert abs(synth_corridor_map(10**5, DEC, 1).mean() - 1.0) < 0.01
    assert np.array_equal(synth_corridor_map(50, DEC, 3), synth_corridor_map(50, DEC, 3))


def test_simulate_mapping_examples():
    g = simulate_mapping([1.0, 0.0], 7, REF, 0)
    assert g[0] == VoxelStats(7, 0, 7.0) and g[1] == VoxelStats(0, 7, 7.0)
    g = simulate_mapping([0.5], 10**5, REF, 0)
    assert abs(g[0].H / 10**5 - 0.5) < 0.005
    for dm in DecayMapping:
        g = simulate_mapping([1.0], 10**5, DEC, 0, dm)
        assert abs(g[0].H / g[0].R - 1.0) < 0.02
    g = simulate_mapping([2.0, 0.5], 50, DEC, 0, DecayMapping.CENSORED)
    assert all(g[i].H + g[i].M == 50 and g[i].R <= 50 for i in range(2))
    with pytest.raises(ValueError):
        simulate_mapping([0.5], 0, REF, 0)


def test_simulate_beam_examples(rng):
    assert simulate_beam(np.ones(5), 2, REF, rng).hit_voxel == 2
    assert simulate_beam(np.zeros(5), 2, REF, rng).hit_voxel is None
    counts = np.zeros(4)
    N = 10**5
    for _ in range(N):
        b = simulate_beam([0.5, 0.5, 0.5], 0, REF, rng)
        counts[3 if b.hit_voxel is None else b.hit_voxel] += 1
    p = np.array([0.5, 0.25, 0.125, 0.125])
    assert np.all(np.abs(counts / N - p) < 3 * np.sqrt(p * (1 - p) / N))
    b = simulate_beam([2.0, 2.0], 0, DEC, rng)
    assert b.hit_voxel is None or 0 <= b.depth < 1
    with pytest.raises(ValueError):
        simulate_beam([0.5], 1, REF, rng)


def _grid_from(H, M, R):
    return VoxelStatsGrid.from_dense(corridor_geometry(len(H)), H.astype(np.int64), M.astype(np.int64), R)


def _brute(model, method, H, M, R, hv, depth, pos):
    """Per-hypothesis log-likelihoods from traces and the general likelihood module."""
    L = len(H)
    g = _grid_from(H, M, R)
    if method is Method.MLM:
        mode = LikelihoodMode.mlm(model, 0.5 if model is REF else 1.0)
    elif method is Method.FMP_UNIFORM:
        mode = LikelihoodMode.fmp(PriorParams.uniform() if model is REF else PriorParams.uninformative())
    else:
        ml = H / (H + M) if model is REF else H / R
        mode = LikelihoodMode.fmp(moment_match_prior(ml, model))
    m = MapLikelihood(g, mode)
    out = np.empty(L)
    for x in range(L):
        if hv < 0:
            out[x] = m.out_of_range(trace_corridor(x, L, None), BeamStatus.MAX_RANGE)
        elif x + hv - pos >= L:
            out[x] = -np.inf
        else:
            out[x] = m.beam(trace_corridor(x, L, x + hv - pos, depth if model is DEC else 1.0))
    return out


@pytest.mark.parametrize("model", [REF, DEC])
@pytest.mark.parametrize("method", list(Method))
def test_corridor_likelihoods_match_traces(model, method, rng):
    L = 8
    for _ in range(20):
        n = int(rng.integers(1, 6))
        if model is REF:
            H = rng.integers(0, n + 1, L).astype(float)
            M, R = n - H, np.full(L, float(n))
        else:
            H, M, R = np.full(L, float(n)), np.zeros(L), rng.gamma(n, 1.0, L)
        pos = int(rng.integers(0, L))
        hv = int(rng.integers(pos, L + 1))
        hv = -1 if hv == L else hv
        depth = float(rng.uniform())
        tab = CorridorTables(model, method, H[None], M[None], R[None])
        got = corridor_log_likelihoods(tab.pass_log, tab.hit_log([depth]), [hv], pos)[0]
        want = _brute(model, method, H, M, R, hv, depth, pos)
        assert np.array_equal(np.isfinite(got), np.isfinite(want))
        f = np.isfinite(want)
        assert np.allclose(got[f], want[f], rtol=1e-11, atol=1e-11)


def test_mlm_impossible_hypotheses_are_minus_inf():
    H, M, R = np.array([[0.0, 1.0, 1.0]]), np.array([[1.0, 0.0, 0.0]]), np.ones((1, 3))
    tab = CorridorTables(REF, Method.MLM, H, M, R)
    ll = corridor_log_likelihoods(tab.pass_log, tab.hit_log([1.0]), [1], 0, _prefix(tab.pass_log))[0]
    # hypothesis 1 would need voxel 2 to pass, which MLM forbids
    assert ll[0] == 0.0 and ll[1] == -np.inf and ll[2] == -np.inf


def test_run_corridor_experiment_reproducible():
    cfg = CorridorConfig(n=2, model=REF, method=Method.FMP_CONJUGATE, runs=120, seed=9, length=30, iterations=20)
    a, b = run_corridor_experiment(cfg), run_corridor_experiment(cfg)
    assert np.array_equal(a.rho, b.rho)
    assert a.rho.shape == (120,) and np.all((a.rho >= 0) & (a.rho <= 1))
    assert a.var >= 0 and a.stderr >= 0
    with pytest.raises(ValueError):
        CorridorConfig(n=0, model=REF, method=Method.MLM)
    with pytest.raises(ValueError):
        CorridorConfig(n=1, model=REF, method=Method.MLM, length=1)


def test_methods_are_paired():
    both = corridor_sweep(DEC, 2, [Method.MLM, Method.FMP_CONJUGATE], 600, 4, length=25, iterations=15)
    alone = corridor_sweep(DEC, 2, [Method.MLM], 600, 4, length=25, iterations=15)
    assert np.array_equal(both[Method.MLM].rho, alone[Method.MLM].rho)


def test_paired_ttest_direction():
    rng = np.random.default_rng(0)
    a = rng.normal(size=200)
    t, p = paired_ttest(a + 0.5, a + rng.normal(0, 0.1, 200))
    assert t > 0 and p < 1e-6
    t, p = paired_ttest(a, a + 0.5 + rng.normal(0, 0.1, 200))
    assert t < 0 and p > 0.99


def test_sweep_rows_columns():
    rows = sweep_rows(REF, [1, 3], 40, 0, length=20, iterations=10)
    assert len(rows) == 6
    assert list(rows[0]) == ["n", "method", "model", "mean_rho", "var_rho", "runs", "seed", "p_greater_than_mlm"]
    assert rows[0]["p_greater_than_mlm"] == "" and isinstance(rows[1]["p_greater_than_mlm"], float)


@pytest.mark.slow
@pytest.mark.parametrize("model", [REF, DEC])
def test_mean_rho_increases_with_n(model):
    ns = (1, 2, 5, 20, 200)
    res = [corridor_sweep(model, n, list(Method), 1000, 100 + n) for n in ns]
    for m in Method:
        inversions = 0
        for a, b in zip(res, res[1:]):
            if b[m].mean < a[m].mean:
                inversions += 1
                assert a[m].mean - b[m].mean <= math.hypot(a[m].stderr, b[m].stderr)
        assert inversions <= 1
