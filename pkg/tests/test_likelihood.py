import math

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as hst

from gridbelief.grid import Beam, BeamStatus, BeamTrace, GridGeometry, Pose, VoxelStats, VoxelStatsGrid
from gridbelief.likelihood import (
    LikelihoodMode, MapLikelihood, Mode, beam_log_likelihood, l_dec, l_dec_mlm, l_ref, l_ref_mlm,
    out_of_range_log_prob, voxel_table,
)
from gridbelief.mapping import ModelKind, PriorParams
from gridbelief.raycast import trace_beam, trace_corridor

from conftest import random_unit
from oracles import decay_mass, quad_predictive

REF = ModelKind.REFLECTION
DEC = ModelKind.DECAY


def test_l_ref_examples():
    assert l_ref(VoxelStats(), PriorParams.uniform(), True) == 0.5
    assert math.isclose(l_ref(VoxelStats(3, 1), PriorParams.uniform(), False), 1 / 3)
    assert math.isclose(quad_predictive(REF, 4, 2, 1.0, False), 1 / 3, rel_tol=1e-12)
    assert l_ref(VoxelStats(5, 5), (0.0, 0.0), True) == 0.5


def test_l_ref_mlm_examples():
    assert l_ref_mlm(VoxelStats(3, 1), 0.5, True) == 0.75
    assert l_ref_mlm(VoxelStats(0, 4), 0.5, True) == 0.0
    assert l_ref_mlm(VoxelStats(), 0.5, False) == 0.5


def test_l_dec_examples():
    assert l_dec(VoxelStats(), (1, 1), 1.0, True) == 0.25
    assert math.isclose(quad_predictive(DEC, 1, 1, 1.0, True), 0.25, rel_tol=1e-12)
    assert l_dec(VoxelStats(4, 0, 2.5), (2, 1), 0.0, False) == 1.0
    assert math.isclose(l_dec(VoxelStats(2, 0, 2.0), (1, 0), 1.0, False), 8 / 27)
    with pytest.raises(ValueError):
        l_dec(VoxelStats(), (1, 0), 0.0, True)
    with pytest.raises(ValueError):
        l_dec(VoxelStats(), (1, 1), -1.0, False)
    # improper prior, no data: the closed form degenerates to zero
    assert l_dec(VoxelStats(), (1, 0), 1.0, False) == 0.0


def test_l_dec_mlm_examples():
    assert math.isclose(l_dec_mlm(VoxelStats(2, 0, 4.0), 0.0, 1.0, False), math.exp(-0.5))
    assert math.isclose(l_dec_mlm(VoxelStats(2, 0, 4.0), 0.0, 2.0, True), 0.5 * math.exp(-1))
    assert l_dec_mlm(VoxelStats(0, 3, 2.0), 9.0, 5.0, False) == 1.0
    assert l_dec_mlm(VoxelStats(), 2.0, 1.0, False) == math.exp(-2.0)


@settings(max_examples=500, deadline=None)
@given(hst.integers(0, 10**6), hst.integers(0, 10**6), hst.floats(1e-3, 100), hst.floats(1e-3, 100))
@example(0, 0, 1.0, 1.0)
@example(3, 10**6, 0.1, 7.3)
def test_l_ref_binary_event(H, M, a, b):
    s = VoxelStats(H, M)
    assert l_ref(s, (a, b), True) + l_ref(s, (a, b), False) == 1.0


def test_closed_forms_match_quadrature(rng):
    for _ in range(1000):
        H, M = int(rng.integers(0, 30)), int(rng.integers(0, 30))
        R = float(rng.uniform(0, 20))
        a, b = rng.uniform(0.05, 5), rng.uniform(0.05, 5)
        d = bool(rng.integers(2))
        r = float(rng.uniform(0, 3))
        s = VoxelStats(H, M, R)
        assert l_ref(s, (a, b), d) == pytest.approx(quad_predictive(REF, H + a, M + b, 1.0, d), rel=1e-9)
        assert l_dec(s, (a, b), r, d) == pytest.approx(quad_predictive(DEC, H + a, R + b, r, d), rel=1e-9)


def test_fmp_tends_to_mlm(rng):
    # the gap shrinks like (alpha - lambda* beta) r / (k R), so keep lambda* realistic and R >= 1 m
    for _ in range(200):
        H = int(rng.integers(5, 20))
        s = VoxelStats(H, int(rng.integers(1, 20)), H / float(rng.uniform(0.05, 5)))
        a, b = rng.uniform(0.1, 5), rng.uniform(0.1, 5)
        r = float(rng.uniform(0, 2))
        for d in (True, False):
            pairs = [
                (lambda t: l_ref(t, (a, b), d), lambda t: l_ref_mlm(t, 0.5, d)),
                (lambda t: l_dec(t, (a, b), r, d), lambda t: l_dec_mlm(t, 0.0, r, d)),
            ]
            for fmp, mlm in pairs:
                errs = [abs(fmp(s.scaled(k)) - mlm(s.scaled(k))) / mlm(s.scaled(k)) for k in (1, 1e2, 1e4, 1e6)]
                assert all(e2 <= e1 for e1, e2 in zip(errs, errs[1:]))
                assert errs[-1] < 1e-4


@settings(max_examples=200, deadline=None)
@given(hst.floats(1e-3, 50), hst.floats(1e-3, 50), hst.floats(0, 10), hst.booleans())
def test_fmp_unvisited_is_positive(a, b, r, d):
    assert 0 < l_ref(VoxelStats(), (a, b), d) < 1
    v = l_dec(VoxelStats(), (a, b), r, d)
    assert math.isfinite(v) and v > 0


def test_mode_validation():
    with pytest.raises(ValueError):
        LikelihoodMode(Mode.FMP, REF)
    with pytest.raises(ValueError):
        LikelihoodMode(Mode.FMP, REF, prior=PriorParams.uninformative())
    with pytest.raises(ValueError):
        LikelihoodMode(Mode.MLM, REF, ml_default=1.5)
    with pytest.raises(ValueError):
        LikelihoodMode.mlm(DEC)
    assert LikelihoodMode.mlm(DEC, prior=PriorParams(DEC, 2.0, 1.0)).ml_default == 2.0


def _corridor_grid(model, rng, n=3):
    geom = GridGeometry((n, 1, 1), 1.0)
    g = VoxelStatsGrid(geom)
    for i in range(n):
        g.add(i, int(rng.integers(1, 6)), int(rng.integers(1, 6)), float(rng.uniform(0.5, 5)))
    return g


def test_beam_log_likelihood_sums_factors(rng):
    g = _corridor_grid(DEC, rng)
    prior = PriorParams(DEC, 1.5, 0.7)
    mode = LikelihoodMode.fmp(prior)
    t = BeamTrace(((0, 1.0), (1, 1.0), (2, 0.4)), True)
    want = (math.log(l_dec(g[0], prior, 1.0, False)) + math.log(l_dec(g[1], prior, 1.0, False))
            + math.log(l_dec(g[2], prior, 0.4, True)))
    assert beam_log_likelihood(g, mode, t) == pytest.approx(want, rel=1e-13)
    single = BeamTrace(((2, 0.4),), True)
    assert beam_log_likelihood(g, mode, single) == pytest.approx(math.log(l_dec(g[2], prior, 0.4, True)))
    head = BeamTrace(((0, 1.0), (1, 1.0)), False)
    assert beam_log_likelihood(g, mode, head + single) == pytest.approx(
        beam_log_likelihood(g, mode, head) + beam_log_likelihood(g, mode, single))
    with pytest.raises(ValueError):
        beam_log_likelihood(g, mode, t, BeamStatus.MAX_RANGE)


def test_mlm_zero_likelihood_is_minus_inf():
    g = VoxelStatsGrid(GridGeometry((2, 1, 1), 1.0), {1: VoxelStats(0, 4, 4.0)})
    mode = LikelihoodMode.mlm(REF)
    assert beam_log_likelihood(g, mode, trace_corridor(0, 2, 1)) == -math.inf


def test_out_of_range_examples():
    g = VoxelStatsGrid(GridGeometry((2, 1, 1), 1.0))
    mode = LikelihoodMode.fmp(PriorParams.uniform())
    t = trace_corridor(0, 2, None)
    assert out_of_range_log_prob(g, mode, t, BeamStatus.MAX_RANGE) == pytest.approx(math.log(0.25))
    assert out_of_range_log_prob(g, mode, t, BeamStatus.SHORT_RANGE) == pytest.approx(math.log(0.75))
    assert out_of_range_log_prob(g, mode, BeamTrace(()), BeamStatus.SHORT_RANGE) == -math.inf
    with pytest.raises(ValueError):
        out_of_range_log_prob(g, mode, t, BeamStatus.HIT)


def test_improper_decay_prior_uses_fallback():
    g = VoxelStatsGrid(GridGeometry((3, 1, 1), 1.0), {0: VoxelStats(2, 0, 1.0)})
    with pytest.raises(ValueError):
        MapLikelihood(g, LikelihoodMode.fmp(PriorParams.uninformative()))
    fb = PriorParams(DEC, 2.0, 3.0)
    m = MapLikelihood(g, LikelihoodMode.fmp(PriorParams.uninformative(), fallback_prior=fb))
    t = BeamTrace(((0, 1.0), (1, 1.0)), False)
    want = math.log(l_dec(g[0], (1, 0), 1.0, False)) + math.log(l_dec(VoxelStats(), fb, 1.0, False))
    assert m.beam(t) == pytest.approx(want)


def _modes(model, prior):
    if model is REF:
        return [LikelihoodMode.fmp(prior), LikelihoodMode.mlm(REF)]
    return [LikelihoodMode.fmp(prior), LikelihoodMode.mlm(DEC, prior=prior)]


@pytest.mark.parametrize("model", [REF, DEC])
def test_kernel_matrix_matches_traces(backend, model, rng):
    geom = GridGeometry((6, 5, 4), 0.5, (0.0, -0.5, 0.0))
    g = VoxelStatsGrid(geom)
    for i in rng.choice(geom.size, 80, replace=False):
        g.add(int(i), int(rng.integers(0, 4)), int(rng.integers(0, 4)), float(rng.uniform(0, 3)))
    prior = PriorParams(model, 0.8, 1.3)
    lo, hi = geom.extent()
    poses = [Pose(tuple(rng.uniform(lo, hi))) for _ in range(5)]
    poses += [Pose(tuple(rng.uniform(lo - 1, hi + 1)), tuple(q / np.linalg.norm(q)))
              for q in rng.normal(size=(5, 4))]
    dirs = random_unit(rng, 40)
    radii = rng.uniform(0, 3, 40)
    status = rng.integers(0, 3, 40)
    kinds = [BeamStatus.HIT, BeamStatus.SHORT_RANGE, BeamStatus.MAX_RANGE]
    for mode in _modes(model, prior):
        m = MapLikelihood(g, mode)
        pos = np.array([p.position for p in poses])
        rot = np.array([p.rotation() for p in poses])
        mat = m.beam_matrix(pos, rot, dirs, radii, status)
        for pi, p in enumerate(poses):
            for bi, beam in enumerate(m_beams(p, dirs, radii, status, kinds)):
                t = trace_beam(geom, beam)
                want = m.beam(t) if beam.status is BeamStatus.HIT else m.out_of_range(t, beam.status)
                got = mat[pi, bi]
                assert (got == want) or got == pytest.approx(want, rel=1e-12, abs=1e-12)
        floored = LikelihoodMode(mode.mode, mode.model, mode.prior, mode.ml_default, None, -5.0)
        s = MapLikelihood(g, floored).scan_arrays(pos, rot, dirs, radii, status)
        assert np.allclose(s, np.maximum(mat, -5.0).sum(axis=1), rtol=1e-12)


def m_beams(pose, dirs, radii, status, kinds):
    rot = pose.rotation()
    for d, r, s in zip(dirs, radii, status):
        w = rot @ d
        yield Beam(pose.position, tuple(w / np.linalg.norm(w)), float(r), kinds[s])


def test_reflection_frequency_oracle(rng):
    g = _corridor_grid(REF, rng)
    prior = PriorParams(REF, 1.2, 0.8)
    m = MapLikelihood(g, LikelihoodMode.fmp(prior))
    N = 10**6
    mu = np.stack([rng.beta(g[i].H + prior.alpha, g[i].M + prior.beta, N) for i in range(3)], axis=1)
    stop = rng.uniform(size=(N, 3)) < mu
    first = np.where(stop.any(axis=1), stop.argmax(axis=1), 3)
    for k in range(4):
        freq = np.mean(first == k)
        if k < 3:
            p = math.exp(m.beam(trace_corridor(0, 3, k)))
        else:
            p = math.exp(m.out_of_range(trace_corridor(0, 3, None), BeamStatus.MAX_RANGE))
        assert abs(freq - p) < 3 * math.sqrt(p * (1 - p) / N)


def test_decay_frequency_oracle(rng):
    g = _corridor_grid(DEC, rng)
    prior = PriorParams(DEC, 1.5, 0.5)
    m = MapLikelihood(g, LikelihoodMode.fmp(prior))
    N = 10**6
    lam = np.stack([rng.gamma(g[i].H + prior.alpha, 1 / (g[i].R + prior.beta), N) for i in range(3)], axis=1)
    stop = rng.exponential(1.0, size=(N, 3)) / lam < 1.0
    first = np.where(stop.any(axis=1), stop.argmax(axis=1), 3)
    passes = [0.0] + [m.out_of_range(BeamTrace(tuple((i, 1.0) for i in range(k))), BeamStatus.MAX_RANGE)
                      for k in range(1, 4)]
    for k in range(4):
        p = math.exp(passes[k]) - (math.exp(passes[k + 1]) if k < 3 else 0.0)
        freq = np.mean(first == k)
        assert abs(freq - p) < 3 * math.sqrt(p * (1 - p) / N)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_out_of_range_mass_conservation(backend, n, rng):
    for _ in range(5):
        g = _corridor_grid(DEC, rng, n)
        prior = PriorParams(DEC, rng.uniform(0.5, 3), rng.uniform(0.2, 2))
        for mode in _modes(DEC, prior):
            m = MapLikelihood(g, mode)
            total = decay_mass(m, 0.1, 0.2, n - 0.3)
            assert abs(total - 1.0) < 1e-6


def test_voxel_table_codes():
    g = VoxelStatsGrid(GridGeometry((2, 1, 1), 1.0), {0: VoxelStats(1, 1, 1.0)})
    t = voxel_table(g, LikelihoodMode.mlm(REF))
    assert np.allclose(np.exp(t.log_factor([0, 1], [1, 1], [True, False])), [0.5, 0.5])
    t = voxel_table(g, LikelihoodMode.mlm(DEC, 3.0))
    assert np.allclose(t.log_factor([0, 1], [2.0, 1.0], [True, False]), [-2.0, -3.0])
