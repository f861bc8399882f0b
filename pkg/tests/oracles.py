"""Brute-force numerical references shared by the unit and acceptance tests."""

import math
from functools import lru_cache

import numpy as np
from scipy import special
from scipy import stats as st

from gridbelief.mapping import ModelKind


@lru_cache(maxsize=None)
def _legendre(n):
    return np.polynomial.legendre.leggauss(n)


def gauss_legendre(lo, hi, n):
    x, w = _legendre(n)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def log_factor(model, m, r, delta):
    """log f(r, m, delta) of a single voxel for value array ``m``."""
    with np.errstate(divide="ignore"):
        if model is ModelKind.REFLECTION:
            return np.log(m) if delta else np.log1p(-m)
        return (np.log(m) if delta else 0.0) - m * r


def log_prior(model, m, a, b):
    if model is ModelKind.REFLECTION:
        return st.beta(a, b).logpdf(m)
    return st.gamma(a, scale=1.0 / b).logpdf(m)


def brute_posterior(model, a, b, obs, nodes):
    """Prior times product of factors on ``nodes``, normalised by Gauss-Legendre quadrature."""
    def logpost(m):
        lp = log_prior(model, m, a, b)
        for r, d in obs:
            lp = lp + log_factor(model, m, r, d)
        return lp

    lo, hi = 0.0, 1.0
    if model is ModelKind.DECAY:
        # cut where the unnormalised log density has dropped 60 below its peak
        probe = np.geomspace(1e-6, 1e4, 20001)
        lp = logpost(probe)
        hi = float(probe[np.flatnonzero(lp > lp.max() - 60.0)[-1]]) * 1.5
    x, w = gauss_legendre(lo, hi, nodes)
    lp = logpost(x)
    top = lp.max()
    dens = np.exp(lp - top)
    return x, dens / np.sum(w * dens)


def _power_nodes(lo, hi, k, n):
    """Nodes and weights for x = lo + (hi - lo) u**k, u in [0, 1]; clusters points at ``lo``."""
    u, w = gauss_legendre(0.0, 1.0, n)
    x = lo + (hi - lo) * u ** k
    return x, w * (hi - lo) * k * u ** (k - 1)


def quad_predictive(model, a, b, r, delta, nodes=4096):
    """Integral of f(r, m, delta) times the Beta/Gamma(a, b) density over m, by quadrature.

    A power substitution at each singular endpoint keeps the integrand smooth
    so that Gauss-Legendre converges to near machine precision.
    """
    if model is ModelKind.REFLECTION:
        # work with (mu, 1 - mu) pairs so that mass packed against 1 is not rounded away
        ka, kb = max(1.0, 8.0 / a), max(1.0, 8.0 / b)
        x1, w1 = _power_nodes(0.0, 0.5, ka, nodes // 2)
        y2, w2 = _power_nodes(0.0, 0.5, kb, nodes // 2)
        mu = np.concatenate([x1, 1.0 - y2])
        nu = np.concatenate([1.0 - x1, y2])
        w = np.concatenate([w1, w2])
        keep = (mu > 0) & (nu > 0)
        mu, nu, w = mu[keep], nu[keep], w[keep]
        lp = (a - 1) * np.log(mu) + (b - 1) * np.log(nu) - special.betaln(a, b)
        lp += np.log(mu) if delta else np.log(nu)
        return float(np.sum(w * np.exp(lp)))
    hi = float(st.gamma(a + delta, scale=1.0 / (b + r)).isf(1e-18))
    x, w = _power_nodes(0.0, hi, max(1.0, 8.0 / (a + delta)), nodes)
    keep = x > 0
    x, w = x[keep], w[keep]
    lp = st.gamma(a, scale=1.0 / b).logpdf(x) + log_factor(model, x, r, delta)
    return float(np.sum(w * np.exp(lp)))


# -- ray traversal --------------------------------------------------------------

def slab(geom, o, d):
    """Independent ray/box intersection: (t_enter, t_exit) or None."""
    lo, hi = geom.extent()
    t0, t1 = -math.inf, math.inf
    for a in range(3):
        if d[a] == 0:
            if not lo[a] <= o[a] < hi[a]:
                return None
            continue
        u, v = (lo[a] - o[a]) / d[a], (hi[a] - o[a]) / d[a]
        t0, t1 = max(t0, min(u, v)), min(t1, max(u, v))
    return (max(t0, 0.0), t1) if t0 < t1 and t1 > 0 else None


def sample_voxels(geom, o, d, t0, t1, count):
    """Point-sampling oracle: voxel of every sample not within 1e-6 of a face."""
    t = t0 + (np.arange(count) + 0.5) * (t1 - t0) / count
    pts = np.asarray(o) + t[:, None] * np.asarray(d)
    rel = (pts - np.asarray(geom.origin)) / geom.edge
    frac = rel - np.round(rel)
    keep = np.all(np.abs(frac) * geom.edge > 1e-6, axis=1)
    ijk = np.floor(rel[keep]).astype(np.int64)
    nx, ny, _ = geom.dims
    return ijk[:, 0] + nx * (ijk[:, 1] + ny * ijk[:, 2]), keep.sum()


def collapse(seq):
    out = []
    for s in seq:
        if not out or out[-1] != s:
            out.append(int(s))
    return out


# -- out-of-range mass ------------------------------------------------------------

def decay_mass(m, start, r_min, r_max, nodes=64):
    """P(short) + integral of the hit density over [r_min, r_max] + P(max) along +x."""
    pos = np.array([[start, 0.5 * m.geometry.edge, 0.5 * m.geometry.edge]])
    rot = np.eye(3)[None]
    e = m.geometry.edge
    cuts = [r_min] + [k * e - start for k in range(1, m.geometry.dims[0] + 1) if r_min < k * e - start < r_max] + [r_max]
    xs, ws = [], []
    for lo, hi in zip(cuts, cuts[1:]):
        x, w = gauss_legendre(lo, hi, nodes)
        xs.append(x)
        ws.append(w)
    x, w = np.concatenate(xs), np.concatenate(ws)
    dirs = np.tile([1.0, 0.0, 0.0], (len(x) + 2, 1))
    radii = np.concatenate([x, [r_min, r_max]])
    status = np.concatenate([np.zeros(len(x), dtype=np.int64), [1, 2]])
    ll = m.beam_matrix(pos, rot, dirs, radii, status)[0]
    return float(np.sum(w * np.exp(ll[:-2])) + np.exp(ll[-2]) + np.exp(ll[-1]))


# -- discrete Bayes ----------------------------------------------------------------

def enumerate_posterior(prior, shifts, lls):
    """Exhaustive Bayes over starting cells with deterministic clipped motion."""
    n = len(prior)
    w = np.array(prior, dtype=float)
    pos = np.arange(n)
    for s, ll in zip(shifts, lls):
        pos = np.clip(pos + s, 0, n - 1)
        w = w * np.exp(ll[pos])
    out = np.zeros(n)
    np.add.at(out, pos, w)
    return out / out.sum()
