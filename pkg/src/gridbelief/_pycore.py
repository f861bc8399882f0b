"""Pure-Python/numpy implementation of the traversal and likelihood kernels.

Mirrors ``_core.pyx`` operation for operation; the two are cross-checked in the
test suite. Coordinates are converted to voxel units internally.

Likelihood tables use a model code:

* ``TABLE`` (0): per-voxel log pass / log hit probabilities (reflection model).
* ``GAMMA`` (1): per-voxel Gamma posterior shape ``A`` and rate ``B`` (decay, map posterior).
* ``RATE``  (2): per-voxel decay rate (decay, most likely map).
"""

import math

import numpy as np

TABLE, GAMMA, RATE = 0, 1, 2
HIT, SHORT_RANGE, MAX_RANGE = 0, 1, 2

BACKEND = "python"


def _entry(p, d, r, dims):
    t_enter, t_exit = 0.0, math.inf
    for a in range(3):
        if d[a] == 0.0:
            if p[a] < 0.0 or p[a] >= dims[a]:
                return None
        else:
            lo = -p[a] / d[a]
            hi = (dims[a] - p[a]) / d[a]
            if lo > hi:
                lo, hi = hi, lo
            t_enter = max(t_enter, lo)
            t_exit = min(t_exit, hi)
    if t_enter >= t_exit or t_enter >= r:
        return None
    return t_enter, t_exit


def _next_boundary(idx, p, d):
    if d > 0.0:
        return (idx + 1 - p) / d
    if d < 0.0:
        return (idx - p) / d
    return math.inf


def trace(origin, direction, radius, hit, dims, edge, grid_origin):
    """Walk one ray through the lattice.

    Returns ``(indices, lengths, terminal_hit)`` with lengths in meters.
    """
    nx, ny, nz = dims
    p = [(origin[a] - grid_origin[a]) / edge for a in range(3)]
    d = [float(direction[a]) for a in range(3)]
    r = radius / edge
    span = _entry(p, d, r, dims)
    if span is None:
        return [], [], False
    t_enter, t_exit = span
    stop = min(r, t_exit)
    idx = [min(max(math.floor(p[a] + d[a] * t_enter), 0), dims[a] - 1) for a in range(3)]
    tmax = [_next_boundary(idx[a], p[a], d[a]) for a in range(3)]

    indices, lengths = [], []
    t = t_enter
    inside = True
    while True:
        a = 0
        if tmax[1] < tmax[a]:
            a = 1
        if tmax[2] < tmax[a]:
            a = 2
        tn = tmax[a]
        if tn >= stop:
            indices.append(idx[0] + nx * (idx[1] + ny * idx[2]))
            lengths.append((stop - t) * edge)
            break
        if tn > t:
            indices.append(idx[0] + nx * (idx[1] + ny * idx[2]))
            lengths.append((tn - t) * edge)
            t = tn
        idx[a] += 1 if d[a] > 0 else -1
        if idx[a] < 0 or idx[a] >= dims[a]:
            inside = False
            break
        tmax[a] = _next_boundary(idx[a], p[a], d[a])

    terminal = False
    if hit and inside and r <= t_exit:
        e = list(idx)
        for b in range(3):
            if d[b] > 0.0 and tmax[b] == stop:
                e[b] += 1
        if all(0 <= e[b] < dims[b] for b in range(3)):
            terminal = True
            if e != idx:
                indices.append(e[0] + nx * (e[1] + ny * e[2]))
                lengths.append(0.0)
    return indices, lengths, terminal


def _pass_log(code, pa, pb, i, length):
    if code == TABLE:
        return pa[i]
    if code == GAMMA:
        return -pa[i] * np.log1p(length / pb[i])
    return -pa[i] * length


def _hit_log(code, pa, pb, i, length):
    if code == TABLE:
        return pb[i]
    if code == GAMMA:
        with np.errstate(divide="ignore"):
            return -pa[i] * np.log1p(length / pb[i]) + np.log(pa[i] / (pb[i] + length))
    with np.errstate(divide="ignore"):
        return -pa[i] * length + np.log(pa[i])


def scan_loglik(positions, rotations, directions, radii, status, dims, edge, grid_origin,
                code, pa, pb, floor_value=-math.inf):
    """Summed beam log-likelihood of one scan at each of ``P`` sensor poses.

    ``positions`` (P, 3), ``rotations`` (P, 3, 3) sensor-to-world, ``directions``
    (B, 3) in the sensor frame, ``radii``/``status`` (B,). Each beam's term is
    clipped below at ``floor_value``.
    """
    out = beam_loglik(positions, rotations, directions, radii, status, dims, edge, grid_origin,
                      code, pa, pb)
    return np.maximum(out, floor_value).sum(axis=1)


def beam_loglik(positions, rotations, directions, radii, status, dims, edge, grid_origin,
                code, pa, pb):
    """Per-beam log-likelihoods, shape (P, B); same arguments as :func:`scan_loglik`."""
    positions = np.asarray(positions, dtype=float)
    rotations = np.asarray(rotations, dtype=float)
    directions = np.asarray(directions, dtype=float)
    radii = np.asarray(radii, dtype=float)
    status = np.asarray(status)
    P, B = positions.shape[0], directions.shape[0]
    dims_a = np.asarray(dims, dtype=np.int64)
    g0 = np.asarray(grid_origin, dtype=float)

    d = np.einsum("pij,bj->pbi", rotations, directions).reshape(-1, 3)
    p = np.repeat((positions - g0) / edge, B, axis=0)
    r = np.tile(radii, P) / edge
    st = np.tile(status, P)
    K = P * B

    with np.errstate(divide="ignore", invalid="ignore"):
        lo = np.where(d != 0, -p / d, -np.inf)
        hi = np.where(d != 0, (dims_a - p) / d, np.inf)
    lo, hi = np.minimum(lo, hi), np.maximum(lo, hi)
    outside_slab = (d == 0) & ((p < 0) | (p >= dims_a))
    t_enter = np.maximum(lo.max(axis=1), 0.0)
    t_exit = hi.min(axis=1)
    active = ~outside_slab.any(axis=1) & (t_enter < t_exit) & (t_enter < r)

    stop = np.minimum(r, t_exit)
    q = p + d * t_enter[:, None]
    idx = np.clip(np.floor(q), 0, dims_a - 1).astype(np.int64)
    idx[~active] = 0
    with np.errstate(divide="ignore", invalid="ignore"):
        tmax = np.where(d > 0, (idx + 1 - p) / d, np.where(d < 0, (idx - p) / d, np.inf))
    t = t_enter.copy()
    passes = np.zeros(K)
    final = np.zeros(K)
    terminal = np.zeros(K, dtype=bool)
    strides = np.array([1, dims[0], dims[0] * dims[1]], dtype=np.int64)
    rows = np.arange(K)
    is_hit = st == HIT

    while active.any():
        k = rows[active]
        tm = tmax[k]
        a = np.argmin(tm, axis=1)
        tn = tm[np.arange(k.size), a]
        lin = idx[k] @ strides
        done = tn >= stop[k]

        kd = k[done]
        if kd.size:
            seg = (stop[kd] - t[kd]) * edge
            lin_d = lin[done]
            ended_hit = is_hit[kd] & (r[kd] <= t_exit[kd])
            e = idx[kd].copy()
            bump = (d[kd] > 0) & (tmax[kd] == stop[kd][:, None])
            e += bump
            e_in = ((e >= 0) & (e < dims_a)).all(axis=1)
            term = ended_hit & e_in
            same = ~bump.any(axis=1)
            lin_e = np.where(e_in[:, None], e, 0) @ strides
            f = np.where(term & same, _hit_log(code, pa, pb, lin_d, seg),
                         _pass_log(code, pa, pb, lin_d, seg))
            extra = np.where(term & ~same, _hit_log(code, pa, pb, lin_e, 0.0 * seg), 0.0)
            final[kd] = f + extra
            terminal[kd] = term
            active[kd] = False

        kc = k[~done]
        if kc.size:
            ac = a[~done]
            tnc = tn[~done]
            moved = tnc > t[kc]
            if moved.any():
                km = kc[moved]
                passes[km] += _pass_log(code, pa, pb, lin[~done][moved], (tnc[moved] - t[km]) * edge)
                t[km] = tnc[moved]
            dc = d[kc, ac]
            step = np.where(dc > 0, 1, -1)
            idx[kc, ac] += step
            ni = idx[kc, ac]
            gone = (ni < 0) | (ni >= dims_a[ac])
            active[kc[gone]] = False
            kk, aa = kc[~gone], ac[~gone]
            ii, pp, dd = idx[kk, aa], p[kk, aa], d[kk, aa]
            tmax[kk, aa] = np.where(dd > 0, (ii + 1 - pp) / dd, (ii - pp) / dd)

    total = passes + final
    out = np.where(is_hit, total, 0.0)
    with np.errstate(divide="ignore"):
        short = np.where(total < 0, np.log(-np.expm1(np.minimum(total, 0.0))), -np.inf)
    out = np.where(st == SHORT_RANGE, short, out)
    out = np.where(st == MAX_RANGE, total, out)
    return out.reshape(P, B)


def accumulate(origins, directions, radii, status, dims, edge, grid_origin, H, M, R):
    """Add the statistics of many beams into dense ``H``, ``M``, ``R`` arrays in place.

    Short-range beams carry no location for their reflection and are skipped.
    Returns the number of beams used.
    """
    used = 0
    for o, dvec, rad, s in zip(origins, directions, radii, status):
        if s == SHORT_RANGE:
            continue
        used += 1
        ind, lens, term = trace(o, dvec, rad, s == HIT, dims, edge, grid_origin)
        last = len(ind) - 1
        for j, (i, ln) in enumerate(zip(ind, lens)):
            R[i] += ln
            if term and j == last:
                H[i] += 1
            else:
                M[i] += 1
    return used
