# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled traversal and likelihood kernels (see ``_pycore`` for the reference semantics)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, log, log1p, expm1, INFINITY

cnp.import_array()

BACKEND = "cython"

cpdef enum:
    TABLE = 0
    GAMMA = 1
    RATE = 2
    HIT = 0
    SHORT_RANGE = 1
    MAX_RANGE = 2


cdef struct Walk:
    long idx[3]
    long dims[3]
    double p[3]
    double d[3]
    double tmax[3]
    double t
    double stop
    double r
    double t_exit
    double edge


cdef inline double _boundary(long i, double p, double d) nogil:
    if d > 0.0:
        return (i + 1 - p) / d
    if d < 0.0:
        return (i - p) / d
    return INFINITY


cdef inline long _lin(long* idx, long* dims) nogil:
    return idx[0] + dims[0] * (idx[1] + dims[1] * idx[2])


cdef int _start(Walk* w, double* origin, double* direction, double radius,
                long* dims, double edge, double* g0) nogil:
    """Initialise a walk; returns 0 when the ray never enters the grid."""
    cdef int a
    cdef double lo, hi, tmp, t_enter = 0.0, t_exit = INFINITY
    cdef long c
    w.edge = edge
    w.r = radius / edge
    for a in range(3):
        w.dims[a] = dims[a]
        w.p[a] = (origin[a] - g0[a]) / edge
        w.d[a] = direction[a]
        if w.d[a] == 0.0:
            if w.p[a] < 0.0 or w.p[a] >= dims[a]:
                return 0
        else:
            lo = -w.p[a] / w.d[a]
            hi = (dims[a] - w.p[a]) / w.d[a]
            if lo > hi:
                tmp = lo
                lo = hi
                hi = tmp
            if lo > t_enter:
                t_enter = lo
            if hi < t_exit:
                t_exit = hi
    if t_enter >= t_exit or t_enter >= w.r:
        return 0
    w.t_exit = t_exit
    w.stop = w.r if w.r < t_exit else t_exit
    w.t = t_enter
    for a in range(3):
        c = <long>floor(w.p[a] + w.d[a] * t_enter)
        if c < 0:
            c = 0
        if c > dims[a] - 1:
            c = dims[a] - 1
        w.idx[a] = c
        w.tmax[a] = _boundary(c, w.p[a], w.d[a])
    return 1


cdef inline int _axis(Walk* w) nogil:
    cdef int a = 0
    if w.tmax[1] < w.tmax[a]:
        a = 1
    if w.tmax[2] < w.tmax[a]:
        a = 2
    return a


cdef inline int _advance(Walk* w, int a) nogil:
    """Step into the neighbour along axis ``a``; returns 0 on grid exit."""
    if w.d[a] > 0:
        w.idx[a] += 1
    else:
        w.idx[a] -= 1
    if w.idx[a] < 0 or w.idx[a] >= w.dims[a]:
        return 0
    w.tmax[a] = _boundary(w.idx[a], w.p[a], w.d[a])
    return 1


cdef inline long _terminal_voxel(Walk* w) nogil:
    """Voxel holding the endpoint under the half-open rule, or -1 outside the grid."""
    cdef long e[3]
    cdef int b
    for b in range(3):
        e[b] = w.idx[b]
        if w.d[b] > 0.0 and w.tmax[b] == w.stop:
            e[b] += 1
        if e[b] < 0 or e[b] >= w.dims[b]:
            return -1
    return _lin(e, w.dims)


cdef inline double _pass_log(int code, double* pa, double* pb, long i, double length) nogil:
    if code == TABLE:
        return pa[i]
    if code == GAMMA:
        return -pa[i] * log1p(length / pb[i])
    return -pa[i] * length


cdef inline double _hit_log(int code, double* pa, double* pb, long i, double length) nogil:
    if code == TABLE:
        return pb[i]
    if code == GAMMA:
        return -pa[i] * log1p(length / pb[i]) + log(pa[i] / (pb[i] + length))
    return -pa[i] * length + log(pa[i])


def trace(origin, direction, double radius, bint hit, dims, double edge, grid_origin):
    cdef double o[3]
    cdef double dv[3]
    cdef double g[3]
    cdef long dm[3]
    cdef Walk w
    cdef int a, inside = 1
    cdef double tn
    cdef long e, cur
    for a in range(3):
        o[a] = origin[a]
        dv[a] = direction[a]
        g[a] = grid_origin[a]
        dm[a] = dims[a]
    indices, lengths = [], []
    if not _start(&w, o, dv, radius, dm, edge, g):
        return indices, lengths, False
    while True:
        a = _axis(&w)
        tn = w.tmax[a]
        if tn >= w.stop:
            indices.append(_lin(w.idx, w.dims))
            lengths.append((w.stop - w.t) * edge)
            break
        if tn > w.t:
            indices.append(_lin(w.idx, w.dims))
            lengths.append((tn - w.t) * edge)
            w.t = tn
        if not _advance(&w, a):
            inside = 0
            break
    terminal = False
    if hit and inside and w.r <= w.t_exit:
        e = _terminal_voxel(&w)
        if e >= 0:
            terminal = True
            cur = _lin(w.idx, w.dims)
            if e != cur:
                indices.append(e)
                lengths.append(0.0)
    return indices, lengths, terminal


cdef double _beam_loglik(double* o, double* dv, double radius, int status, long* dims,
                         double edge, double* g0, int code, double* pa, double* pb) nogil:
    cdef Walk w
    cdef int a
    cdef double tn, seg, total = 0.0
    cdef long cur, e
    if not _start(&w, o, dv, radius, dims, edge, g0):
        if status == SHORT_RANGE:
            return -INFINITY
        return 0.0
    while True:
        a = _axis(&w)
        tn = w.tmax[a]
        cur = _lin(w.idx, w.dims)
        if tn >= w.stop:
            seg = (w.stop - w.t) * edge
            e = -1
            if status == HIT and w.r <= w.t_exit:
                e = _terminal_voxel(&w)
            if e < 0:
                total += _pass_log(code, pa, pb, cur, seg)
            elif e == cur:
                total += _hit_log(code, pa, pb, cur, seg)
            else:
                total += _pass_log(code, pa, pb, cur, seg) + _hit_log(code, pa, pb, e, 0.0)
            break
        if tn > w.t:
            total += _pass_log(code, pa, pb, cur, (tn - w.t) * edge)
            w.t = tn
        if not _advance(&w, a):
            break
    if status == SHORT_RANGE:
        if total < 0.0:
            return log(-expm1(total))
        return -INFINITY
    return total


def scan_loglik(positions, rotations, directions, radii, status, dims, double edge,
                grid_origin, int code, pa, pb, double floor_value=-INFINITY):
    cdef double[:, ::1] pos = np.ascontiguousarray(positions, dtype=np.float64)
    cdef double[:, :, ::1] rot = np.ascontiguousarray(rotations, dtype=np.float64)
    cdef double[:, ::1] dirs = np.ascontiguousarray(directions, dtype=np.float64)
    cdef double[::1] rad = np.ascontiguousarray(radii, dtype=np.float64)
    cdef long[::1] st = np.ascontiguousarray(status, dtype=np.int64)
    cdef double[::1] va = np.ascontiguousarray(pa, dtype=np.float64)
    cdef double[::1] vb = np.ascontiguousarray(pb, dtype=np.float64)
    cdef Py_ssize_t P = pos.shape[0], B = dirs.shape[0], i, j
    result = np.zeros(P, dtype=np.float64)
    cdef double[::1] out = result
    cdef double o[3]
    cdef double dv[3]
    cdef double g[3]
    cdef long dm[3]
    cdef double ll, acc
    cdef int a
    for a in range(3):
        g[a] = grid_origin[a]
        dm[a] = dims[a]
    with nogil:
        for i in range(P):
            acc = 0.0
            for a in range(3):
                o[a] = pos[i, a]
            for j in range(B):
                for a in range(3):
                    dv[a] = rot[i, a, 0] * dirs[j, 0] + rot[i, a, 1] * dirs[j, 1] + rot[i, a, 2] * dirs[j, 2]
                ll = _beam_loglik(o, dv, rad[j], <int>st[j], dm, edge, g, code, &va[0], &vb[0])
                if ll < floor_value:
                    ll = floor_value
                acc += ll
            out[i] = acc
    return result


def beam_loglik(positions, rotations, directions, radii, status, dims, double edge,
                grid_origin, int code, pa, pb):
    cdef double[:, ::1] pos = np.ascontiguousarray(positions, dtype=np.float64)
    cdef double[:, :, ::1] rot = np.ascontiguousarray(rotations, dtype=np.float64)
    cdef double[:, ::1] dirs = np.ascontiguousarray(directions, dtype=np.float64)
    cdef double[::1] rad = np.ascontiguousarray(radii, dtype=np.float64)
    cdef long[::1] st = np.ascontiguousarray(status, dtype=np.int64)
    cdef double[::1] va = np.ascontiguousarray(pa, dtype=np.float64)
    cdef double[::1] vb = np.ascontiguousarray(pb, dtype=np.float64)
    cdef Py_ssize_t P = pos.shape[0], B = dirs.shape[0], i, j
    result = np.zeros((P, B), dtype=np.float64)
    cdef double[:, ::1] out = result
    cdef double o[3]
    cdef double dv[3]
    cdef double g[3]
    cdef long dm[3]
    cdef int a
    for a in range(3):
        g[a] = grid_origin[a]
        dm[a] = dims[a]
    with nogil:
        for i in range(P):
            for a in range(3):
                o[a] = pos[i, a]
            for j in range(B):
                for a in range(3):
                    dv[a] = rot[i, a, 0] * dirs[j, 0] + rot[i, a, 1] * dirs[j, 1] + rot[i, a, 2] * dirs[j, 2]
                out[i, j] = _beam_loglik(o, dv, rad[j], <int>st[j], dm, edge, g, code, &va[0], &vb[0])
    return result


def accumulate(origins, directions, radii, status, dims, double edge, grid_origin,
               H, M, R):
    cdef double[:, ::1] org = np.ascontiguousarray(origins, dtype=np.float64)
    cdef double[:, ::1] dirs = np.ascontiguousarray(directions, dtype=np.float64)
    cdef double[::1] rad = np.ascontiguousarray(radii, dtype=np.float64)
    cdef long[::1] st = np.ascontiguousarray(status, dtype=np.int64)
    cdef long[::1] vh = H
    cdef long[::1] vm = M
    cdef double[::1] vr = R
    cdef Py_ssize_t K = org.shape[0], k
    cdef Walk w
    cdef double o[3]
    cdef double dv[3]
    cdef double g[3]
    cdef long dm[3]
    cdef int a, inside
    cdef double tn
    cdef long cur, e
    cdef long used = 0
    for a in range(3):
        g[a] = grid_origin[a]
        dm[a] = dims[a]
    with nogil:
        for k in range(K):
            if st[k] == SHORT_RANGE:
                continue
            used += 1
            for a in range(3):
                o[a] = org[k, a]
                dv[a] = dirs[k, a]
            if not _start(&w, o, dv, rad[k], dm, edge, g):
                continue
            inside = 1
            while True:
                a = _axis(&w)
                tn = w.tmax[a]
                cur = _lin(w.idx, w.dims)
                if tn >= w.stop:
                    vr[cur] += (w.stop - w.t) * edge
                    e = -1
                    if st[k] == HIT and w.r <= w.t_exit:
                        e = _terminal_voxel(&w)
                    if e < 0:
                        vm[cur] += 1
                    elif e == cur:
                        vh[cur] += 1
                    else:
                        vm[cur] += 1
                        vh[e] += 1
                    break
                if tn > w.t:
                    vr[cur] += (tn - w.t) * edge
                    vm[cur] += 1
                    w.t = tn
                if not _advance(&w, a):
                    break
    return used
