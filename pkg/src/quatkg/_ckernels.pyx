# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled scoring kernels.

Same interface and arithmetic as ``_kernels_py``. Each triple is processed by
scalar loops over contiguous ``(4, n)`` rows; the per-element expressions are
written in the same order as the numpy path so the two backends agree to
rounding. Inner products accumulate sequentially over the flattened ``4n``
row, which makes a single-triple score and a candidate-sweep score of the
same triple bit-identical within this backend.
"""

import numpy as np

from cython cimport floating
from libc.math cimport exp, fabs, log1p, sqrt
from libc.stdlib cimport free, malloc

BACKEND = "cython"

cdef inline void hprod(const floating* q, const floating* p, floating* out, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t d
    cdef floating qr, qi, qj, qk, pr, pi, pj, pk
    for d in range(n):
        qr = q[d]; qi = q[n + d]; qj = q[2 * n + d]; qk = q[3 * n + d]
        pr = p[d]; pi = p[n + d]; pj = p[2 * n + d]; pk = p[3 * n + d]
        out[d] = qr * pr - qi * pi - qj * pj - qk * pk
        out[n + d] = qi * pr + qr * pi - qk * pj + qj * pk
        out[2 * n + d] = qj * pr + qk * pi + qr * pj - qi * pk
        out[3 * n + d] = qk * pr - qj * pi + qi * pj + qr * pk


cdef inline void conj_into(const floating* q, floating* out, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t d
    for d in range(n):
        out[d] = q[d]
        out[n + d] = -q[n + d]
        out[2 * n + d] = -q[2 * n + d]
        out[3 * n + d] = -q[3 * n + d]


cdef inline floating maxabs4(floating r, floating i, floating j, floating k) noexcept nogil:
    cdef floating m = fabs(r)
    if fabs(i) > m:
        m = fabs(i)
    if fabs(j) > m:
        m = fabs(j)
    if fabs(k) > m:
        m = fabs(k)
    return m


cdef inline void qnormalize(const floating* q, floating* out, Py_ssize_t n) noexcept nogil:
    # norm of the coordinate scaled by its largest component; zero stays zero
    cdef Py_ssize_t d
    cdef floating r, i, j, k, m, ns
    for d in range(n):
        m = maxabs4(q[d], q[n + d], q[2 * n + d], q[3 * n + d])
        if m == 0:
            out[d] = 0; out[n + d] = 0; out[2 * n + d] = 0; out[3 * n + d] = 0
            continue
        r = q[d] / m; i = q[n + d] / m; j = q[2 * n + d] / m; k = q[3 * n + d] / m
        ns = sqrt(r * r + i * i + j * j + k * k)
        out[d] = r / ns
        out[n + d] = i / ns
        out[2 * n + d] = j / ns
        out[3 * n + d] = k / ns


cdef inline void qnormalize_backward(const floating* q, const floating* g, floating* out,
                                     Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t d, c
    cdef floating r, i, j, k, m, ns, norm, yr, yi, yj, yk, radial
    for d in range(n):
        m = maxabs4(q[d], q[n + d], q[2 * n + d], q[3 * n + d])
        if m == 0:
            for c in range(4):
                out[c * n + d] = g[c * n + d]
            continue
        r = q[d] / m; i = q[n + d] / m; j = q[2 * n + d] / m; k = q[3 * n + d] / m
        ns = sqrt(r * r + i * i + j * j + k * k)
        yr = r / ns; yi = i / ns; yj = j / ns; yk = k / ns
        norm = m * ns
        radial = yr * g[d] + yi * g[n + d] + yj * g[2 * n + d] + yk * g[3 * n + d]
        out[d] = (g[d] - yr * radial) / norm
        out[n + d] = (g[n + d] - yi * radial) / norm
        out[2 * n + d] = (g[2 * n + d] - yj * radial) / norm
        out[3 * n + d] = (g[3 * n + d] - yk * radial) / norm


cdef inline double qdot(const floating* a, const floating* b, Py_ssize_t m) noexcept nogil:
    cdef Py_ssize_t d
    cdef double acc = 0.0
    for d in range(m):
        acc += a[d] * b[d]
    return acc


cdef inline void scaled(const floating* a, double s, floating* out, Py_ssize_t m) noexcept nogil:
    cdef Py_ssize_t d
    for d in range(m):
        out[d] = s * a[d]


cdef class _Workspace:
    """Scratch rows for one triple (eleven (4, n) buffers)."""
    cdef char* buf
    cdef Py_ssize_t row

    def __cinit__(self, Py_ssize_t n, Py_ssize_t itemsize):
        self.row = 4 * n * itemsize
        self.buf = <char*> malloc(11 * self.row)
        if self.buf == NULL:
            raise MemoryError()

    def __dealloc__(self):
        free(self.buf)

    cdef void* slot(self, int i):
        return <void*> (self.buf + i * self.row)


cdef inline double forward_one(const floating* vh, const floating* vt, const floating* vr,
                               const floating* vr1, const floating* vr2,
                               floating* w, floating* w1, floating* w2,
                               floating* a, floating* b, floating* c,
                               bint use1, bint use2, Py_ssize_t n) noexcept nogil:
    cdef const floating* A = vh
    cdef const floating* C = vt
    if use1:
        qnormalize(vr1, w1, n)
        hprod(vh, w1, a, n)
        A = a
    qnormalize(vr, w, n)
    hprod(A, w, b, n)
    if use2:
        qnormalize(vr2, w2, n)
        hprod(vt, w2, c, n)
        C = c
    return qdot(b, C, 4 * n)


cdef inline void backward_one(const floating* vh, const floating* vt, const floating* vr,
                              const floating* vr1, const floating* vr2,
                              floating* w, floating* w1, floating* w2,
                              floating* a, floating* b, floating* c,
                              floating* ga, floating* gb, floating* gc,
                              floating* tmp, floating* tmp2,
                              double u, bint use1, bint use2, Py_ssize_t n,
                              floating* gh, floating* gt, floating* grel,
                              floating* grot1, floating* grot2) noexcept nogil:
    cdef const floating* A = a if use1 else vh
    cdef const floating* C = c if use2 else vt
    cdef Py_ssize_t m = 4 * n
    scaled(C, u, gb, m)
    scaled(b, u, gc, m)
    if use2:
        conj_into(w2, tmp, n)
        hprod(gc, tmp, gt, n)
        conj_into(vt, tmp, n)
        hprod(tmp, gc, tmp2, n)
        qnormalize_backward(vr2, tmp2, grot2, n)
    else:
        scaled(gc, 1.0, gt, m)
    conj_into(w, tmp, n)
    hprod(gb, tmp, ga, n)
    conj_into(A, tmp, n)
    hprod(tmp, gb, tmp2, n)
    qnormalize_backward(vr, tmp2, grel, n)
    if use1:
        conj_into(w1, tmp, n)
        hprod(ga, tmp, gh, n)
        conj_into(vh, tmp, n)
        hprod(tmp, ga, tmp2, n)
        qnormalize_backward(vr1, tmp2, grot1, n)
    else:
        scaled(ga, 1.0, gh, m)


def score_triples(const floating[:, :, ::1] ent, const floating[:, :, ::1] rel,
                  const floating[:, :, ::1] rot1, const floating[:, :, ::1] rot2,
                  const Py_ssize_t[::1] h, const Py_ssize_t[::1] r, const Py_ssize_t[::1] t,
                  bint use1, bint use2):
    cdef Py_ssize_t n = ent.shape[2], B = h.shape[0], i
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty(B, dtype=dtype)
    cdef floating[::1] out = out_arr
    ws = _Workspace(n, sizeof(floating))
    cdef _Workspace W = ws
    cdef floating* w = <floating*> W.slot(0)
    cdef floating* w1 = <floating*> W.slot(1)
    cdef floating* w2 = <floating*> W.slot(2)
    cdef floating* a = <floating*> W.slot(3)
    cdef floating* b = <floating*> W.slot(4)
    cdef floating* c = <floating*> W.slot(5)
    with nogil:
        for i in range(B):
            out[i] = <floating> forward_one(&ent[h[i], 0, 0], &ent[t[i], 0, 0], &rel[r[i], 0, 0],
                                            &rot1[r[i], 0, 0], &rot2[r[i], 0, 0],
                                            w, w1, w2, a, b, c, use1, use2, n)
    return out_arr


def score_candidates(const floating[:, :, ::1] ent, const floating[:, :, ::1] rel,
                     const floating[:, :, ::1] rot1, const floating[:, :, ::1] rot2,
                     Py_ssize_t h, Py_ssize_t r, Py_ssize_t t, int side, bint use1, bint use2):
    """Score every entity substituted on ``side`` (0 head, 1 tail).

    The fixed side's rotations are computed once outside the entity loop.
    """
    cdef Py_ssize_t n = ent.shape[2], E = ent.shape[0], e
    cdef Py_ssize_t m = 4 * n
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty(E, dtype=dtype)
    cdef floating[::1] out = out_arr
    ws = _Workspace(n, sizeof(floating))
    cdef _Workspace W = ws
    cdef floating* w = <floating*> W.slot(0)
    cdef floating* w1 = <floating*> W.slot(1)
    cdef floating* w2 = <floating*> W.slot(2)
    cdef floating* a = <floating*> W.slot(3)
    cdef floating* b = <floating*> W.slot(4)
    cdef floating* c = <floating*> W.slot(5)
    cdef const floating* A
    cdef const floating* C
    with nogil:
        qnormalize(&rel[r, 0, 0], w, n)
        if use1:
            qnormalize(&rot1[r, 0, 0], w1, n)
        if use2:
            qnormalize(&rot2[r, 0, 0], w2, n)
        if side == 1:
            A = &ent[h, 0, 0]
            if use1:
                hprod(A, w1, a, n)
                A = a
            hprod(A, w, b, n)
            for e in range(E):
                C = &ent[e, 0, 0]
                if use2:
                    hprod(C, w2, c, n)
                    C = c
                out[e] = <floating> qdot(b, C, m)
        else:
            C = &ent[t, 0, 0]
            if use2:
                hprod(C, w2, c, n)
                C = c
            for e in range(E):
                A = &ent[e, 0, 0]
                if use1:
                    hprod(A, w1, a, n)
                    A = a
                hprod(A, w, b, n)
                out[e] = <floating> qdot(b, C, m)
    return out_arr


def _grad_loop(const floating[:, :, ::1] ent, const floating[:, :, ::1] rel,
               const floating[:, :, ::1] rot1, const floating[:, :, ::1] rot2,
               const Py_ssize_t[::1] h, const Py_ssize_t[::1] r, const Py_ssize_t[::1] t,
               const floating[::1] coef, bint logistic, bint use1, bint use2):
    # coef holds upstream gradients, or labels when ``logistic`` is set
    cdef Py_ssize_t n = ent.shape[2], B = h.shape[0], i
    dtype = np.float32 if floating is float else np.float64
    scores_arr = np.empty(B, dtype=dtype)
    losses_arr = np.zeros(B, dtype=dtype)
    grads = [np.zeros((B, 4, n), dtype=dtype) for _ in range(5)]
    cdef floating[::1] scores = scores_arr
    cdef floating[::1] losses = losses_arr
    cdef floating[:, :, ::1] gh = grads[0]
    cdef floating[:, :, ::1] gt = grads[1]
    cdef floating[:, :, ::1] grel = grads[2]
    cdef floating[:, :, ::1] grot1 = grads[3]
    cdef floating[:, :, ::1] grot2 = grads[4]
    ws = _Workspace(n, sizeof(floating))
    cdef _Workspace W = ws
    cdef floating* w = <floating*> W.slot(0)
    cdef floating* w1 = <floating*> W.slot(1)
    cdef floating* w2 = <floating*> W.slot(2)
    cdef floating* a = <floating*> W.slot(3)
    cdef floating* b = <floating*> W.slot(4)
    cdef floating* c = <floating*> W.slot(5)
    cdef floating* ga = <floating*> W.slot(6)
    cdef floating* gb = <floating*> W.slot(7)
    cdef floating* gc = <floating*> W.slot(8)
    cdef floating* tmp = <floating*> W.slot(9)
    cdef floating* tmp2 = <floating*> W.slot(10)
    cdef double f, u, z, sig
    with nogil:
        for i in range(B):
            f = forward_one(&ent[h[i], 0, 0], &ent[t[i], 0, 0], &rel[r[i], 0, 0],
                            &rot1[r[i], 0, 0], &rot2[r[i], 0, 0],
                            w, w1, w2, a, b, c, use1, use2, n)
            scores[i] = <floating> f
            if logistic:
                f = <double> scores[i]
                z = -coef[i] * f
                if z > 0:
                    losses[i] = <floating> (z + log1p(exp(-z)))
                    sig = 1.0 / (1.0 + exp(-z))
                else:
                    losses[i] = <floating> log1p(exp(z))
                    sig = exp(z) / (1.0 + exp(z))
                u = -coef[i] * sig
            else:
                u = coef[i]
            backward_one(&ent[h[i], 0, 0], &ent[t[i], 0, 0], &rel[r[i], 0, 0],
                         &rot1[r[i], 0, 0], &rot2[r[i], 0, 0],
                         w, w1, w2, a, b, c, ga, gb, gc, tmp, tmp2,
                         u, use1, use2, n,
                         &gh[i, 0, 0], &gt[i, 0, 0], &grel[i, 0, 0], &grot1[i, 0, 0], &grot2[i, 0, 0])
    return scores_arr, losses_arr, grads


def score_grad(ent, rel, rot1, rot2, h, r, t, upstream, use1, use2):
    upstream = np.ascontiguousarray(upstream, dtype=ent.dtype)
    _, _, grads = _grad_loop(ent, rel, rot1, rot2, h, r, t, upstream, False, use1, use2)
    return tuple(grads)


def logistic_grad(ent, rel, rot1, rot2, h, r, t, labels, use1, use2):
    labels = np.ascontiguousarray(labels, dtype=ent.dtype)
    scores, losses, grads = _grad_loop(ent, rel, rot1, rot2, h, r, t, labels, True, use1, use2)
    return (scores, losses) + tuple(grads)
