# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Semantics match ``bbcirl._pykernels`` exactly; see
that module for the contracts."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, isfinite

cnp.import_array()

ctypedef cnp.float64_t f8
ctypedef cnp.int64_t i8


cdef struct Net:
    f8* p
    i8* sizes
    i8* w_off
    i8* b_off
    int n_layers
    int width       # widest layer, for scratch rows
    f8* z           # pre-activations, n_layers x width
    f8* h           # post-activations, n_layers x width
    f8* delta       # per-layer deltas, n_layers x width


cdef class _Scratch:
    """Owns the offset tables and scratch rows for one network shape."""
    cdef i8[::1] w_off, b_off, sizes
    cdef f8[::1] z, h, delta
    cdef int n_layers, width

    def __init__(self, sizes):
        cdef int i, off = 0
        self.sizes = np.ascontiguousarray(sizes, dtype=np.int64)
        self.n_layers = len(sizes) - 1
        self.width = int(max(sizes))
        self.w_off = np.zeros(self.n_layers, dtype=np.int64)
        self.b_off = np.zeros(self.n_layers, dtype=np.int64)
        for i in range(self.n_layers):
            self.w_off[i] = off
            off += self.sizes[i] * self.sizes[i + 1]
            self.b_off[i] = off
            off += self.sizes[i + 1]
        self.z = np.zeros(self.n_layers * self.width)
        self.h = np.zeros(self.n_layers * self.width)
        self.delta = np.zeros(self.n_layers * self.width)


cdef Net _net(_Scratch sc, f8[::1] params):
    cdef Net n
    n.p = &params[0]
    n.sizes = &sc.sizes[0]
    n.w_off = &sc.w_off[0]
    n.b_off = &sc.b_off[0]
    n.n_layers = sc.n_layers
    n.width = sc.width
    n.z = &sc.z[0]
    n.h = &sc.h[0]
    n.delta = &sc.delta[0]
    return n


cdef inline void _forward(Net* n, int s) noexcept nogil:
    """Fill z/h rows for one-hot input ``s``. The output layer's z row is the
    network output; h of hidden layers holds ReLU(z)."""
    cdef int l, j, k, n_in, n_out
    cdef f8 acc
    cdef f8* W
    cdef f8* b
    cdef f8* zin
    cdef f8* zl
    n_in = n.sizes[0]
    n_out = n.sizes[1]
    W = n.p + n.w_off[0]
    b = n.p + n.b_off[0]
    zl = n.z
    for j in range(n_out):
        zl[j] = W[j * n_in + s] + b[j]
        n.h[j] = zl[j] if zl[j] > 0 else 0.0
    for l in range(1, n.n_layers):
        n_in = n.sizes[l]
        n_out = n.sizes[l + 1]
        W = n.p + n.w_off[l]
        b = n.p + n.b_off[l]
        zin = n.h + (l - 1) * n.width
        zl = n.z + l * n.width
        for j in range(n_out):
            acc = b[j]
            for k in range(n_in):
                acc += W[j * n_in + k] * zin[k]
            zl[j] = acc
            n.h[l * n.width + j] = acc if acc > 0 else 0.0


cdef inline void _softmax(f8* z, f8* p, int m) noexcept nogil:
    cdef int a
    cdef f8 mx = z[0], tot = 0.0
    for a in range(1, m):
        if z[a] > mx:
            mx = z[a]
    for a in range(m):
        p[a] = exp(z[a] - mx)
        tot += p[a]
    for a in range(m):
        p[a] /= tot


cdef inline void _backprop_deltas(Net* n) noexcept nogil:
    """Given the output delta in the last delta row, fill earlier rows."""
    cdef int l, j, k, n_in, n_out
    cdef f8 acc
    cdef f8* W
    for l in range(n.n_layers - 1, 0, -1):
        n_in = n.sizes[l]
        n_out = n.sizes[l + 1]
        W = n.p + n.w_off[l]
        for k in range(n_in):
            if n.z[(l - 1) * n.width + k] > 0:
                acc = 0.0
                for j in range(n_out):
                    acc += W[j * n_in + k] * n.delta[l * n.width + j]
                n.delta[(l - 1) * n.width + k] = acc
            else:
                n.delta[(l - 1) * n.width + k] = 0.0


cdef inline void _apply(Net* n, f8* target, int s, f8 scale) noexcept nogil:
    """target += scale * gradient described by the delta rows (one-hot ``s``)."""
    cdef int l, j, k, n_in, n_out
    cdef f8 d
    cdef f8* hin
    n_in = n.sizes[0]
    n_out = n.sizes[1]
    for j in range(n_out):
        d = scale * n.delta[j]
        target[n.w_off[0] + j * n_in + s] += d
        target[n.b_off[0] + j] += d
    for l in range(1, n.n_layers):
        n_in = n.sizes[l]
        n_out = n.sizes[l + 1]
        hin = n.h + (l - 1) * n.width
        for j in range(n_out):
            d = scale * n.delta[l * n.width + j]
            for k in range(n_in):
                target[n.w_off[l] + j * n_in + k] += d * hin[k]
            target[n.b_off[l] + j] += d


cdef bint _all_finite(f8* p, Py_ssize_t m) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(m):
        if not isfinite(p[i]):
            return False
    return True


def rollout(f8[::1] params, sizes, const i8[:, ::1] trans, const f8[::1] arrival, int start,
            int goal, bint terminal_goal, const f8[:, ::1] uniforms, double alpha,
            double gamma, bint update, i8[:, ::1] states, i8[:, ::1] actions,
            i8[:, ::1] nexts, i8[::1] lengths, f8[::1] returns):
    cdef _Scratch sc = _Scratch(sizes)
    cdef Net n = _net(sc, params)
    cdef int n_ep = uniforms.shape[0], horizon = uniforms.shape[1]
    cdef int m = n.sizes[n.n_layers]
    cdef int e, t, a, s, s2, length
    cdef int bad = -1
    cdef f8 total, c, u, g_t
    cdef f8* zout
    cdef f8* dout
    cdef f8[::1] prob = np.zeros(m)
    cdef f8* p = &prob[0]
    zout = n.z + (n.n_layers - 1) * n.width
    dout = n.delta + (n.n_layers - 1) * n.width
    with nogil:
        for e in range(n_ep):
            s = start
            total = 0.0
            length = horizon
            for t in range(horizon):
                _forward(&n, s)
                _softmax(zout, p, m)
                u = uniforms[e, t]
                a = m - 1
                c = 0.0
                for s2 in range(m - 1):
                    c += p[s2]
                    if u < c:
                        a = s2
                        break
                s2 = trans[s, a]
                states[e, t] = s
                actions[e, t] = a
                nexts[e, t] = s2
                total += arrival[s2]
                s = s2
                if terminal_goal and s2 == goal:
                    length = t + 1
                    break
            lengths[e] = length
            returns[e] = total
            if update:
                g_t = 1.0
                for t in range(length):
                    s = states[e, t]
                    a = actions[e, t]
                    _forward(&n, s)
                    _softmax(zout, p, m)
                    for s2 in range(m):
                        dout[s2] = -p[s2]
                    dout[a] += 1.0
                    _backprop_deltas(&n)
                    _apply(&n, n.p, s, alpha * g_t * arrival[nexts[e, t]])
                    g_t *= gamma
                if not _all_finite(n.p, params.shape[0]):
                    bad = e
                    break
    return bad


def clone_fit(f8[::1] params, sizes, const i8[::1] states, const f8[:, ::1] targets, int epochs, double lr):
    cdef _Scratch sc = _Scratch(sizes)
    cdef Net n = _net(sc, params)
    cdef int m = n.sizes[n.n_layers]
    cdef Py_ssize_t n_s = states.shape[0], P = params.shape[0]
    cdef Py_ssize_t i, k
    cdef int ep, a, s
    cdef f8 dot, loss, diff
    cdef f8[::1] grad_mv = np.zeros(P)
    cdef f8* grad = &grad_mv[0]
    cdef f8[::1] prob = np.zeros(m)
    cdef f8[::1] dprob = np.zeros(m)
    cdef f8* p = &prob[0]
    cdef f8* dp = &dprob[0]
    cdef f8* zout = n.z + (n.n_layers - 1) * n.width
    cdef f8* dout = n.delta + (n.n_layers - 1) * n.width
    with nogil:
        for ep in range(epochs):
            for k in range(P):
                grad[k] = 0.0
            for i in range(n_s):
                s = states[i]
                _forward(&n, s)
                _softmax(zout, p, m)
                dot = 0.0
                for a in range(m):
                    dp[a] = (2.0 / m) * (p[a] - targets[i, a])
                    dot += p[a] * dp[a]
                for a in range(m):
                    dout[a] = p[a] * (dp[a] - dot)
                _backprop_deltas(&n)
                _apply(&n, grad, s, 1.0)
            for k in range(P):
                n.p[k] -= lr * grad[k]
        loss = 0.0
        for i in range(n_s):
            _forward(&n, states[i])
            _softmax(zout, p, m)
            for a in range(m):
                diff = p[a] - targets[i, a]
                loss += diff * diff / m
    return loss


def beta_fit(f8[::1] params, sizes, const i8[::1] nxt, const f8[::1] A, const f8[::1] C,
             const f8[::1] D, const i8[:, ::1] draws, double lr, f8[::1] losses):
    cdef _Scratch sc = _Scratch(sizes)
    cdef Net n = _net(sc, params)
    cdef Py_ssize_t P = params.shape[0], k
    cdef int F = draws.shape[0], Z = draws.shape[1]
    cdef int f, z, j, s
    cdef int bad = -1
    cdef f8 out, loss, q
    cdef f8[::1] grad_mv = np.zeros(P)
    cdef f8* grad = &grad_mv[0]
    cdef f8* zout = n.z + (n.n_layers - 1) * n.width
    cdef f8* dout = n.delta + (n.n_layers - 1) * n.width
    with nogil:
        for f in range(F):
            for k in range(P):
                grad[k] = 0.0
            loss = 0.0
            for z in range(Z):
                j = draws[f, z]
                s = nxt[j]
                _forward(&n, s)
                out = zout[0]
                q = A[j] * out * out - 2.0 * C[j] * out + D[j]
                loss += q if q > 0 else 0.0
                dout[0] = 2.0 * (A[j] * out - C[j])
                _backprop_deltas(&n)
                _apply(&n, grad, s, 1.0)
            losses[f] = loss
            if not isfinite(loss):
                bad = f
                break
            for k in range(P):
                n.p[k] -= lr * grad[k]
    return bad
