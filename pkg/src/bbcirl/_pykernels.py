"""Pure-Python/numpy implementations of the hot loops.

Same signatures and semantics as the compiled ``_ckernels`` module. Networks
are passed as a flat float64 parameter vector plus the layer-size vector (see
:mod:`bbcirl.tinynn` for the layout); inputs are always one-hot states, given
as integer indices. Parameters are updated in place.
"""
from __future__ import annotations

import math

import numpy as np


def _layers(params, sizes):
    out, off = [], 0
    for i in range(len(sizes) - 1):
        n_in, n_out = int(sizes[i]), int(sizes[i + 1])
        W = params[off:off + n_in * n_out].reshape(n_out, n_in)
        off += n_in * n_out
        b = params[off:off + n_out]
        off += n_out
        out.append((W, b))
    return out


def _forward(layers, s):
    """Forward pass for one-hot state ``s``; returns output and hidden cache."""
    W0, b0 = layers[0]
    z = W0[:, s] + b0
    hidden = []
    for W, b in layers[1:]:
        h = np.maximum(z, 0.0)
        hidden.append((h, z))
        z = W @ h + b
    return z, hidden


def _softmax(z):
    e = np.exp(z - z.max())
    return e / e.sum()


def _apply_backward(layers, hidden, s, delta, scale):
    """params += scale * d(output . delta)/d(params), for one-hot input ``s``.

    All layer deltas are computed before any parameter changes.
    """
    deltas = [delta]
    for i in range(len(layers) - 1, 0, -1):
        W, _ = layers[i]
        h, z = hidden[i - 1]
        deltas.append((W.T @ deltas[-1]) * (z > 0))
    deltas.reverse()
    for i, (W, b) in enumerate(layers):
        d = deltas[i]
        if i == 0:
            W[:, s] += scale * d
        else:
            W += scale * np.outer(d, hidden[i - 1][0])
        b += scale * d


def _sample(p, u):
    c = 0.0
    for a in range(len(p) - 1):
        c += p[a]
        if u < c:
            return a
    return len(p) - 1


def rollout(params, sizes, trans, arrival, start, goal, terminal_goal, uniforms,
            alpha, gamma, update, states, actions, nexts, lengths, returns):
    """Run ``uniforms.shape[0]`` episodes of at most ``uniforms.shape[1]``
    steps. With ``update`` set, each finished episode is followed by the
    per-step REINFORCE update ``params += alpha * gamma**t * r_t * score_t``,
    applied in timestep order. Returns -1, or the index of the first episode
    after which a parameter became non-finite."""
    layers = _layers(params, sizes)
    n_ep, horizon = uniforms.shape
    for e in range(n_ep):
        s = start
        total = 0.0
        length = horizon
        for t in range(horizon):
            z, _ = _forward(layers, s)
            a = _sample(_softmax(z), uniforms[e, t])
            s2 = int(trans[s, a])
            states[e, t], actions[e, t], nexts[e, t] = s, a, s2
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
                s, a = int(states[e, t]), int(actions[e, t])
                z, hidden = _forward(layers, s)
                d = -_softmax(z)
                d[a] += 1.0
                _apply_backward(layers, hidden, s, d, alpha * g_t * arrival[nexts[e, t]])
                g_t *= gamma
            if not np.all(np.isfinite(params)):
                return e
    return -1


def clone_fit(params, sizes, states, targets, epochs, lr):
    """Full-batch gradient descent on sum_s mean_a (pi(a|s) - target[s, a])**2.

    ``states`` must be distinct. Returns the loss after the final epoch.
    """
    layers = _layers(params, sizes)
    states = np.asarray(states)
    n_act = targets.shape[1]
    for _ in range(epochs):
        zs, cache = _batch_forward(layers, states)
        p = _batch_softmax(zs)
        dp = (2.0 / n_act) * (p - targets)
        dz = p * (dp - (p * dp).sum(axis=1, keepdims=True))
        _batch_backward(layers, cache, states, dz, -lr)
    zs, _ = _batch_forward(layers, states)
    p = _batch_softmax(zs)
    return float(((p - targets) ** 2).mean(axis=1).sum())


def beta_fit(params, sizes, nxt, A, C, D, draws, lr, losses):
    """SGD on a scalar network ``beta``. Each row of ``draws`` is one batch
    of sample indices; the batch loss is
    sum_i A[i]*beta(nxt[i])**2 - 2*C[i]*beta(nxt[i]) + D[i], followed by one
    descent step. Returns -1 or the first batch with a non-finite loss."""
    layers = _layers(params, sizes)
    for f in range(draws.shape[0]):
        idx = draws[f]
        st = nxt[idx]
        zs, cache = _batch_forward(layers, st)
        out = zs[:, 0]
        a, c = A[idx], C[idx]
        # each term is a squared norm; clamp rounding below zero
        loss = float(np.sum(np.maximum(a * out * out - 2.0 * c * out + D[idx], 0.0)))
        losses[f] = loss
        if not math.isfinite(loss):
            return f
        dz = (2.0 * (a * out - c))[:, None]
        _batch_backward(layers, cache, st, dz, -lr)
    return -1


def _batch_forward(layers, states):
    W0, b0 = layers[0]
    z = W0[:, states].T + b0
    cache = []
    for W, b in layers[1:]:
        h = np.maximum(z, 0.0)
        cache.append((h, z))
        z = h @ W.T + b
    return z, cache


def _batch_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _batch_backward(layers, cache, states, dz, scale):
    deltas = [dz]
    for i in range(len(layers) - 1, 0, -1):
        W, _ = layers[i]
        h, z = cache[i - 1]
        deltas.append((deltas[-1] @ W) * (z > 0))
    deltas.reverse()
    for i, (W, b) in enumerate(layers):
        d = deltas[i]
        if i == 0:
            gW = np.zeros_like(W)
            np.add.at(gW.T, states, d)
            W += scale * gW
        else:
            W += scale * (d.T @ cache[i - 1][0])
        b += scale * d.sum(axis=0)
