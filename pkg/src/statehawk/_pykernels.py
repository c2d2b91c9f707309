"""Pure-Python reference implementations of the hot loops.

These mirror ``_ckernels.pyx`` operation for operation and are used when
the compiled module is unavailable or ``STATEHAWK_PURE=1`` is set.
"""

import math

import numpy as np


def ar_recursion(states, coeffs, noise, init):
    states = np.asarray(states, dtype=np.int64)
    coeffs = np.asarray(coeffs, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    T = states.shape[0]
    P = coeffs.shape[1]
    x = np.empty(T)
    x[:P] = init
    for t in range(P, T):
        acc = noise[t]
        row = coeffs[states[t]]
        for p in range(P):
            acc += row[p] * x[t - 1 - p]
        x[t] = acc
    return x


def hmm_forward(logB, A, pi):
    """Scaled forward pass.  Returns (alpha, log_scale) with normalized alpha rows."""
    logB = np.asarray(logB, dtype=np.float64)
    T, m = logB.shape
    alpha = np.empty((T, m))
    log_scale = np.empty(T)
    shift = logB.max(axis=1)
    B = np.exp(logB - shift[:, None])
    a = pi * B[0]
    c = a.sum()
    alpha[0] = a / c
    log_scale[0] = math.log(c) + shift[0]
    for t in range(1, T):
        a = (alpha[t - 1] @ A) * B[t]
        c = a.sum()
        alpha[t] = a / c
        log_scale[t] = math.log(c) + shift[t]
    return alpha, log_scale


def hmm_backward(logB, A, log_scale):
    logB = np.asarray(logB, dtype=np.float64)
    T, m = logB.shape
    shift = logB.max(axis=1)
    B = np.exp(logB - shift[:, None])
    c = np.exp(log_scale - shift)
    beta = np.empty((T, m))
    beta[T - 1] = 1.0
    for t in range(T - 2, -1, -1):
        beta[t] = (A @ (B[t + 1] * beta[t + 1])) / c[t + 1]
    return beta


def viterbi(logB, logA, logpi):
    logB = np.asarray(logB, dtype=np.float64)
    T, m = logB.shape
    delta = logpi + logB[0]
    back = np.zeros((T, m), dtype=np.int64)
    for t in range(1, T):
        nxt = np.empty(m)
        for j in range(m):
            best, arg = delta[0] + logA[0, j], 0
            for i in range(1, m):
                v = delta[i] + logA[i, j]
                if v > best:
                    best, arg = v, i
            nxt[j] = best + logB[t, j]
            back[t, j] = arg
        delta = nxt
    path = np.empty(T, dtype=np.int64)
    best, arg = delta[0], 0
    for j in range(1, m):
        if delta[j] > best:
            best, arg = delta[j], j
    path[T - 1] = arg
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path


def gae(rewards, values, dones, bootstrap, gamma, lam):
    T = len(rewards)
    adv = np.empty(T)
    nxt_adv = 0.0
    nxt_val = bootstrap
    for t in range(T - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * live * nxt_val - values[t]
        nxt_adv = delta + gamma * lam * live * nxt_adv
        adv[t] = nxt_adv
        nxt_val = values[t]
    return adv


def run_lengths(actions):
    """c_t: length of the run of identical actions ending at t (>= 1)."""
    actions = np.asarray(actions)
    out = np.empty(len(actions), dtype=np.int64)
    c = 0
    for t in range(len(actions)):
        c = c + 1 if t > 0 and actions[t] == actions[t - 1] else 1
        out[t] = c
    return out


def policy_rollout(hist, err, uniforms, W1, b1, W2, b2, W3, b3, T1, greedy, cap=0.0):
    """Sequential stage-one rollout of a tanh MLP policy.

    Observation at step k is ``[hist[k] | probs[k-T1:k] | err[k-T1+1:k+1]]``
    with rows before the episode start zero-filled.  Sampling uses the
    inverse CDF of ``uniforms[k]``; greedy mode takes the first argmax.
    A positive ``cap`` bounds the logits to ``cap * tanh(z / cap)``.
    """
    hist = np.asarray(hist, dtype=np.float64)
    err = np.asarray(err, dtype=np.float64)
    T, T0 = hist.shape
    m = err.shape[1]
    D = T0 + 2 * T1 * m
    obs = np.zeros((T, D))
    probs = np.zeros((T, m))
    actions = np.zeros(T, dtype=np.int64)
    logp = np.zeros(T)
    for k in range(T):
        o = obs[k]
        o[:T0] = hist[k]
        base = T0
        for r in range(T1):
            src = k - T1 + r
            if src >= 0:
                o[base + r * m : base + (r + 1) * m] = probs[src]
        base = T0 + T1 * m
        for r in range(T1):
            src = k - T1 + 1 + r
            if src >= 0:
                o[base + r * m : base + (r + 1) * m] = err[src]
        h1 = np.tanh(W1 @ o + b1)
        h2 = np.tanh(W2 @ h1 + b2)
        z = W3 @ h2 + b3
        if cap > 0:
            z = cap * np.tanh(z / cap)
        z = z - z.max()
        e = np.exp(z)
        p = e / e.sum()
        probs[k] = p
        if greedy:
            a = int(np.argmax(p))
        else:
            a = m - 1
            acc = 0.0
            for j in range(m):
                acc += p[j]
                if uniforms[k] < acc:
                    a = j
                    break
        actions[k] = a
        logp[k] = math.log(p[a])
    return obs, probs, actions, logp
