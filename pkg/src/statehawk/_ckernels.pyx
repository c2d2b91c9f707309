# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the loops in ``_pykernels``; same signatures."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, tanh

cnp.import_array()


def ar_recursion(states, coeffs, noise, init):
    cdef long[:] s = np.ascontiguousarray(states, dtype=np.int64)
    cdef double[:, :] c = np.ascontiguousarray(coeffs, dtype=np.float64)
    cdef double[:] eps = np.ascontiguousarray(noise, dtype=np.float64)
    cdef Py_ssize_t T = s.shape[0], P = c.shape[1], t, p
    out = np.empty(T)
    cdef double[:] x = out
    cdef double acc
    init_arr = np.asarray(init, dtype=np.float64)
    for t in range(P):
        x[t] = init_arr[t]
    for t in range(P, T):
        acc = eps[t]
        for p in range(P):
            acc += c[s[t], p] * x[t - 1 - p]
        x[t] = acc
    return out


def hmm_forward(logB, A, pi):
    lb = np.ascontiguousarray(logB, dtype=np.float64)
    shift_arr = lb.max(axis=1)
    Barr = np.exp(lb - shift_arr[:, None])
    cdef double[:, :] B = Barr
    cdef double[:] shift = shift_arr
    cdef double[:, :] a = np.ascontiguousarray(A, dtype=np.float64)
    cdef double[:] p0 = np.ascontiguousarray(pi, dtype=np.float64)
    cdef Py_ssize_t T = B.shape[0], m = B.shape[1], t, i, j
    alpha_arr = np.empty((T, m))
    ls_arr = np.empty(T)
    cdef double[:, :] alpha = alpha_arr
    cdef double[:] ls = ls_arr
    cdef double c, acc
    c = 0.0
    for j in range(m):
        alpha[0, j] = p0[j] * B[0, j]
        c += alpha[0, j]
    for j in range(m):
        alpha[0, j] /= c
    ls[0] = log(c) + shift[0]
    for t in range(1, T):
        c = 0.0
        for j in range(m):
            acc = 0.0
            for i in range(m):
                acc += alpha[t - 1, i] * a[i, j]
            alpha[t, j] = acc * B[t, j]
            c += alpha[t, j]
        for j in range(m):
            alpha[t, j] /= c
        ls[t] = log(c) + shift[t]
    return alpha_arr, ls_arr


def hmm_backward(logB, A, log_scale):
    lb = np.ascontiguousarray(logB, dtype=np.float64)
    shift_arr = lb.max(axis=1)
    Barr = np.exp(lb - shift_arr[:, None])
    carr = np.exp(np.asarray(log_scale, dtype=np.float64) - shift_arr)
    cdef double[:, :] B = Barr
    cdef double[:] c = carr
    cdef double[:, :] a = np.ascontiguousarray(A, dtype=np.float64)
    cdef Py_ssize_t T = B.shape[0], m = B.shape[1], t, i, j
    beta_arr = np.empty((T, m))
    cdef double[:, :] beta = beta_arr
    cdef double acc
    for j in range(m):
        beta[T - 1, j] = 1.0
    for t in range(T - 2, -1, -1):
        for i in range(m):
            acc = 0.0
            for j in range(m):
                acc += a[i, j] * B[t + 1, j] * beta[t + 1, j]
            beta[t, i] = acc / c[t + 1]
    return beta_arr


def viterbi(logB, logA, logpi):
    cdef double[:, :] lb = np.ascontiguousarray(logB, dtype=np.float64)
    cdef double[:, :] la = np.ascontiguousarray(logA, dtype=np.float64)
    cdef double[:] lp = np.ascontiguousarray(logpi, dtype=np.float64)
    cdef Py_ssize_t T = lb.shape[0], m = lb.shape[1], t, i, j, arg
    delta_arr = np.empty(m)
    nxt_arr = np.empty(m)
    back_arr = np.zeros((T, m), dtype=np.int64)
    path_arr = np.empty(T, dtype=np.int64)
    cdef double[:] delta = delta_arr
    cdef double[:] nxt = nxt_arr
    cdef long[:, :] back = back_arr
    cdef long[:] path = path_arr
    cdef double best, v
    for j in range(m):
        delta[j] = lp[j] + lb[0, j]
    for t in range(1, T):
        for j in range(m):
            best = delta[0] + la[0, j]
            arg = 0
            for i in range(1, m):
                v = delta[i] + la[i, j]
                if v > best:
                    best = v
                    arg = i
            nxt[j] = best + lb[t, j]
            back[t, j] = arg
        for j in range(m):
            delta[j] = nxt[j]
    best = delta[0]
    arg = 0
    for j in range(1, m):
        if delta[j] > best:
            best = delta[j]
            arg = j
    path[T - 1] = arg
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path_arr


def gae(rewards, values, dones, bootstrap, double gamma, double lam):
    cdef double[:] r = np.ascontiguousarray(rewards, dtype=np.float64)
    cdef double[:] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef double[:] d = np.ascontiguousarray(dones, dtype=np.float64)
    cdef Py_ssize_t T = r.shape[0], t
    out = np.empty(T)
    cdef double[:] adv = out
    cdef double nxt_adv = 0.0, nxt_val = bootstrap, live, delta
    for t in range(T - 1, -1, -1):
        live = 1.0 - d[t]
        delta = r[t] + gamma * live * nxt_val - v[t]
        nxt_adv = delta + gamma * lam * live * nxt_adv
        adv[t] = nxt_adv
        nxt_val = v[t]
    return out


def run_lengths(actions):
    cdef long[:] a = np.ascontiguousarray(actions, dtype=np.int64)
    cdef Py_ssize_t T = a.shape[0], t
    out = np.empty(T, dtype=np.int64)
    cdef long[:] c = out
    for t in range(T):
        if t > 0 and a[t] == a[t - 1]:
            c[t] = c[t - 1] + 1
        else:
            c[t] = 1
    return out


def policy_rollout(hist, err, uniforms, W1, b1, W2, b2, W3, b3, int T1, bint greedy, double cap=0.0):
    cdef double[:, :] H = np.ascontiguousarray(hist, dtype=np.float64)
    cdef double[:, :] E = np.ascontiguousarray(err, dtype=np.float64)
    cdef double[:] U = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef double[:, :] w1 = np.ascontiguousarray(W1, dtype=np.float64)
    cdef double[:] c1 = np.ascontiguousarray(b1, dtype=np.float64)
    cdef double[:, :] w2 = np.ascontiguousarray(W2, dtype=np.float64)
    cdef double[:] c2 = np.ascontiguousarray(b2, dtype=np.float64)
    cdef double[:, :] w3 = np.ascontiguousarray(W3, dtype=np.float64)
    cdef double[:] c3 = np.ascontiguousarray(b3, dtype=np.float64)
    cdef Py_ssize_t T = H.shape[0], T0 = H.shape[1], m = E.shape[1]
    cdef Py_ssize_t D = T0 + 2 * T1 * m
    cdef Py_ssize_t n1 = w1.shape[0], n2 = w2.shape[0]
    cdef Py_ssize_t k, r, j, i, src, base, a
    obs_arr = np.zeros((T, D))
    probs_arr = np.zeros((T, m))
    act_arr = np.zeros(T, dtype=np.int64)
    logp_arr = np.zeros(T)
    cdef double[:, :] obs = obs_arr
    cdef double[:, :] probs = probs_arr
    cdef long[:] actions = act_arr
    cdef double[:] logp = logp_arr
    cdef double[:] h1 = np.empty(n1)
    cdef double[:] h2 = np.empty(n2)
    cdef double[:] z = np.empty(m)
    cdef double acc, zmax, tot, best
    for k in range(T):
        for j in range(T0):
            obs[k, j] = H[k, j]
        for r in range(T1):
            src = k - T1 + r
            if src >= 0:
                base = T0 + r * m
                for j in range(m):
                    obs[k, base + j] = probs[src, j]
        for r in range(T1):
            src = k - T1 + 1 + r
            if src >= 0:
                base = T0 + T1 * m + r * m
                for j in range(m):
                    obs[k, base + j] = E[src, j]
        for i in range(n1):
            acc = c1[i]
            for j in range(D):
                acc += w1[i, j] * obs[k, j]
            h1[i] = tanh(acc)
        for i in range(n2):
            acc = c2[i]
            for j in range(n1):
                acc += w2[i, j] * h1[j]
            h2[i] = tanh(acc)
        zmax = -1e300
        for i in range(m):
            acc = c3[i]
            for j in range(n2):
                acc += w3[i, j] * h2[j]
            if cap > 0:
                acc = cap * tanh(acc / cap)
            z[i] = acc
            if acc > zmax:
                zmax = acc
        tot = 0.0
        for i in range(m):
            z[i] = exp(z[i] - zmax)
            tot += z[i]
        for i in range(m):
            probs[k, i] = z[i] / tot
        if greedy:
            a = 0
            best = probs[k, 0]
            for i in range(1, m):
                if probs[k, i] > best:
                    best = probs[k, i]
                    a = i
        else:
            a = m - 1
            acc = 0.0
            for i in range(m):
                acc += probs[k, i]
                if U[k] < acc:
                    a = i
                    break
        actions[k] = a
        logp[k] = log(probs[k, a])
    return obs_arr, probs_arr, act_arr, logp_arr
