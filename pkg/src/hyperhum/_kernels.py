"""Compiled time loops for :mod:`hyperhum.solver`.

Each kernel performs exactly the arithmetic of the corresponding numpy
single-step method in ``Discretization`` (``step``, ``step_transpose``,
``dual_step``); the numpy versions are kept as the readable reference and
the test suite checks that both agree.

``mode``: 0 no coupling, 1 w-form ``C(x) w``, 2 u-form ``S(x) u_+(t, 0)``.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _primal_step(w, new, u, r, c, B, k, mode, Cx, Sx, dt):
    n, N1 = w.shape
    m = n - k
    for i in range(k):
        g = 0.0
        for b in range(m):
            g += B[i, b] * w[k + b, 0]
        new[i, 0] = c[i, 0] * w[i, 0] + r[i, 0] * g
        for j in range(1, N1):
            new[i, j] = c[i, j] * w[i, j] + r[i, j] * w[i, j - 1]
    for i in range(k, n):
        for j in range(N1 - 1):
            new[i, j] = c[i, j] * w[i, j] + r[i, j] * w[i, j + 1]
        new[i, N1 - 1] = c[i, N1 - 1] * w[i, N1 - 1] + r[i, N1 - 1] * u[i - k]
    if mode == 1:
        for j in range(N1):
            for a in range(n):
                acc = 0.0
                for b in range(n):
                    acc += Cx[j, a, b] * w[b, j]
                new[a, j] += dt * acc
    elif mode == 2:
        for j in range(N1):
            for a in range(n):
                acc = 0.0
                for b in range(m):
                    acc += Sx[j, a, b] * w[k + b, 0]
                new[a, j] += dt * acc


@njit(cache=True)
def run_primal(w0, U, r, c, B, k, mode, Cx, Sx, dt, traj, store):
    w = w0.copy()
    new = np.empty_like(w)
    nt = U.shape[1] - 1
    if store:
        traj[0] = w
    for s in range(nt):
        _primal_step(w, new, U[:, s], r, c, B, k, mode, Cx, Sx, dt)
        w, new = new, w
        if store:
            traj[s + 1] = w
    return w


@njit(cache=True)
def run_adjoint(p0, nt, r, c, B, k, mode, Cx, Sx, dt):
    n, N1 = p0.shape
    m = n - k
    q = p0.copy()
    p = np.empty_like(q)
    grad = np.zeros((m, nt + 1))
    for s in range(nt - 1, -1, -1):
        for i in range(k):
            for j in range(N1 - 1):
                p[i, j] = c[i, j] * q[i, j] + r[i, j + 1] * q[i, j + 1]
            p[i, N1 - 1] = c[i, N1 - 1] * q[i, N1 - 1]
        for i in range(k, n):
            for j in range(1, N1):
                p[i, j] = c[i, j] * q[i, j] + r[i, j - 1] * q[i, j - 1]
            acc = 0.0
            for a in range(k):
                acc += B[a, i - k] * (r[a, 0] * q[a, 0])
            p[i, 0] = c[i, 0] * q[i, 0] + acc
            grad[i - k, s] = r[i, N1 - 1] * q[i, N1 - 1]
        if mode == 1:
            for j in range(N1):
                for b in range(n):
                    acc = 0.0
                    for a in range(n):
                        acc += Cx[j, a, b] * q[a, j]
                    p[b, j] += dt * acc
        elif mode == 2:
            for b in range(m):
                acc = 0.0
                for j in range(N1):
                    for a in range(n):
                        acc += Sx[j, a, b] * q[a, j]
                p[k + b, 0] += dt * acc
        q, p = p, q
    return q, grad


@njit(cache=True)
def run_dual(vT, nt, r, c, B, k, lam, dlam, variable, wx, mode, Cx, Sx, dt):
    n, N1 = vT.shape
    m = n - k
    v = vT.copy()
    new = np.empty_like(v)
    trace = np.empty((m, nt + 1))
    for i in range(m):
        trace[i, nt] = lam[k + i, N1 - 1] * v[k + i, N1 - 1]
    ghost = np.empty(m)
    for s in range(nt - 1, -1, -1):
        for b in range(m):
            acc = 0.0
            for a in range(k):
                acc += B[a, b] * (lam[a, 0] * v[a, 0])
            if mode == 2:
                for j in range(N1):
                    for a in range(n):
                        acc += Sx[j, a, b] * v[a, j] * wx[j]
            ghost[b] = acc / lam[k + b, 0]
        for i in range(k):
            for j in range(N1 - 1):
                new[i, j] = c[i, j] * v[i, j] + r[i, j] * v[i, j + 1]
            new[i, N1 - 1] = c[i, N1 - 1] * v[i, N1 - 1]
        for i in range(k, n):
            for j in range(1, N1):
                new[i, j] = c[i, j] * v[i, j] + r[i, j] * v[i, j - 1]
            new[i, 0] = c[i, 0] * v[i, 0] + r[i, 0] * ghost[i - k]
        if variable:
            for i in range(k):
                for j in range(N1):
                    new[i, j] += dt * dlam[i, j] * v[i, j]
            for i in range(k, n):
                for j in range(N1):
                    new[i, j] -= dt * dlam[i, j] * v[i, j]
        if mode == 1:
            for j in range(N1):
                for b in range(n):
                    acc = 0.0
                    for a in range(n):
                        acc += Cx[j, a, b] * v[a, j]
                    new[b, j] += dt * acc
        v, new = new, v
        for i in range(m):
            trace[i, s] = lam[k + i, N1 - 1] * v[k + i, N1 - 1]
    return v, trace
