"""Compiled interior-point iteration.

Loop-level transcription of the NumPy interior-point loop in ``socp``
(same starting point, scaling, predictor-corrector and stopping rules). The cone programs in
this package are small, so the NumPy version spends most of its time in
per-call overhead; compiling the loop removes it.
"""

from __future__ import annotations

import numpy as np
from numba import njit

OPTIMAL, MAX_ITER, INFEASIBLE = 1, 0, 2


@njit(cache=True, error_model="numpy")
def _tail_norm(u, heads, dims):
    out = np.empty(heads.size)
    for i in range(heads.size):
        acc = 0.0
        for j in range(heads[i] + 1, heads[i] + dims[i]):
            acc += u[j] * u[j]
        out[i] = np.sqrt(acc)
    return out


@njit(cache=True, error_model="numpy")
def _jnorm2(u, heads, dims):
    t = _tail_norm(u, heads, dims)
    out = np.empty(heads.size)
    for i in range(heads.size):
        u0 = u[heads[i]]
        out[i] = (u0 - t[i]) * (u0 + t[i])
    return out


@njit(cache=True, error_model="numpy")
def _interior_shift(u, heads, dims):
    t = _tail_norm(u, heads, dims)
    worst = -np.inf
    for i in range(heads.size):
        worst = max(worst, t[i] - u[heads[i]])
    return worst


@njit(cache=True, error_model="numpy")
def _scaling(s, z, heads, dims):
    """NT point ``w`` (square-root form) and block factors ``beta``."""
    sn = np.sqrt(_jnorm2(s, heads, dims))
    zn = np.sqrt(_jnorm2(z, heads, dims))
    w = np.empty(s.size)
    beta = np.empty(heads.size)
    for i in range(heads.size):
        h0, d = heads[i], dims[i]
        dot = 0.0
        for j in range(h0, h0 + d):
            dot += (s[j] / sn[i]) * (z[j] / zn[i])
        gamma = np.sqrt((1.0 + dot) / 2.0)
        wb0 = (s[h0] / sn[i] + z[h0] / zn[i]) / (2.0 * gamma)
        scale = 1.0 / np.sqrt(2.0 * (wb0 + 1.0))
        w[h0] = (wb0 + 1.0) * scale
        for j in range(h0 + 1, h0 + d):
            w[j] = (s[j] / sn[i] - z[j] / zn[i]) / (2.0 * gamma) * scale
        beta[i] = np.sqrt(sn[i] / zn[i])
    return w, beta


@njit(cache=True, error_model="numpy")
def _apply(w, beta, u, heads, dims, inverse):
    """``W u`` or ``W^{-1} u`` with ``W = beta (2 w w^T - J)``."""
    out = np.empty(u.size)
    for i in range(heads.size):
        h0, d = heads[i], dims[i]
        coef = w[h0] * u[h0]
        sgn = -1.0 if inverse else 1.0
        for j in range(h0 + 1, h0 + d):
            coef += sgn * w[j] * u[j]
        f = 1.0 / beta[i] if inverse else beta[i]
        out[h0] = (2.0 * w[h0] * coef - u[h0]) * f
        for j in range(h0 + 1, h0 + d):
            out[j] = (2.0 * sgn * w[j] * coef + u[j]) * f
    return out


@njit(cache=True, error_model="numpy")
def _apply_inv_matrix(w, beta, G, heads, dims):
    m, p = G.shape
    out = np.empty((m, p))
    for i in range(heads.size):
        h0, d = heads[i], dims[i]
        f = 1.0 / beta[i]
        for col in range(p):
            coef = w[h0] * G[h0, col]
            for j in range(h0 + 1, h0 + d):
                coef -= w[j] * G[j, col]
            out[h0, col] = (2.0 * w[h0] * coef - G[h0, col]) * f
            for j in range(h0 + 1, h0 + d):
                out[j, col] = (-2.0 * w[j] * coef + G[j, col]) * f
    return out


@njit(cache=True, error_model="numpy")
def _prod(u, v, heads, dims):
    out = np.empty(u.size)
    for i in range(heads.size):
        h0, d = heads[i], dims[i]
        acc = 0.0
        for j in range(h0, h0 + d):
            acc += u[j] * v[j]
        for j in range(h0 + 1, h0 + d):
            out[j] = u[h0] * v[j] + v[h0] * u[j]
        out[h0] = acc
    return out


@njit(cache=True, error_model="numpy")
def _solve_prod(lam, r, heads, dims):
    det = _jnorm2(lam, heads, dims)
    out = np.empty(r.size)
    for i in range(heads.size):
        h0, d = heads[i], dims[i]
        l0 = lam[h0]
        lt_r = 0.0
        for j in range(h0 + 1, h0 + d):
            lt_r += lam[j] * r[j]
        x0 = (l0 * r[h0] - lt_r) / det[i]
        for j in range(h0 + 1, h0 + d):
            out[j] = (r[j] - x0 * lam[j]) / l0
        out[h0] = x0
    return out


@njit(cache=True, error_model="numpy")
def _max_step(lam, d1, d2, heads, dims):
    lk = np.sqrt(_jnorm2(lam, heads, dims))
    worst = -np.inf
    for d in (d1, d2):
        for i in range(heads.size):
            h0, n = heads[i], dims[i]
            l = lk[i]
            rho0 = lam[h0] / l * d[h0]
            for j in range(h0 + 1, h0 + n):
                rho0 -= lam[j] / l * d[j]
            rho0 /= l
            factor = (rho0 + d[h0] / l) / (lam[h0] / l + 1.0)
            acc = 0.0
            for j in range(h0 + 1, h0 + n):
                r = d[j] / l - factor * lam[j] / l
                acc += r * r
            worst = max(worst, np.sqrt(acc) - rho0)
    return np.inf if worst <= 0.0 else 1.0 / worst


@njit(cache=True, error_model="numpy")
def _cho_solve(L, r):
    n = r.size
    y = np.empty(n)
    for i in range(n):
        acc = r[i]
        for k in range(i):
            acc -= L[i, k] * y[k]
        y[i] = acc / L[i, i]
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        acc = y[i]
        for k in range(i + 1, n):
            acc -= L[k, i] * x[k]
        x[i] = acc / L[i, i]
    return x


@njit(cache=True, error_model="numpy")
def _lin_solve(L, P, use_chol, r):
    if use_chol:
        return _cho_solve(L, r)
    return P @ r


@njit(cache=True, error_model="numpy")
def _direction(lam, rc, rx, Gs, GsT, Wrz, H, L, P, use_chol, heads, dims):
    u = _solve_prod(lam, rc, heads, dims)
    rhs = -rx - GsT @ (Wrz + u)
    dx = _lin_solve(L, P, use_chol, rhs)
    for _ in range(2):
        dx = dx + _lin_solve(L, P, use_chol, rhs - H @ dx)
    dz_s = Gs @ dx + Wrz + u
    ds_s = u - dz_s
    return dx, ds_s, dz_s


@njit(cache=True, error_model="numpy")
def ipm(c, G, h, heads, dims, tol, max_iter):
    m, p = G.shape
    target = 0.1 * tol
    e = np.zeros(m)
    for i in range(heads.size):
        e[heads[i]] = 1.0

    H0 = G.T @ G + 1e-12 * np.eye(p)
    x = np.linalg.solve(H0, G.T @ h)
    s = h - G @ x
    z = -(G @ np.linalg.solve(H0, c))
    for u in (s, z):
        shift = _interior_shift(u, heads, dims)
        if shift >= -1e-8 * max(1.0, np.sqrt(np.sum(u * u))):
            u += (1.0 + shift) * e
    ns = heads.size

    status = MAX_ITER
    best_merit = np.inf
    bx, bs, bz = x.copy(), s.copy(), z.copy()
    it = 0
    empty = np.zeros(0)
    for it in range(1, max_iter + 1):
        rx = G.T @ z + c
        rz = G @ x + s - h
        gap = np.dot(s, z)
        pres = np.max(np.abs(rz))
        dres = np.max(np.abs(rx))
        merit = max(pres, dres, abs(gap))
        if not np.isfinite(merit):
            break
        if merit < best_merit:
            best_merit = merit
            bx, bs, bz = x.copy(), s.copy(), z.copy()
        if merit <= target:
            status = OPTIMAL
            break

        hz = np.dot(h, z)
        if hz < 0 and np.max(np.abs(G.T @ z)) <= target * -hz and pres > target:
            return x, s, z, INFEASIBLE, it, z / -hz

        mu = gap / ns
        w, beta = _scaling(s, z, heads, dims)
        lam = _apply(w, beta, z, heads, dims, False)
        Gs = _apply_inv_matrix(w, beta, G, heads, dims)
        Wrz = _apply(w, beta, rz, heads, dims, True)
        GsT = np.ascontiguousarray(Gs.T)
        H = GsT @ Gs
        dmax = 1.0
        for i in range(p):
            dmax = max(dmax, abs(H[i, i]))
        Hr = H + 1e-14 * dmax * np.eye(p)
        use_chol = True
        L = np.zeros((p, p))
        P = np.zeros((p, p))
        try:
            L = np.ascontiguousarray(np.linalg.cholesky(Hr))
        except Exception:
            use_chol = False
            P = np.ascontiguousarray(np.linalg.pinv(Hr))

        lamlam = _prod(lam, lam, heads, dims)
        dx, ds_s, dz_s = _direction(lam, -lamlam, rx, Gs, GsT, Wrz, H, L, P, use_chol, heads, dims)
        a_aff = min(1.0, _max_step(lam, ds_s, dz_s, heads, dims))
        sig = (1.0 - a_aff) ** 3
        rc = -lamlam - _prod(ds_s, dz_s, heads, dims) + sig * mu * e
        dx, ds_s, dz_s = _direction(lam, rc, rx, Gs, GsT, Wrz, H, L, P, use_chol, heads, dims)
        a = min(1.0, 0.99 * _max_step(lam, ds_s, dz_s, heads, dims))
        if not a > 1e-12:
            break
        x = x + a * dx
        s = s + a * _apply(w, beta, ds_s, heads, dims, False)
        z = z + a * _apply(w, beta, dz_s, heads, dims, True)
    if best_merit <= target:
        status = OPTIMAL
    return bx, bs, bz, status, it, empty
