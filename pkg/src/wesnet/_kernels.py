"""Compiled numerical kernels.

All reductions run in a fixed, sequential order so that results are
bitwise reproducible and so that dropping terms that are exactly zero
leaves every output bit unchanged.
"""

import math

import numpy as np
from numba import njit

_OPTS = dict(cache=True, nogil=True)


@njit(**_OPTS)
def ordered_matmul(a, b):
    """``a @ b`` with each output summed in ascending inner-index order."""
    m, k = a.shape
    n = b.shape[1]
    c = np.zeros((m, n))
    for i in range(m):
        for p in range(k):
            aip = a[i, p]
            for j in range(n):
                c[i, j] += aip * b[p, j]
    return c


@njit(**_OPTS)
def batched_matvec(g, x):
    """``out[b] = g[b] @ x[b]`` for g (B, m, k), x (B, k)."""
    nb, m, k = g.shape
    out = np.zeros((nb, m))
    for t in range(nb):
        for i in range(m):
            acc = 0.0
            for j in range(k):
                acc += g[t, i, j] * x[t, j]
            out[t, i] = acc
    return out


@njit(**_OPTS)
def batched_gram(h, y):
    """Return ``(H^T H, H^T y)`` for a batch of real channels."""
    nb, rows, d = h.shape
    gram = np.zeros((nb, d, d))
    hty = np.zeros((nb, d))
    for t in range(nb):
        for i in range(d):
            acc = 0.0
            for r in range(rows):
                acc += h[t, r, i] * y[t, r]
            hty[t, i] = acc
            for j in range(i, d):
                acc = 0.0
                for r in range(rows):
                    acc += h[t, r, i] * h[t, r, j]
                gram[t, i, j] = acc
                gram[t, j, i] = acc
    return gram, hty


@njit(**_OPTS)
def batched_cholesky_solve(g, rhs, rel_tol):
    """Solve ``g[b] x = rhs[b]`` for SPD ``g`` by Cholesky factorization.

    Returns ``(x, bad)`` where ``bad[b]`` is -1 on success or the index of
    the first pivot that fell below ``rel_tol * max(diag(g[b]))``.
    """
    nb, d, _ = g.shape
    x = np.zeros((nb, d))
    bad = np.full(nb, -1, dtype=np.int64)
    low = np.zeros((d, d))
    z = np.zeros(d)
    for t in range(nb):
        scale = 0.0
        for i in range(d):
            if g[t, i, i] > scale:
                scale = g[t, i, i]
        ok = scale > 0.0
        if ok:
            for j in range(d):
                acc = g[t, j, j]
                for p in range(j):
                    acc -= low[j, p] * low[j, p]
                if not acc > rel_tol * scale:
                    bad[t] = j
                    ok = False
                    break
                ljj = math.sqrt(acc)
                low[j, j] = ljj
                for i in range(j + 1, d):
                    acc = g[t, i, j]
                    for p in range(j):
                        acc -= low[i, p] * low[j, p]
                    low[i, j] = acc / ljj
        else:
            bad[t] = 0
        if not ok:
            continue
        for i in range(d):
            acc = rhs[t, i]
            for p in range(i):
                acc -= low[i, p] * z[p]
            z[i] = acc / low[i, i]
        for i in range(d - 1, -1, -1):
            acc = z[i]
            for p in range(i + 1, d):
                acc -= low[p, i] * x[t, p]
            x[t, i] = acc / low[i, i]
    return x, bad


@njit(**_OPTS)
def _offdiag_norm(a):
    n = a.shape[0]
    acc = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                acc += a[i, j] * a[i, j]
    return math.sqrt(acc)


@njit(**_OPTS)
def jacobi_eigh(a, tol, max_sweeps):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Stops once the off-diagonal Frobenius norm drops below ``tol * ||a||_F``.
    Returns ``(w, v, sweeps, off, converged)``: eigenvalues (unsorted),
    eigenvectors as columns, sweeps used, final off-diagonal norm and
    whether the threshold was met within ``max_sweeps``.
    """
    n = a.shape[0]
    a = a.copy()
    v = np.eye(n)
    fro = 0.0
    for i in range(n):
        for j in range(n):
            fro += a[i, j] * a[i, j]
    thresh = tol * max(math.sqrt(fro), 1e-300)
    sweeps = 0
    off = _offdiag_norm(a)
    while off > thresh and sweeps < max_sweeps:
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + math.sqrt(1.0 + theta * theta))
                else:
                    t = -1.0 / (-theta + math.sqrt(1.0 + theta * theta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
        sweeps += 1
        off = _offdiag_norm(a)
    w = np.empty(n)
    for i in range(n):
        w[i] = a[i, i]
    return w, v, sweeps, off, off <= thresh


@njit(**_OPTS)
def project_psd(a, basis, tol, max_sweeps):
    """Projection onto the PSD cone (negative eigenvalues clipped).

    ``basis`` is an orthogonal warm start: the eigenproblem is solved for
    ``basis^T a basis``, which is nearly diagonal when ``a`` changes slowly.
    Returns ``(projection, eigvals, eigvecs, off, converged)``.
    """
    n = a.shape[0]
    rot = basis.T @ a @ basis
    for i in range(n):
        for j in range(i + 1, n):
            m = 0.5 * (rot[i, j] + rot[j, i])
            rot[i, j] = m
            rot[j, i] = m
    w, v, _, off, converged = jacobi_eigh(rot, tol, max_sweeps)
    vecs = basis @ v
    out = np.zeros((n, n))
    for k in range(n):
        lam = w[k]
        if lam <= 0.0:
            continue
        for i in range(n):
            vi = lam * vecs[i, k]
            for j in range(n):
                out[i, j] += vi * vecs[j, k]
    return out, w, vecs, off, converged


@njit(**_OPTS)
def sdr_admm(lmat, rho, max_iter, tol, eig_tol, max_sweeps):
    """ADMM for ``min tr(L X)  s.t.  diag(X) = 1, X psd``.

    Splitting ``X = Z`` with X in the PSD cone and Z on the unit-diagonal
    affine set. Stops once primal and dual residuals are both below ``tol``.

    The recorded residual per iteration is ``sqrt(||X - Z||^2 + ||Z - Z_prev||^2)``,
    i.e. the norm of the change in ``(Z, U)``. Unlike the primal residual
    alone, this quantity is non-increasing for ADMM with a fixed ``rho``.
    Returns ``(X, eigvals, eigvecs, residuals, iters, status, off)`` where
    ``status`` is 0 on success, 1 if Jacobi hit its sweep cap.
    """
    n = lmat.shape[0]
    z = np.eye(n)
    u = np.zeros((n, n))
    basis = np.eye(n)
    residuals = np.full(max_iter, np.nan)
    x = np.eye(n)
    w = np.ones(n)
    it = 0
    status = 0
    worst_off = 0.0
    for it in range(1, max_iter + 1):
        target = z - u - lmat / rho
        x, w, basis, off, converged = project_psd(target, basis, eig_tol, max_sweeps)
        if off > worst_off:
            worst_off = off
        if not converged:
            status = 1
            break
        z_prev = z
        z = x + u
        for i in range(n):
            z[i, i] = 1.0
        u = u + x - z
        r = 0.0
        s = 0.0
        for i in range(n):
            for j in range(n):
                dxz = x[i, j] - z[i, j]
                r += dxz * dxz
                dz = z[i, j] - z_prev[i, j]
                s += dz * dz
        residuals[it - 1] = math.sqrt(r + s)
        r = math.sqrt(r)
        s = rho * math.sqrt(s)
        if r < tol and s < tol:
            break
    return x, w, basis, residuals[:it], it, status, worst_off
