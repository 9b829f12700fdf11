"""Damped Newton minimisation over a batch of independent smooth convex problems."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class NewtonResult:
    x: np.ndarray
    fun: np.ndarray
    grad: np.ndarray
    converged: np.ndarray
    n_iter: np.ndarray


def minimize_batch(fun, x0, tol=1e-6, max_iter=500):
    """Minimise ``B`` problems at once.

    ``fun(theta, idx, derivs)`` evaluates the problems selected by ``idx`` at
    ``theta`` (shape ``(len(idx), P)``) and returns ``f`` or ``(f, g, H)``.
    A problem is frozen as soon as its gradient sup-norm drops below ``tol``,
    so each trajectory is independent of the rest of the batch.
    """
    x = np.array(x0, dtype=float, copy=True)
    if x.ndim != 2:
        raise ValueError("x0 must have shape (B, P)")
    B, P = x.shape
    all_idx = np.arange(B)
    with np.errstate(over="ignore", invalid="ignore"):
        f, g, H = fun(x, all_idx, True)
    f = np.asarray(f, dtype=float).copy()
    n_iter = np.zeros(B, dtype=int)
    converged = np.abs(g).max(axis=1) < tol
    stalled = np.zeros(B, dtype=bool)

    for _ in range(max_iter):
        active = np.flatnonzero(~converged & ~stalled)
        if active.size == 0:
            break
        xa, fa, ga, Ha = x[active], f[active], g[active], H[active]
        try:
            step = -np.linalg.solve(Ha, ga[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = -ga.copy()
        slope = np.einsum("bp,bp->b", ga, step)
        bad = ~np.isfinite(slope) | (slope >= 0)
        if bad.any():
            step[bad] = -ga[bad]
            slope[bad] = -np.einsum("bp,bp->b", ga[bad], ga[bad])

        alpha = np.ones(active.size)
        pending = np.ones(active.size, dtype=bool)
        xn, fn, gn, Hn = xa.copy(), fa.copy(), ga.copy(), Ha.copy()
        slack = 8 * np.finfo(float).eps * np.maximum(np.abs(fa), 1.0)
        for _ls in range(60):
            sel = np.flatnonzero(pending)
            trial = xa[sel] + alpha[sel, None] * step[sel]
            with np.errstate(over="ignore", invalid="ignore"):
                ft, gt, Ht = fun(trial, active[sel], True)
            ok = np.isfinite(ft) & (ft <= fa[sel] + 1e-4 * alpha[sel] * slope[sel] + slack[sel])
            acc = sel[ok]
            xn[acc], fn[acc], gn[acc], Hn[acc] = trial[ok], ft[ok], gt[ok], Ht[ok]
            pending[acc] = False
            if not pending.any():
                break
            alpha[sel[~ok]] *= 0.5
        stalled[active[pending]] = True

        x[active] = xn
        f[active] = fn
        g[active] = gn
        H[active] = Hn
        n_iter[active] += 1
        converged[active] = np.abs(gn).max(axis=1) < tol

    return NewtonResult(x=x, fun=f, grad=g, converged=converged, n_iter=n_iter)
