"""Small dense primal-dual interior-point solver for Hermitian block SDPs.

Solves the pair

    primal:  min  sum_b <C_b, X_b>   s.t.  sum_b <A_ib, X_b> = b_i,  X_b >= 0
    dual:    max  b^T y              s.t.  S_b = C_b - sum_i y_i A_ib >= 0

with the HKM search direction and a Mehrotra predictor-corrector.  Meant for
problems with a few dozen variables; everything is dense.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class SDPSolution:
    x: list
    y: np.ndarray
    s: list
    primal_objective: float
    dual_objective: float
    primal_infeasibility: float
    dual_infeasibility: float
    iterations: int
    converged: bool


def _inner(a, x):
    return float(np.real(np.vdot(a, x)))


def _herm(m):
    return 0.5 * (m + m.conj().T)


def _max_step(x, dx):
    """Largest alpha with x + alpha dx >= 0 (inf if dx never leaves the cone)."""
    w, v = np.linalg.eigh(x)
    w = np.maximum(w, 1e-300)
    inv_sqrt = v / np.sqrt(w)
    lam = np.linalg.eigvalsh(_herm(inv_sqrt.conj().T @ dx @ inv_sqrt)).min()
    return np.inf if lam >= 0 else -1.0 / lam


def solve(c_blocks, a_blocks, b, tol=1e-9, max_iter=100, step_fraction=0.95) -> SDPSolution:
    """``c_blocks[k]`` is (n_k, n_k); ``a_blocks[k]`` is (m, n_k, n_k)."""
    b = np.asarray(b, dtype=float)
    m = len(b)
    c_blocks = [np.asarray(c, dtype=complex) for c in c_blocks]
    a_blocks = [np.asarray(a, dtype=complex) for a in a_blocks]
    n_total = sum(c.shape[0] for c in c_blocks)
    x = [np.eye(c.shape[0], dtype=complex) for c in c_blocks]
    s = [np.eye(c.shape[0], dtype=complex) for c in c_blocks]
    y = np.zeros(m)
    norm_b = 1.0 + np.linalg.norm(b)
    norm_c = 1.0 + max(np.linalg.norm(c) for c in c_blocks)

    def op_a(xs):
        return sum(np.real(np.einsum("iab,ab->i", a.conj(), xk)) for a, xk in zip(a_blocks, xs))

    def op_at(v):
        return [np.einsum("i,iab->ab", v, a) for a in a_blocks]

    converged = False
    it = 0
    best = (np.inf, None)
    for it in range(1, max_iter + 1):
        rp = b - op_a(x)
        aty = op_at(y)
        rd = [c - sk - t for c, sk, t in zip(c_blocks, s, aty)]
        pobj = sum(_inner(c, xk) for c, xk in zip(c_blocks, x))
        dobj = float(b @ y)
        pinf = np.linalg.norm(rp) / norm_b
        dinf = max(np.linalg.norm(r) for r in rd) / norm_c
        gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        merit = max(gap, pinf, dinf)
        if merit < best[0]:
            best = (merit, (it, [xk.copy() for xk in x], y.copy(), [sk.copy() for sk in s]))
        if merit < tol:
            converged = True
            break
        if merit > 100 * best[0] and best[0] < 1e-6:
            # round-off has taken over; the best iterate so far is as good as it gets
            break
        mu = sum(_inner(xk, sk) for xk, sk in zip(x, s)) / n_total

        s_inv = [np.linalg.inv(sk) for sk in s]
        schur = np.zeros((m, m))
        for a, xk, si in zip(a_blocks, x, s_inv):
            ax = a @ xk
            asi = a @ si
            schur += np.real(np.einsum("iab,jba->ij", ax, asi))
        schur = 0.5 * (schur + schur.T)
        # eigen-solve: the Schur complement gets badly conditioned near the optimum
        w, v = np.linalg.eigh(schur)
        w_inv = np.where(w > w.max() * 1e-15, 1.0 / np.where(w > 0, w, 1.0), 0.0)

        def direction(sigma, corr):
            g = []
            for xk, si, rdk, ck in zip(x, s_inv, rd, corr):
                base = sigma * mu * si - xk - xk @ rdk @ si
                if ck is not None:
                    base = base - ck @ si
                g.append(base)
            rhs = rp - op_a(g)
            dy = v @ (w_inv * (v.T @ rhs))
            atdy = op_at(dy)
            ds = [rdk - t for rdk, t in zip(rd, atdy)]
            dx = [_herm(gk + xk @ t @ si) for gk, xk, t, si in zip(g, x, atdy, s_inv)]
            return dx, dy, ds

        def steps(dx, ds):
            ap = min([1.0] + [_max_step(xk, d) for xk, d in zip(x, dx)])
            ad = min([1.0] + [_max_step(sk, d) for sk, d in zip(s, ds)])
            return ap, ad

        dx_a, dy_a, ds_a = direction(0.0, [None] * len(x))
        ap, ad = steps(dx_a, ds_a)
        mu_aff = sum(_inner(xk + ap * d1, sk + ad * d2)
                     for xk, d1, sk, d2 in zip(x, dx_a, s, ds_a)) / n_total
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0
        corr = [d1 @ d2 for d1, d2 in zip(dx_a, ds_a)]
        dx, dy, ds = direction(sigma, corr)
        ap, ad = steps(dx, ds)
        ap = min(1.0, step_fraction * ap)
        ad = min(1.0, step_fraction * ad)
        x = [_herm(xk + ap * d) for xk, d in zip(x, dx)]
        s = [_herm(sk + ad * d) for sk, d in zip(s, ds)]
        y = y + ad * dy

    if not converged and best[1] is not None:
        it, x, y, s = best[1]
    rp = b - op_a(x)
    aty = op_at(y)
    rd = [c - sk - t for c, sk, t in zip(c_blocks, s, aty)]
    return SDPSolution(
        x=x, y=y, s=s,
        primal_objective=sum(_inner(c, xk) for c, xk in zip(c_blocks, x)),
        dual_objective=float(b @ y),
        primal_infeasibility=float(np.linalg.norm(rp) / norm_b),
        dual_infeasibility=float(max(np.linalg.norm(r) for r in rd) / norm_c),
        iterations=it,
        converged=converged,
    )
