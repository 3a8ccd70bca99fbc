"""Small dense convex QP: ``min 1/2 x'Hx + f'x  s.t.  G x <= h,  A x = b``.

Phase 1 finds a feasible point with a linear program (least uniform
violation); phase 2 is a primal active-set method started from it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog


@dataclass(frozen=True, eq=False)
class QPResult:
    x: np.ndarray | None
    feasible: bool
    active: tuple[int, ...] = ()
    binding: int | None = None  # most violated row when infeasible
    violation: float = 0.0
    iterations: int = 0


def _phase_one(G, h, A, b, tol):
    n = G.shape[1] if G.size else A.shape[1]
    # variables (x, s): minimize s subject to G x - s <= h, A x = b, s >= 0
    c = np.zeros(n + 1)
    c[-1] = 1.0
    A_ub = np.hstack([G, -np.ones((G.shape[0], 1))]) if G.size else None
    A_eq = np.hstack([A, np.zeros((A.shape[0], 1))]) if A.size else None
    bounds = [(None, None)] * n + [(0.0, None)]
    res = linprog(c, A_ub=A_ub, b_ub=h if G.size else None, A_eq=A_eq,
                  b_eq=b if A.size else None, bounds=bounds, method="highs")
    if res.status != 0:
        return None, np.inf
    return res.x[:n], float(res.x[-1])


def solve_qp(H, f, G, h, A=None, b=None, tol: float = 1e-10, max_iter: int = 1000) -> QPResult:
    H = np.atleast_2d(np.asarray(H, dtype=float))
    f = np.asarray(f, dtype=float)
    n = f.size
    G = np.asarray(G, dtype=float).reshape(-1, n)
    h = np.asarray(h, dtype=float).reshape(-1)
    A = np.zeros((0, n)) if A is None else np.asarray(A, dtype=float).reshape(-1, n)
    b = np.zeros(0) if b is None else np.asarray(b, dtype=float).reshape(-1)
    scale = max(1.0, float(np.abs(h).max()) if h.size else 1.0)

    x, s = _phase_one(G, h, A, b, tol)
    if x is None or s > tol * scale:
        if x is None:
            # equality constraints alone are inconsistent
            return QPResult(None, False, binding=None, violation=np.inf)
        viol = G @ x - h
        i = int(np.argmax(viol))
        return QPResult(None, False, binding=i, violation=float(viol[i]))

    # clean the LP solution onto the equality manifold
    if A.size:
        x = x - np.linalg.lstsq(A, A @ x - b, rcond=None)[0]
    work: list[int] = []
    for it in range(max_iter):
        C = np.vstack([A, G[work]]) if work else A
        m = C.shape[0]
        K = np.block([[H, C.T], [C, np.zeros((m, m))]])
        rhs = np.concatenate([-(H @ x + f), np.zeros(m)])
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        p = sol[:n]
        lam = sol[n + A.shape[0]:]  # K [p; lam] = [-grad; 0] gives grad + C^T lam = 0 at p = 0
        if np.linalg.norm(p) <= tol * max(1.0, np.linalg.norm(x)):
            if not work or lam.min() >= -tol:
                return QPResult(x, True, active=tuple(sorted(work)), iterations=it)
            work.pop(int(np.argmin(lam)))
            continue
        Gp = G @ p
        slack = h - G @ x
        step, block = 1.0, None
        mask = Gp > tol * max(1.0, np.abs(Gp).max())
        mask[work] = False
        if np.any(mask):
            idx = np.flatnonzero(mask)
            ratios = np.maximum(slack[idx], 0.0) / Gp[idx]
            j = int(np.argmin(ratios))
            if ratios[j] < 1.0:
                step, block = float(ratios[j]), int(idx[j])
        x = x + step * p
        if block is not None:
            work.append(block)
    raise RuntimeError("active-set QP did not converge")
