"""Independent slow-path oracles used to cross-check the fast implementations.

These deliberately avoid the code paths they verify: gradients come from
central finite differences, the cone projection from exhaustive active-set
enumeration, and the windowed metrics from the quadratic pair scan in
``metrics.oracle_wf_wp``.
"""

from __future__ import annotations

import itertools

import numpy as np

__all__ = ["fd_gradient", "gem_project_enumeration"]


def fd_gradient(f, x0: np.ndarray, coords=None, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar f at x0, over all or some coords."""
    x0 = np.asarray(x0, dtype=np.float64)
    if coords is None:
        coords = range(x0.shape[0])
    grad = np.zeros(x0.shape[0])
    for i in coords:
        xp = x0.copy()
        xm = x0.copy()
        xp[i] += eps
        xm[i] -= eps
        grad[i] = (f(xp) - f(xm)) / (2.0 * eps)
    return grad


def gem_project_enumeration(g: np.ndarray, G: np.ndarray, feas_tol: float = 1e-9) -> np.ndarray:
    """Euclidean projection of g onto {x : G x >= 0} by trying every active set.

    For each constraint subset S the equality-constrained least-squares
    projection is solved in closed form; the feasible candidate closest to g
    wins. Exhaustive, so only usable for a handful of constraints.
    """
    g = np.asarray(g, dtype=np.float64)
    G = np.asarray(G, dtype=np.float64)
    k = G.shape[0]
    best = None
    best_dist = np.inf
    for r in range(k + 1):
        for subset in itertools.combinations(range(k), r):
            if subset:
                Gs = G[list(subset)]
                x = g - Gs.T @ np.linalg.pinv(Gs @ Gs.T) @ (Gs @ g)
            else:
                x = g.copy()
            slack = G @ x
            if (slack >= -feas_tol).all():
                dist = float(np.linalg.norm(x - g))
                if dist < best_dist:
                    best_dist = dist
                    best = x
    assert best is not None  # the zero vector is always feasible
    return best
