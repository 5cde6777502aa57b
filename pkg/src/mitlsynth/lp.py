"""Dense two-phase simplex for small controller-synthesis programs.

Solves  max c.x  subject to  A.x <= b  with x free in sign.  Problem sizes
here are a few dozen rows and columns (vertex-enumerated constraints in at
most three dimensions), so a dense tableau with Bland's anti-cycling rule is
plenty and avoids any sparse machinery.
"""

from dataclasses import dataclass

import numpy as np

_TOL = 1e-9
_MAX_ITER = 20000


@dataclass
class LPResult:
    status: str          # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None
    value: float | None

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _pivot(T, obj, basis, row, col):
    T[row] /= T[row, col]
    for i in range(T.shape[0]):
        if i != row and abs(T[i, col]) > 1e-14:
            T[i] -= T[i, col] * T[row]
    obj -= obj[col] * T[row]
    basis[row] = col


def _iterate(T, obj, basis, allowed, tol=_TOL):
    """Run simplex pivots until no allowed column improves the objective.

    ``obj`` holds reduced costs for maximization; Bland's rule (smallest
    entering index, smallest leaving basis variable) prevents cycling.
    Returns "optimal" or "unbounded".
    """
    m = T.shape[0]
    for _ in range(_MAX_ITER):
        col = -1
        for j in allowed:
            if obj[j] > tol and j not in basis:
                col = j
                break
        if col < 0:
            return "optimal"
        row, best = -1, np.inf
        for i in range(m):
            if T[i, col] > tol:
                ratio = T[i, -1] / T[i, col]
                if ratio < best - 1e-12 or (abs(ratio - best) <= 1e-12
                                            and (row < 0 or basis[i] < basis[row])):
                    best, row = ratio, i
        if row < 0:
            return "unbounded"
        _pivot(T, obj, basis, row, col)
    raise RuntimeError("simplex did not converge")


def solve_lp(c, A_ub, b_ub) -> LPResult:
    """Maximize ``c @ x`` over ``A_ub @ x <= b_ub`` with free variables."""
    A = np.asarray(A_ub, dtype=float)
    b = np.asarray(b_ub, dtype=float).copy()
    c = np.asarray(c, dtype=float)
    m, n = A.shape

    # split free variables, add slack and artificial columns
    M = np.hstack([A, -A, np.eye(m)])
    neg = b < 0
    M[neg] *= -1.0
    b[neg] *= -1.0
    n_real = 2 * n + m
    T = np.hstack([M, np.eye(m), b.reshape(-1, 1)])
    basis = [n_real + i for i in range(m)]

    # phase 1: drive the artificial variables to zero
    obj = np.zeros(T.shape[1])
    obj[:n_real] = T[:, :n_real].sum(axis=0)
    obj[-1] = -b.sum()
    status = _iterate(T, obj, basis, range(n_real))
    art_level = sum(T[i, -1] for i in range(m) if basis[i] >= n_real)
    if status != "optimal" or art_level > 1e-7:
        return LPResult("infeasible", None, None)
    for i in range(m):  # pivot out any artificial stuck in the basis at level 0
        if basis[i] >= n_real:
            for j in range(n_real):
                if abs(T[i, j]) > _TOL:
                    _pivot(T, obj, basis, i, j)
                    break

    # phase 2: the real objective
    cost = np.zeros(T.shape[1])
    cost[:n] = c
    cost[n:2 * n] = -c
    obj = cost.copy()
    for i, bv in enumerate(basis):
        if abs(cost[bv]) > 0:
            obj -= cost[bv] * T[i]
            obj[bv] = 0.0
    status = _iterate(T, obj, basis, range(n_real))
    if status == "unbounded":
        return LPResult("unbounded", None, None)

    full = np.zeros(T.shape[1] - 1)
    for i, bv in enumerate(basis):
        if bv < len(full):
            full[bv] = T[i, -1]
    x = full[:n] - full[n:2 * n]
    return LPResult("optimal", x, float(c @ x))
