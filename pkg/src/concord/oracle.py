"""Dense reference solver for weighted equality-constrained least squares.

Independent cross-check for the sparse solver: feasibility via dense least
squares, then minimization of ``sum(w_i * x_i**2)`` over the affine feasible
set by projecting onto the null space of the constraint matrix (SVD) and
solving the reduced normal equations with a pseudo-inverse.  No code is
shared with the production path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


@dataclass
class OracleResult:
    status: str  # "concordant" | "discordant" | "infeasible"
    discord: Optional[float]
    solution: Optional[dict[int, float]]
    feasibility_residual: float


def oracle_solve(var_ids: Sequence[int],
                 weights: dict[int, float],
                 rows: Sequence[dict[int, float]],
                 rhs: Sequence[float],
                 feas_tol: float = 1e-6,
                 conc_tol: float = 1e-9) -> OracleResult:
    """Minimize the weighted sum of squares subject to the linear equations.

    ``rows`` are sparse maps var id -> coefficient; every referenced id must
    appear in ``var_ids``.
    """
    ids = list(var_ids)
    pos = {v: i for i, v in enumerate(ids)}
    n = len(ids)
    m = len(rows)
    b = np.asarray(list(rhs), dtype=float)

    if m == 0:
        x = {v: 0.0 for v in ids}
        return OracleResult("concordant", 0.0, x, 0.0)

    A = np.zeros((m, n))
    for i, row in enumerate(rows):
        for v, c in row.items():
            A[i, pos[v]] = c

    if n == 0:
        resid = float(np.max(np.abs(b))) if m else 0.0
        if resid > feas_tol * (1.0 + resid):
            return OracleResult("infeasible", None, None, resid)
        return OracleResult("concordant", 0.0, {}, resid)

    x_p, *_ = np.linalg.lstsq(A, b, rcond=None)
    feas = float(np.max(np.abs(A @ x_p - b)))
    b_scale = float(np.max(np.abs(b))) if m else 0.0
    if feas > feas_tol * (1.0 + b_scale):
        return OracleResult("infeasible", None, None, feas)

    w = np.array([weights.get(v, 0.0) for v in ids])

    # Null space of A from its SVD; columns of N span {x : A x = 0}.
    _, s, vh = np.linalg.svd(A)
    cutoff = max(A.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > cutoff))
    N = vh[rank:].T

    if N.shape[1] > 0:
        H = N.T @ (w[:, None] * N)
        g = N.T @ (w * x_p)
        z = -np.linalg.pinv(H) @ g
        x = x_p + N @ z
    else:
        x = x_p

    feas = float(np.max(np.abs(A @ x - b)))
    discord = float(np.sum(w * x * x))
    status = "concordant" if discord <= conc_tol else "discordant"
    return OracleResult(status, discord, {v: float(x[pos[v]]) for v in ids}, feas)
