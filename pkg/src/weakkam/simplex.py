"""Dense revised simplex for standard-form programs min c.x, Ax = b, x >= 0.

The solver is self-contained on purpose: the occupation-measure programs it
backs act as a correctness oracle for the rest of the package, so we want
full control over pivoting and tolerances rather than an external solver.

Entering variables are priced by Dantzig's rule (most negative reduced cost,
lowest index on ties). Leaving variables use the lexicographic ratio test,
which is immune to cycling and keeps the heavily degenerate circulation
bases here from stalling; plain Bland's rule was measured to grind tens of
thousands of zero-step pivots on the same programs. A Bland entering
fallback remains as a belt-and-suspenders guard after a very long run of
degenerate steps. Both rules are order-fixed, so results do not depend on
thread count or scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError, UnboundedError, WeakKamError

__all__ = ["SimplexResult", "solve_standard_form"]

_BLAND_TRIGGER = 2000  # degenerate-streak length before the entering rule falls back


@dataclass
class SimplexResult:
    x: np.ndarray
    objective: float
    basis: np.ndarray
    duals: np.ndarray
    iterations: int


def _lexico_leave(x_b, d, b_inv, rows, feas_tol):
    """Lexicographic ratio test among candidate rows (d[rows] > 0)."""
    ratios = x_b[rows] / d[rows]
    best = ratios.min()
    tied = rows[ratios <= best + feas_tol * (1.0 + abs(best))]
    if tied.size == 1:
        return int(tied[0])
    # refine ties column by column of B^-1 / d
    for col in range(b_inv.shape[1]):
        vals = b_inv[tied, col] / d[tied]
        low = vals.min()
        keep = vals <= low + 1e-12 * (1.0 + abs(low))
        tied = tied[keep]
        if tied.size == 1:
            return int(tied[0])
    return int(tied[0])


def _run(a, c, b_vec, basis, allowed, feas_tol, max_iter):
    """Phase-agnostic pivot loop; `basis` is updated in place."""
    m, n = a.shape
    in_basis = np.zeros(n, dtype=bool)
    in_basis[basis] = True
    degenerate_run = 0
    for iteration in range(max_iter):
        try:
            b_inv = np.linalg.inv(a[:, basis])
        except np.linalg.LinAlgError as exc:
            raise WeakKamError(f"singular basis in simplex: {exc}") from exc
        x_b = b_inv @ b_vec
        y = c[basis] @ b_inv

        reduced = c - y @ a
        eligible = (reduced < -feas_tol) & ~in_basis & allowed
        candidates = np.nonzero(eligible)[0]
        if candidates.size == 0:
            return x_b, y, iteration

        if degenerate_run >= _BLAND_TRIGGER:
            j = int(candidates[0])
        else:
            j = int(candidates[np.argmin(reduced[candidates])])

        d = b_inv @ a[:, j]
        rows = np.nonzero(d > feas_tol)[0]
        if rows.size == 0:
            raise UnboundedError("objective unbounded below on the feasible set")
        leave_row = _lexico_leave(np.maximum(x_b, 0.0), d, b_inv, rows, feas_tol)
        step = max(x_b[leave_row], 0.0) / d[leave_row]

        in_basis[basis[leave_row]] = False
        in_basis[j] = True
        basis[leave_row] = j
        degenerate_run = degenerate_run + 1 if step <= feas_tol else 0
    raise WeakKamError(f"simplex exceeded {max_iter} pivots")


def _package(c, basis, x_b, y, iterations, n_real):
    x = np.zeros(n_real)
    for pos, col in enumerate(basis):
        if col < n_real:
            x[col] = max(float(x_b[pos]), 0.0)
    return SimplexResult(
        x=x,
        objective=float(c[:n_real] @ x),
        basis=np.asarray(basis, dtype=np.int64).copy(),
        duals=np.asarray(y, dtype=float).copy(),
        iterations=int(iterations),
    )


def solve_standard_form(
    a: np.ndarray,
    b: np.ndarray,
    c: np.ndarray,
    basis: np.ndarray | None = None,
    feas_tol: float = 1e-9,
    max_iter: int = 50_000,
) -> SimplexResult:
    """Solve min c.x subject to Ax = b, x >= 0.

    A warm-start basis from a previous solve against the same constraints
    skips phase 1 entirely. Rows are sign-normalized so b >= 0; a redundant
    row surfaces as an artificial variable stuck at zero, which is accepted
    and barred from re-entering.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float).copy()
    c = np.asarray(c, dtype=float)
    m, n = a.shape
    if b.shape != (m,) or c.shape != (n,):
        raise WeakKamError("inconsistent LP dimensions")

    flip = b < 0
    if flip.any():
        a = a.copy()
        a[flip] *= -1.0
        b[flip] *= -1.0

    if basis is not None and (np.asarray(basis) < n).all():
        warm = np.asarray(basis, dtype=np.int64).copy()
        if warm.shape != (m,):
            raise WeakKamError("warm-start basis must have one column per row")
        try:
            probe = np.linalg.solve(a[:, warm], b)
        except np.linalg.LinAlgError:
            probe = None
        if probe is not None and (probe >= -1e-7).all():
            allowed = np.ones(n, dtype=bool)
            x_b, y, its = _run(a, c, b, warm, allowed, feas_tol, max_iter)
            return _package(c, warm, x_b, y, its, n)
        # stale or singular warm start: fall through to a cold start

    # phase 1: artificial identity block
    a1 = np.hstack([a, np.eye(m)])
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    work_basis = np.arange(n, n + m, dtype=np.int64)
    allowed = np.ones(n + m, dtype=bool)
    x_b, y, its1 = _run(a1, c1, b, work_basis, allowed, feas_tol, max_iter)
    residue = float(x_b[work_basis >= n].sum()) if (work_basis >= n).any() else 0.0
    if residue > 1e-7:
        raise InfeasibleError(f"phase-1 optimum {residue:.3e} > 0: program infeasible")

    # drive leftover artificials out wherever a real column can replace them
    for row in np.nonzero(work_basis >= n)[0]:
        b_mat = a1[:, work_basis]
        e_row = np.zeros(m)
        e_row[row] = 1.0
        weights = np.linalg.solve(b_mat.T, e_row)
        pivot_row = weights @ a  # row of B^-1 A over real columns
        for j in np.nonzero(np.abs(pivot_row) > 1e-7)[0]:
            if j not in work_basis:
                work_basis[row] = j
                break

    # phase 2: artificials keep zero cost but may not re-enter
    c2 = np.concatenate([c, np.zeros(m)])
    allowed[n:] = False
    x_b, y, its2 = _run(a1, c2, b, work_basis, allowed, feas_tol, max_iter)
    return _package(c2, work_basis, x_b, y, its1 + its2, n)
