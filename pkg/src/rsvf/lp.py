"""
Dense two-phase primal simplex for small linear programs.

Solves::

    min  c @ x
    s.t. A_ub @ x <= b_ub
         A_eq @ x == b_eq
         x >= 0

with a full tableau. Entering columns are chosen by the largest reduced
cost and the solver switches to Bland's rule after a run of degenerate
pivots, which rules out cycling. Problem sizes here are a few hundred
rows, so a dense tableau is simpler and fast enough.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NumericalFailureError

OPTIMAL, INFEASIBLE, UNBOUNDED = "optimal", "infeasible", "unbounded"


@dataclass
class LPResult:
    x: np.ndarray
    fun: float
    status: str
    pivots: int


class _Tableau:
    def __init__(self, T, basis, tol):
        self.T = T
        self.basis = basis
        self.tol = tol
        self.pivots = 0

    def pivot(self, row, col):
        T = self.T
        T[row] /= T[row, col]
        factors = T[:, col].copy()
        factors[row] = 0.0
        T -= np.outer(factors, T[row])
        T[:, col] = 0.0
        T[row, col] = 1.0
        self.basis[row] = col
        self.pivots += 1

    def run(self, allowed, max_pivots):
        """Minimize the objective in the last row over ``allowed`` columns."""
        T, tol = self.T, self.tol
        m = T.shape[0] - 1
        degenerate_run = 0
        bland = False
        while self.pivots < max_pivots:
            reduced = T[m, :-1]
            candidates = np.flatnonzero((reduced < -tol) & allowed)
            if candidates.size == 0:
                return OPTIMAL
            if bland:
                col = candidates[0]
            else:
                col = candidates[np.argmin(reduced[candidates])]
            column = T[:m, col]
            rows = np.flatnonzero(column > tol)
            if rows.size == 0:
                return UNBOUNDED
            ratios = T[rows, -1] / column[rows]
            best = ratios.min()
            ties = rows[ratios <= best + tol * max(1.0, abs(best))]
            row = ties[np.argmin(self.basis[ties])]
            if best <= tol:
                degenerate_run += 1
                if degenerate_run > 50:
                    bland = True
            else:
                degenerate_run = 0
                bland = False
            self.pivot(row, col)
        raise NumericalFailureError(f"simplex exceeded {max_pivots} pivots")


def _as_2d(A, n):
    if A is None:
        return np.zeros((0, n))
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[1] != n:
        raise InvalidInputError("constraint matrix column count does not match c")
    return A


def linprog(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, tol=1e-10, max_pivots=None):
    """Solve a small dense LP over the non-negative orthant."""
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub, A_eq = _as_2d(A_ub, n), _as_2d(A_eq, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    if b_ub.size != A_ub.shape[0] or b_eq.size != A_eq.shape[0]:
        raise InvalidInputError("right-hand side length does not match constraints")
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq

    # Columns: original | slacks (one per ub row) | artificials (as needed).
    A = np.vstack([A_ub, A_eq])
    b = np.concatenate([b_ub, b_eq])
    slack = np.vstack([np.eye(m_ub), np.zeros((m_eq, m_ub))])
    flip = b < 0
    A[flip] *= -1
    slack[flip] *= -1
    b[flip] *= -1
    needs_art = np.ones(m, dtype=bool)
    needs_art[:m_ub] = flip[:m_ub]
    art_rows = np.flatnonzero(needs_art)
    n_art = art_rows.size
    art = np.zeros((m, n_art))
    art[art_rows, np.arange(n_art)] = 1.0

    n_total = n + m_ub + n_art
    T = np.zeros((m + 1, n_total + 1))
    T[:m, :n] = A
    T[:m, n:n + m_ub] = slack
    T[:m, n + m_ub:n_total] = art
    T[:m, -1] = b
    basis = np.empty(m, dtype=int)
    basis[:] = -1
    ub_basic = np.flatnonzero(~needs_art)
    basis[ub_basic] = n + ub_basic
    basis[art_rows] = n + m_ub + np.arange(n_art)

    if max_pivots is None:
        max_pivots = 50 * (m + n_total) + 1000
    tab = _Tableau(T, basis, tol)
    is_art = np.zeros(n_total, dtype=bool)
    is_art[n + m_ub:] = True
    keep = np.ones(m + 1, dtype=bool)

    if n_art:
        T[m, :] = 0.0
        T[m, n + m_ub:n_total] = 1.0
        T[m] -= T[art_rows].sum(axis=0)
        tab.run(np.ones(n_total, dtype=bool), max_pivots)
        scale = max(1.0, np.abs(b).max(initial=0.0))
        if -T[m, -1] > 1e-8 * scale:
            return LPResult(np.full(n, np.nan), np.nan, INFEASIBLE, tab.pivots)
        # Drive zero-level artificials out of the basis; drop redundant rows.
        for row in range(m):
            if is_art[tab.basis[row]]:
                entries = np.abs(T[row, :n_total])
                entries[is_art] = 0.0
                col = int(np.argmax(entries))
                if entries[col] > 1e-9:
                    tab.pivot(row, col)
                else:
                    keep[row] = False
        if not keep.all():
            tab.T = T = T[keep]
            tab.basis = tab.basis[keep[:m]]
            m = T.shape[0] - 1

    T[m, :] = 0.0
    T[m, :n] = c
    for row in range(m):
        col = tab.basis[row]
        if T[m, col] != 0.0:
            T[m] -= T[m, col] * T[row]
    status = tab.run(~is_art, max_pivots)
    if status == UNBOUNDED:
        return LPResult(np.full(n, np.nan), -np.inf, UNBOUNDED, tab.pivots)

    x_full = np.zeros(n_total)
    x_full[tab.basis] = T[:m, -1]
    rows = keep[:-1]
    x_full = _refine(np.hstack([A, slack, art])[rows], b[rows], tab.basis, x_full)
    x = np.clip(x_full[:n], 0.0, None)
    return LPResult(x, float(c @ x), OPTIMAL, tab.pivots)


def _refine(A, b, basis, x):
    """Recompute basic variables from the original data to shed pivot drift."""
    B = A[:, basis]
    try:
        xb = np.linalg.solve(B, b)
    except np.linalg.LinAlgError:
        return x
    if np.all(xb >= -1e-9) and np.max(np.abs(xb - x[basis])) < 1e-6:
        x = x.copy()
        x[basis] = np.clip(xb, 0.0, None)
    return x
