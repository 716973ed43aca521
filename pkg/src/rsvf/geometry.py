"""
L1 ambiguity sets on the probability simplex.

``worst_case_l1`` is the inner minimization of every robust backup and runs
in O(S log S) by moving mass greedily toward the lowest-valued state.
``min_radius_center`` finds the smallest L1 ball that touches a list of
hyperplanes ``{q in simplex : v_i . q = g_i}`` by solving one LP.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleTargetError, InvalidInputError, NumericalFailureError
from .lp import OPTIMAL, linprog
from .mdp import check_simplex

MAX_RADIUS = 2.0
LEVEL_TOL = 1e-9


@dataclass(frozen=True)
class L1AmbiguitySet:
    """``{p in simplex : ||p - nominal||_1 <= radius}``; radii above 2 are clamped."""

    nominal: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "nominal", check_simplex(self.nominal, "nominal point"))
        radius = float(self.radius)
        if not radius >= 0.0:
            raise InvalidInputError(f"radius must be non-negative, got {self.radius}")
        object.__setattr__(self, "radius", min(radius, MAX_RADIUS))


@dataclass(frozen=True)
class HyperplaneTarget:
    value: np.ndarray
    level: float


def l1_distance(p, q):
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise InvalidInputError(f"length mismatch: {p.shape} vs {q.shape}")
    return float(np.abs(p - q).sum())


def worst_case_rows(nominal, radius, value):
    """Batched worst case over many L1 balls sharing one value vector.

    ``nominal`` has shape ``(..., S)`` and ``radius`` shape ``(...)``.
    Returns the minimizing distributions, same shape as ``nominal``.
    Ties in ``value`` send mass to the lowest index first.
    """
    order = np.argsort(value, kind="stable")
    low = order[0]
    desc = order[::-1]
    p = np.array(nominal, dtype=float, copy=True)
    eps = np.minimum(np.minimum(radius, MAX_RADIUS) / 2.0, 1.0 - p[..., low])
    eps = np.maximum(eps, 0.0)
    p_desc = p[..., desc]
    before = np.cumsum(p_desc, axis=-1) - p_desc
    removed = np.clip(eps[..., None] - before, 0.0, p_desc)
    removed[..., -1] = 0.0  # the receiving state is last in ``desc``
    p[..., desc] = p_desc - removed
    p[..., low] += eps
    return p


def worst_case_l1(ambiguity, value):
    """Minimum of ``p . value`` over the ball and an attaining ``p``."""
    v = np.asarray(value, dtype=float)
    if v.shape != ambiguity.nominal.shape:
        raise InvalidInputError("value length does not match the nominal point")
    p = worst_case_rows(ambiguity.nominal, np.asarray(ambiguity.radius), v)
    return float(p @ v), p


def project_to_level(p, value, level):
    """L1-closest point to ``p`` on ``{q in simplex : value . q = level}``.

    Moving mass ``t`` from state ``j`` to the extreme state ``e`` shifts the
    level by ``t * (v_e - v_j)``, so donors are taken in order of largest
    gap. Raises when the level is outside ``[min v, max v]``.
    """
    v = np.asarray(value, dtype=float)
    q = np.array(p, dtype=float, copy=True)
    vmin, vmax = v.min(), v.max()
    if level < vmin - LEVEL_TOL or level > vmax + LEVEL_TOL:
        raise InvalidInputError(f"level {level} outside [{vmin}, {vmax}]")
    gap = float(q @ v) - level
    if gap == 0.0 or vmax == vmin:
        return q
    if gap > 0:
        receiver = int(np.argmin(v))
        donors = np.argsort(-v, kind="stable")
    else:
        receiver = int(np.argmax(v))
        donors = np.argsort(v, kind="stable")
        gap = -gap
    for j in donors:
        rate = abs(v[j] - v[receiver])
        if rate == 0.0 or gap <= 0.0:
            break
        t = min(q[j], gap / rate)
        q[j] -= t
        q[receiver] += t
        gap -= t * rate
    return q


def distance_to_level(p, value, level):
    """L1 distance from ``p`` to the hyperplane slice of the simplex."""
    return l1_distance(p, project_to_level(p, value, level))


def _normalized(targets):
    """Validate targets, rescale each to [0, 1] and drop duplicates."""
    out = []
    seen = []
    size = None
    for index, target in enumerate(targets):
        v = np.asarray(target.value, dtype=float)
        g = float(target.level)
        if size is None:
            size = v.shape
        if v.ndim != 1 or v.shape != size:
            raise InvalidInputError(f"target {index} has a mismatched value vector")
        if not np.all(np.isfinite(v)) or not np.isfinite(g):
            raise InvalidInputError(f"target {index} is not finite")
        vmin, vmax = v.min(), v.max()
        tol = LEVEL_TOL * max(1.0, abs(vmin), abs(vmax))
        if g < vmin - tol or g > vmax + tol:
            raise InfeasibleTargetError(index, f"level {g} outside [{vmin}, {vmax}]")
        if vmax == vmin:
            continue  # every simplex point lies on the hyperplane
        w = (v - vmin) / (vmax - vmin)
        h = min(max((g - vmin) / (vmax - vmin), 0.0), 1.0)
        key = np.append(w, h)
        if any(np.array_equal(key, k) for k in seen):
            continue
        seen.append(key)
        out.append((w, h))
    return out, size


def min_radius_center(targets, anchor=None, solver="simplex", contain=None):
    """Center and radius of the smallest L1 ball meeting every hyperplane.

    Solves ``min_p max_i ||q_i - p||_1`` over ``p, q_i`` in the simplex with
    ``v_i . q_i = g_i`` as an LP. Optimal centers are generally not unique:
    when ``anchor`` is given, a second LP picks the optimal center closest
    to it in L1 (with one distinct target this is the projection of
    ``anchor`` onto the hyperplane). ``solver`` is ``"simplex"`` for the
    built-in dense simplex or ``"highs"`` for scipy's HiGHS, which falls
    back to the built-in solver if it reports a failure.

    ``contain`` is an optional ``(center, radius)`` ball that the result must
    enclose, enforced through ``radius >= contain_radius + ||center -
    contain_center||_1`` (sufficient by the triangle inequality).

    Returns ``(center, radius)`` where ``radius`` is recomputed exactly as
    the largest distance from ``center`` to any of the hyperplanes (and,
    with ``contain``, at least the enclosing bound).
    """
    targets = list(targets)
    if not targets:
        raise InvalidInputError("at least one target is required")
    scaled, size = _normalized(targets)
    S = size[0]
    if anchor is not None:
        anchor = check_simplex(anchor, "anchor")
        if anchor.shape != size:
            raise InvalidInputError("anchor length does not match the targets")
    if contain is not None:
        c_prev = check_simplex(contain[0], "enclosed center")
        r_prev = min(float(contain[1]), MAX_RADIUS)
        if c_prev.shape != size or not r_prev >= 0.0:
            raise InvalidInputError("invalid ball to enclose")
        contain = (c_prev, r_prev)
        # Hyperplanes the enclosed ball already reaches are implied by
        # containment; if it reaches them all it is itself optimal.
        scaled = [(w, h) for w, h in scaled if distance_to_level(c_prev, w, h) > r_prev]
        if not scaled:
            return c_prev.copy(), r_prev
    elif len(scaled) == 0:
        return (np.full(S, 1.0 / S) if anchor is None else anchor.copy()), 0.0
    elif len(scaled) == 1:
        start = np.full(S, 1.0 / S) if anchor is None else anchor
        return project_to_level(start, *scaled[0]), 0.0

    center = _center_lp(_well_separated(scaled), S, anchor, solver, contain)
    radius = max((distance_to_level(center, w, h) for w, h in scaled), default=0.0)
    if contain is not None:
        radius = max(radius, contain[1] + l1_distance(center, contain[0]))
    return center, min(radius, MAX_RADIUS)


def _well_separated(scaled, tol=1e-6):
    # Nearly coincident hyperplanes make the LP ill-conditioned; the exact
    # radius is recomputed against every target afterwards.
    kept = []
    for w, h in scaled:
        if not any(max(np.abs(w - w2).max(), abs(h - h2)) < tol for w2, h2 in kept):
            kept.append((w, h))
    return kept


def _center_lp(scaled, S, anchor, solver, contain=None):
    # Variables: p (S) | per target i: t_i (S), sigma_i, rho_i | psi.
    # The closest point of hyperplane i is q_i = p - t_i + sigma_i e_lo + rho_i e_hi
    # (mass moves only to the lowest or highest valued state) at distance
    # 2 * sum(t_i). With values rescaled to [0, 1], v(e_lo) = 0 and v(e_hi) = 1.
    k = len(scaled)
    block = S + 2
    n = S + k * block + 1
    psi = n - 1
    A_eq = np.zeros((1 + 2 * k, n))
    b_eq = np.zeros(1 + 2 * k)
    A_eq[0, :S] = 1.0
    b_eq[0] = 1.0
    A_ub = np.zeros((k * S + k, n))
    b_ub = np.zeros(k * S + k)
    eye = np.eye(S)
    for i, (w, h) in enumerate(scaled):
        base = S + i * block
        t = slice(base, base + S)
        sigma, rho = base + S, base + S + 1
        A_eq[1 + 2 * i, :S] = w
        A_eq[1 + 2 * i, t] = -w
        A_eq[1 + 2 * i, rho] = 1.0
        b_eq[1 + 2 * i] = h
        A_eq[2 + 2 * i, t] = 1.0
        A_eq[2 + 2 * i, sigma] = -1.0
        A_eq[2 + 2 * i, rho] = -1.0
        A_ub[i * S:(i + 1) * S, :S] = -eye
        A_ub[i * S:(i + 1) * S, t] = eye
        A_ub[k * S + i, t] = 2.0
        A_ub[k * S + i, psi] = -1.0
    if contain is not None:
        # Extra variables z >= |p - c_prev| and psi >= r_prev + sum(z).
        c_prev, r_prev = contain
        A_ub = np.hstack([A_ub, np.zeros((A_ub.shape[0], S))])
        extra = np.zeros((2 * S + 1, n + S))
        extra[:S, :S], extra[:S, n:] = eye, -eye
        extra[S:2 * S, :S], extra[S:2 * S, n:] = -eye, -eye
        extra[-1, psi], extra[-1, n:] = -1.0, 1.0
        A_ub = np.vstack([A_ub, extra])
        b_ub = np.concatenate([b_ub, c_prev, -c_prev, [-r_prev]])
        A_eq = np.hstack([A_eq, np.zeros((A_eq.shape[0], S))])
        n += S
    c = np.zeros(n)
    c[psi] = 1.0
    x = _solve(c, A_ub, b_ub, A_eq, b_eq, solver)
    if anchor is not None:
        # Second stage: closest optimal center to the anchor, |p - anchor| <= z.
        # The stage-1 optimum may come from a different solver, so the bound
        # on psi is loosened once before settling for the stage-1 center.
        A_ub2 = np.zeros((A_ub.shape[0] + 2 * S + 1, n + S))
        A_ub2[:A_ub.shape[0], :n] = A_ub
        r = A_ub.shape[0]
        A_ub2[r:r + S, :S] = eye
        A_ub2[r:r + S, n:] = -eye
        A_ub2[r + S:r + 2 * S, :S] = -eye
        A_ub2[r + S:r + 2 * S, n:] = -eye
        A_ub2[-1, psi] = 1.0
        A_eq2 = np.hstack([A_eq, np.zeros((A_eq.shape[0], S))])
        c2 = np.concatenate([np.zeros(n), np.ones(S)])
        for slack in (1e-9, 1e-7):
            b_ub2 = np.concatenate([b_ub, anchor, -anchor, [x[psi] + slack]])
            try:
                x = _solve(c2, A_ub2, b_ub2, A_eq2, b_eq, solver)
                break
            except NumericalFailureError:
                continue
    p = np.clip(x[:S], 0.0, None)
    return p / p.sum()


def _solve(c, A_ub, b_ub, A_eq, b_eq, solver):
    if solver == "highs":
        from scipy.optimize import linprog as highs

        res = highs(c, A_ub, b_ub, A_eq, b_eq, bounds=(0, None), method="highs-ds")
        if res.status == 0:
            return res.x
    elif solver != "simplex":
        raise InvalidInputError(f"unknown LP solver {solver!r}")
    result = linprog(c, A_ub, b_ub, A_eq, b_eq)
    if result.status != OPTIMAL:
        raise NumericalFailureError(f"center-point LP ended with status {result.status}")
    return result.x
