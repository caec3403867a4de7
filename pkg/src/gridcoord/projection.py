"""Exact polyhedral projection for feasible operating regions.

A DSO's feasible operating region (FOR) is the shadow of its full operating
polytope on the interface coordinates (p_if, q_if, nu_if).  This module
computes that shadow exactly with Fourier-Motzkin elimination, kept tractable
by two measures: variables pinned down by equality rows are eliminated by
substitution (no row growth), and genuine cross-product eliminations are
followed by LP-based redundancy pruning.  It also provides membership tests,
feasibility lifting back to full model vectors, axis slicing, and 2-D vertex
enumeration for polygon export.

Polyhedra are stored in pure inequality form A x <= b; an equality is carried
as the pair of opposing rows.  The canonical empty polyhedron is the single
marker row 0*x <= -1.
"""
import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .opt_core import (INFEASIBLE, MAX_ITER, OPTIMAL, UNBOUNDED,
                       QuadraticProgram, check_feasible, solve_lp, solve_qp)

log = logging.getLogger(__name__)

ROW_CAP_DEFAULT = 200_000
_SNAP = 1e-11          # coefficients below this collapse to exact zero
_KEEP_TOL = 1e-9       # a row survives pruning iff it can be violated by this
_PAIR_TOL = 1e-9       # match threshold for equality pair detection


class RowExplosion(RuntimeError):
    """Intermediate row count exceeded the configured cap."""


class EmptyRegion(ValueError):
    """Operation requires a nonempty polyhedron."""


class UnboundedRegion(ValueError):
    """Operation requires a bounded polyhedron."""


@dataclass(frozen=True)
class Polyhedron:
    """{x : A x <= b} with one label per column."""

    dim: int
    A: np.ndarray
    b: np.ndarray
    labels: tuple

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.size == 0:
            A = A.reshape(0, self.dim)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if A.shape != (b.size, self.dim):
            raise ValueError(f"inconsistent shapes {A.shape} vs ({b.size}, {self.dim})")
        if not (np.isfinite(A).all() and np.isfinite(b).all()):
            raise ValueError("nonfinite row data")
        labels = tuple(self.labels)
        if len(labels) != self.dim:
            raise ValueError("one label per column required")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "labels", labels)

    @property
    def n_rows(self) -> int:
        return self.b.size

    @classmethod
    def empty(cls, dim: int, labels) -> "Polyhedron":
        return cls(dim, np.zeros((1, dim)), np.array([-1.0]), tuple(labels))

    @property
    def is_marked_empty(self) -> bool:
        zero = np.all(self.A == 0.0, axis=1)
        return bool(np.any(zero & (self.b < 0.0)))


def from_model(model) -> Polyhedron:
    """All model constraints as one inequality system over all columns."""
    qp = model.qp_skeleton
    A = np.vstack([qp.A_ineq, qp.A_eq, -qp.A_eq])
    b = np.concatenate([qp.b_ineq, qp.b_eq, -qp.b_eq])
    return Polyhedron(qp.n, A, b, model.vmap.labels)


def _snap(A: np.ndarray) -> np.ndarray:
    A[np.abs(A) < _SNAP] = 0.0
    return A


def contains(poly: Polyhedron, point, slack: float = 1e-9) -> bool:
    point = np.asarray(point, dtype=float).reshape(-1)
    if point.size != poly.dim:
        raise ValueError("point dimension mismatch")
    if poly.n_rows == 0:
        return True
    return bool(np.all(poly.A @ point <= poly.b + slack))


def eliminate_variable(poly: Polyhedron, col: int,
                       row_cap: int = ROW_CAP_DEFAULT) -> Polyhedron:
    """Fourier-Motzkin elimination of one column; exact projection."""
    if not 0 <= col < poly.dim:
        raise ValueError(f"column {col} out of range")
    labels = poly.labels[:col] + poly.labels[col + 1:]
    if poly.n_rows == 0:
        return Polyhedron(poly.dim - 1, np.zeros((0, poly.dim - 1)),
                          np.zeros(0), labels)
    coef = poly.A[:, col]
    pos = coef > 0.0
    neg = coef < 0.0
    zero = ~(pos | neg)
    A_rest = np.delete(poly.A, col, axis=1)
    n_new = int(pos.sum()) * int(neg.sum()) + int(zero.sum())
    if n_new > row_cap:
        raise RowExplosion(f"{n_new} rows would exceed cap {row_cap}")
    parts_A = [A_rest[zero]]
    parts_b = [poly.b[zero]]
    if pos.any() and neg.any():
        Ap = A_rest[pos] / coef[pos, None]
        bp = poly.b[pos] / coef[pos]
        An = A_rest[neg] / (-coef[neg, None])
        bn = poly.b[neg] / (-coef[neg])
        cross_A = (Ap[:, None, :] + An[None, :, :]).reshape(-1, poly.dim - 1)
        cross_b = (bp[:, None] + bn[None, :]).reshape(-1)
        parts_A.append(cross_A)
        parts_b.append(cross_b)
    A = _snap(np.vstack(parts_A))
    b = np.concatenate(parts_b)
    A, b, feasible = _drop_trivial(A, b)
    if not feasible:
        return Polyhedron.empty(poly.dim - 1, labels)
    return Polyhedron(poly.dim - 1, A, b, labels)


def _drop_trivial(A, b, tol=1e-12):
    """Remove all-zero rows; report False if one is contradictory."""
    zero = ~np.any(A != 0.0, axis=1)
    if np.any(zero & (b < -tol)):
        return A, b, False
    keep = ~zero
    return A[keep], b[keep], True


def _normalize(A, b):
    scale = np.abs(A).max(axis=1)
    nz = scale > 0.0
    A = A.copy()
    b = b.copy()
    A[nz] /= scale[nz, None]
    b[nz] /= scale[nz]
    return A, b


def _dedupe(A, b):
    if b.size == 0:
        return A, b
    key = np.round(np.column_stack([A, b]), 10)
    _, idx = np.unique(key, axis=0, return_index=True)
    idx.sort()
    return A[idx], b[idx]


def _lp_max_witness(a, A_in, b_in, A_eq, b_eq, tol=1e-10):
    """(status, max a.x over the system, maximizer), +inf when unbounded."""
    n = a.size
    qp = QuadraticProgram(np.zeros((n, n)), -a, A_in, b_in, A_eq, b_eq)
    sol = solve_qp(qp, tol=tol)
    if sol.status in (UNBOUNDED, INFEASIBLE, MAX_ITER):
        return sol.status, np.inf, sol.x
    return sol.status, -sol.objective, sol.x


def _lp_max(a, A_in, b_in, A_eq, b_eq, tol=1e-10):
    """(status, max a.x over the system), +inf when unbounded."""
    status, val, _ = _lp_max_witness(a, A_in, b_in, A_eq, b_eq, tol)
    return status, val


def _interior_point(A_in, b_in, A_eq, b_eq, radius_cap=1e3):
    """Point strictly inside the inequalities (on the equality set).

    Solves the ball-inflation LP; returns (point, radius), or (None, 0.0)
    when the system has no inequality-interior.
    """
    m, n = A_in.shape
    norms = np.linalg.norm(A_in, axis=1)
    A_lp = np.vstack([np.column_stack([A_in, norms]),
                      np.append(np.zeros(n), 1.0)])
    b_lp = np.append(b_in, radius_cap)
    if A_eq is not None and A_eq.shape[0]:
        Aeq_lp = np.column_stack([A_eq, np.zeros(A_eq.shape[0])])
    else:
        Aeq_lp, b_eq = None, None
    g = np.append(np.zeros(n), -1.0)
    sol = solve_lp(g, A_lp, b_lp, Aeq_lp, b_eq, tol=1e-9)
    if sol.status != OPTIMAL:
        return None, 0.0
    return sol.x[:n], float(sol.x[n])


def _prune_rows_exact(A_in, b_in, A_eq, b_eq):
    """One LP per row against all surviving rows; quadratic but exact."""
    m = b_in.size
    active = np.ones(m, dtype=bool)
    for i in range(m):
        if not active[i]:
            continue
        others = active.copy()
        others[i] = False
        if not others.any() and (A_eq is None or A_eq.shape[0] == 0):
            continue
        trial_A = np.vstack([A_in[others], A_in[i:i + 1]])
        trial_b = np.concatenate([b_in[others], [b_in[i] + 1.0]])
        status, val = _lp_max(A_in[i], trial_A, trial_b, A_eq, b_eq)
        if status == OPTIMAL and val <= b_in[i] + _KEEP_TOL:
            active[i] = False
    return active


def _prune_rows_clarkson(A_in, b_in, A_eq, b_eq, z0):
    """Output-sensitive survivor mask: each redundancy LP runs over the
    known-essential rows only, and a witness that escapes row i is ray-shot
    from the interior point to discover the facet it first crosses.

    A row kept here may still be redundant (degenerate hits are resolved
    conservatively); callers polish the survivors with the exact pass.
    """
    m = b_in.size
    slack0 = b_in - A_in @ z0
    essential = []
    state = np.zeros(m, dtype=np.int8)  # 0 undecided, 1 essential, -1 dropped
    for i in range(m):
        if state[i]:
            continue
        while True:
            trial_A = np.vstack([A_in[essential], A_in[i:i + 1]])
            trial_b = np.concatenate([b_in[essential], [b_in[i] + 1.0]])
            status, val, x_star = _lp_max_witness(
                A_in[i], trial_A, trial_b, A_eq, b_eq)
            if status == OPTIMAL and val <= b_in[i] + _KEEP_TOL:
                state[i] = -1
                break
            if status != OPTIMAL or A_in[i] @ x_star <= b_in[i]:
                # no usable witness; keep conservatively for the polish pass
                state[i] = 1
                essential.append(i)
                break
            d = x_star - z0
            Ad = A_in @ d
            crossing = Ad > 1e-12
            t = slack0[crossing] / Ad[crossing]
            k = int(np.flatnonzero(crossing)[np.argmin(t)])
            if state[k] == 1:
                state[i] = 1
                essential.append(i)
                break
            state[k] = 1
            essential.append(k)
            if k == i:
                break
    return state >= 0


_CLARKSON_MIN_ROWS = 40


def _prune_rows(A_in, b_in, A_eq, b_eq, *, z0=None, polish=True):
    """Drop inequality rows implied by the rest of the system.

    `z0` is an optional strictly inequality-interior point (exact on the
    equalities); it spares the tall feasibility and ball-inflation LPs.
    `polish=False` accepts the output-sensitive survivor set as is, for
    intermediate elimination states whose rows are consumed right away.
    """
    A_in, b_in = _normalize(A_in, b_in)
    A_in, b_in, feasible = _drop_trivial(A_in, b_in)
    if not feasible:
        return A_in[:0], b_in[:0], False
    A_in, b_in = _dedupe(A_in, b_in)
    m = b_in.size
    if m == 0:
        return A_in, b_in, True
    if z0 is not None and (m == 0 or (b_in - A_in @ z0).min() <= 1e-9):
        z0 = None
    if z0 is None:
        if m > _CLARKSON_MIN_ROWS:
            cand, radius = _interior_point(A_in, b_in, A_eq, b_eq)
            if cand is not None and radius > 1e-7:
                z0 = cand
        if z0 is None:
            ok, _ = check_feasible(A_in, b_in, A_eq, b_eq, tol=1e-9)
            if not ok:
                return A_in[:0], b_in[:0], False
    if m > _CLARKSON_MIN_ROWS and z0 is not None:
        survivors = _prune_rows_clarkson(A_in, b_in, A_eq, b_eq, z0)
        A_in, b_in = A_in[survivors], b_in[survivors]
        if not polish:
            return A_in, b_in, True
    active = _prune_rows_exact(A_in, b_in, A_eq, b_eq)
    return A_in[active], b_in[active], True


def remove_redundant(poly: Polyhedron) -> Polyhedron:
    """Minimal-row description of the same set (paired rows preserved)."""
    if poly.n_rows == 0:
        return poly
    if poly.is_marked_empty:
        return Polyhedron.empty(poly.dim, poly.labels)
    A_eq, b_eq, A_in, b_in = _split_pairs(poly.A, poly.b)
    A_eq, b_eq, consistent = _independent_equalities(A_eq, b_eq)
    if not consistent:
        return Polyhedron.empty(poly.dim, poly.labels)
    A_in, b_in, feasible = _prune_rows(A_in, b_in, A_eq, b_eq)
    if not feasible:
        return Polyhedron.empty(poly.dim, poly.labels)
    A, b = _pair_back(A_eq, b_eq, A_in, b_in)
    A, b = _canonical(A, b)
    return Polyhedron(poly.dim, A, b, poly.labels)


def _split_pairs(A, b):
    """Separate exact opposing row pairs (equalities) from plain rows."""
    A, b = _normalize(A, b)
    m = b.size
    used = np.zeros(m, dtype=bool)
    eq_A, eq_b, in_A, in_b = [], [], [], []
    index = {}
    for i in range(m):
        key = (np.round(A[i], 10).tobytes(), round(float(b[i]), 10))
        index.setdefault(key, []).append(i)
    for i in range(m):
        if used[i]:
            continue
        nkey = (np.round(-A[i], 10).tobytes(), round(float(-b[i]), 10))
        partner = next((j for j in index.get(nkey, []) if not used[j] and j != i),
                       None)
        if partner is not None and np.abs(A[i] + A[partner]).max() <= _PAIR_TOL \
                and abs(b[i] + b[partner]) <= _PAIR_TOL:
            used[i] = used[partner] = True
            eq_A.append(A[i])
            eq_b.append(b[i])
        else:
            used[i] = True
            in_A.append(A[i])
            in_b.append(b[i])
    eq_A = np.array(eq_A).reshape(-1, A.shape[1])
    in_A = np.array(in_A).reshape(-1, A.shape[1])
    return eq_A, np.array(eq_b), in_A, np.array(in_b)


def _independent_equalities(A_eq, b_eq):
    """Keep a maximal independent subset; flag inconsistent systems."""
    if b_eq.size == 0:
        return A_eq, b_eq, True
    zero = ~np.any(A_eq != 0.0, axis=1)
    if np.any(np.abs(b_eq[zero]) > 1e-9):
        return A_eq, b_eq, False
    A_eq, b_eq = A_eq[~zero], b_eq[~zero]
    if b_eq.size == 0:
        return A_eq, b_eq, True
    M = np.column_stack([A_eq, b_eq])
    keep = []
    basis = np.zeros((0, M.shape[1]))
    for i in range(M.shape[0]):
        trial = np.vstack([basis, M[i]])
        if np.linalg.matrix_rank(trial, tol=1e-9) > basis.shape[0]:
            basis = trial
            keep.append(i)
        else:
            if np.linalg.matrix_rank(np.vstack([basis[:, :-1], A_eq[i]]),
                                     tol=1e-9) == basis.shape[0]:
                resid = _eq_residual(basis, A_eq[i], b_eq[i])
                if resid > 1e-8:
                    return A_eq, b_eq, False
    return A_eq[keep], b_eq[keep], True


def _eq_residual(basis, a, beta):
    """|beta - coeffs.b| when a is a combination of basis rows."""
    B = basis[:, :-1]
    coeff, *_ = np.linalg.lstsq(B.T, a, rcond=None)
    return abs(float(coeff @ basis[:, -1]) - beta)


def _pair_back(A_eq, b_eq, A_in, b_in):
    A = np.vstack([A_in, A_eq, -A_eq])
    b = np.concatenate([b_in, b_eq, -b_eq])
    return A, b


def _canonical(A, b):
    if b.size == 0:
        return A, b
    keys = [b] + [A[:, k] for k in range(A.shape[1] - 1, -1, -1)]
    order = np.lexsort(keys)
    return A[order], b[order]


def project_onto(poly: Polyhedron, keep, *, row_cap: int = ROW_CAP_DEFAULT,
                 stats: dict = None) -> Polyhedron:
    """Exact projection onto the kept columns, in the order given.

    Columns fixed by equality rows are eliminated by substitution; the rest
    fall to Fourier-Motzkin with LP redundancy pruning after each step.
    """
    keep = list(keep)
    if len(set(keep)) != len(keep):
        raise ValueError("duplicate columns in keep")
    if any(not 0 <= c < poly.dim for c in keep):
        raise ValueError("keep column out of range")
    labels = tuple(poly.labels[c] for c in keep)
    if poly.is_marked_empty:
        return Polyhedron.empty(len(keep), labels)
    A_eq, b_eq, A_in, b_in = _split_pairs(poly.A, poly.b)
    cols = list(range(poly.dim))
    # a strictly interior point of the input stays strictly interior under
    # both substitution and cross-product elimination, so one small LP here
    # replaces a tall feasibility plus inflation LP at every pruning step
    z_int, radius = _interior_point(A_in, b_in, A_eq, b_eq)
    if z_int is not None and radius <= 1e-7:
        z_int = None
    if stats is not None:
        stats.setdefault("max_rows", 0)
        stats.setdefault("fm_steps", 0)
        stats.setdefault("subst_steps", 0)

    def record():
        if stats is not None:
            rows = 2 * b_eq.size + b_in.size
            stats["max_rows"] = max(stats["max_rows"], rows)

    record()
    while len(cols) > len(keep):
        nnz = {}
        for c in cols:
            if c in keep:
                continue
            j = cols.index(c)
            count = int(np.count_nonzero(np.abs(A_in[:, j]) > _SNAP)) \
                + 2 * int(np.count_nonzero(np.abs(A_eq[:, j]) > _SNAP))
            nnz[c] = count
        c = min(nnz, key=lambda k: (nnz[k], k))
        j = cols.index(c)
        eq_coef = np.abs(A_eq[:, j]) if b_eq.size else np.zeros(0)
        if eq_coef.size and eq_coef.max() > 1e-9:
            pivot = int(np.argmax(eq_coef))
            A_eq, b_eq, A_in, b_in, feasible = _substitute(
                A_eq, b_eq, A_in, b_in, pivot, j)
            if z_int is not None:
                z_int = np.delete(z_int, j)
            if stats is not None:
                stats["subst_steps"] += 1
        else:
            A_eq = np.delete(A_eq, j, axis=1)
            sub = Polyhedron(len(cols), np.column_stack([A_in]),
                             b_in, tuple(str(k) for k in cols))
            sub = eliminate_variable(sub, j, row_cap=row_cap)
            if sub.is_marked_empty:
                return Polyhedron.empty(len(keep), labels)
            A_in, b_in = sub.A, sub.b
            if z_int is not None:
                z_int = np.delete(z_int, j)
            A_in, b_in, feasible = _prune_rows(A_in, b_in, A_eq, b_eq,
                                               z0=z_int, polish=False)
            if stats is not None:
                stats["fm_steps"] += 1
        if not feasible:
            return Polyhedron.empty(len(keep), labels)
        cols.pop(j)
        record()

    perm = [cols.index(c) for c in keep]
    A_eq = A_eq[:, perm]
    A_in = A_in[:, perm]
    if z_int is not None:
        z_int = z_int[perm]
    A_eq, b_eq, consistent = _independent_equalities(A_eq, b_eq)
    if not consistent:
        return Polyhedron.empty(len(keep), labels)
    A_in, b_in, feasible = _prune_rows(A_in, b_in, A_eq, b_eq, z0=z_int)
    if not feasible:
        return Polyhedron.empty(len(keep), labels)
    record()
    A, b = _pair_back(A_eq, b_eq, A_in, b_in)
    A, b = _canonical(A, b)
    return Polyhedron(len(keep), A, b, labels)


def _substitute(A_eq, b_eq, A_in, b_in, pivot, j):
    """Eliminate column j using equality row `pivot`; exact, no row growth."""
    alpha = A_eq[pivot, j]
    piv_row = A_eq[pivot] / alpha
    piv_b = b_eq[pivot] / alpha

    def apply(A, b):
        if b.size == 0:
            return np.delete(A, j, axis=1), b
        beta = A[:, j]
        A = A - np.outer(beta, piv_row)
        b = b - beta * piv_b
        return _snap(np.delete(A, j, axis=1)), b

    A_eq2 = np.delete(A_eq, pivot, axis=0)
    b_eq2 = np.delete(b_eq, pivot)
    A_eq2, b_eq2 = apply(A_eq2, b_eq2)
    A_in2, b_in2 = apply(A_in, b_in)
    zero_eq = ~np.any(A_eq2 != 0.0, axis=1)
    if np.any(np.abs(b_eq2[zero_eq]) > 1e-9):
        return A_eq2, b_eq2, A_in2, b_in2, False
    A_eq2, b_eq2 = A_eq2[~zero_eq], b_eq2[~zero_eq]
    A_in2, b_in2, feasible = _drop_trivial(A_in2, b_in2, tol=1e-9)
    return A_eq2, b_eq2, A_in2, b_in2, feasible


def coupling_region(model, *, row_cap: int = ROW_CAP_DEFAULT,
                    stats: dict = None) -> Polyhedron:
    """FOR of a single-interface model: shadow on (p_if, q_if, nu_if)."""
    cols = list(model.vmap.coupling_triple(0))
    return project_onto(from_model(model), cols, row_cap=row_cap, stats=stats)


def lift_point(model, z, slot: int = 0, tol: float = 1e-9):
    """Full model vector matching coupling value z, or None if infeasible."""
    z = np.asarray(z, dtype=float).reshape(-1)
    cols = model.vmap.coupling_triple(slot)
    if z.size != len(cols):
        raise ValueError("coupling vector must have 3 entries")
    qp = model.qp_skeleton
    pins = np.zeros((len(cols), qp.n))
    for r, c in enumerate(cols):
        pins[r, c] = 1.0
    A_eq = np.vstack([qp.A_eq, pins])
    b_eq = np.concatenate([qp.b_eq, z])
    ok, witness = check_feasible(qp.A_ineq, qp.b_ineq, A_eq, b_eq, tol=tol)
    return witness if ok else None


def slice_fix(poly: Polyhedron, col: int, value: float) -> Polyhedron:
    """Substitute x[col] = value and drop the column."""
    if not 0 <= col < poly.dim:
        raise ValueError(f"column {col} out of range")
    labels = poly.labels[:col] + poly.labels[col + 1:]
    b = poly.b - poly.A[:, col] * value
    A = np.delete(poly.A, col, axis=1)
    A, b, feasible = _drop_trivial(A, b, tol=1e-12)
    if not feasible:
        return Polyhedron.empty(poly.dim - 1, labels)
    return Polyhedron(poly.dim - 1, A, b, labels)


def chebyshev_center(poly: Polyhedron, radius_cap: float = 1e6):
    """(center, radius) of the largest inscribed ball."""
    if poly.is_marked_empty:
        raise EmptyRegion("marked empty")
    n = poly.dim
    norms = np.linalg.norm(poly.A, axis=1)
    A = np.column_stack([poly.A, norms])
    extra = np.zeros((2, n + 1))
    extra[0, n] = -1.0
    extra[1, n] = 1.0
    A = np.vstack([A, extra])
    b = np.concatenate([poly.b, [0.0, radius_cap]])
    g = np.zeros(n + 1)
    g[n] = -1.0
    sol = solve_qp(QuadraticProgram(np.zeros((n + 1, n + 1)), g, A, b,
                                    np.zeros((0, n + 1)), np.zeros(0)))
    if sol.status != OPTIMAL:
        raise EmptyRegion(f"no center: {sol.status}")
    return sol.x[:n], float(sol.x[n])


def vertices_2d(poly: Polyhedron) -> np.ndarray:
    """CCW vertex array of a bounded 2-D polytope, starting at the lex-min."""
    if poly.dim != 2:
        raise ValueError("vertex enumeration requires dim == 2")
    if poly.is_marked_empty:
        raise EmptyRegion("marked empty")
    A, b = _normalize(poly.A, poly.b)
    A, b, feasible = _drop_trivial(A, b)
    if not feasible:
        raise EmptyRegion("contradictory rows")
    ok, _ = check_feasible(A, b, tol=1e-9)
    if not ok:
        raise EmptyRegion("infeasible rows")
    for direction in (np.array([1.0, 0]), np.array([-1.0, 0]),
                      np.array([0, 1.0]), np.array([0, -1.0])):
        status, _ = _lp_max(direction, A, b, None, None)
        if status == UNBOUNDED:
            raise UnboundedRegion("polytope unbounded")
    m = b.size
    points = []
    for i in range(m):
        for j in range(i + 1, m):
            M = np.vstack([A[i], A[j]])
            det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
            if abs(det) < 1e-10:
                continue
            p = np.linalg.solve(M, np.array([b[i], b[j]]))
            if np.all(A @ p <= b + 1e-7):
                points.append(p)
    if not points:
        raise EmptyRegion("no vertices found")
    pts = np.array(points)
    _, idx = np.unique(np.round(pts, 7), axis=0, return_index=True)
    pts = pts[np.sort(idx)]
    if len(pts) > 2:
        centroid = pts.mean(axis=0)
        ang = np.arctan2(pts[:, 1] - centroid[1], pts[:, 0] - centroid[0])
        pts = pts[np.argsort(ang)]
    start = np.lexsort((pts[:, 1], pts[:, 0]))[0]
    return np.roll(pts, -start, axis=0)


def write_polygon_csv(path, vertices, *, dso_index: int, nu_value: float,
                      model_kind: str):
    """Polygon CSV (p_if,q_if) plus a JSON sidecar describing the slice."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["p_if", "q_if"])
        for v in np.asarray(vertices, dtype=float):
            w.writerow([repr(float(v[0])), repr(float(v[1]))])
    sidecar = path.with_suffix(".json")
    with open(sidecar, "w") as fh:
        json.dump({"dso_index": dso_index, "nu_value": nu_value,
                   "model_kind": model_kind}, fh, indent=2)
        fh.write("\n")
    return path, sidecar
