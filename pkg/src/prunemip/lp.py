"""Dense two-phase primal simplex for small linear programs.

Serves as the LP kernel for bound tightening, branch-and-bound node
relaxations, and the activation-pattern enumeration oracle. Variables may
carry finite or infinite bounds; infinities are real ``math.inf`` sentinels,
never large surrogate constants.
"""

import math
from dataclasses import dataclass, field

import numpy as np

FEAS_TOL = 1e-7
PIVOT_TOL = 1e-9
# Dantzig pricing until this many iterations, then Bland's rule (terminating).
_BLAND_FACTOR = 5
_MAX_ITER = 200_000

LE, EQ, GE = "<=", "=", ">="
_RELATIONS = (LE, EQ, GE)


class LpError(ValueError):
    """Malformed LP input (dimension mismatch, bad relation, ...)."""


@dataclass(frozen=True)
class Constraint:
    coeffs: dict  # var index -> coefficient
    relation: str
    rhs: float


@dataclass
class LinearProgram:
    num_vars: int
    objective_sense: str  # "maximize" | "minimize"
    objective: np.ndarray
    lower: np.ndarray  # -inf allowed
    upper: np.ndarray  # +inf allowed
    constraints: list = field(default_factory=list)


@dataclass
class LpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    objective: float = None
    primal: np.ndarray = None


def _validate(lp):
    n = lp.num_vars
    if len(lp.objective) != n or len(lp.lower) != n or len(lp.upper) != n:
        raise LpError("objective/bounds length does not match num_vars")
    if lp.objective_sense not in ("maximize", "minimize"):
        raise LpError(f"unknown objective sense {lp.objective_sense!r}")
    for ci, con in enumerate(lp.constraints):
        if con.relation not in _RELATIONS:
            raise LpError(f"constraint {ci}: unknown relation {con.relation!r}")
        for j in con.coeffs:
            if not 0 <= j < n:
                raise LpError(f"constraint {ci} references variable {j} >= num_vars")


def check_feasible(lp, point, tol=FEAS_TOL):
    """True iff every bound and constraint holds within tol."""
    _validate(lp)
    x = np.asarray(point, dtype=float)
    if x.shape != (lp.num_vars,):
        raise LpError(f"point has length {x.size}, expected {lp.num_vars}")
    if np.any(x < lp.lower - tol) or np.any(x > lp.upper + tol):
        return False
    for con in lp.constraints:
        lhs = sum(c * x[j] for j, c in con.coeffs.items())
        if con.relation == LE and lhs > con.rhs + tol:
            return False
        if con.relation == GE and lhs < con.rhs - tol:
            return False
        if con.relation == EQ and abs(lhs - con.rhs) > tol:
            return False
    return True


def _pivot(T, basis, r, j):
    piv = T[r] / T[r, j]
    col = T[:, j].copy()
    col[r] = 0.0
    T -= np.outer(col, piv)
    T[r] = piv
    basis[r - 1] = j


def _choose_row(T, basis, j):
    """Min-ratio test; ties broken by smallest basic variable index."""
    col = T[1:, j]
    rhs = T[1:, -1]
    mask = col > PIVOT_TOL
    if not mask.any():
        return -1
    ratios = np.full(col.shape, math.inf)
    ratios[mask] = rhs[mask] / col[mask]
    best = ratios.min()
    cand = np.flatnonzero(ratios <= best + 1e-12)
    r = cand[np.argmin(basis[cand])]
    return int(r) + 1


def _run_simplex(T, basis, bland_after, allowed):
    """Minimize the row-0 objective in place. Returns 'optimal'|'unbounded'."""
    it = 0
    while True:
        if it > _MAX_ITER:
            raise LpError("simplex iteration limit exceeded")
        costs = T[0, :-1]
        if costs.size == 0:  # every variable was fixed and substituted out
            return "optimal"
        if it >= bland_after:
            cand = np.flatnonzero(allowed & (costs < -PIVOT_TOL))
            if cand.size == 0:
                return "optimal"
            j = int(cand[0])
        else:
            masked = np.where(allowed, costs, 0.0)
            j = int(np.argmin(masked))
            if masked[j] >= -PIVOT_TOL:
                return "optimal"
        r = _choose_row(T, basis, j)
        if r < 0:
            return "unbounded"
        _pivot(T, basis, r, j)
        it += 1


def solve_lp(lp):
    """Two-phase primal simplex on a dense tableau. Deterministic."""
    _validate(lp)
    n = lp.num_vars
    lo = np.asarray(lp.lower, dtype=float)
    up = np.asarray(lp.upper, dtype=float)
    if np.any(lo > up):
        return LpSolution("infeasible")
    c_orig = np.asarray(lp.objective, dtype=float)
    maximize = lp.objective_sense == "maximize"

    # Column layout for the standard form. Every original variable maps to
    # nonnegative column(s) via shift / mirror / split; l == u variables are
    # substituted out as constants.
    col_of = [None] * n  # (kind, data...)
    ncols = 0
    ub_rows = []  # (col, ub) for shifted variables with finite upper bound
    for i in range(n):
        if lo[i] == up[i]:
            col_of[i] = ("fixed", lo[i])
        elif math.isfinite(lo[i]):
            col_of[i] = ("shift", ncols, lo[i])
            if math.isfinite(up[i]):
                ub_rows.append((ncols, up[i] - lo[i]))
            ncols += 1
        elif math.isfinite(up[i]):
            col_of[i] = ("mirror", ncols, up[i])
            ncols += 1
        else:
            col_of[i] = ("split", ncols, ncols + 1)
            ncols += 2

    rows = []  # (dense coeffs over structural cols, relation, rhs)
    for con in lp.constraints:
        row = np.zeros(ncols)
        rhs = con.rhs
        for j, a in con.coeffs.items():
            kind = col_of[j]
            if kind[0] == "fixed":
                rhs -= a * kind[1]
            elif kind[0] == "shift":
                row[kind[1]] += a
                rhs -= a * kind[2]
            elif kind[0] == "mirror":
                row[kind[1]] -= a
                rhs -= a * kind[2]
            else:
                row[kind[1]] += a
                row[kind[2]] -= a
        rows.append((row, con.relation, rhs))
    for col, ub in ub_rows:
        row = np.zeros(ncols)
        row[col] = 1.0
        rows.append((row, LE, ub))

    m = len(rows)
    nslack = sum(1 for _, rel, _ in rows if rel != EQ)
    A = np.zeros((m, ncols + nslack))
    b = np.zeros(m)
    slack_of = [-1] * m
    k = ncols
    for i, (row, rel, rhs) in enumerate(rows):
        A[i, :ncols] = row
        b[i] = rhs
        if rel != EQ:
            A[i, k] = 1.0 if rel == LE else -1.0
            slack_of[i] = k
            k += 1
    neg = b < 0
    A[neg] *= -1.0
    b[neg] = -b[neg]

    # Initial basis: row's own slack when it survives the sign flip with a +1
    # coefficient; otherwise an artificial.
    basis = np.empty(m, dtype=int)
    art_rows = []
    for i in range(m):
        if slack_of[i] >= 0 and A[i, slack_of[i]] > 0:
            basis[i] = slack_of[i]
        else:
            art_rows.append(i)
            basis[i] = -1  # patched below
    nart = len(art_rows)
    ntot = ncols + nslack + nart
    T = np.zeros((m + 1, ntot + 1))
    T[1:, : ncols + nslack] = A
    T[1:, -1] = b
    for idx, i in enumerate(art_rows):
        col = ncols + nslack + idx
        T[i + 1, col] = 1.0
        basis[i] = col
    allowed = np.ones(ntot, dtype=bool)
    bland_after = _BLAND_FACTOR * (n + len(lp.constraints))

    if nart:
        # Phase 1: minimize the sum of artificials.
        for i in art_rows:
            T[0] -= T[i + 1]
        T[0, ncols + nslack : -1] = 0.0  # reduced cost of basic artificials
        status = _run_simplex(T, basis, bland_after, allowed)
        assert status == "optimal"  # phase-1 objective is bounded below by 0
        if -T[0, -1] > FEAS_TOL:
            return LpSolution("infeasible")
        # Drive remaining artificials out of the basis; drop redundant rows.
        keep = np.ones(m + 1, dtype=bool)
        for r in range(1, m + 1):
            if basis[r - 1] >= ncols + nslack:
                piv_cols = np.flatnonzero(np.abs(T[r, : ncols + nslack]) > PIVOT_TOL)
                if piv_cols.size:
                    _pivot(T, basis, r, int(piv_cols[0]))
                else:
                    keep[r] = False
        T = T[keep]
        # Rebuild without artificial columns.
        T = np.hstack([T[:, : ncols + nslack], T[:, -1:]])
        basis = basis[keep[1:]]
        m = len(basis)
        allowed = np.ones(ncols + nslack, dtype=bool)

    # Phase 2.
    c2 = np.zeros(ncols + nslack)
    sgn = -1.0 if maximize else 1.0
    for i in range(n):
        kind = col_of[i]
        if kind[0] == "shift":
            c2[kind[1]] += sgn * c_orig[i]
        elif kind[0] == "mirror":
            c2[kind[1]] -= sgn * c_orig[i]
        elif kind[0] == "split":
            c2[kind[1]] += sgn * c_orig[i]
            c2[kind[2]] -= sgn * c_orig[i]
    T[0, :-1] = c2
    T[0, -1] = 0.0
    for r in range(1, m + 1):
        cb = c2[basis[r - 1]]
        if cb != 0.0:
            T[0] -= cb * T[r]
    status = _run_simplex(T, basis, bland_after, allowed)
    if status == "unbounded":
        return LpSolution("unbounded")

    vals = np.zeros(ncols + nslack)
    vals[basis] = T[1:, -1]
    x = np.empty(n)
    for i in range(n):
        kind = col_of[i]
        if kind[0] == "fixed":
            x[i] = kind[1]
        elif kind[0] == "shift":
            x[i] = kind[2] + vals[kind[1]]
        elif kind[0] == "mirror":
            x[i] = kind[2] - vals[kind[1]]
        else:
            x[i] = vals[kind[1]] - vals[kind[2]]
    obj = float(c_orig @ x)
    return LpSolution("optimal", objective=obj, primal=x)
