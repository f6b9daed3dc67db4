"""LP solvers.

``exact`` (default): HiGHS finds an optimal basis in floating point, then the
basis is re-solved in rational arithmetic and certified (primal feasibility,
dual feasibility and complementary slackness checked exactly).  If the
certificate fails the problem is handed to the rational simplex.

``simplex``: dense two-phase rational simplex with Bland's rule.

``float``: HiGHS only; values are floats.
"""

from __future__ import annotations

import logging
from fractions import Fraction

import numpy as np

from .program import EQ, GE, LE, LinearProgram, LpSolution

log = logging.getLogger(__name__)

OPTIMAL, INFEASIBLE, UNBOUNDED = "optimal", "infeasible", "unbounded"


class SolverError(RuntimeError):
    pass


def solve(lp: LinearProgram, method: str = "exact") -> LpSolution:
    if method == "exact":
        return _solve_exact(lp)
    if method == "simplex":
        return simplex(lp)
    if method == "float":
        return _solve_float(lp)
    raise ValueError(f"unknown method {method!r}")


# --------------------------------------------------------------------------
# HiGHS
# --------------------------------------------------------------------------


def _row_bounds(lp: LinearProgram):
    inf = float("inf")
    lo = np.empty(lp.num_rows)
    hi = np.empty(lp.num_rows)
    for k, r in enumerate(lp.rows):
        b = float(r.rhs)
        lo[k] = b if r.sense in (GE, EQ) else -inf
        hi[k] = b if r.sense in (LE, EQ) else inf
    return lo, hi


def _run_highs(lp: LinearProgram, presolve: bool = True):
    import highspy

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("random_seed", 0)
    h.setOptionValue("threads", 1)
    if not presolve:
        h.setOptionValue("presolve", "off")
        h.setOptionValue("primal_feasibility_tolerance", 1e-10)
        h.setOptionValue("dual_feasibility_tolerance", 1e-10)
    inf = highspy.kHighsInf
    n = lp.num_vars
    lower = np.array([-inf if x is None else float(x) for x in lp.lower], dtype=np.float64)
    upper = np.array([inf if x is None else float(x) for x in lp.upper], dtype=np.float64)
    if n:
        h.addVars(n, lower, upper)
        idx = np.array(sorted(lp.objective), dtype=np.int32)
        if len(idx):
            vals = np.array([float(lp.objective[k]) for k in idx], dtype=np.float64)
            h.changeColsCost(len(idx), idx, vals)
    if lp.num_rows:
        lo, hi = _row_bounds(lp)
        lo = np.where(np.isinf(lo), -inf, lo)
        hi = np.where(np.isinf(hi), inf, hi)
        starts, indices, values = [], [], []
        for r in lp.rows:
            starts.append(len(indices))
            for k in sorted(r.coeffs):
                indices.append(k)
                values.append(float(r.coeffs[k]))
        h.addRows(lp.num_rows, lo, hi, len(indices), np.array(starts, dtype=np.int32),
                  np.array(indices, dtype=np.int32), np.array(values, dtype=np.float64))
    h.changeObjectiveSense(highspy.ObjSense.kMaximize)
    h.run()
    return h


def _highs_status(h) -> str:
    import highspy

    st = h.getModelStatus()
    if st == highspy.HighsModelStatus.kOptimal:
        return OPTIMAL
    if st == highspy.HighsModelStatus.kInfeasible:
        return INFEASIBLE
    if st in (highspy.HighsModelStatus.kUnbounded, highspy.HighsModelStatus.kUnboundedOrInfeasible):
        return UNBOUNDED
    raise SolverError(f"HiGHS stopped with status {h.modelStatusToString(st)}")


def _solve_float(lp: LinearProgram) -> LpSolution:
    h = _run_highs(lp)
    status = _highs_status(h)
    if status != OPTIMAL:
        return LpSolution(status, exact=False, method="float")
    x = h.getSolution().col_value
    return LpSolution(OPTIMAL, float(h.getInfo().objective_function_value),
                      {name: float(x[k]) for k, name in enumerate(lp.names)}, exact=False,
                      method="float")


# --------------------------------------------------------------------------
# exact certification of a HiGHS basis
# --------------------------------------------------------------------------


def _solve_square(rows: list[dict[int, Fraction]], cols: list[int], rhs: list[Fraction]):
    """Solve ``A x = b`` where row ``r`` of ``A`` is ``rows[r]`` restricted to ``cols``."""
    import flint

    size = len(cols)
    pos = {c: k for k, c in enumerate(cols)}
    A = flint.fmpq_mat(size, size)
    for r, coeffs in enumerate(rows):
        for c, v in coeffs.items():
            k = pos.get(c)
            if k is not None:
                A[r, k] = flint.fmpq(v.numerator, v.denominator)
    b = flint.fmpq_mat(size, 1)
    for r, v in enumerate(rhs):
        b[r, 0] = flint.fmpq(v.numerator, v.denominator)
    x = A.solve(b)
    return [Fraction(int(x[k, 0].p), int(x[k, 0].q)) for k in range(size)]


def certify_basis(lp: LinearProgram, col_status, row_status) -> LpSolution | None:
    """Rebuild the vertex of a basis exactly and check optimality.

    Returns ``None`` when the basis is singular or not optimal in exact
    arithmetic.
    """
    import highspy

    B = highspy.HighsBasisStatus
    zero = Fraction(0)
    x: list[Fraction | None] = [None] * lp.num_vars
    basic_cols = []
    for k, st in enumerate(col_status):
        lo, hi = lp.lower[k], lp.upper[k]
        if st == B.kBasic:
            basic_cols.append(k)
        elif st == B.kLower and lo is not None:
            x[k] = lo
        elif st == B.kUpper and hi is not None:
            x[k] = hi
        elif st == B.kZero and lo is None and hi is None:
            x[k] = zero
        else:
            x[k] = lo if lo is not None else (hi if hi is not None else zero)
    tight, tight_rhs, row_side = [], [], []
    for r_i, (r, st) in enumerate(zip(lp.rows, row_status)):
        if st == B.kBasic:
            continue
        if r.sense == EQ:
            side = 0
        elif st == B.kUpper:
            side = 1 if r.sense == LE else None
        elif st == B.kLower:
            side = -1 if r.sense == GE else None
        else:
            side = 1 if r.sense == LE else -1
        if side is None:
            return None
        tight.append(r_i)
        row_side.append(side)
    if len(tight) != len(basic_cols):
        return None
    basic_set = set(basic_cols)
    rows = []
    for r_i in tight:
        r = lp.rows[r_i]
        rows.append(r.coeffs)
        tight_rhs.append(r.rhs - sum((c * x[k] for k, c in r.coeffs.items() if k not in basic_set), zero))
    try:
        xb = _solve_square(rows, basic_cols, tight_rhs) if basic_cols else []
    except ZeroDivisionError:
        return None
    for k, v in zip(basic_cols, xb):
        x[k] = v
    # primal feasibility
    for k in range(lp.num_vars):
        if lp.lower[k] is not None and x[k] < lp.lower[k]:
            return None
        if lp.upper[k] is not None and x[k] > lp.upper[k]:
            return None
    for r in lp.rows:
        act = sum((c * x[k] for k, c in r.coeffs.items()), zero)
        if (r.sense == LE and act > r.rhs) or (r.sense == GE and act < r.rhs) or \
                (r.sense == EQ and act != r.rhs):
            return None
    # duals: A_tight[:, basic]^T y = c_basic
    if basic_cols:
        pos = {c: k for k, c in enumerate(basic_cols)}
        trans: list[dict[int, Fraction]] = [dict() for _ in basic_cols]
        for t, r_i in enumerate(tight):
            for c, v in lp.rows[r_i].coeffs.items():
                k = pos.get(c)
                if k is not None:
                    trans[k][t] = v
        try:
            y = _solve_square(trans, list(range(len(tight))), [lp.objective.get(c, zero) for c in basic_cols])
        except ZeroDivisionError:
            return None
    else:
        y = []
    for yk, side in zip(y, row_side):
        if (side == 1 and yk < 0) or (side == -1 and yk > 0):
            return None
    # reduced costs of nonbasic columns
    red = dict(lp.objective)
    for yk, r_i in zip(y, tight):
        if yk:
            for c, v in lp.rows[r_i].coeffs.items():
                red[c] = red.get(c, zero) - yk * v
    for k in range(lp.num_vars):
        if k in basic_set:
            continue
        d = red.get(k, zero)
        if d == 0:
            continue
        at_lo = lp.lower[k] is not None and x[k] == lp.lower[k]
        at_hi = lp.upper[k] is not None and x[k] == lp.upper[k]
        if d > 0 and not at_hi:
            return None
        if d < 0 and not at_lo:
            return None
    obj = sum((c * x[k] for k, c in lp.objective.items()), zero)
    return LpSolution(OPTIMAL, obj, {name: x[k] for k, name in enumerate(lp.names)},
                      exact=True, method="exact", certified=True)


def _solve_exact(lp: LinearProgram) -> LpSolution:
    for presolve in (True, False):
        h = _run_highs(lp, presolve=presolve)
        status = _highs_status(h)
        if status != OPTIMAL:
            if presolve:
                continue
            log.info("HiGHS reports %s; confirming with the rational simplex", status)
            return simplex(lp)
        basis = h.getBasis()
        sol = certify_basis(lp, list(basis.col_status), list(basis.row_status))
        if sol is not None:
            return sol
    log.warning("basis certification failed for %s; falling back to the rational simplex", lp.name)
    return simplex(lp)


# --------------------------------------------------------------------------
# rational simplex (Bland's rule)
# --------------------------------------------------------------------------


def simplex(lp: LinearProgram) -> LpSolution:
    """Two-phase dense simplex in exact arithmetic with Bland's anti-cycling rule."""
    zero, one = Fraction(0), Fraction(1)
    # column substitution: x_k = offset + sum(sign * z)
    cols: list[tuple[int, Fraction]] = []  # (original var, sign)
    offset: list[Fraction] = []
    extra_rows: list[tuple[dict[int, Fraction], str, Fraction]] = []
    col_of: list[list[tuple[int, Fraction]]] = []
    for k in range(lp.num_vars):
        lo, hi = lp.lower[k], lp.upper[k]
        if lo is not None:
            offset.append(lo)
            z = len(cols)
            cols.append((k, one))
            col_of.append([(z, one)])
            if hi is not None:
                extra_rows.append(({z: one}, LE, hi - lo))
        elif hi is not None:
            offset.append(hi)
            z = len(cols)
            cols.append((k, -one))
            col_of.append([(z, -one)])
        else:
            offset.append(zero)
            z = len(cols)
            cols.append((k, one))
            cols.append((k, -one))
            col_of.append([(z, one), (z + 1, -one)])
    rows = []
    for r in lp.rows:
        coeffs: dict[int, Fraction] = {}
        rhs = r.rhs
        for k, c in r.coeffs.items():
            rhs -= c * offset[k]
            for z, s in col_of[k]:
                coeffs[z] = coeffs.get(z, zero) + c * s
        rows.append((coeffs, r.sense, rhs))
    rows.extend(extra_rows)
    nz = len(cols)
    n_slack = sum(1 for _, s, _ in rows if s != EQ)
    m_rows = len(rows)
    width = nz + n_slack + m_rows  # structural, slack, artificial
    T = []
    basis = []
    slack = nz
    for r_i, (coeffs, sense, rhs) in enumerate(rows):
        line = [zero] * (width + 1)
        for z, c in coeffs.items():
            line[z] = c
        if sense == LE:
            line[slack] = one
            slack += 1
        elif sense == GE:
            line[slack] = -one
            slack += 1
        line[-1] = rhs
        if rhs < 0:
            line = [-v for v in line]
        art = nz + n_slack + r_i
        line[art] = one
        T.append(line)
        basis.append(art)
    art_start = nz + n_slack

    def pivot(r, c):
        piv = T[r][c]
        row = T[r]
        if piv != 1:
            row = [v / piv for v in row]
            T[r] = row
        nzcols = [k for k, v in enumerate(row) if v]
        for i2 in range(len(T)):
            if i2 == r:
                continue
            f = T[i2][c]
            if f:
                line = T[i2]
                for k in nzcols:
                    line[k] -= f * row[k]
        basis[r] = c

    def run(cost: list[Fraction], allowed: int) -> str:
        while True:
            # reduced costs: cost_j - cost_B B^-1 A_j
            cb = [cost[b] for b in basis]
            enter = None
            in_basis = set(basis)
            for j in range(allowed):
                if j in in_basis:
                    continue
                d = cost[j] - sum((cb[i] * T[i][j] for i in range(len(T)) if cb[i] and T[i][j]), zero)
                if d > 0:
                    enter = j
                    break
            if enter is None:
                return OPTIMAL
            leave, best = None, None
            for i in range(len(T)):
                a = T[i][enter]
                if a > 0:
                    ratio = T[i][-1] / a
                    if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                        best, leave = ratio, i
            if leave is None:
                return UNBOUNDED
            pivot(leave, enter)

    # phase 1: maximize -sum(artificials)
    cost1 = [zero] * width
    for k in range(art_start, width):
        cost1[k] = -one
    run(cost1, width)
    infeas = sum((T[i][-1] for i in range(len(T)) if basis[i] >= art_start), zero)
    if infeas > 0:
        return LpSolution(INFEASIBLE, method="simplex")
    # drive artificials out of the basis
    i = 0
    while i < len(T):
        if basis[i] >= art_start:
            col = next((j for j in range(art_start) if T[i][j] != 0), None)
            if col is None:
                del T[i]
                del basis[i]
                continue
            pivot(i, col)
        i += 1
    for line in T:
        del line[art_start:width]
    width = art_start
    cost2 = [zero] * width
    for k, c in lp.objective.items():
        for z, s in col_of[k]:
            cost2[z] += c * s
    status = run(cost2, width)
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, method="simplex")
    zval = [zero] * width
    for i, b in enumerate(basis):
        zval[b] = T[i][-1]
    x = list(offset)
    for z, (k, s) in enumerate(cols):
        x[k] += s * zval[z]
    obj = sum((c * x[k] for k, c in lp.objective.items()), zero)
    return LpSolution(OPTIMAL, obj, {name: x[k] for k, name in enumerate(lp.names)},
                      exact=True, method="simplex", certified=True)
