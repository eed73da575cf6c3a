"""Presolve for standard-form conic programs.

Three reductions, applied in order and recorded for postsolve:

1. row elimination to a fixpoint: empty rows, singleton rows on scalar
   (free or nonnegative) variables, and forcing rows whose nonnegative
   variables all carry one sign against a zero right-hand side;
2. removal of linearly dependent equality rows (column-singleton peeling,
   then a pivoted QR on whatever core is left);
3. Ruiz equilibration of rows and columns, with one factor per cone block so
   the cones are preserved.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from ..conic import Cone, ConicProgram

_ZERO = 1e-12


class PresolveInfeasible(Exception):
    """Presolve proved the equality system inconsistent with the cones."""


@dataclass
class Presolved:
    """Reduced program plus everything needed to map solutions back."""

    program: ConicProgram
    original: ConicProgram
    cols: np.ndarray  # kept original columns, in order
    rows: np.ndarray  # kept original rows, in order
    fixed: dict[int, float]
    steps: list[tuple] = field(default_factory=list)
    col_scale: np.ndarray | None = None
    row_scale: np.ndarray | None = None
    cost_scale: float = 1.0
    rhs_scale: float = 1.0
    status: str = "reduced"  # or "primal_infeasible"
    message: str = ""

    @property
    def removed_rows(self) -> int:
        return self.original.m - self.rows.size

    def unscale(self, x_bar, y_bar, s_bar):
        """Scaled reduced-space iterates -> unscaled reduced-space vectors."""
        x = self.col_scale * x_bar * self.rhs_scale
        y = self.row_scale * y_bar * self.cost_scale
        s = s_bar / self.col_scale * self.cost_scale
        return x, y, s

    def recover(self, x_red, y_red, s_red):
        """Reduced-space (unscaled) solution -> original-space ``(x, y, s)``."""
        p = self.original
        x = np.zeros(p.n)
        for j, v in self.fixed.items():
            x[j] = v
        x[self.cols] = x_red
        y = np.zeros(p.m)
        y[self.rows] = y_red
        At = p.A.T.tocsr()
        Acsc = p.A.tocsc()
        for step in reversed(self.steps):
            kind = step[0]
            if kind == "singleton":
                _, r, j, a = step
                col = Acsc.getcol(j)
                rest = float(col.data @ y[col.indices]) - a * y[r]
                y[r] = (p.c[j] - rest) / a
            elif kind == "forcing":
                _, r, js, coefs = step
                cands = []
                for j, a in zip(js, coefs):
                    col = Acsc.getcol(j)
                    rest = float(col.data @ y[col.indices]) - a * y[r]
                    cands.append((p.c[j] - rest) / a)
                y[r] = min(cands) if coefs[0] > 0 else max(cands)
            # "empty" and "dependent" rows keep y = 0
        s = p.c - At @ y
        s[self.cols] = s_red
        return x, y, s


def _scalar_kinds(p: ConicProgram) -> np.ndarray:
    """Per column: 0 free, 1 nonneg, 2 part of a cone block."""
    kind = np.empty(p.n, dtype=int)
    for k, sl in p.blocks():
        kind[sl] = {"free": 0, "nonneg": 1}.get(k.type, 2)
    return kind


def _eliminate(p: ConicProgram, tol: float):
    A = p.A.tocsr()
    Ac = p.A.tocsc()
    kind = _scalar_kinds(p)
    b = p.b.astype(float).copy()
    scale_b = 1.0 + np.abs(p.b).max(initial=0.0)
    row_alive = np.ones(p.m, dtype=bool)
    col_alive = np.ones(p.n, dtype=bool)
    fixed: dict[int, float] = {}
    steps: list[tuple] = []

    def row_entries(r):
        lo, hi = A.indptr[r], A.indptr[r + 1]
        js = A.indices[lo:hi]
        vs = A.data[lo:hi]
        keep = col_alive[js] & (vs != 0.0)
        return js[keep], vs[keep]

    def fix(j, val):
        fixed[int(j)] = float(val)
        col_alive[j] = False
        lo, hi = Ac.indptr[j], Ac.indptr[j + 1]
        rs = Ac.indices[lo:hi]
        b[rs] -= Ac.data[lo:hi] * val
        return rs

    queue = list(range(p.m))
    queued = np.ones(p.m, dtype=bool)
    while queue:
        r = queue.pop()
        queued[r] = False
        if not row_alive[r]:
            continue
        js, vs = row_entries(r)
        touched = ()
        if js.size == 0:
            if abs(b[r]) > tol * scale_b:
                raise PresolveInfeasible(f"row {r} reads 0 = {b[r]:.3g}")
            row_alive[r] = False
            steps.append(("empty", r))
        elif js.size == 1 and kind[js[0]] < 2:
            j, a = int(js[0]), float(vs[0])
            val = b[r] / a
            if kind[j] == 1:
                if val < -tol * scale_b / abs(a):
                    raise PresolveInfeasible(f"row {r} forces nonnegative variable {j} to {val:.3g}")
                val = max(val, 0.0)
            row_alive[r] = False
            steps.append(("singleton", r, j, a))
            touched = fix(j, val)
        elif np.all(kind[js] == 1) and (np.all(vs > 0) or np.all(vs < 0)):
            sign = 1.0 if vs[0] > 0 else -1.0
            if sign * b[r] < -tol * scale_b:
                raise PresolveInfeasible(f"row {r} cannot be met by nonnegative variables")
            if abs(b[r]) <= tol * scale_b:
                row_alive[r] = False
                steps.append(("forcing", r, [int(j) for j in js], [float(v) for v in vs]))
                touched = np.concatenate([fix(j, 0.0) for j in js])
        for rr in touched:
            if row_alive[rr] and not queued[rr]:
                queued[rr] = True
                queue.append(int(rr))
    return row_alive, col_alive, b, fixed, steps


def _independent_rows(A: sp.csr_matrix, tol: float = 1e-10) -> np.ndarray:
    """Boolean mask of a maximal linearly independent subset of rows."""
    m = A.shape[0]
    if m == 0:
        return np.ones(0, dtype=bool)
    Ac = A.tocsc()
    At = A.tocsr()
    col_count = np.diff(Ac.indptr).copy()
    alive = np.ones(m, dtype=bool)
    keep = np.zeros(m, dtype=bool)
    # a row holding a column no other remaining row touches is independent of them
    changed = True
    while changed:
        changed = False
        for r in np.flatnonzero(alive):
            js = At.indices[At.indptr[r] : At.indptr[r + 1]]
            if np.any(col_count[js] == 1):
                alive[r] = False
                keep[r] = True
                col_count[js] -= 1
                changed = True
    core = np.flatnonzero(alive)
    if core.size:
        M = A[core].toarray()
        cols = np.flatnonzero(np.any(M != 0, axis=0))
        M = M[:, cols]
        if M.shape[1] == 0:
            return keep
        _, R, piv = la.qr(M.T, mode="economic", pivoting=True)
        d = np.abs(np.diag(R))
        rank = int(np.sum(d > tol * max(d[0], 1.0))) if d.size else 0
        keep[core[piv[:rank]]] = True
    return keep


def _ruiz(A: sp.csr_matrix, groups: list[np.ndarray], iters: int = 15):
    m, n = A.shape
    R = np.ones(m)
    C = np.ones(n)
    coo = A.tocoo()
    rows, cols = coo.row, coo.col
    absval = np.abs(coo.data)
    for _ in range(iters):
        v = absval * R[rows] * C[cols]
        rn = np.zeros(m)
        cn = np.zeros(n)
        np.maximum.at(rn, rows, v)
        np.maximum.at(cn, cols, v)
        for g in groups:
            cn[g] = cn[g].max()
        rn = np.sqrt(rn)
        cn = np.sqrt(cn)
        rn[rn < 1e-8] = 1.0
        cn[cn < 1e-8] = 1.0
        R /= rn
        C /= cn
    return R, C


def presolve(p: ConicProgram, equilibrate: bool = True, tol: float = 1e-11) -> Presolved:
    """Reduce ``p``; see the module docstring for what is done.

    A provably infeasible program is reported through ``status`` rather than
    raised, so callers can short-circuit to a ``primal_infeasible`` solution.
    """
    try:
        row_alive, col_alive, b, fixed, steps = _eliminate(p, tol)
    except PresolveInfeasible as exc:
        return Presolved(
            program=p, original=p, cols=np.arange(p.n), rows=np.arange(p.m),
            fixed={}, status="primal_infeasible", message=str(exc),
        )
    rows = np.flatnonzero(row_alive)
    cols = np.flatnonzero(col_alive)
    A = p.A.tocsr()[rows][:, cols]
    b = b[rows]

    keep = _independent_rows(A)
    if not keep.all():
        dep = np.flatnonzero(~keep)
        ind = np.flatnonzero(keep)
        Ad = A[dep].toarray()
        Ai = A[ind].toarray()
        w, *_ = np.linalg.lstsq(Ai.T, Ad.T, rcond=None)
        resid = np.abs(w.T @ b[ind] - b[dep])
        bad = resid > 1e-8 * (1.0 + np.abs(b).max())
        if np.any(bad):
            return Presolved(
                program=p, original=p, cols=np.arange(p.n), rows=np.arange(p.m),
                fixed={}, status="primal_infeasible",
                message=f"dependent row {rows[dep[np.argmax(bad)]]} is inconsistent",
            )
        steps.extend(("dependent", int(rows[r])) for r in dep)
        rows = rows[ind]
        A = A[ind]
        b = b[ind]

    # reduced cone layout: cone blocks survive whole, scalar blocks shrink
    cones: list[Cone] = []
    groups: list[np.ndarray] = []
    pos = 0
    for k, sl in p.blocks():
        alive = int(col_alive[sl].sum())
        if alive == 0:
            continue
        if k.type in ("free", "nonneg"):
            if cones and cones[-1].type == k.type:
                cones[-1] = Cone(k.type, cones[-1].dim + alive)
            else:
                cones.append(Cone(k.type, alive))
        else:
            cones.append(k)
            groups.append(np.arange(pos, pos + k.dim))
        pos += alive
    c = p.c[cols].astype(float)

    if equilibrate and A.shape[0] and A.nnz:
        R, C = _ruiz(A, groups)
    else:
        R, C = np.ones(A.shape[0]), np.ones(A.shape[1])
    As = sp.diags(R) @ A @ sp.diags(C)
    bs, cs = R * b, C * c
    rhs_scale = max(1.0, float(np.abs(bs).max(initial=0.0))) if equilibrate else 1.0
    cost_scale = max(1.0, float(np.abs(cs).max(initial=0.0))) if equilibrate else 1.0
    names = tuple(p.names[j] for j in cols) if p.names else ()
    reduced = ConicProgram(
        c=cs / cost_scale, A=sp.csr_matrix(As), b=bs / rhs_scale, cones=tuple(cones), names=names,
    )
    return Presolved(
        program=reduced, original=p, cols=cols, rows=rows, fixed=fixed, steps=steps,
        col_scale=C, row_scale=R, cost_scale=cost_scale, rhs_scale=rhs_scale,
    )
