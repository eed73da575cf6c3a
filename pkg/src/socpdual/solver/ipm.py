"""Homogeneous self-dual interior-point method for standard-form conic programs.

Internally the program ``min c'x, Ax = b, x in K`` is treated as

    min c'x   s.t.  A x = b,   G x + s = 0,   s in K

with ``G = -E`` selecting the cone-constrained coordinates of ``x``. The
homogeneous embedding adds ``tau, kappa >= 0``; each iteration uses
Nesterov-Todd scaling and a Mehrotra predictor-corrector step. Newton systems
are reduced to the quasi-definite matrix

    [ E' W^-2 E + dI     A' ]
    [      A           -dI  ]

factored once per iteration (sparse LU, or dense for small systems), with
iterative refinement against the full unregularized Newton system.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..conic import ConicProgram, cone_violation
from .cones import ConeLayout
from .presolve import Presolved, presolve as run_presolve

log = logging.getLogger(__name__)

STATUSES = ("optimal", "primal_infeasible", "dual_infeasible", "max_iters", "numerical_failure")


@dataclass(frozen=True)
class SolverOptions:
    tol_feas: float = 1e-8
    tol_gap: float = 1e-8
    max_iters: int = 200
    regularization: float = 1e-9
    refine_steps: int = 3
    presolve: bool = True
    equilibrate: bool = True
    dense_below: int = 300
    verbose: bool = False


@dataclass
class Solution:
    status: str
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    primal_obj: float
    dual_obj: float
    residuals: dict = field(default_factory=dict)
    iterations: int = 0
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


class _KKT:
    """Reduced KKT system with a fixed sparsity pattern."""

    def __init__(self, A: sp.csr_matrix, kidx: np.ndarray, layout: ConeLayout, reg: float, dense_below: int):
        self.m, self.n = A.shape
        self.kidx = kidx
        self.layout = layout
        self.reg = reg
        N = self.n + self.m
        self.dense = N < dense_below
        Acoo = A.tocoo()
        rows = [Acoo.row + self.n, Acoo.col]
        cols = [Acoo.col, Acoo.row + self.n]
        self._avals = np.concatenate([Acoo.data, Acoo.data])
        nl = layout.nl
        hr, hc = [kidx[:nl]], [kidx[:nl]]
        for g in layout.groups:
            ids = kidx[g.start : g.stop].reshape(g.nb, g.dim)
            hr.append(np.repeat(ids, g.dim, axis=1).ravel())
            hc.append(np.tile(ids, (1, g.dim)).ravel())
        self._hr = np.concatenate(hr)
        self._hc = np.concatenate(hc)
        diag = np.arange(N)
        rows_all = np.concatenate(rows + [self._hr, diag])
        cols_all = np.concatenate(cols + [self._hc, diag])
        # fixed CSC pattern; duplicates are summed through ``_inv``
        key = cols_all.astype(np.int64) * N + rows_all
        uniq, self._inv = np.unique(key, return_inverse=True)
        self._indices = (uniq % N).astype(np.int32)
        self._indptr = np.searchsorted(uniq // N, np.arange(N + 1)).astype(np.int32)
        self._nnz = uniq.size
        self.N = N
        self.A = A

    def factor(self, hdiag, hmats, reg=None):
        reg = self.reg if reg is None else reg
        hv = np.concatenate([hdiag] + [M.ravel() for M in hmats])
        dreg = np.concatenate([np.full(self.n, reg), np.full(self.m, -reg)])
        vals = np.concatenate([self._avals, hv, dreg])
        data = np.bincount(self._inv, weights=vals, minlength=self._nnz)
        K = sp.csc_matrix((data, self._indices, self._indptr), shape=(self.N, self.N))
        if self.dense:
            self._lu = la.lu_factor(K.toarray(), check_finite=True)
            self._solve = lambda r: la.lu_solve(self._lu, r)
        else:
            lu = spla.splu(K, permc_spec="MMD_AT_PLUS_A")
            self._solve = lu.solve

    def solve(self, r):
        return self._solve(r)


def _layout_for(p: ConicProgram):
    lin, blocks, kidx_blocks = [], [], []
    for k, sl in p.blocks():
        if k.type == "nonneg":
            lin.extend(range(sl.start, sl.stop))
        elif k.type in ("soc", "rotated"):
            blocks.append((k.dim, k.type == "rotated"))
            kidx_blocks.append(np.arange(sl.start, sl.stop))
    layout = ConeLayout(len(lin), blocks)
    kidx = [np.array(lin, dtype=int)]
    for k in layout.order:
        kidx.append(kidx_blocks[k])
    kidx = np.concatenate(kidx).astype(int) if kidx else np.zeros(0, dtype=int)
    return layout, kidx


def _empty_solution(p: ConicProgram, status: str, message: str = "") -> Solution:
    nan = np.full
    return Solution(
        status=status, x=nan(p.n, np.nan), y=nan(p.m, np.nan), s=nan(p.n, np.nan),
        primal_obj=np.nan, dual_obj=np.nan, message=message,
    )


def kkt_residuals(p: ConicProgram, x, y, s) -> dict:
    """Certification measures of a primal-dual pair for ``p``."""
    pobj = float(p.c @ x)
    dobj = float(p.b @ y)
    return {
        "primal": float(np.linalg.norm(p.A @ x - p.b) / (1.0 + np.linalg.norm(p.b))),
        "dual": float(np.linalg.norm(p.A.T @ y + s - p.c) / (1.0 + np.linalg.norm(p.c))),
        "complementarity": float(abs(x @ s) / (1.0 + abs(pobj))),
        "gap": float(abs(pobj - dobj) / (1.0 + abs(pobj))),
        "primal_cone": cone_violation(p.cones, x),
        "dual_cone": cone_violation(p.cones, s, dual=True),
    }


def _hsd(p: ConicProgram, opts: SolverOptions):
    """Run the embedding on an (already presolved) program.

    Returns ``(status, x, y, s, iterations, message)`` in the coordinates of
    ``p``; ``y`` and ``s`` follow the standard-form sign convention
    ``A'y + s = c``.
    """
    A, b, c = p.A.tocsr(), p.b, p.c
    m, n = A.shape
    layout, kidx = _layout_for(p)
    nk = kidx.size
    kkt = _KKT(A, kidx, layout, opts.regularization, opts.dense_below)
    At = A.T.tocsr()

    def reduced(r1, r2, r3, hinv_apply):
        # full system [0 A' G'; A 0 0; G 0 -W'W] with G = -E, reduced on z
        rhs1 = r1.copy()
        rhs1[kidx] -= hinv_apply(r3)
        sol = kkt.solve(np.concatenate([rhs1, r2]))
        dx, dy = sol[:n], sol[n:]
        dz = -hinv_apply(dx[kidx] + r3)
        return dx, dy, dz

    def solve_kkt(r1, r2, r3, hinv_apply, h_apply=None, steps=opts.refine_steps):
        dx, dy, dz = reduced(r1, r2, r3, hinv_apply)
        if h_apply is None:
            return dx, dy, dz
        # refine against the unreduced, unregularized system
        norm0 = np.linalg.norm(np.concatenate([r1, r2, r3])) + 1e-300
        for _ in range(steps):
            e1 = r1 - At @ dy
            e1[kidx] += dz
            e2 = r2 - A @ dx
            e3 = r3 + dx[kidx] + h_apply(dz)
            err = np.linalg.norm(np.concatenate([e1, e2, e3]))
            if not np.isfinite(err) or err <= 1e-15 * norm0:
                break
            cx, cy, cz = reduced(e1, e2, e3, hinv_apply)
            dx, dy, dz = dx + cx, dy + cy, dz + cz
        return dx, dy, dz

    # initial point: least-squares solves with W = I
    eye_d = np.ones(layout.nl)
    eye_m = [np.broadcast_to(np.eye(g.dim), (g.nb, g.dim, g.dim)).copy() for g in layout.groups]
    try:
        kkt.factor(eye_d, eye_m)
    except (RuntimeError, ValueError, la.LinAlgError) as exc:
        return "numerical_failure", None, None, None, 0, f"initial factorization failed: {exc}"
    ident = lambda v: v  # noqa: E731
    zeros_k = np.zeros(nk)
    x, _, zh = solve_kkt(np.zeros(n), b.copy(), zeros_k, ident)
    s = -zh
    _, y, z = solve_kkt(-c, np.zeros(m), zeros_k, ident)
    e = layout.identity()
    st = layout.soc_primal(s)
    a = layout.max_eig_neg(st) if nk else -1.0
    if a >= -1e-8:
        st = st + (1.0 + max(a, 0.0)) * e
    s = layout.soc_primal_inv(st)
    zt = layout.soc_dual(z)
    a = layout.max_eig_neg(zt) if nk else -1.0
    if a >= -1e-8:
        zt = zt + (1.0 + max(a, 0.0)) * e
    z = layout.soc_dual_inv(zt)
    tau, kappa = 1.0, 1.0
    nu = layout.degree

    nb, nc = np.linalg.norm(b), np.linalg.norm(c)
    status, message = "max_iters", ""
    it = 0
    best = None
    for it in range(opts.max_iters + 1):
        # residuals of the embedding
        rx = At @ y
        rx[kidx] -= z
        rx += c * tau
        ry = -(A @ x) + b * tau
        rz = x[kidx] - s
        rtau = -(c @ x) - (b @ y) - kappa
        mu = (s @ z + tau * kappa) / (nu + 1)

        # termination in standard-form terms (y_std = -y, s_std = E' z)
        xs, ys = x / tau, -y / tau
        pres = np.linalg.norm(ry) / tau / (1.0 + nb)
        cres = np.linalg.norm(rz) / tau / (1.0 + nb)
        dres = np.linalg.norm(rx) / tau / (1.0 + nc)
        pobj = c @ xs
        dobj = b @ ys
        compl = abs(s @ z) / tau**2 / (1.0 + abs(pobj))
        gap = abs(pobj - dobj) / (1.0 + abs(pobj))
        if opts.verbose:
            log.info("%3d pobj %+.8e dobj %+.8e pres %.1e cres %.1e dres %.1e gap %.1e compl %.1e tau %.1e kap %.1e",
                     it, pobj, dobj, pres, cres, dres, gap, compl, tau, kappa)
        if max(pres, cres, dres) <= opts.tol_feas and max(compl, gap) <= opts.tol_gap:
            status = "optimal"
            break
        # infeasibility certificates
        by = b @ y
        farkas = At @ y
        farkas[kidx] -= z
        if by < 0 and np.linalg.norm(farkas) <= opts.tol_feas * -by * max(1.0, nc) and kappa > 1e-3 * tau:
            status = "primal_infeasible"
            break
        cx = c @ x
        if cx < 0:
            ax = np.linalg.norm(A @ x)
            gx = np.linalg.norm(s - x[kidx])
            if max(ax, gx) <= opts.tol_feas * -cx * max(1.0, nb) and kappa > 1e-3 * tau:
                status = "dual_infeasible"
                break
        if it == opts.max_iters:
            break
        score = max(pres, cres, dres, compl, gap)
        if best is None or score < best[0]:
            best = (score, x.copy(), y.copy(), z.copy(), s.copy(), tau)
            best_it = it
        elif it - best_it >= 8:
            status, message = "numerical_failure", f"no progress since iteration {best_it}"
            break

        def _newton_step():
            lam = layout.update_scaling(s, z)
            hdiag, hmats = layout.hessian_blocks()
            reg = opts.regularization
            for attempt in range(4):
                try:
                    kkt.factor(hdiag, hmats, reg)
                    break
                except (RuntimeError, ValueError, la.LinAlgError):
                    reg *= 100.0
            else:
                raise la.LinAlgError("KKT factorization failed")

            def hinv_apply(v):
                return layout.Winv(layout.Winv_t(v))

            def h_apply(v):
                return layout.Wt(layout.W(v))

            x1, y1, z1 = solve_kkt(-c, b, zeros_k, hinv_apply, h_apply)
            denom_base = -(c @ x1) - (b @ y1)

            def direction(dxr, dyr, dzr, ds, dkap):
                r3 = -dzr - layout.Wt(layout.jdiv(lam, ds))
                x2, y2, z2 = solve_kkt(dxr, -dyr, r3, hinv_apply, h_apply)
                dtau = (rtau_t + dkap / tau + c @ x2 + b @ y2) / (kappa / tau + denom_base)
                dx = x2 + dtau * x1
                dy = y2 + dtau * y1
                dz = z2 + dtau * z1
                dsv = layout.Wt(layout.jdiv(lam, ds)) - layout.Wt(layout.W(dz))
                dk = (dkap - kappa * dtau) / tau
                return dx, dy, dz, dsv, dtau, dk

            def step_to_boundary(dz, dsv, dtau, dk):
                a = np.inf
                if nk:
                    a = min(a, layout.max_step(layout.soc_primal(s), layout.soc_primal(dsv)))
                    a = min(a, layout.max_step(layout.soc_dual(z), layout.soc_dual(dz)))
                if dtau < 0:
                    a = min(a, -tau / dtau)
                if dk < 0:
                    a = min(a, -kappa / dk)
                return a

            # predictor
            rtau_t = -rtau
            lam_sq = layout.jprod(lam, lam)
            aff = direction(-rx, -ry, -rz, -lam_sq, -tau * kappa)
            a_aff = min(1.0, step_to_boundary(aff[2], aff[3], aff[4], aff[5]))
            sigma = min(1.0, max(0.0, (1.0 - a_aff))) ** 3
            # corrector
            rtau_t = -(1.0 - sigma) * rtau
            corr = layout.jprod(layout.Winv_t(aff[3]), layout.W(aff[2]))
            ds = -lam_sq - corr + sigma * mu * e
            dkap = -tau * kappa - aff[4] * aff[5] + sigma * mu
            f = 1.0 - sigma
            dx, dy, dz, dsv, dtau, dk = direction(-f * rx, -f * ry, -f * rz, ds, dkap)
            a_max = step_to_boundary(dz, dsv, dtau, dk)
            alpha = min(1.0, 0.99 * a_max)
            if not np.isfinite(alpha) or alpha < 1e-12:
                return None
            out = (x + alpha * dx, y + alpha * dy, z + alpha * dz, s + alpha * dsv,
                   tau + alpha * dtau, kappa + alpha * dk)
            if not all(np.all(np.isfinite(v)) for v in out) or out[4] <= 0:
                return None
            return out

        try:
            step = _newton_step()
        except (ValueError, FloatingPointError, la.LinAlgError, RuntimeError) as exc:
            status, message = "numerical_failure", f"{exc} at iteration {it}"
            break
        if step is None:
            status, message = "numerical_failure", f"step length collapsed at iteration {it}"
            break
        x, y, z, s, tau, kappa = step

    ys_out = -y
    ss_out = np.zeros(n)
    ss_out[kidx] = z
    if status == "optimal":
        return status, x / tau, ys_out / tau, ss_out / tau, it, message
    if status == "primal_infeasible":
        scale = -(b @ y)
        return status, None, ys_out / scale, ss_out / scale, it, message
    if status == "dual_infeasible":
        scale = -(c @ x)
        return status, x / scale, None, None, it, message
    if best is not None:
        _, x, y, z, s, tau = best
        ss_out = np.zeros(n)
        ss_out[kidx] = z
        return status, x / tau, -y / tau, ss_out / tau, it, message or "iteration limit"
    return status, x / tau, -y / tau, ss_out / tau, it, message


def solve(p: ConicProgram, opts: SolverOptions | None = None, **kw) -> Solution:
    """Solve ``min c'x s.t. Ax = b, x in K``.

    Keyword arguments override fields of ``opts``
    (``tol_feas``, ``tol_gap``, ``max_iters``, ``presolve``, ...).
    """
    opts = opts or SolverOptions()
    if kw:
        opts = SolverOptions(**{**opts.__dict__, **kw})
    if opts.presolve:
        pre = run_presolve(p, equilibrate=opts.equilibrate)
    else:
        pre = _identity_presolve(p)
    if pre.status == "primal_infeasible":
        sol = _empty_solution(p, "primal_infeasible", pre.message)
        return sol
    red = pre.program
    if red.n == 0:
        x, y, s = pre.recover(np.zeros(0), np.zeros(red.m), np.zeros(0))
        return _finish(p, "optimal", x, y, s, 0, "solved in presolve", opts)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        status, xb, yb, sb, iters, msg = _hsd(red, opts)
    if status == "primal_infeasible":
        sol = _empty_solution(p, status, msg)
        y = np.zeros(p.m)
        y[pre.rows] = pre.row_scale * yb
        sol.y = y
        sol.iterations = iters
        return sol
    if status == "dual_infeasible":
        sol = _empty_solution(p, status, msg)
        x = np.zeros(p.n)
        x[pre.cols] = pre.col_scale * xb
        sol.x = x
        sol.iterations = iters
        return sol
    xr, yr, sr = pre.unscale(xb, yb, sb)
    x, y, s = pre.recover(xr, yr, sr)
    return _finish(p, status, x, y, s, iters, msg, opts)


def _finish(p, status, x, y, s, iters, msg, opts) -> Solution:
    res = kkt_residuals(p, x, y, s)
    if status == "optimal":
        ok = (
            max(res["primal"], res["dual"], res["primal_cone"], res["dual_cone"]) <= 10 * opts.tol_feas
            and max(res["complementarity"], res["gap"]) <= 10 * opts.tol_gap
        )
        if not ok:
            log.debug("postsolve residuals above tolerance: %s", res)
    return Solution(
        status=status, x=x, y=y, s=s,
        primal_obj=float(p.c @ x), dual_obj=float(p.b @ y),
        residuals=res, iterations=iters, message=msg,
    )


def _identity_presolve(p: ConicProgram) -> Presolved:
    return Presolved(
        program=p, original=p, cols=np.arange(p.n), rows=np.arange(p.m), fixed={},
        col_scale=np.ones(p.n), row_scale=np.ones(p.m),
    )
