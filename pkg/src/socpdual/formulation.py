"""Conic programs for branch-flow OPF on radial networks.

Three builders share one variable-naming scheme (labels are node names):

* :func:`build_opf_cr` - the relaxation over ``P, Q, l, v, p, q`` with one
  rotated cone ``v_i l_ij >= P_ij^2 + Q_ij^2`` per branch;
* :func:`build_opf_socp1` - the same feasible set restricted to flows of the
  form ``S = z (tau - beta) / |z|^2``, ``l = tau / |z|^2``, with the cone
  ``(v0 + sum_path(tau - 2 beta)) tau >= (tau - beta)^2``;
* :func:`build_opf_socp2` - a further restriction using the constant cone
  ``v_min tau >= (tau - beta)^2``.

Box constraints become equality rows with nonnegative slacks (a fixed bound
becomes a single equality). Slack bookkeeping is kept in ``meta["bounds"]``
so points can be lifted into the program space with :func:`lift_physical`
and :func:`lift_reform`.
"""

from __future__ import annotations

import json
from collections.abc import Mapping
from dataclasses import asdict, dataclass, field

import numpy as np

from .conic import ConicProgram, ProgramBuilder
from .network import Network

ROLES = ("p", "v", "l")


@dataclass(frozen=True)
class ObjectiveSpec:
    """Affine objective over injections, squared voltages and squared currents.

    ``kind="total_loss"`` means ``sum r_ij l_ij``. With ``kind="linear"`` the
    objective is ``sum weights[role][node] * value`` where ``role`` is ``"p"``
    (active injection; the root name selects ``p0``), ``"v"`` or ``"l"`` (the
    branch is named by its child node).
    """

    kind: str = "total_loss"
    weights: Mapping[str, Mapping[str, float]] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("total_loss", "linear"):
            raise ValueError(f"unknown objective kind {self.kind!r}")
        bad = set(self.weights) - set(ROLES)
        if bad:
            raise ValueError(f"unknown objective roles {sorted(bad)}; use {ROLES}")

    @classmethod
    def linear(cls, p=None, v=None, l=None) -> "ObjectiveSpec":  # noqa: E741
        w = {k: dict(d) for k, d in (("p", p), ("v", v), ("l", l)) if d}
        return cls("linear", w)

    def coefficients(self, net: Network) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Weights as arrays ``(cp, cv, cl)``; ``cp[0]`` is the root's ``p0``.

        ``cp`` and ``cv`` have length ``n + 1`` (node ids), ``cl`` length ``n``
        (branch ``b`` is the one whose child is node ``b + 1``).
        """
        cp = np.zeros(net.n + 1)
        cv = np.zeros(net.n + 1)
        cl = np.zeros(net.n)
        if self.kind == "total_loss":
            cl[:] = net.r
            return cp, cv, cl
        for name, w in self.weights.get("p", {}).items():
            cp[net.index_of(name)] += w
        for name, w in self.weights.get("v", {}).items():
            i = net.index_of(name)
            if i == net.root:
                raise ValueError("the root voltage is a constant and cannot carry a weight")
            cv[i] += w
        for name, w in self.weights.get("l", {}).items():
            i = net.index_of(name)
            if i == net.root:
                raise ValueError("the root has no parent branch")
            cl[i - 1] += w
        return cp, cv, cl

    def to_dict(self) -> dict:
        return {"kind": self.kind, "weights": {k: dict(v) for k, v in self.weights.items()}}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ObjectiveSpec":
        if "kind" not in doc:
            # bare weight map
            return cls("linear", {k: dict(v) for k, v in doc.items()})
        return cls(doc["kind"], {k: dict(v) for k, v in doc.get("weights", {}).items()})

    @classmethod
    def load(cls, path) -> "ObjectiveSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


TOTAL_LOSS = ObjectiveSpec()


@dataclass
class PhysicalPoint:
    """Branch and node quantities; arrays are indexed like ``Network.branches``
    (``P[b]`` is the flow on the branch whose child is node ``b + 1``) and node
    arrays ``v, p, q`` hold non-root nodes ``1..n`` in the same order."""

    P: np.ndarray
    Q: np.ndarray
    l: np.ndarray  # noqa: E741
    v: np.ndarray
    p: np.ndarray
    q: np.ndarray
    p0: float
    q0: float

    def to_dict(self, net: Network | None = None) -> dict:
        out = {k: (v.tolist() if isinstance(v, np.ndarray) else float(v)) for k, v in asdict(self).items()}
        if net is not None:
            out["nodes"] = list(net.names[1:])
        return out


@dataclass
class ReformPoint:
    """Reformulation variables, one ``(tau, beta)`` pair per branch."""

    tau: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        if self.tau.shape != self.beta.shape:
            raise ValueError("tau and beta must have the same shape")


# --------------------------------------------------------------------- names
def _nm(kind: str, net: Network, i: int) -> str:
    return f"{kind}[{net.names[i]}]"


class _Assembler:
    """ProgramBuilder wrapper that defers slacks so scalar blocks stay merged."""

    def __init__(self):
        self.b = ProgramBuilder()
        self._bounds: list[tuple[int, float, float, str]] = []

    def bound(self, j: int, lo: float, hi: float, label: str) -> None:
        self._bounds.append((j, lo, hi, label))

    def build(self, meta: dict) -> ConicProgram:
        b = self.b
        recs = []
        fixed = []
        pending = []
        for j, lo, hi, label in self._bounds:
            if lo == hi:
                fixed.append((j, lo, label))
                continue
            if np.isfinite(lo):
                pending.append((j, lo, +1, f"{label}:lo"))
            if np.isfinite(hi):
                pending.append((j, hi, -1, f"{label}:hi"))
        for j, val, label in fixed:
            b.add_row({j: 1.0}, val, name=f"{label}:fix")
        if pending:
            slacks = b.add_scalars("nonneg", [f"slack[{lab}]" for *_, lab in pending])
            for sj, (j, val, sign, lab) in zip(slacks, pending):
                # lo: x - s = lo ; hi: x + s = hi
                b.add_row({j: 1.0, sj: -float(sign)}, val, name=lab)
                recs.append([sj, j, sign, float(val)])
        return b.build({**meta, "bounds": recs})


def _add_objective(asm: _Assembler, pairs) -> None:
    for j, w in pairs:
        if w:
            asm.b.add_cost(j, w)


# ------------------------------------------------------------------ builders
def build_opf_cr(net: Network, obj: ObjectiveSpec = TOTAL_LOSS) -> ConicProgram:
    """The branch-flow relaxation as a standard-form conic program.

    Variables per branch ``(i, j)``: a rotated cone block
    ``(v_i, l_ij, P_ij, Q_ij)``; per non-root node free ``p_i, q_i``; free
    root injections ``p0, q0``; nonnegative slacks for the boxes.
    """
    asm = _Assembler()
    b = asm.b
    n = net.n
    V, L, P, Q = {}, {}, {}, {}
    for i in range(1, n + 1):
        j0 = b.add_block("rotated", [_nm(k, net, i) for k in ("v", "l", "P", "Q")])[0]
        V[i], L[i], P[i], Q[i] = j0, j0 + 1, j0 + 2, j0 + 3
    pv = b.add_scalars("free", [_nm("p", net, i) for i in range(1, n + 1)])
    qv = b.add_scalars("free", [_nm("q", net, i) for i in range(1, n + 1)])
    p0, q0 = b.add_scalars("free", ["p0", "q0"])
    pj = {i: pv[i - 1] for i in range(1, n + 1)}
    qj = {i: qv[i - 1] for i in range(1, n + 1)}
    pj[0], qj[0] = p0, q0
    kids = net._children
    r, x, zsq = net.r, net.x, net.z_sq

    # nodal balance: s_i = S_ij - sum_k (S_ki - z_ki l_ki); root: s_0 = -sum_k (...)
    for i in range(0, n + 1):
        rp = {pj[i]: 1.0}
        rq = {qj[i]: 1.0}
        if i:
            rp[P[i]] = -1.0
            rq[Q[i]] = -1.0
        for k in kids[i]:
            rp[P[k]] = 1.0
            rp[L[k]] = -r[k - 1]
            rq[Q[k]] = 1.0
            rq[L[k]] = -x[k - 1]
        tag = net.names[i] if i else "root"
        b.add_row(rp, 0.0, name=f"balance_p[{tag}]")
        b.add_row(rq, 0.0, name=f"balance_q[{tag}]")
    # voltage drop: v_i - v_j - 2 (r P + x Q) + |z|^2 l = 0, v_root = v0
    for i in range(1, n + 1):
        j = int(net.parent[i])
        row = {V[i]: 1.0, P[i]: -2.0 * r[i - 1], Q[i]: -2.0 * x[i - 1], L[i]: zsq[i - 1]}
        rhs = 0.0
        if j == net.root:
            rhs = net.v0
        else:
            row[V[j]] = -1.0
        b.add_row(row, rhs, name=f"drop[{net.names[i]}]")
    bd = net.bounds
    for i in range(1, n + 1):
        nm = net.names[i]
        asm.bound(L[i], -np.inf, net.l_max[i - 1], f"l[{nm}]")
        asm.bound(V[i], bd["v_min"][i - 1], bd["v_max"][i - 1], f"v[{nm}]")
        asm.bound(pj[i], bd["p_min"][i - 1], bd["p_max"][i - 1], f"p[{nm}]")
        asm.bound(qj[i], bd["q_min"][i - 1], bd["q_max"][i - 1], f"q[{nm}]")

    cp, cv, cl = obj.coefficients(net)
    _add_objective(asm, [(pj[i], cp[i]) for i in range(n + 1)])
    _add_objective(asm, [(V[i], cv[i]) for i in range(1, n + 1)])
    _add_objective(asm, [(L[i], cl[i - 1]) for i in range(1, n + 1)])
    return asm.build({"kind": "opf-cr", "objective": obj.to_dict(), "v0": net.v0})


def _build_reform(net: Network, obj: ObjectiveSpec, variant: str) -> ConicProgram:
    asm = _Assembler()
    b = asm.b
    n = net.n
    first = "u" if variant == "socp1" else "a"
    U, T, W = {}, {}, {}
    for i in range(1, n + 1):
        j0 = b.add_block("rotated", [_nm(first, net, i), _nm("tau", net, i), _nm("t", net, i)])[0]
        U[i], T[i], W[i] = j0, j0 + 1, j0 + 2
    B = dict(zip(range(1, n + 1), b.add_scalars("free", [_nm("beta", net, i) for i in range(1, n + 1)])))
    pv = dict(zip(range(1, n + 1), b.add_scalars("free", [_nm("p", net, i) for i in range(1, n + 1)])))
    qv = dict(zip(range(1, n + 1), b.add_scalars("free", [_nm("q", net, i) for i in range(1, n + 1)])))
    if variant == "socp1":
        Vv = U
    else:
        Vv = dict(zip(range(1, n + 1), b.add_scalars("free", [_nm("v", net, i) for i in range(1, n + 1)])))
    kids = net._children
    r, x, zsq = net.r, net.x, net.z_sq
    bd = net.bounds

    for i in range(1, n + 1):
        nm = net.names[i]
        # t = tau - beta
        b.add_row({W[i]: 1.0, T[i]: -1.0, B[i]: 1.0}, 0.0, name=f"flow[{nm}]")
        # v_i = v0 + sum over the path of (tau - 2 beta)
        row = {Vv[i]: 1.0}
        k = i
        while k != net.root:
            row[T[k]] = row.get(T[k], 0.0) - 1.0
            row[B[k]] = row.get(B[k], 0.0) + 2.0
            k = int(net.parent[k])
        b.add_row(row, net.v0, name=f"voltage[{nm}]")
        if variant == "socp2":
            b.add_row({U[i]: 1.0}, bd["v_min"][i - 1], name=f"v_floor[{nm}]")
        # injections through the substitution
        rp = {pv[i]: 1.0, T[i]: -r[i - 1] / zsq[i - 1], B[i]: r[i - 1] / zsq[i - 1]}
        rq = {qv[i]: 1.0, T[i]: -x[i - 1] / zsq[i - 1], B[i]: x[i - 1] / zsq[i - 1]}
        for k in kids[i]:
            rp[B[k]] = -r[k - 1] / zsq[k - 1]
            rq[B[k]] = -x[k - 1] / zsq[k - 1]
        b.add_row(rp, 0.0, name=f"inj_p[{nm}]")
        b.add_row(rq, 0.0, name=f"inj_q[{nm}]")
        asm.bound(T[i], -np.inf, zsq[i - 1] * net.l_max[i - 1], f"tau[{nm}]")
        asm.bound(Vv[i], bd["v_min"][i - 1], bd["v_max"][i - 1], f"v[{nm}]")
        asm.bound(pv[i], bd["p_min"][i - 1], bd["p_max"][i - 1], f"p[{nm}]")
        asm.bound(qv[i], bd["q_min"][i - 1], bd["q_max"][i - 1], f"q[{nm}]")

    cp, cv, cl = obj.coefficients(net)
    _add_objective(asm, [(pv[i], cp[i]) for i in range(1, n + 1)])
    # p0 = sum over root children of r / |z|^2 beta
    _add_objective(asm, [(B[k], cp[0] * r[k - 1] / zsq[k - 1]) for k in kids[net.root]])
    _add_objective(asm, [(Vv[i], cv[i]) for i in range(1, n + 1)])
    _add_objective(asm, [(T[i], cl[i - 1] / zsq[i - 1]) for i in range(1, n + 1)])
    return asm.build({"kind": f"opf-{variant}", "objective": obj.to_dict(), "v0": net.v0})


def build_opf_socp1(net: Network, obj: ObjectiveSpec = TOTAL_LOSS) -> ConicProgram:
    """Restriction of the relaxation to the ``(tau, beta)`` parametrization.

    One rotated block ``(u_i, tau_ij, t_ij)`` per branch with
    ``u_i = v0 + sum_path(tau - 2 beta)`` and ``t_ij = tau_ij - beta_ij``
    linked by equality rows.
    """
    return _build_reform(net, obj, "socp1")


def build_opf_socp2(net: Network, obj: ObjectiveSpec = TOTAL_LOSS) -> ConicProgram:
    """Like :func:`build_opf_socp1` but with the cone ``v_min_i tau >= (tau - beta)^2``.

    The constant first entry is a cone variable ``a_i`` pinned by a row
    ``a_i = v_min_i``; squared voltages become free variables with boxes.
    """
    return _build_reform(net, obj, "socp2")


# ------------------------------------------------------------ point algebra
def reform_to_physical(net: Network, rp: ReformPoint) -> PhysicalPoint:
    """Physical quantities implied by ``(tau, beta)``."""
    tau, beta = rp.tau, rp.beta
    if tau.size != net.n:
        raise ValueError(f"expected {net.n} branch values, got {tau.size}")
    r, x, zsq = net.r, net.x, net.z_sq
    d = tau - beta
    P = r * d / zsq
    Q = x * d / zsq
    l = tau / zsq  # noqa: E741
    # s_i = z_ij (tau - beta) / |z|^2 + sum_k z_ki beta_ki / |z_ki|^2
    bp = r * beta / zsq
    bq = x * beta / zsq
    p_all = np.zeros(net.n + 1)
    q_all = np.zeros(net.n + 1)
    par = net.parent[1:]
    np.add.at(p_all, par, bp)
    np.add.at(q_all, par, bq)
    p = P + p_all[1:]
    q = Q + q_all[1:]
    v = net.v0 + net.path_matrix @ (tau - 2.0 * beta)
    return PhysicalPoint(P=P, Q=Q, l=l, v=v, p=p, q=q, p0=float(p_all[0]), q0=float(q_all[0]))


def zero_point(net: Network) -> PhysicalPoint:
    """All flows and injections zero, every voltage at ``v0``."""
    z = np.zeros(net.n)
    return PhysicalPoint(P=z, Q=z.copy(), l=z.copy(), v=np.full(net.n, net.v0), p=z.copy(), q=z.copy(), p0=0.0, q0=0.0)


@dataclass
class ResidualReport:
    """Signed constraint measures of a physical point.

    Equality residuals are raw differences; bound entries are violations
    (positive means violated); ``cone_slack = v l - (P^2 + Q^2)``;
    ``exact_gap = |l - (P^2 + Q^2) / v|`` (NaN where ``v <= 0``).
    """

    balance_p: np.ndarray
    balance_q: np.ndarray
    root: np.ndarray
    drop: np.ndarray
    bounds: dict[str, np.ndarray]
    cone_slack: np.ndarray
    exact_gap: np.ndarray

    @property
    def max_equality(self) -> float:
        parts = [self.balance_p, self.balance_q, self.root, self.drop]
        return float(max(np.max(np.abs(a), initial=0.0) for a in parts))

    @property
    def max_bound_violation(self) -> float:
        return float(max((np.max(a, initial=-np.inf) for a in self.bounds.values()), default=-np.inf))

    @property
    def min_cone_slack(self) -> float:
        return float(np.min(self.cone_slack, initial=np.inf))

    @property
    def max_exact_gap(self) -> float:
        return float(np.max(self.exact_gap, initial=0.0))

    def feasible(self, tol: float = 1e-9) -> bool:
        return self.max_equality <= tol and self.max_bound_violation <= tol and self.min_cone_slack >= -tol

    def summary(self) -> dict:
        return {
            "max_equality": self.max_equality,
            "max_bound_violation": self.max_bound_violation,
            "min_cone_slack": self.min_cone_slack,
            "max_exact_gap": self.max_exact_gap,
        }


def residuals(net: Network, pt: PhysicalPoint) -> ResidualReport:
    """Evaluate every constraint of the relaxation (and the exactness gap) at ``pt``."""
    r, x, zsq = net.r, net.x, net.z_sq
    par = net.parent[1:]
    # child contributions S_ki - z_ki l_ki summed at each parent
    cp = np.zeros(net.n + 1)
    cq = np.zeros(net.n + 1)
    np.add.at(cp, par, pt.P - r * pt.l)
    np.add.at(cq, par, pt.Q - x * pt.l)
    balance_p = pt.p - (pt.P - cp[1:])
    balance_q = pt.q - (pt.Q - cq[1:])
    root = np.array([pt.p0 + cp[0], pt.q0 + cq[0]])
    v_all = np.concatenate([[net.v0], pt.v])
    drop = pt.v - v_all[par] - (2.0 * (r * pt.P + x * pt.Q) - zsq * pt.l)
    bd = net.bounds
    bounds = {
        "l": np.maximum(-pt.l, pt.l - net.l_max),
        "v": np.maximum(bd["v_min"] - pt.v, pt.v - bd["v_max"]),
        "p": np.maximum(bd["p_min"] - pt.p, pt.p - bd["p_max"]),
        "q": np.maximum(bd["q_min"] - pt.q, pt.q - bd["q_max"]),
    }
    s_sq = pt.P**2 + pt.Q**2
    cone = pt.v * pt.l - s_sq
    with np.errstate(divide="ignore", invalid="ignore"):
        gap = np.where(pt.v > 0, np.abs(pt.l - s_sq / np.where(pt.v > 0, pt.v, 1.0)), np.nan)
    return ResidualReport(balance_p, balance_q, root, drop, bounds, cone, gap)


def reform_margins(net: Network, rp: ReformPoint) -> dict[str, np.ndarray]:
    """Constraint margins of the reformulated problems; every entry is
    nonnegative exactly when the corresponding constraint holds.

    ``cone1`` and ``cone2`` are the two cone inequalities; the rest are the
    affine boxes shared by both problems.
    """
    tau, beta = rp.tau, rp.beta
    d = tau - beta
    path = net.path_matrix @ (tau - 2.0 * beta)
    bd = net.bounds
    pt = reform_to_physical(net, rp)
    return {
        "cone1": (net.v0 + path) * tau - d**2,
        "cone1_lin": net.v0 + path,
        "cone2": bd["v_min"] * tau - d**2,
        "tau_lo": tau,
        "tau_hi": net.z_sq * net.l_max - tau,
        "v_lo": path - (bd["v_min"] - net.v0),
        "v_hi": (bd["v_max"] - net.v0) - path,
        "p_lo": pt.p - bd["p_min"],
        "p_hi": bd["p_max"] - pt.p,
        "q_lo": pt.q - bd["q_min"],
        "q_hi": bd["q_max"] - pt.q,
    }


_AFFINE = ("tau_lo", "tau_hi", "v_lo", "v_hi", "p_lo", "p_hi", "q_lo", "q_hi")


def in_socp1(net: Network, rp: ReformPoint, tol: float = 0.0) -> bool:
    m = reform_margins(net, rp)
    keys = _AFFINE + ("cone1", "cone1_lin")
    return all(np.all(m[k] >= -tol) for k in keys)


def in_socp2(net: Network, rp: ReformPoint, tol: float = 0.0) -> bool:
    m = reform_margins(net, rp)
    return all(np.all(m[k] >= -tol) for k in _AFFINE + ("cone2",))


def objective_value(net: Network, obj: ObjectiveSpec, pt: PhysicalPoint) -> float:
    cp, cv, cl = obj.coefficients(net)
    return float(cp[0] * pt.p0 + cp[1:] @ pt.p + cv[1:] @ pt.v + cl @ pt.l)


# ----------------------------------------------------- program <-> points
def _fill_slacks(prog: ConicProgram, x: np.ndarray) -> np.ndarray:
    for sj, j, sign, val in prog.meta.get("bounds", []):
        x[int(sj)] = sign * (x[int(j)] - val)
    return x


def lift_physical(prog: ConicProgram, net: Network, pt: PhysicalPoint) -> np.ndarray:
    """Program vector of :func:`build_opf_cr` holding ``pt`` (slacks filled in)."""
    x = np.zeros(prog.n)
    idx = prog.index
    for i in range(1, net.n + 1):
        for key, arr in (("v", pt.v), ("l", pt.l), ("P", pt.P), ("Q", pt.Q), ("p", pt.p), ("q", pt.q)):
            x[idx[_nm(key, net, i)]] = arr[i - 1]
    x[idx["p0"]], x[idx["q0"]] = pt.p0, pt.q0
    return _fill_slacks(prog, x)


def lift_reform(prog: ConicProgram, net: Network, rp: ReformPoint) -> np.ndarray:
    """Program vector of an OPF-SOCP1/2 program holding ``rp``."""
    x = np.zeros(prog.n)
    idx = prog.index
    pt = reform_to_physical(net, rp)
    socp2 = prog.meta.get("kind") == "opf-socp2"
    for i in range(1, net.n + 1):
        b = i - 1
        x[idx[_nm("tau", net, i)]] = rp.tau[b]
        x[idx[_nm("beta", net, i)]] = rp.beta[b]
        x[idx[_nm("t", net, i)]] = rp.tau[b] - rp.beta[b]
        x[idx[_nm("p", net, i)]] = pt.p[b]
        x[idx[_nm("q", net, i)]] = pt.q[b]
        if socp2:
            x[idx[_nm("a", net, i)]] = net.bounds["v_min"][b]
            x[idx[_nm("v", net, i)]] = pt.v[b]
        else:
            x[idx[_nm("u", net, i)]] = pt.v[b]
    return _fill_slacks(prog, x)


def physical_from_solution(prog: ConicProgram, net: Network, x: np.ndarray) -> PhysicalPoint:
    """Read a physical point out of a :func:`build_opf_cr` solution vector."""
    idx = prog.index

    def grab(key):
        return np.array([x[idx[_nm(key, net, i)]] for i in range(1, net.n + 1)])

    return PhysicalPoint(
        P=grab("P"), Q=grab("Q"), l=grab("l"), v=grab("v"), p=grab("p"), q=grab("q"),
        p0=float(x[idx["p0"]]), q0=float(x[idx["q0"]]),
    )


def reform_from_solution(prog: ConicProgram, net: Network, x: np.ndarray) -> ReformPoint:
    idx = prog.index
    tau = np.array([x[idx[_nm("tau", net, i)]] for i in range(1, net.n + 1)])
    beta = np.array([x[idx[_nm("beta", net, i)]] for i in range(1, net.n + 1)])
    return ReformPoint(tau, beta)


def equality_residual(prog: ConicProgram, x: np.ndarray) -> float:
    """``max |A x - b|``."""
    return float(np.max(np.abs(prog.A @ x - prog.b), initial=0.0))
