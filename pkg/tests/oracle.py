"""Brute-force reference for the nonconvex branch-flow OPF on tiny networks.

Only fixed-load networks with one or two branches are handled. With every
injection fixed, the flows are affine in the squared currents ``l`` and the
feasible set is finite: the solutions of ``l_i v_i = P_i^2 + Q_i^2`` on each
branch. They are located by a dense grid scan for sign changes followed by
``brentq``; for a two-branch chain the upper-branch solve is nested inside the
scan over the lower branch. Nothing here touches the conic code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

GRID = 4001


@dataclass
class OracleResult:
    value: float  # inf when no power-flow solution satisfies the bounds
    l: np.ndarray  # noqa: E741
    v: np.ndarray
    candidates: int


def _roots(f, lo: float, hi: float, grid: int = GRID) -> list[float]:
    xs = np.linspace(lo, hi, grid)
    fs = np.broadcast_to(np.asarray(f(xs), dtype=float), xs.shape)
    a, b = fs[:-1], fs[1:]
    ok = np.isfinite(a) & np.isfinite(b)
    out = []
    for k in np.flatnonzero(ok & ((a == 0.0) | (a * b < 0))):
        if a[k] == 0.0:
            out.append(float(xs[k]))
        else:
            out.append(brentq(f, xs[k], xs[k + 1], xtol=1e-15, rtol=1e-15))
    if fs[-1] == 0.0:
        out.append(float(hi))
    return out


def _data(net):
    bd = net.bounds
    if not (np.array_equal(bd["p_min"], bd["p_max"]) and np.array_equal(bd["q_min"], bd["q_max"])):
        raise ValueError("oracle needs fixed injections")
    if net.n not in (1, 2):
        raise ValueError("oracle handles one or two branches")
    return bd["p_min"], bd["q_min"]


def _state(net, l):  # noqa: E741
    """Flows, voltages and root injection for given squared currents.

    Entries of ``l`` may be arrays (broadcast together) for grid scans.
    """
    p, q = _data(net)
    r, x, zsq = net.r, net.x, net.z_sq
    P, Q = list(p), list(q)
    for i in net.bottom_up:  # children first
        for k in net._children[i]:
            P[i - 1] = P[i - 1] + P[k - 1] - r[k - 1] * l[k - 1]
            Q[i - 1] = Q[i - 1] + Q[k - 1] - x[k - 1] * l[k - 1]
    v = [None] * net.n
    for i in range(1, net.n + 1):  # parents first
        j = int(net.parent[i])
        vj = net.v0 if j == 0 else v[j - 1]
        v[i - 1] = vj + 2.0 * (r[i - 1] * P[i - 1] + x[i - 1] * Q[i - 1]) - zsq[i - 1] * l[i - 1]
    p0 = -sum(P[k - 1] - r[k - 1] * l[k - 1] for k in net._children[0])
    return P, Q, v, p0


def _mismatch(net, l, b):  # noqa: E741
    P, Q, v, _ = _state(net, l)
    return l[b] * v[b] - P[b] ** 2 - Q[b] ** 2


def power_flow_solutions(net) -> list[np.ndarray]:
    """All ``l`` in ``[0, l_max]`` solving the power-flow equations."""
    lm = net.l_max
    if net.n == 1:
        return [np.array([t]) for t in _roots(lambda t: _mismatch(net, [t], 0), 0.0, lm[0])]
    if int(net.parent[2]) == 0:  # star: two independent branches
        a = _roots(lambda t: _mismatch(net, [t, 0.0], 0), 0.0, lm[0])
        b = _roots(lambda t: _mismatch(net, [0.0, t], 1), 0.0, lm[1])
        return [np.array([s, t]) for s in a for t in b]
    # chain 0 <- 1 <- 2: the upper branch's equation involves l2 only through P1, Q1
    def upper(t2):
        return _roots(lambda t1: _mismatch(net, [t1, t2], 0), 0.0, lm[0])

    sols = []
    for k in range(2):  # follow the k-th upper root as a function of l2
        def g(t2, k=k):
            if np.ndim(t2):
                return np.array([g(float(t)) for t in t2])
            rts = upper(t2)
            return _mismatch(net, [rts[k], t2], 1) if len(rts) > k else np.nan

        for t2 in _roots(g, 0.0, lm[1], grid=801):
            rts = upper(t2)
            if len(rts) > k:
                sols.append(np.array([rts[k], t2]))
    return sols


def solve_oracle(net, cp, cv, cl) -> OracleResult:
    """Minimize ``cp . (p0, p) + cv . (v0, v) + cl . l`` over power-flow solutions
    that satisfy the voltage box (injections are fixed, ``l`` is in range)."""
    p, _ = _data(net)
    bd = net.bounds
    best = OracleResult(np.inf, np.full(net.n, np.nan), np.full(net.n, np.nan), 0)
    sols = power_flow_solutions(net)
    best.candidates = len(sols)
    for l in sols:  # noqa: E741
        _, _, v, p0 = _state(net, l)
        v = np.array(v, dtype=float)
        if np.any(v < bd["v_min"] - 1e-12) or np.any(v > bd["v_max"] + 1e-12):
            continue
        val = cp[0] * p0 + cp[1:] @ p + cv[1:] @ v + cl @ l
        if val < best.value:
            best = OracleResult(float(val), l, v, len(sols))
    return best
