"""Closed-form sufficient conditions for strong duality, and explicit Slater points.

Three conditions on the injection boxes (and, for C2/C3, on how the
resistance-to-reactance ratio evolves along the feeder) each guarantee a
strictly feasible point of the restricted program OPF-SOCP2, hence of the
relaxation. The point is built constructively:

    tau_ij  = |z_ij|^2 l_max_ij / mu
    beta_ij = lambda_ij tau_ij

with ``lambda`` chosen bottom-up so that one of

    delta^p_ij = 1 - lambda_ij + sum_k lambda_ki r_ki l_max_ki / (r_ij l_max_ij)
    delta^q_ij = 1 - lambda_ij + sum_k lambda_ki x_ki l_max_ki / (x_ij l_max_ij)

vanishes (or both share a sign), after which ``mu`` is increased until the
cone inequality ``(tau - beta)^2 < v_min tau`` is strict and every affine box
holds.

Sign convention: ``p``, ``q`` are net injections, so a load has negative
bounds. All three conditions need zero inside (or on the edge of) every
injection box, which a pure load node never satisfies without added
flexibility; see :func:`socpdual.experiment.modify_network`.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .formulation import ReformPoint, reform_margins, reform_to_physical
from .network import Network

log = logging.getLogger(__name__)

CASES = ("i", "ii", "iii", "iv")
TARGETS = ("delta_p_zero", "delta_q_zero", "both_nonpos", "both_nonneg")
CASE_TARGET = {"i": "delta_p_zero", "ii": "delta_q_zero", "iii": "both_nonpos", "iv": "both_nonneg"}
# cheapest search first: (iv) and (iii) leave lambda one-sided freedom
CASE_PREFERENCE = ("iv", "iii", "ii", "i")

MU_SCHEDULE = tuple(10.0 * 2.0**k for k in range(37))  # 10 .. ~6.9e11
MU_MAX = 1e12
EPS_STRICT = 1e-8
RATIO_RTOL = 1e-12
AFFINE_ATOL = 1e-12


# ----------------------------------------------------------------- checking
@dataclass
class ConditionCheck:
    """Verdict for one condition.

    ``node_ok`` is per non-root node; ``pair_ok`` (C2/C3 only) is per
    adjacent branch pair, listed in :attr:`ConditionReport.pairs`;
    ``cases`` (C1 only) is an ``(n, 4)`` table of the sign patterns.
    """

    name: str
    holds: bool
    node_ok: np.ndarray
    pair_ok: np.ndarray | None = None
    cases: np.ndarray | None = None
    witness: str | None = None

    def to_dict(self) -> dict:
        out = {"holds": self.holds, "witness": self.witness, "node_ok": self.node_ok.tolist()}
        if self.pair_ok is not None:
            out["pair_ok"] = self.pair_ok.tolist()
        if self.cases is not None:
            out["cases"] = {c: self.cases[:, k].tolist() for k, c in enumerate(CASES)}
        return out


def c1_cases(p_min, p_max, q_min, q_max) -> np.ndarray:
    """The four sign patterns, exactly as stated (strict where strict)."""
    p_min, p_max, q_min, q_max = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (p_min, p_max, q_min, q_max))
    return np.column_stack([
        (p_min <= 0) & (0 <= p_max) & (q_min < 0) & (0 < q_max),
        (p_min < 0) & (0 < p_max) & (q_min <= 0) & (0 <= q_max),
        (p_min < 0) & (0 <= p_max) & (q_min < 0) & (0 <= q_max),
        (p_min <= 0) & (0 < p_max) & (q_min <= 0) & (0 < q_max),
    ])


def adjacent_pairs(net: Network) -> tuple[np.ndarray, np.ndarray]:
    """``(upper, lower)`` node arrays: branch ``upper -> parent(upper)`` sits
    directly above branch ``lower -> upper``."""
    lower = np.array([k for k in range(1, net.n + 1) if net.parent[k] != net.root], dtype=int)
    upper = net.parent[lower] if lower.size else np.zeros(0, dtype=int)
    return np.asarray(upper, dtype=int), lower


def _ratio_flags(net: Network, ge: bool) -> np.ndarray:
    upper, lower = adjacent_pairs(net)
    ratio = net.r / net.x
    ru, rl = ratio[upper - 1], ratio[lower - 1]
    slack = RATIO_RTOL * np.maximum(np.abs(ru), np.abs(rl))
    return ru >= rl - slack if ge else ru <= rl + slack


def _pair_label(net: Network, k: int) -> str:
    i = int(net.parent[k])
    return f"{net.label(i)} vs {net.label(k)}"


def check_c1(net: Network) -> ConditionCheck:
    bd = net.bounds
    cases = c1_cases(bd["p_min"], bd["p_max"], bd["q_min"], bd["q_max"])
    ok = cases.any(axis=1)
    witness = None
    if not ok.all():
        witness = f"node {net.names[int(np.argmin(ok)) + 1]} matches none of the sign cases"
    return ConditionCheck("c1", bool(ok.all()), ok, cases=cases, witness=witness)


def _check_ratio(net: Network, name: str) -> ConditionCheck:
    bd = net.bounds
    if name == "c2":
        sign = (bd["p_min"] < 0) & (0 <= bd["p_max"]) & (bd["q_min"] <= 0) & (0 <= bd["q_max"])
        pair = _ratio_flags(net, ge=True)
    else:
        sign = (bd["p_min"] <= 0) & (0 <= bd["p_max"]) & (bd["q_min"] < 0) & (0 <= bd["q_max"])
        pair = _ratio_flags(net, ge=False)
    witness = None
    if not pair.all():
        _, lower = adjacent_pairs(net)
        witness = f"r/x ordering fails at {_pair_label(net, int(lower[np.argmin(pair)]))}"
    elif not sign.all():
        witness = f"node {net.names[int(np.argmin(sign)) + 1]} has the wrong injection bound signs"
    return ConditionCheck(name, bool(pair.all() and sign.all()), sign, pair_ok=pair, witness=witness)


def check_c2(net: Network) -> ConditionCheck:
    """Ratios non-increasing away from the root; ``p_min < 0 <= p_max``, ``q_min <= 0 <= q_max``."""
    return _check_ratio(net, "c2")


def check_c3(net: Network) -> ConditionCheck:
    """Ratios non-decreasing away from the root; ``p_min <= 0 <= p_max``, ``q_min < 0 <= q_max``."""
    return _check_ratio(net, "c3")


@dataclass
class ConditionReport:
    c1: ConditionCheck
    c2: ConditionCheck
    c3: ConditionCheck
    nodes: tuple[str, ...]
    pairs: tuple[str, ...]

    @property
    def any(self) -> bool:
        return self.c1.holds or self.c2.holds or self.c3.holds

    @property
    def satisfied(self) -> list[str]:
        return [c.name for c in (self.c1, self.c2, self.c3) if c.holds]

    def node_case(self) -> list[str | None]:
        """Preferred C1 case per node (``None`` where no case holds)."""
        out = []
        for row in self.c1.cases:
            out.append(next((c for c in CASE_PREFERENCE if row[CASES.index(c)]), None))
        return out

    def to_dict(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "pairs": list(self.pairs),
            "satisfied": self.satisfied,
            "c1": self.c1.to_dict(),
            "c2": self.c2.to_dict(),
            "c3": self.c3.to_dict(),
        }


def check_conditions(net: Network) -> ConditionReport:
    _, lower = adjacent_pairs(net)
    return ConditionReport(
        c1=check_c1(net),
        c2=check_c2(net),
        c3=check_c3(net),
        nodes=tuple(net.names[1:]),
        pairs=tuple(_pair_label(net, int(k)) for k in lower),
    )


# ---------------------------------------------------------------- certificate
@dataclass
class SlaterCertificate:
    """A candidate strictly feasible point of OPF-SOCP2 and its margins.

    ``delta_target`` holds, per branch, the component the construction drove
    to zero (``delta_p``, ``delta_q``, their max or their min). ``margins``
    are the raw constraint margins (nonnegative when satisfied);
    ``cone_margin`` is the cone margin relative to ``v_min * tau``.
    """

    mu: float
    targets: tuple[str, ...]
    lam: np.ndarray
    delta_p: np.ndarray
    delta_q: np.ndarray
    delta_target: np.ndarray
    point: ReformPoint
    margins: dict[str, np.ndarray]
    cone_margin: np.ndarray
    sign_ok: np.ndarray
    eps: float = EPS_STRICT

    @property
    def cone_strict(self) -> bool:
        return bool(np.all(self.cone_margin > self.eps))

    @property
    def affine_ok(self) -> bool:
        keys = ("tau_lo", "tau_hi", "v_lo", "v_hi", "p_lo", "p_hi", "q_lo", "q_hi")
        return all(np.all(self.margins[k] >= -AFFINE_ATOL) for k in keys)

    @property
    def valid(self) -> bool:
        return self.cone_strict and self.affine_ok and bool(self.sign_ok.all())

    def to_dict(self, net: Network | None = None) -> dict:
        out = {
            "mu": self.mu,
            "valid": self.valid,
            "cone_strict": self.cone_strict,
            "affine_ok": self.affine_ok,
            "eps": self.eps,
            "targets": list(self.targets),
            "lambda": self.lam.tolist(),
            "delta_p": self.delta_p.tolist(),
            "delta_q": self.delta_q.tolist(),
            "delta_target": self.delta_target.tolist(),
            "tau": self.point.tau.tolist(),
            "beta": self.point.beta.tolist(),
            "cone_margin": self.cone_margin.tolist(),
            "min_margins": {k: float(np.min(v, initial=np.inf)) for k, v in self.margins.items()},
        }
        if net is not None:
            out["branches"] = [net.label(i) for i in range(1, net.n + 1)]
            out["physical"] = reform_to_physical(net, self.point).to_dict(net)
        return out


def _targets_for(net: Network, target) -> tuple[str, ...]:
    if isinstance(target, str):
        targets = (target,) * net.n
    else:
        targets = tuple(target)
        if len(targets) != net.n:
            raise ValueError(f"need one target per branch ({net.n}), got {len(targets)}")
    bad = set(targets) - set(TARGETS)
    if bad:
        raise ValueError(f"unknown targets {sorted(bad)}; use {TARGETS}")
    return targets


def slater_lambdas(net: Network, target) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(lambda, delta_p, delta_q)`` from one bottom-up pass.

    ``target`` is one of :data:`TARGETS`, or a sequence giving one per branch
    (branch ``b`` is the one whose child is node ``b + 1``).
    """
    targets = _targets_for(net, target)
    r, x, lm = net.r, net.x, net.l_max
    lam = np.zeros(net.n)
    sum_p = np.zeros(net.n)
    sum_q = np.zeros(net.n)
    kids = net._children
    for i in net.bottom_up:
        b = i - 1
        ks = np.array(kids[i], dtype=int) - 1
        sum_p[b] = float(np.sum(lam[ks] * r[ks] * lm[ks])) / (r[b] * lm[b])
        sum_q[b] = float(np.sum(lam[ks] * x[ks] * lm[ks])) / (x[b] * lm[b])
        zero_p, zero_q = 1.0 + sum_p[b], 1.0 + sum_q[b]
        t = targets[b]
        if t == "delta_p_zero":
            lam[b] = zero_p
        elif t == "delta_q_zero":
            lam[b] = zero_q
        elif t == "both_nonpos":
            lam[b] = max(zero_p, zero_q)
        else:
            lam[b] = min(zero_p, zero_q)
    return lam, 1.0 - lam + sum_p, 1.0 - lam + sum_q


def _sign_compatible(net: Network, dp: np.ndarray, dq: np.ndarray) -> np.ndarray:
    """Whether each node's box admits ``c * delta`` for small ``c > 0``."""
    bd = net.bounds

    def ok(d, lo, hi):
        return np.where(d > 0, (lo <= 0) & (hi > 0), np.where(d < 0, (lo < 0) & (hi >= 0), (lo <= 0) & (hi >= 0)))

    return ok(dp, bd["p_min"], bd["p_max"]) & ok(dq, bd["q_min"], bd["q_max"])


def construct_slater_point(net: Network, target, mu: float, eps: float = EPS_STRICT) -> SlaterCertificate:
    """Build the point for a given ``mu >= 1`` and record its margins."""
    if not mu >= 1.0:
        raise ValueError(f"mu must be >= 1, got {mu}")
    targets = _targets_for(net, target)
    lam, dp, dq = slater_lambdas(net, targets)
    tau = net.z_sq * net.l_max / mu
    rp = ReformPoint(tau, lam * tau)
    margins = reform_margins(net, rp)
    pick = {
        "delta_p_zero": dp,
        "delta_q_zero": dq,
        "both_nonpos": np.maximum(dp, dq),
        "both_nonneg": np.minimum(dp, dq),
    }
    dt = np.array([pick[t][b] for b, t in enumerate(targets)])
    v_min = net.bounds["v_min"]
    rel = margins["cone2"] / (v_min * tau)
    return SlaterCertificate(
        mu=float(mu), targets=targets, lam=lam, delta_p=dp, delta_q=dq, delta_target=dt,
        point=rp, margins=margins, cone_margin=rel, sign_ok=_sign_compatible(net, dp, dq), eps=eps,
    )


def targets_for_report(report: ConditionReport, condition: str | None = None) -> tuple[str, tuple[str, ...]] | None:
    """Condition used and per-branch targets.

    Without ``condition`` the first holding one is used in the order C1
    (per-node case iv, iii, ii, i), C2, C3. Returns ``None`` when the chosen
    condition (or every condition) fails.
    """
    n = len(report.nodes)
    choices = {
        "c1": lambda: tuple(CASE_TARGET[c] for c in report.node_case()),
        "c2": lambda: ("delta_q_zero",) * n,
        "c3": lambda: ("delta_p_zero",) * n,
    }
    if condition is not None and condition not in choices:
        raise ValueError(f"unknown condition {condition!r}")
    for name in [condition] if condition else list(choices):
        if getattr(report, name).holds:
            return name, choices[name]()
    return None


class CertificateSearchExhausted(RuntimeError):
    """No schedule value of ``mu`` made every margin strict."""


@dataclass
class Certification:
    verdict: str  # conditions_met | search_failed | conditions_not_met
    report: ConditionReport
    condition: str | None = None
    certificate: SlaterCertificate | None = None
    message: str = ""
    tried: list[float] = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return self.verdict == "conditions_met"

    def to_dict(self, net: Network | None = None) -> dict:
        return {
            "verdict": self.verdict,
            "condition": self.condition,
            "message": self.message,
            "mu_tried": len(self.tried),
            "certificate": self.certificate.to_dict(net) if self.certificate else None,
            "report": self.report.to_dict(),
        }


def search_mu(net: Network, targets, schedule: Sequence[float] = MU_SCHEDULE, eps: float = EPS_STRICT):
    """First certificate along ``schedule`` that is valid; raises
    :class:`CertificateSearchExhausted` (carrying the last attempt) if none is."""
    cert = None
    for mu in schedule:
        if mu > MU_MAX:
            break
        cert = construct_slater_point(net, targets, mu, eps)
        if cert.valid:
            return cert
    err = CertificateSearchExhausted(f"no valid certificate for mu up to {schedule[-1]:.3g}")
    err.last = cert
    raise err


def certify_strong_duality(
    net: Network,
    schedule: Sequence[float] = MU_SCHEDULE,
    eps: float = EPS_STRICT,
    condition: str | None = None,
) -> Certification:
    """Check C1 to C3 and, if one holds, search ``mu`` for a valid certificate.

    ``condition`` forces the construction belonging to one condition instead
    of the default preference order.
    """
    report = check_conditions(net)
    choice = targets_for_report(report, condition)
    if choice is None:
        what = condition.upper() if condition else "any of C1, C2, C3"
        return Certification("conditions_not_met", report, message=f"{what} does not hold")
    cond, targets = choice
    lam = slater_lambdas(net, targets)[0]
    if cond != "c1" and np.any(lam < 0):
        log.info("negative lambda on %s; ratio argument assumes nonnegative weights", cond)
    try:
        cert = search_mu(net, targets, schedule, eps)
    except CertificateSearchExhausted as exc:
        return Certification(
            "search_failed", report, condition=cond, certificate=exc.last, message=str(exc),
            tried=list(schedule),
        )
    tried = [m for m in schedule if m <= cert.mu]
    return Certification("conditions_met", report, condition=cond, certificate=cert, tried=tried)
