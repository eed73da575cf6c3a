"""Duality-gap studies over random DG instances.

A study takes a base network, draws distributed-generation (DG) outputs per
node, optionally modifies each instance so it meets C1, C2 or C3, and then
solves the relaxation and its explicitly built dual as two unrelated
programs. The relative gap ``(primal - dual) / max(1, |primal|)`` is
compared against a threshold (1e-4 by default) to decide whether strong
duality holds numerically.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .conditions import check_c1, check_c2, check_c3, c1_cases
from .dual import build_dual, duality_gap
from .formulation import TOTAL_LOSS, ObjectiveSpec, build_opf_cr
from .network import Modification, Network
from .solver import SolverOptions, solve

log = logging.getLogger(__name__)

EPS_G = 1e-3
THRESHOLD = 1e-4
JOBS_ENV = "SOCPDUAL_JOBS"
CONDITIONS = ("c1", "c2", "c3")


# -------------------------------------------------------------- modification
def _widen(lim, eps: float, p_strict: bool = False, q_strict: bool = False):
    """Open a node's box around zero; ``*_strict`` forces a negative lower bound."""
    p_lo = min(lim.p_min, -eps) if p_strict else min(lim.p_min, 0.0)
    q_lo = min(lim.q_min, -eps) if q_strict else min(lim.q_min, 0.0)
    return replace(lim, p_min=p_lo, p_max=max(lim.p_max, eps), q_min=q_lo, q_max=max(lim.q_max, eps))


def _log_limits(net: Network, old, new) -> list[Modification]:
    out = []
    for i, (a, b) in enumerate(zip(old, new), start=1):
        for f in ("p_min", "p_max", "q_min", "q_max"):
            if getattr(a, f) != getattr(b, f):
                out.append(Modification(f"node {net.names[i]}", f, getattr(a, f), getattr(b, f)))
    return out


def _monotone_x(net: Network, non_increasing: bool):
    """Rescale reactances top-down so r/x never increases (or never decreases)
    from a branch to the branches directly below it. Each change is the
    smallest multiplicative one: the child's ratio is set equal to its parent's."""
    branches = list(net.branches)
    log_ = []
    for k in range(1, net.n + 1):  # parents precede children
        i = int(net.parent[k])
        if i == net.root:
            continue
        up, me = branches[i - 1], branches[k - 1]
        ratio_up, ratio_me = up.r / up.x, me.r / me.x
        if (ratio_me > ratio_up) if non_increasing else (ratio_me < ratio_up):
            new_x = me.r * up.x / up.r
            branches[k - 1] = replace(me, x=new_x)
            log_.append(Modification(f"branch {net.label(k)}", "x", me.x, new_x))
    return branches, log_


def modify_network(net: Network, condition: str, eps_g: float = EPS_G) -> Network:
    """Smallest-effort edit of ``net`` so that ``condition`` holds.

    * ``c1``: every failing node gets a box that includes zero with room on
      the positive side (``p_max, q_max >= eps_g``), i.e. added dispatchable DG;
    * ``c2``: failing nodes additionally get ``p_min <= -eps_g``; reactances
      are scaled so r/x is non-increasing from root to leaves;
    * ``c3``: as ``c2`` with ``q_min <= -eps_g`` and non-decreasing r/x.

    Resistances are never changed. Every edit is appended to ``history``.
    """
    if condition not in CONDITIONS:
        raise ValueError(f"condition must be one of {CONDITIONS}")
    limits = list(net.limits)
    bd = net.bounds
    if condition == "c1":
        ok = c1_cases(bd["p_min"], bd["p_max"], bd["q_min"], bd["q_max"]).any(axis=1)
        kw = {}
    elif condition == "c2":
        ok = check_c2(net).node_ok
        kw = {"p_strict": True}
    else:
        ok = check_c3(net).node_ok
        kw = {"q_strict": True}
    for b in np.flatnonzero(~ok):
        limits[b] = _widen(limits[b], eps_g, **kw)
    changes = _log_limits(net, net.limits, limits)
    branches = list(net.branches)
    if condition != "c1":
        branches, blog = _monotone_x(net, non_increasing=(condition == "c2"))
        changes += blog
    if not changes:
        return net
    out = net.with_changes(limits=limits, branches=branches, log=changes)
    checker = {"c1": check_c1, "c2": check_c2, "c3": check_c3}[condition]
    assert checker(out).holds, f"modification failed to establish {condition}"
    return out


# ------------------------------------------------------------------ instances
@dataclass(frozen=True)
class InstanceSpec:
    """Random DG draws applied to a base network.

    Each non-root node receives DG with probability ``dg_share``; its output
    is uniform on ``p_range`` x ``q_range`` (per unit). In ``dispatchable``
    mode the draw extends the box upwards (``[p_min, p_max + g]``); in
    ``fixed`` mode it shifts the box (``[p_min + g, p_max + g]``).
    """

    base: Network
    count: int
    seed: int = 0
    p_range: tuple[float, float] = (0.0, 0.03)
    q_range: tuple[float, float] = (0.0, 0.015)
    dg_share: float = 0.5
    mode: str = "dispatchable"

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("count must be >= 0")
        if self.mode not in ("dispatchable", "fixed"):
            raise ValueError(f"unknown DG mode {self.mode!r}")
        for name in ("p_range", "q_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} lower end exceeds upper end")
        if not 0.0 <= self.dg_share <= 1.0:
            raise ValueError("dg_share must lie in [0, 1]")

    def describe(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k != "base"}


def apply_dg(net: Network, gp: np.ndarray, gq: np.ndarray, mode: str) -> Network:
    limits = []
    for lim, a, b in zip(net.limits, gp, gq):
        if mode == "fixed":
            limits.append(replace(lim, p_min=lim.p_min + a, p_max=lim.p_max + a,
                                  q_min=lim.q_min + b, q_max=lim.q_max + b))
        else:
            limits.append(replace(lim, p_max=lim.p_max + a, q_max=lim.q_max + b))
    log_ = _log_limits(net, net.limits, limits)
    return net.with_changes(limits=limits, log=log_)


def generate_instances(spec: InstanceSpec) -> list[Network]:
    """``spec.count`` networks, deterministic in ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    n = spec.base.n
    out = []
    for _ in range(spec.count):
        has = rng.random(n) < spec.dg_share
        gp = np.where(has, rng.uniform(*spec.p_range, size=n), 0.0)
        gq = np.where(has, rng.uniform(*spec.q_range, size=n), 0.0)
        out.append(apply_dg(spec.base, gp, gq, spec.mode))
    return out


# --------------------------------------------------------------------- study
@dataclass
class InstanceResult:
    instance_id: int
    status_primal: str
    status_dual: str
    primal_obj: float
    dual_obj: float
    abs_gap: float
    rel_gap: float
    strong_duality: bool
    seconds: float = field(default=0.0, compare=False)

    @property
    def solved(self) -> bool:
        return self.status_primal == "optimal" and self.status_dual == "optimal"


CSV_COLUMNS = (
    "instance_id", "status_primal", "status_dual", "primal_obj", "dual_obj",
    "abs_gap", "rel_gap", "strong_duality",
)


@dataclass
class GapStudyResult:
    instances: list[InstanceResult]
    threshold: float = THRESHOLD
    meta: dict = field(default_factory=dict)

    @property
    def total(self) -> int:
        return len(self.instances)

    @property
    def solved(self) -> list[InstanceResult]:
        return [r for r in self.instances if r.solved]

    @property
    def failed(self) -> dict[str, int]:
        """Unsolved instances keyed by ``"primal:<status>/dual:<status>"``."""
        out: dict[str, int] = {}
        for r in self.instances:
            if not r.solved:
                key = f"primal:{r.status_primal}/dual:{r.status_dual}"
                out[key] = out.get(key, 0) + 1
        return out

    @property
    def gaps(self) -> np.ndarray:
        return np.array([r.rel_gap for r in self.solved])

    @property
    def avg_gap(self) -> float:
        g = np.abs(self.gaps)
        return float(g.mean()) if g.size else float("nan")

    @property
    def max_gap(self) -> float:
        g = np.abs(self.gaps)
        return float(g.max()) if g.size else float("nan")

    @property
    def n_strong(self) -> int:
        return sum(r.strong_duality for r in self.solved)

    @property
    def n_weak(self) -> int:
        return len(self.solved) - self.n_strong

    @property
    def r_strong(self) -> float:
        s = len(self.solved)
        return self.n_strong / s if s else float("nan")

    def summary(self) -> dict:
        return {
            "instances": self.total,
            "solved": len(self.solved),
            "failed": self.failed,
            "avg_gap": self.avg_gap,
            "max_gap": self.max_gap,
            "n_strong": self.n_strong,
            "r_strong": self.r_strong,
            "threshold": self.threshold,
            "gap_definition": "(primal - dual) / max(1, |primal|); Avg-G and G+ use its absolute value",
        }


def _worker(args) -> InstanceResult:
    idx, net, obj, threshold, opts = args
    t0 = time.perf_counter()
    prog = build_opf_cr(net, obj)
    dual = build_dual(prog)
    # two independent solves: nothing from the primal run reaches the dual one
    sp_ = solve(prog, opts)
    sd = solve(dual.program, opts)
    pv = sp_.primal_obj if sp_.ok else float("nan")
    dv = dual.value(sd.primal_obj) if sd.ok else float("nan")
    g = duality_gap(pv, dv)
    return InstanceResult(
        instance_id=idx, status_primal=sp_.status, status_dual=sd.status,
        primal_obj=pv, dual_obj=dv, abs_gap=g.absolute, rel_gap=g.relative,
        strong_duality=g.strong(threshold), seconds=time.perf_counter() - t0,
    )


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get(JOBS_ENV, "1")))
    except ValueError:
        log.warning("ignoring non-integer %s", JOBS_ENV)
        return 1


def run_gap_study(
    instances: list[Network],
    obj: ObjectiveSpec = TOTAL_LOSS,
    threshold: float = THRESHOLD,
    parallelism: int | None = None,
    opts: SolverOptions | None = None,
    meta: dict | None = None,
) -> GapStudyResult:
    """Solve primal and dual of every instance and collect the gaps.

    ``parallelism`` defaults to ``$SOCPDUAL_JOBS`` (or 1); each worker
    process builds and solves its own programs.
    """
    jobs = parallelism or default_jobs()
    opts = opts or SolverOptions()
    tasks = [(i, net, obj, threshold, opts) for i, net in enumerate(instances)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_worker, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        results = [_worker(t) for t in tasks]
    info = {"objective": obj.to_dict(), "threshold": threshold, "jobs": jobs}
    info.update(meta or {})
    return GapStudyResult(results, threshold, info)


def gap_study(
    base: Network,
    count: int,
    seed: int = 0,
    modify: str | None = None,
    obj: ObjectiveSpec = TOTAL_LOSS,
    threshold: float = THRESHOLD,
    parallelism: int | None = None,
    eps_g: float = EPS_G,
    **spec_kw,
) -> GapStudyResult:
    """Generate instances from ``base``, optionally modify each one, and run the study.

    The modification is applied after the DG draw so the target condition
    holds on every instance whatever the DG mode.
    """
    spec = InstanceSpec(base, count, seed, **spec_kw)
    nets = generate_instances(spec)
    if modify:
        nets = [modify_network(n, modify, eps_g) for n in nets]
    meta = {"seed": seed, "modify": modify, "eps_g": eps_g, "spec": spec.describe(), "nodes": base.n + 1}
    return run_gap_study(nets, obj, threshold, parallelism, meta=meta)


# -------------------------------------------------------------------- output
def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_report(result: GapStudyResult, format: str = "csv") -> str:
    """Render ``result`` as ``csv`` (one row per instance), ``json`` (rows,
    summary and metadata) or ``table`` (a one-line summary table)."""
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in result.instances:
            w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
        return buf.getvalue()
    if format == "json":
        doc = {
            "summary": result.summary(),
            "meta": result.meta,
            "instances": [{c: getattr(r, c) for c in CSV_COLUMNS} for r in result.instances],
        }
        return json.dumps(doc, indent=1, allow_nan=True)
    if format == "table":
        return format_table([(result.meta.get("label", "study"), result)])
    raise ValueError(f"unknown report format {format!r}")


def format_table(rows: list[tuple[str, GapStudyResult]]) -> str:
    head = f"{'case':<28} {'Avg-G':>10} {'G+':>10} {'N_SD':>7} {'R_SD':>7} {'failed':>7}"
    lines = [head, "-" * len(head)]
    for label, res in rows:
        n_failed = sum(res.failed.values())
        lines.append(
            f"{label:<28} {res.avg_gap:>10.2E} {res.max_gap:>10.2E} {res.n_strong:>7d} "
            f"{100.0 * res.r_strong:>6.1f}% {n_failed:>7d}"
        )
    lines.append(f"(gap threshold {rows[0][1].threshold:.0e}; relative gap = (primal - dual) / max(1, |primal|))"
                 if rows else "")
    return "\n".join(lines) + "\n"


def result_from_json(text: str) -> GapStudyResult:
    doc = json.loads(text)
    inst = [InstanceResult(**{c: row[c] for c in CSV_COLUMNS}) for row in doc["instances"]]
    return GapStudyResult(inst, doc["summary"]["threshold"], doc.get("meta", {}))
