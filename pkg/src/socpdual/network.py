"""Rooted radial distribution networks.

All quantities are per-unit on a single base. Voltages and currents are
carried *squared* (``v = |V|^2``, ``l = |I|^2``) everywhere, including the
file formats, so nothing is squared implicitly.

Nodes are interned to dense integers in breadth-first order from the root,
so the root is ``0`` and every parent index is smaller than its children's.
Branch ``i - 1`` is the branch whose child is node ``i``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


class NetworkError(ValueError):
    """Base class for network input problems."""


class NetworkParseError(NetworkError):
    """Input is not well formed in the declared format."""


class NetworkValidationError(NetworkError):
    """Input parses but violates a structural or physical invariant.

    ``element`` names the offending node or branch.
    """

    def __init__(self, message: str, element: str | None = None):
        super().__init__(message)
        self.element = element


@dataclass(frozen=True)
class Branch:
    child: int
    parent: int
    r: float
    x: float
    l_max: float

    @property
    def z_sq(self) -> float:
        return self.r * self.r + self.x * self.x


@dataclass(frozen=True)
class NodeLimits:
    v_min: float
    v_max: float
    p_min: float
    p_max: float
    q_min: float
    q_max: float


@dataclass(frozen=True)
class Modification:
    """One changed field recorded by :func:`socpdual.experiment.modify_network`."""

    element: str
    field: str
    old: float
    new: float


_NODE_FIELDS = ("v_min", "v_max", "p_min", "p_max", "q_min", "q_max")
_BRANCH_FIELDS = ("r", "x", "l_max")


@dataclass(frozen=True)
class Network:
    """Validated radial network.

    Use :func:`make_network` or :func:`parse_network` rather than the
    constructor; they intern ids and run validation.
    """

    v0: float
    names: tuple[str, ...]
    limits: tuple[NodeLimits, ...]  # index i-1 holds node i
    branches: tuple[Branch, ...]  # index i-1 holds the branch whose child is i
    history: tuple[Modification, ...] = field(default=(), compare=False)

    root: int = field(default=0, init=False)

    @property
    def n(self) -> int:
        """Number of non-root nodes (= number of branches)."""
        return len(self.branches)

    @property
    def nodes(self) -> dict[int, NodeLimits]:
        return {i + 1: lim for i, lim in enumerate(self.limits)}

    def index_of(self, name: str | int) -> int:
        try:
            return self._index[str(name)]
        except KeyError:
            raise KeyError(f"unknown node id {name!r}") from None

    def branch(self, child: int) -> Branch:
        if not 1 <= child <= self.n:
            raise KeyError(f"node {child} has no parent branch")
        return self.branches[child - 1]

    def label(self, child: int) -> str:
        """Human label of branch ``child -> parent``."""
        b = self.branch(child)
        return f"{self.names[b.child]}->{self.names[b.parent]}"

    @cached_property
    def _index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.names)}

    # array views used by the formulation and condition code
    @cached_property
    def parent(self) -> np.ndarray:
        out = np.full(self.n + 1, -1, dtype=int)
        for b in self.branches:
            out[b.child] = b.parent
        out.flags.writeable = False
        return out

    def _branch_array(self, name: str) -> np.ndarray:
        arr = np.array([getattr(b, name) for b in self.branches], dtype=float)
        arr.flags.writeable = False
        return arr

    def _limit_array(self, name: str) -> np.ndarray:
        arr = np.array([getattr(lim, name) for lim in self.limits], dtype=float)
        arr.flags.writeable = False
        return arr

    @cached_property
    def r(self) -> np.ndarray:
        return self._branch_array("r")

    @cached_property
    def x(self) -> np.ndarray:
        return self._branch_array("x")

    @cached_property
    def l_max(self) -> np.ndarray:
        return self._branch_array("l_max")

    @cached_property
    def z_sq(self) -> np.ndarray:
        arr = self.r**2 + self.x**2
        arr.flags.writeable = False
        return arr

    @cached_property
    def bounds(self) -> dict[str, np.ndarray]:
        return {name: self._limit_array(name) for name in _NODE_FIELDS}

    @cached_property
    def _children(self) -> tuple[tuple[int, ...], ...]:
        kids: list[list[int]] = [[] for _ in range(self.n + 1)]
        for b in self.branches:
            kids[b.parent].append(b.child)
        return tuple(tuple(k) for k in kids)

    @cached_property
    def depth(self) -> np.ndarray:
        d = np.zeros(self.n + 1, dtype=int)
        for i in range(1, self.n + 1):  # parents precede children
            d[i] = d[self.parent[i]] + 1
        d.flags.writeable = False
        return d

    @cached_property
    def bottom_up(self) -> tuple[int, ...]:
        """Non-root nodes ordered deepest first (children before parents)."""
        return tuple(sorted(range(1, self.n + 1), key=lambda i: (-self.depth[i], i)))

    @cached_property
    def path_matrix(self):
        """Sparse ``n x n`` matrix with entry (i-1, m-1) = 1 iff branch m lies on the
        path from node i to the root."""
        import scipy.sparse as sp

        rows, cols = [], []
        for i in range(1, self.n + 1):
            k = i
            while k != 0:
                rows.append(i - 1)
                cols.append(k - 1)
                k = self.parent[k]
        return sp.csr_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=(self.n, self.n)
        )

    def with_changes(
        self,
        limits: Sequence[NodeLimits] | None = None,
        branches: Sequence[Branch] | None = None,
        log: Iterable[Modification] = (),
    ) -> "Network":
        net = Network(
            v0=self.v0,
            names=self.names,
            limits=tuple(limits) if limits is not None else self.limits,
            branches=tuple(branches) if branches is not None else self.branches,
            history=self.history + tuple(log),
        )
        validate(net)
        return net


def path_to_root(net: Network, i: int) -> list[Branch]:
    """Branches on the unique path from node ``i`` up to the root, child first."""
    if not 1 <= i <= net.n:
        raise KeyError(f"unknown non-root node {i}")
    path = []
    while i != net.root:
        b = net.branches[i - 1]
        path.append(b)
        i = b.parent
    return path


def children(net: Network, i: int) -> set[int]:
    if not 0 <= i <= net.n:
        raise KeyError(f"unknown node {i}")
    return set(net._children[i])


def validate(net: Network) -> None:
    """Raise :class:`NetworkValidationError` unless every invariant holds."""
    n = net.n
    if len(net.limits) != n or len(net.names) != n + 1:
        raise NetworkValidationError("need exactly one branch per non-root node")
    if not (math.isfinite(net.v0) and net.v0 > 0):
        raise NetworkValidationError(f"v0 must be positive, got {net.v0}", "v0")
    for k, b in enumerate(net.branches):
        label = f"branch {net.names[b.child]}->{net.names[b.parent]}"
        if b.child != k + 1:
            raise NetworkValidationError("branch order broken", label)
        if b.child == b.parent:
            raise NetworkValidationError("branch is a self loop", label)
        if not 0 <= b.parent < b.child:
            raise NetworkValidationError("parent must precede child", label)
        vals = (b.r, b.x, b.l_max)
        if not all(math.isfinite(v) for v in vals):
            raise NetworkValidationError("non-finite branch data", label)
        if b.r <= 0 or b.x <= 0:
            raise NetworkValidationError(
                f"assumption A3 violated: r={b.r}, x={b.x} must both be positive",
                label,
            )
        if b.l_max <= 0:
            raise NetworkValidationError(f"l_max={b.l_max} must be positive", label)
    for i, lim in enumerate(net.limits, start=1):
        label = f"node {net.names[i]}"
        vals = [getattr(lim, f) for f in _NODE_FIELDS]
        if any(math.isnan(v) for v in vals) or not all(
            math.isfinite(v) for v in (lim.v_min, lim.v_max)
        ):
            raise NetworkValidationError("invalid node bounds", label)
        if not lim.v_max > net.v0 > lim.v_min > 0:
            raise NetworkValidationError(
                f"assumption A2 violated: need v_max > v0 > v_min > 0, got "
                f"v_min={lim.v_min}, v0={net.v0}, v_max={lim.v_max}",
                label,
            )
        if lim.p_min > lim.p_max:
            raise NetworkValidationError("p_min > p_max", label)
        if lim.q_min > lim.q_max:
            raise NetworkValidationError("q_min > q_max", label)


def make_network(
    v0: float,
    nodes: Mapping[str, Mapping[str, float]] | Sequence[Mapping],
    branches: Sequence[Mapping],
    root: str | None = None,
) -> Network:
    """Build a network from raw records with arbitrary (string) node ids.

    ``nodes`` lists the non-root nodes with their bounds; the root is the one
    branch endpoint not declared among them (or ``root`` when given).
    """
    if isinstance(nodes, Mapping):
        node_recs = [{"id": k, **v} for k, v in nodes.items()]
    else:
        node_recs = list(nodes)
    limits: dict[str, NodeLimits] = {}
    for rec in node_recs:
        nid = str(rec["id"])
        if nid in limits:
            raise NetworkValidationError("duplicate node id", f"node {nid}")
        try:
            limits[nid] = NodeLimits(*(float(rec[f]) for f in _NODE_FIELDS))
        except KeyError as exc:
            raise NetworkParseError(f"node {nid}: missing field {exc}") from None
        except (TypeError, ValueError):
            raise NetworkParseError(f"node {nid}: non-numeric bound") from None

    parent_of: dict[str, str] = {}
    data: dict[str, tuple[float, float, float]] = {}
    for rec in branches:
        try:
            c, p = str(rec["child"]), str(rec["parent"])
            vals = tuple(float(rec[f]) for f in _BRANCH_FIELDS)
        except KeyError as exc:
            raise NetworkParseError(f"branch record missing field {exc}") from None
        except (TypeError, ValueError):
            raise NetworkParseError(f"branch {rec}: non-numeric value") from None
        if c == p:
            raise NetworkValidationError("branch is a self loop", f"branch {c}->{p}")
        if c in parent_of:
            raise NetworkValidationError(
                f"node has two parents ({parent_of[c]} and {p})", f"node {c}"
            )
        parent_of[c] = p
        data[c] = vals

    endpoints = set(parent_of) | set(parent_of.values())
    undeclared = sorted(endpoints - set(limits))
    if root is None:
        if len(undeclared) != 1:
            raise NetworkValidationError(
                f"cannot identify a unique root; undeclared endpoints: {undeclared}"
            )
        root = undeclared[0]
    else:
        root = str(root)
        extra = [u for u in undeclared if u != root]
        if extra:
            raise NetworkValidationError("branch endpoint is not a declared node", extra[0])
    if root in limits:
        raise NetworkValidationError("root must not carry node limits", f"node {root}")
    if root in parent_of:
        raise NetworkValidationError("root cannot have a parent", f"node {root}")
    for nid in limits:
        if nid not in parent_of:
            raise NetworkValidationError("node has no parent branch (disconnected)", f"node {nid}")

    kids: dict[str, list[str]] = {}
    for c, p in parent_of.items():
        kids.setdefault(p, []).append(c)
    order = [root]
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for c in kids.get(u, []):
            order.append(c)
            queue.append(c)
    if len(order) != len(limits) + 1:
        missing = sorted(set(limits) - set(order))
        raise NetworkValidationError(
            "parent relation contains a cycle or a component detached from the root",
            f"node {missing[0]}",
        )
    index = {name: i for i, name in enumerate(order)}
    blist = tuple(
        Branch(index[c], index[parent_of[c]], *data[c]) for c in order[1:]
    )
    net = Network(
        v0=float(v0),
        names=tuple(order),
        limits=tuple(limits[c] for c in order[1:]),
        branches=blist,
    )
    validate(net)
    return net


def _read_text(source) -> str:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source).decode("utf-8")
    if isinstance(source, str):
        return source
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def parse_network(source, format: str = "json") -> Network:
    """Parse a network.

    Parameters
    ----------
    source
        For ``json``: bytes, str or a readable file object. For ``csv-pair``:
        a ``(nodes, branches)`` pair of such sources.
    format
        ``"json"`` or ``"csv-pair"``.
    """
    if format == "json":
        try:
            doc = json.loads(_read_text(source))
        except json.JSONDecodeError as exc:
            raise NetworkParseError(f"malformed JSON: {exc}") from None
        if not isinstance(doc, dict) or not {"v0", "nodes", "branches"} <= set(doc):
            raise NetworkParseError("JSON must hold 'v0', 'nodes' and 'branches'")
        try:
            v0 = float(doc["v0"])
        except (TypeError, ValueError):
            raise NetworkParseError("v0 must be a number") from None
        return make_network(v0, doc["nodes"], doc["branches"], root=doc.get("root"))
    if format == "csv-pair":
        try:
            nodes_src, branches_src = source
        except (TypeError, ValueError):
            raise NetworkParseError("csv-pair source must be a (nodes, branches) pair") from None
        node_rows = list(csv.DictReader(io.StringIO(_read_text(nodes_src))))
        branch_rows = list(csv.DictReader(io.StringIO(_read_text(branches_src))))
        roots = [r for r in node_rows if (r.get("v0") or "").strip()]
        if len(roots) != 1:
            raise NetworkParseError("nodes.csv needs exactly one root row with a v0 value")
        root = roots[0]
        try:
            v0 = float(root["v0"])
        except ValueError:
            raise NetworkParseError("root v0 is not a number") from None
        nodes = [r for r in node_rows if r is not root]
        return make_network(v0, nodes, branch_rows, root=root["id"])
    raise NetworkParseError(f"unknown network format {format!r}")


def load_network(path: str | Path, format: str | None = None) -> Network:
    """Read a network from a ``.json`` file or a directory holding
    ``nodes.csv`` and ``branches.csv``."""
    path = Path(path)
    if format is None:
        format = "csv-pair" if path.is_dir() else "json"
    if format == "csv-pair":
        folder = path if path.is_dir() else path.parent
        return parse_network(
            ((folder / "nodes.csv").read_bytes(), (folder / "branches.csv").read_bytes()),
            "csv-pair",
        )
    return parse_network(path.read_bytes(), format)


def network_to_dict(net: Network) -> dict:
    return {
        "v0": net.v0,
        "root": net.names[0],
        "nodes": [
            {"id": net.names[i], **{f: getattr(lim, f) for f in _NODE_FIELDS}}
            for i, lim in enumerate(net.limits, start=1)
        ],
        "branches": [
            {
                "child": net.names[b.child],
                "parent": net.names[b.parent],
                "r": b.r,
                "x": b.x,
                "l_max": b.l_max,
            }
            for b in net.branches
        ],
    }


def dump_network(net: Network) -> str:
    return json.dumps(network_to_dict(net), indent=2)


def write_csv_pair(net: Network, folder: str | Path) -> None:
    folder = Path(folder)
    folder.mkdir(parents=True, exist_ok=True)
    doc = network_to_dict(net)
    with open(folder / "nodes.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["id", *_NODE_FIELDS, "v0"])
        w.writeheader()
        w.writerow({"id": net.names[0], "v0": net.v0})
        for rec in doc["nodes"]:
            w.writerow(rec)
    with open(folder / "branches.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["child", "parent", *_BRANCH_FIELDS])
        w.writeheader()
        w.writerows(doc["branches"])
