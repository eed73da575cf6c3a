"""Standard-form conic programs.

    minimize    c @ x
    subject to  A @ x == b,  x in K = K_1 x ... x K_p

Each block ``K_j`` covers a contiguous slice of ``x`` and is one of

* ``free``        no restriction
* ``nonneg``      x >= 0
* ``soc``         x[0] >= ||x[1:]||                     (dim >= 2)
* ``rotated``     x[0] * x[1] >= ||x[2:]||**2, x[0], x[1] >= 0   (dim >= 3)

Note the rotated cone has no factor 2, so it is *not* self-dual: its dual is
``{(a, b, c): 4 a b >= ||c||**2}`` = ``D @ rotated`` with ``D = diag(1, 1, 2, .., 2)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

CONE_TYPES = ("free", "nonneg", "soc", "rotated")
_MIN_DIM = {"free": 1, "nonneg": 1, "soc": 2, "rotated": 3}


@dataclass(frozen=True)
class Cone:
    type: str
    dim: int

    def __post_init__(self):
        if self.type not in CONE_TYPES:
            raise ValueError(f"unknown cone type {self.type!r}")
        if self.dim < _MIN_DIM[self.type]:
            raise ValueError(f"{self.type} cone needs dim >= {_MIN_DIM[self.type]}")


@dataclass(frozen=True, eq=False)
class ConicProgram:
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    cones: tuple[Cone, ...]
    names: tuple[str, ...] = ()
    row_names: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).copy()
        b = np.asarray(self.b, dtype=float).copy()
        A = sp.csr_matrix(self.A, dtype=float)
        A.sum_duplicates()
        c.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "cones", tuple(self.cones))
        n = c.size
        if A.shape != (b.size, n):
            raise ValueError(f"A has shape {A.shape}, expected ({b.size}, {n})")
        if sum(k.dim for k in self.cones) != n:
            raise ValueError("cone dims do not add up to the number of variables")
        if self.names and len(self.names) != n:
            raise ValueError("name table length mismatch")
        if self.row_names and len(self.row_names) != b.size:
            raise ValueError("row name table length mismatch")

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def m(self) -> int:
        return self.b.size

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([k.dim for k in self.cones])]).astype(int)

    def blocks(self) -> Iterable[tuple[Cone, slice]]:
        for k, lo, hi in zip(self.cones, self.offsets[:-1], self.offsets[1:]):
            yield k, slice(int(lo), int(hi))

    @cached_property
    def index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.names)}

    def value(self, x: np.ndarray, name: str) -> float:
        return float(x[self.index[name]])

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x)


def cone_violation(cones: Sequence[Cone], x: np.ndarray, dual: bool = False) -> float:
    """Largest violation of ``x in K`` (or ``K*`` when ``dual``); 0 if inside."""
    worst = 0.0
    lo = 0
    for k in cones:
        v = x[lo : lo + k.dim]
        lo += k.dim
        if k.type == "free":
            if dual:
                worst = max(worst, float(np.max(np.abs(v))))
        elif k.type == "nonneg":
            worst = max(worst, float(np.max(-v, initial=0.0)))
        elif k.type == "soc":
            worst = max(worst, float(np.linalg.norm(v[1:]) - v[0]))
        else:
            u, w, t = v[0], v[1], v[2:]
            if dual:
                t = t / 2.0
            # distance-like measure via the equivalent second-order cone
            worst = max(worst, float(np.hypot(np.linalg.norm(t), (u - w) / 2.0) - (u + w) / 2.0))
    return worst


def in_cone(cones: Sequence[Cone], x: np.ndarray, tol: float = 0.0, dual: bool = False) -> bool:
    return cone_violation(cones, x, dual=dual) <= tol


def dual_scaling(cones: Sequence[Cone]) -> np.ndarray:
    """Diagonal ``D`` with ``K* = D K`` on every non-free block (free blocks map to 0)."""
    d = []
    for k in cones:
        if k.type == "free":
            d.extend([0.0] * k.dim)
        elif k.type == "rotated":
            d.extend([1.0, 1.0] + [2.0] * (k.dim - 2))
        else:
            d.extend([1.0] * k.dim)
    return np.array(d)


def to_second_order(p: ConicProgram) -> ConicProgram:
    """Rewrite every rotated block as a second-order block.

    ``(u, w, t)`` in the rotated cone iff ``(u + w, u - w, 2 t)`` is in the
    second-order cone, so the new variables are ``T @ (u, w, t)`` and the data
    columns are multiplied by ``T^-1``. Optimal values are unchanged.
    """
    n = p.n
    Tinv = sp.lil_matrix((n, n))
    cones = []
    names = list(p.names) if p.names else []
    for k, sl in p.blocks():
        i = sl.start
        if k.type != "rotated":
            for j in range(sl.start, sl.stop):
                Tinv[j, j] = 1.0
            cones.append(k)
            continue
        Tinv[i, i] = Tinv[i, i + 1] = 0.5
        Tinv[i + 1, i] = 0.5
        Tinv[i + 1, i + 1] = -0.5
        for j in range(i + 2, sl.stop):
            Tinv[j, j] = 0.5
        cones.append(Cone("soc", k.dim))
        if names:
            names[i] = f"({names[i]}+{names[i + 1]})"
            names[i + 1] = f"({p.names[i]}-{names[i + 1]})"
            for j in range(i + 2, sl.stop):
                names[j] = f"2*{names[j]}"
    Tinv = Tinv.tocsr()
    return ConicProgram(
        c=Tinv.T @ p.c,
        A=p.A @ Tinv,
        b=p.b,
        cones=tuple(cones),
        names=tuple(names),
        row_names=p.row_names,
        meta={**p.meta, "converted_from": "rotated"},
    )


def rotated_from_second_order(p: ConicProgram, x_soc: np.ndarray) -> np.ndarray:
    """Map a solution of ``to_second_order(p)`` back to the variables of ``p``."""
    x = np.array(x_soc, dtype=float)
    for k, sl in p.blocks():
        if k.type == "rotated":
            a, bb = x[sl.start], x[sl.start + 1]
            x[sl.start], x[sl.start + 1] = (a + bb) / 2.0, (a - bb) / 2.0
            x[sl.start + 2 : sl.stop] /= 2.0
    return x


def program_to_dict(p: ConicProgram) -> dict:
    A = p.A.tocoo()
    return {
        "format": "socpdual-conic-v1",
        "objective": "minimize c^T x subject to A x = b, x in K",
        "c": p.c.tolist(),
        "b": p.b.tolist(),
        "A": {
            "shape": list(A.shape),
            "rows": A.row.tolist(),
            "cols": A.col.tolist(),
            "vals": A.data.tolist(),
        },
        "cones": [{"type": k.type, "dim": k.dim} for k in p.cones],
        "names": list(p.names),
        "row_names": list(p.row_names),
        "meta": {k: v for k, v in p.meta.items() if _jsonable(v)},
    }


def _jsonable(v) -> bool:
    try:
        json.dumps(v)
    except TypeError:
        return False
    return True


def program_from_dict(doc: dict) -> ConicProgram:
    A = doc["A"]
    mat = sp.coo_matrix((A["vals"], (A["rows"], A["cols"])), shape=tuple(A["shape"]))
    return ConicProgram(
        c=np.array(doc["c"], dtype=float),
        A=mat.tocsr(),
        b=np.array(doc["b"], dtype=float),
        cones=tuple(Cone(k["type"], int(k["dim"])) for k in doc["cones"]),
        names=tuple(doc.get("names", ())),
        row_names=tuple(doc.get("row_names", ())),
        meta=dict(doc.get("meta", {})),
    )


def dump_program(p: ConicProgram) -> str:
    return json.dumps(program_to_dict(p))


def load_program(text: str | bytes) -> ConicProgram:
    return program_from_dict(json.loads(text))


class ProgramBuilder:
    """Incremental assembly of a :class:`ConicProgram`.

    Variables are declared per block; rows are added as ``{var: coef}`` maps.
    """

    def __init__(self):
        self._cones: list[Cone] = []
        self._names: list[str] = []
        self._rows: list[int] = []
        self._cols: list[int] = []
        self._vals: list[float] = []
        self._b: list[float] = []
        self._row_names: list[str] = []
        self._c: dict[int, float] = {}

    def add_block(self, type: str, names: Sequence[str]) -> list[int]:
        start = len(self._names)
        self._cones.append(Cone(type, len(names)))
        self._names.extend(names)
        return list(range(start, start + len(names)))

    def add_scalars(self, type: str, names: Sequence[str]) -> list[int]:
        """Declare scalar variables; consecutive free/nonneg blocks are merged at build time."""
        return [self.add_block(type, [nm])[0] for nm in names]

    def add_row(self, coefs: dict[int, float], rhs: float, name: str = "") -> int:
        r = len(self._b)
        for j, v in coefs.items():
            if v != 0.0:
                self._rows.append(r)
                self._cols.append(j)
                self._vals.append(float(v))
        self._b.append(float(rhs))
        self._row_names.append(name)
        return r

    def add_cost(self, j: int, v: float) -> None:
        self._c[j] = self._c.get(j, 0.0) + float(v)

    def build(self, meta: dict | None = None) -> ConicProgram:
        merged: list[Cone] = []
        for k in self._cones:
            if merged and k.type in ("free", "nonneg") and merged[-1].type == k.type:
                merged[-1] = Cone(k.type, merged[-1].dim + k.dim)
            else:
                merged.append(k)
        n = len(self._names)
        c = np.zeros(n)
        for j, v in self._c.items():
            c[j] = v
        A = sp.csr_matrix((self._vals, (self._rows, self._cols)), shape=(len(self._b), n))
        return ConicProgram(
            c=c,
            A=A,
            b=np.array(self._b),
            cones=tuple(merged),
            names=tuple(self._names),
            row_names=tuple(self._row_names),
            meta=meta or {},
        )
