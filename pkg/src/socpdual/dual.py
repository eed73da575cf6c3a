"""Explicit Lagrangian duals of standard-form conic programs.

For ``min c'x  s.t.  Ax = b, x in K`` the dual is
``max b'y  s.t.  A'y + s = c, s in K*``. It is written back in the same
standard min-form, ``min -b'y  s.t.  A'y + D w = c, w in K``, where ``y`` is
free, ``D`` maps the cone onto its dual block by block (identity on
nonnegative and second-order blocks, ``diag(1, 1, 2, ..)`` on rotated ones)
and rows of free primal blocks simply lose their slack. The dual is then an
ordinary program that can be solved on its own, with no state shared with
the primal solve.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .conic import ConicProgram, Cone, dual_scaling, program_to_dict


@dataclass(frozen=True)
class DualProgram:
    """Dual of ``primal`` in standard min-form.

    ``mapping[k]`` says where dual variable ``k`` comes from: ``("row", i)``
    for the multiplier of primal row ``i``, ``("cone", j)`` for the dual
    slack paired with primal variable ``j``. The dual objective of the
    original problem is ``-program.objective(w)``; use :meth:`value`.
    """

    program: ConicProgram
    primal: ConicProgram
    mapping: tuple[tuple[str, int], ...]

    def value(self, objective: float) -> float:
        """Dual objective ``b'y`` from the optimal value of :attr:`program`."""
        return -objective

    def multipliers(self, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``(y, s)`` in primal terms from a solution vector ``w`` of :attr:`program`."""
        y = np.zeros(self.primal.m)
        s = np.zeros(self.primal.n)
        d = dual_scaling(self.primal.cones)
        for k, (kind, i) in enumerate(self.mapping):
            if kind == "row":
                y[i] = w[k]
            else:
                s[i] = d[i] * w[k]
        return y, s

    def to_dict(self) -> dict:
        return {
            "program": program_to_dict(self.program),
            "mapping": [list(m) for m in self.mapping],
            "sense": "dual value = -(optimal value of program)",
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict())


def build_dual(p: ConicProgram) -> DualProgram:
    """Dual of ``p`` as a new standard-form program (see module docstring)."""
    m, n = p.m, p.n
    d = dual_scaling(p.cones)
    coned = np.flatnonzero(d > 0)  # primal variables that carry a dual slack
    # columns: [y (free, m) | w (one per non-free primal variable)]
    At = p.A.T.tocsr()
    D = sp.csr_matrix((d[coned], (coned, np.arange(coned.size))), shape=(n, coned.size))
    A = sp.hstack([At, D], format="csr")
    c = np.concatenate([-p.b, np.zeros(coned.size)])
    cones = [Cone("free", m)] if m else []
    cones += [k for k in p.cones if k.type != "free"]
    names = []
    if p.names:
        row_names = p.row_names or tuple(f"row{i}" for i in range(m))
        names = [f"y[{rn or i}]" for i, rn in enumerate(row_names)]
        names += [f"s[{p.names[j]}]" for j in coned]
        # keep names unique when rows share a label
        if len(set(names)) != len(names):
            names = [f"{nm}#{k}" for k, nm in enumerate(names)]
    merged: list[Cone] = []
    for k in cones:
        if merged and k.type in ("free", "nonneg") and merged[-1].type == k.type:
            merged[-1] = Cone(k.type, merged[-1].dim + k.dim)
        else:
            merged.append(k)
    prog = ConicProgram(
        c=c,
        A=A,
        b=p.c.copy(),
        cones=tuple(merged),
        names=tuple(names),
        row_names=tuple(p.names) if p.names else (),
        meta={"kind": "dual", "of": p.meta.get("kind", "program")},
    )
    mapping = tuple([("row", i) for i in range(m)] + [("cone", int(j)) for j in coned])
    return DualProgram(program=prog, primal=p, mapping=mapping)


@dataclass(frozen=True)
class Gap:
    absolute: float
    relative: float

    def strong(self, threshold: float = 1e-4) -> bool:
        """Whether the gap counts as numerically zero (NaN never does)."""
        return bool(abs(self.relative) < threshold)


def duality_gap(primal_value: float, dual_value: float) -> Gap:
    """``primal - dual``, and that over ``max(1, |primal|)``.

    Non-finite inputs (a failed solve) give NaN entries, which callers treat
    as "undefined" rather than as a number.
    """
    if not (np.isfinite(primal_value) and np.isfinite(dual_value)):
        return Gap(float("nan"), float("nan"))
    ab = float(primal_value - dual_value)
    return Gap(ab, ab / max(1.0, abs(float(primal_value))))
