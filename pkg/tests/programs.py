"""Small conic programs shared by the solver, dual and acceptance tests."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from socpdual.conic import Cone, ConicProgram


def soc_example() -> ConicProgram:
    """``min t`` with ``(t, 1)`` in the 2-dim second-order cone; optimum 1."""
    return ConicProgram(c=[1.0, 0.0], A=sp.csr_matrix([[0.0, 1.0]]), b=[1.0], cones=(Cone("soc", 2),))


def rotated_example() -> ConicProgram:
    """``min u + w`` with ``u w >= 1``; optimum 2 at ``u = w = 1``."""
    return ConicProgram(c=[1.0, 1.0, 0.0], A=sp.csr_matrix([[0.0, 0.0, 1.0]]), b=[1.0], cones=(Cone("rotated", 3),))


def lp_example() -> ConicProgram:
    """``min x`` with ``x = 1, x >= 0``; optimum 1."""
    return ConicProgram(c=[1.0], A=sp.csr_matrix([[1.0]]), b=[1.0], cones=(Cone("nonneg", 1),))


def _interior(cones, rng, dual: bool) -> np.ndarray:
    v = []
    for k in cones:
        if k.type == "free":
            v.extend(np.zeros(k.dim) if dual else rng.standard_normal(k.dim))
        elif k.type == "nonneg":
            v.extend(rng.uniform(0.1, 2.0, k.dim))
        elif k.type == "soc":
            t = rng.standard_normal(k.dim - 1)
            v.extend([np.linalg.norm(t) + rng.uniform(0.1, 1.0), *t])
        else:
            t = rng.standard_normal(k.dim - 2)
            u = rng.uniform(0.2, 2.0)
            # the dual of the rotated cone is 4 a b >= |c|^2
            w = (t @ t) / u * (4.0 if dual else 1.0) + rng.uniform(0.1, 1.0)
            v.extend([u, w, *t])
    return np.array(v)


def random_program(rng: np.random.Generator, with_points: bool = False):
    """Random program that is strictly primal and dual feasible by construction.

    With ``with_points`` also returns the primal interior point ``x0`` and a
    dual interior pair ``(y0, s0)``.
    """
    cones = [Cone("free", int(rng.integers(1, 4))), Cone("nonneg", int(rng.integers(1, 6)))]
    cones += [Cone("soc", int(rng.integers(2, 5))) for _ in range(rng.integers(1, 5))]
    cones += [Cone("rotated", int(rng.integers(3, 6))) for _ in range(rng.integers(1, 5))]
    n = sum(k.dim for k in cones)
    m = int(rng.integers(1, n))
    A = rng.standard_normal((m, n))
    x0 = _interior(cones, rng, dual=False)
    s0 = _interior(cones, rng, dual=True)
    y0 = rng.standard_normal(m)
    p = ConicProgram(c=A.T @ y0 + s0, A=sp.csr_matrix(A), b=A @ x0, cones=tuple(cones))
    return (p, x0, y0, s0) if with_points else p
