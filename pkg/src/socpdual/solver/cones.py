"""Batched cone arithmetic for the interior-point solver.

The solver keeps the cone part of the primal variables (``s``) and of the
dual slack (``z``) in one flat vector whose layout is: all nonnegative
scalars first, then one contiguous chunk per group of equal-dimension
second-order-like blocks. Rotated blocks ``u w >= ||t||^2`` are carried in
their own coordinates and mapped on the fly to second-order coordinates with
``T (u, w, t) = (u + w, u - w, 2 t)`` for primal vectors and
``T^-1`` for dual vectors, so ``<s, z>`` is preserved and the Nesterov-Todd
machinery only ever sees plain second-order cones.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass
class Group:
    start: int  # offset into the cone vector
    nb: int
    dim: int
    rotated: np.ndarray  # (nb,) bool

    @property
    def stop(self) -> int:
        return self.start + self.nb * self.dim

    def view(self, v: np.ndarray) -> np.ndarray:
        return v[self.start : self.stop].reshape(self.nb, self.dim)


class ConeLayout:
    """Cone bookkeeping plus the Nesterov-Todd scaling at the current iterate."""

    def __init__(self, nl: int, blocks: list[tuple[int, bool]]):
        # blocks: (dim, rotated) for every second-order-like block, in order
        self.nl = nl
        by_dim: dict[int, list[int]] = {}
        for k, (d, _) in enumerate(blocks):
            by_dim.setdefault(d, []).append(k)
        self.groups: list[Group] = []
        self.order: list[int] = []  # block index for each group row
        pos = nl
        for d in sorted(by_dim):
            ks = by_dim[d]
            rot = np.array([blocks[k][1] for k in ks], dtype=bool)
            self.groups.append(Group(pos, len(ks), d, rot))
            self.order.extend(ks)
            pos += len(ks) * d
        self.size = pos
        self.degree = nl + len(blocks)

    # ------------------------------------------------------------ coordinates
    @cached_property
    def _rot_index(self):
        ia, it = [], []
        for g in self.groups:
            rows = np.flatnonzero(g.rotated)
            base = g.start + rows * g.dim
            ia.append(base)
            it.append((base[:, None] + np.arange(2, g.dim)).ravel())
        if not ia:
            return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
        return np.concatenate(ia), np.concatenate(it)

    def _rot_map(self, v: np.ndarray, primal: bool, inverse: bool) -> np.ndarray:
        ia, it = self._rot_index
        out = v.copy()
        if ia.size == 0:
            return out
        a, b = v[ia], v[ia + 1]
        # T = [[1, 1], [1, -1]] (+) 2I ;  T^-1 = T / 2
        forward = primal != inverse
        f = 1.0 if forward else 0.5
        out[ia] = f * (a + b)
        out[ia + 1] = f * (a - b)
        out[it] = (2.0 if forward else 0.5) * v[it]
        return out

    def soc_primal(self, v):
        """Primal vector -> second-order coordinates (``T v`` on rotated blocks)."""
        return self._rot_map(v, primal=True, inverse=False)

    def soc_primal_inv(self, v):
        return self._rot_map(v, primal=True, inverse=True)

    def soc_dual(self, v):
        """Dual vector -> second-order coordinates (``T^-1 v`` on rotated blocks)."""
        return self._rot_map(v, primal=False, inverse=False)

    def soc_dual_inv(self, v):
        return self._rot_map(v, primal=False, inverse=True)

    # ------------------------------------------------------- Jordan algebra
    def identity(self) -> np.ndarray:
        e = np.zeros(self.size)
        e[: self.nl] = 1.0
        for g in self.groups:
            g.view(e)[:, 0] = 1.0
        return e

    def jprod(self, u, v):
        out = np.empty(self.size)
        out[: self.nl] = u[: self.nl] * v[: self.nl]
        for g in self.groups:
            U, V, O = g.view(u), g.view(v), g.view(out)
            O[:, 0] = np.einsum("ij,ij->i", U, V)
            O[:, 1:] = U[:, :1] * V[:, 1:] + V[:, :1] * U[:, 1:]
        return out

    def jdiv(self, lam, d):
        """Solve ``lam o x = d`` for ``x``."""
        out = np.empty(self.size)
        out[: self.nl] = d[: self.nl] / lam[: self.nl]
        for g in self.groups:
            L, D, O = g.view(lam), g.view(d), g.view(out)
            l0, l1 = L[:, 0], L[:, 1:]
            det = l0 * l0 - np.einsum("ij,ij->i", l1, l1)
            x0 = (l0 * D[:, 0] - np.einsum("ij,ij->i", l1, D[:, 1:])) / det
            O[:, 0] = x0
            O[:, 1:] = (D[:, 1:] - x0[:, None] * l1) / l0[:, None]
        return out

    def max_eig_neg(self, v) -> float:
        """``inf{a : v + a e in K}`` in second-order coordinates."""
        worst = -np.inf
        if self.nl:
            worst = max(worst, float(np.max(-v[: self.nl])))
        for g in self.groups:
            V = g.view(v)
            worst = max(worst, float(np.max(np.linalg.norm(V[:, 1:], axis=1) - V[:, 0])))
        return worst

    def max_step(self, x, d) -> float:
        """Largest ``a`` with ``x + a d`` in the cone (second-order coordinates)."""
        a = np.inf
        if self.nl:
            dl = d[: self.nl]
            neg = dl < 0
            if neg.any():
                a = min(a, float(np.min(-x[: self.nl][neg] / dl[neg])))
        for g in self.groups:
            X, D = g.view(x), g.view(d)
            x0, x1 = X[:, 0], X[:, 1:]
            sq = np.sqrt(np.maximum(x0 * x0 - np.einsum("ij,ij->i", x1, x1), 1e-300))
            xb0, xb1 = x0 / sq, x1 / sq[:, None]
            djd = xb0 * D[:, 0] - np.einsum("ij,ij->i", xb1, D[:, 1:])
            d1 = D[:, 1:] - xb1 * ((D[:, 0] + djd) / (1.0 + xb0))[:, None]
            rho = (np.linalg.norm(d1, axis=1) - djd) / sq
            pos = rho > 0
            if pos.any():
                a = min(a, float(np.min(1.0 / rho[pos])))
        return a

    # ---------------------------------------------------- Nesterov-Todd scaling
    def update_scaling(self, s, z):
        """Compute NT scaling for ``s`` (primal) and ``z`` (dual), both in cone
        coordinates; returns ``lambda = W z``."""
        st, zt = self.soc_primal(s), self.soc_dual(z)
        self.wl = np.sqrt(st[: self.nl] / zt[: self.nl])
        self.eta, self.wbar = [], []
        for g in self.groups:
            S, Z = g.view(st), g.view(zt)
            # factored to avoid cancellation near the boundary
            sn1 = np.linalg.norm(S[:, 1:], axis=1)
            zn1 = np.linalg.norm(Z[:, 1:], axis=1)
            sjs = (S[:, 0] - sn1) * (S[:, 0] + sn1)
            zjz = (Z[:, 0] - zn1) * (Z[:, 0] + zn1)
            sjs = np.maximum(sjs, 1e-300)
            zjz = np.maximum(zjz, 1e-300)
            sn = S / np.sqrt(sjs)[:, None]
            zn = Z / np.sqrt(zjz)[:, None]
            gamma = np.sqrt(np.maximum((1.0 + np.einsum("ij,ij->i", sn, zn)) / 2.0, 1e-300))
            zjn = zn.copy()
            zjn[:, 1:] *= -1.0
            wb = (sn + zjn) / (2.0 * gamma)[:, None]
            # re-normalise so that wb' J wb = 1 exactly
            wjw = wb[:, 0] ** 2 - np.einsum("ij,ij->i", wb[:, 1:], wb[:, 1:])
            wb /= np.sqrt(np.maximum(wjw, 1e-300))[:, None]
            self.eta.append((sjs / zjz) ** 0.25)
            self.wbar.append(wb)
        return self._w_soc(zt)

    def _w_soc(self, v):
        out = np.empty(self.size)
        out[: self.nl] = self.wl * v[: self.nl]
        for g, eta, wb in zip(self.groups, self.eta, self.wbar):
            V, O = g.view(v), g.view(out)
            w0, w1 = wb[:, 0], wb[:, 1:]
            t = np.einsum("ij,ij->i", w1, V[:, 1:])
            O[:, 0] = eta * (w0 * V[:, 0] + t)
            O[:, 1:] = eta[:, None] * (V[:, 1:] + ((V[:, 0] + t / (1.0 + w0)))[:, None] * w1)
        return out

    def _winv_soc(self, v):
        out = np.empty(self.size)
        out[: self.nl] = v[: self.nl] / self.wl
        for g, eta, wb in zip(self.groups, self.eta, self.wbar):
            V, O = g.view(v), g.view(out)
            w0, w1 = wb[:, 0], wb[:, 1:]
            t = np.einsum("ij,ij->i", w1, V[:, 1:])
            O[:, 0] = (w0 * V[:, 0] - t) / eta
            O[:, 1:] = (V[:, 1:] + ((-V[:, 0] + t / (1.0 + w0)))[:, None] * w1) / eta[:, None]
        return out

    # full-coordinate scaling maps: W = Wsoc T^-1, W^-T = Wsoc^-1 T on rotated blocks
    def W(self, z):
        return self._w_soc(self.soc_dual(z))

    def Wt(self, u):
        return self.soc_dual(self._w_soc(u))

    def Winv_t(self, s):
        return self._winv_soc(self.soc_primal(s))

    def Winv(self, u):
        return self.soc_primal(self._winv_soc(u))

    def hessian_blocks(self):
        """``W^-1 W^-T`` as (diagonal for nonneg, list of (nb, d, d) arrays)."""
        diag = 1.0 / self.wl**2
        mats = []
        for g, eta, wb in zip(self.groups, self.eta, self.wbar):
            wj = wb.copy()
            wj[:, 1:] *= -1.0
            M = 2.0 * np.einsum("ni,nj->nij", wj, wj)
            M[:, 0, 0] -= 1.0
            idx = np.arange(1, g.dim)
            M[:, idx, idx] += 1.0
            M /= (eta**2)[:, None, None]
            if g.rotated.any():
                T = np.eye(g.dim)
                T[0, :2] = [1.0, 1.0]
                T[1, :2] = [1.0, -1.0]
                T[2:, 2:] *= 2.0
                M[g.rotated] = T @ M[g.rotated] @ T
            mats.append(M)
        return diag, mats
