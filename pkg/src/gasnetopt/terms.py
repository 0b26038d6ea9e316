"""Sparse polynomial-like residual systems with exact derivatives.

A :class:`TermSystem` is a vector of residual rows, each a sum of simple
terms in a shared variable vector ``x``:

* ``c * x[a]`` (linear)
* ``c * x[a] * x[b]`` (bilinear)
* ``c * x[a]**2`` (square)
* ``c * x[a] * |x[a]|`` (signed square, optionally smoothed)
* ``c * x[a]**p`` (power)
* constants.

That is all the network equations need. Terms are stored as flat numpy
arrays so evaluation, the sparse Jacobian and the weighted sum of row
Hessians are each a handful of vectorized operations. Sparsity patterns are
fixed once :meth:`TermSystem.finalize` is called.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass
class Block:
    """A named rectangular block of rows or variables, ``shape = (entities, nodes)``."""

    label: str
    start: int
    entities: tuple
    nodes: int

    @property
    def size(self) -> int:
        return len(self.entities) * self.nodes

    def name(self, offset: int) -> str:
        e, k = divmod(offset, self.nodes)
        return f"{self.label}[{self.entities[e]}, t{k}]"


class Registry:
    """Allocates contiguous index ranges and names them."""

    def __init__(self):
        self.blocks: list[Block] = []
        self.size = 0

    def add(self, label: str, entities, nodes: int) -> np.ndarray:
        entities = tuple(entities)
        block = Block(label, self.size, entities, nodes)
        self.blocks.append(block)
        self.size += block.size
        return np.arange(block.start, block.start + block.size).reshape(len(entities), nodes)

    def name(self, index: int) -> str:
        starts = [b.start for b in self.blocks]
        k = bisect.bisect_right(starts, index) - 1
        while k > 0 and self.blocks[k].size == 0:
            k -= 1
        b = self.blocks[k]
        return b.name(index - b.start)

    def names(self) -> list[str]:
        out = []
        for b in self.blocks:
            out.extend(b.name(i) for i in range(b.size))
        return out

    def block(self, label: str) -> Block:
        for b in self.blocks:
            if b.label == label:
                return b
        raise KeyError(label)


def _flat(*arrays):
    arrays = np.broadcast_arrays(*[np.asarray(a) for a in arrays])
    return [a.ravel() for a in arrays]


class TermSystem:
    def __init__(self, n_vars: int, smoothing: float | None = None):
        self.n_vars = n_vars
        self.smoothing = smoothing
        self.rows = Registry()
        self._parts = {k: [] for k in ("lin", "bil", "sq", "ssq", "pow", "const")}
        self._final = False

    # ------------------------------------------------------------ building
    def add_rows(self, label: str, entities, nodes: int) -> np.ndarray:
        return self.rows.add(label, entities, nodes)

    @property
    def n_rows(self) -> int:
        return self.rows.size

    def linear(self, rows, cols, coef=1.0):
        self._parts["lin"].append(_flat(rows, cols, np.asarray(coef, dtype=float)))

    def bilinear(self, rows, a, b, coef=1.0):
        self._parts["bil"].append(_flat(rows, a, b, np.asarray(coef, dtype=float)))

    def square(self, rows, cols, coef=1.0):
        self._parts["sq"].append(_flat(rows, cols, np.asarray(coef, dtype=float)))

    def signed_square(self, rows, cols, coef=1.0):
        self._parts["ssq"].append(_flat(rows, cols, np.asarray(coef, dtype=float)))

    def power(self, rows, cols, coef, exponent):
        self._parts["pow"].append(_flat(rows, cols, np.asarray(coef, dtype=float), np.asarray(exponent, dtype=float)))

    def constant(self, rows, value):
        self._parts["const"].append(_flat(rows, np.asarray(value, dtype=float)))

    def finalize(self) -> "TermSystem":
        def cat(key, width, int_cols):
            parts = self._parts[key]
            if not parts:
                return [np.zeros(0, dtype=int if c < int_cols else float) for c in range(width)]
            return [
                np.concatenate([p[c] for p in parts]).astype(int if c < int_cols else float)
                for c in range(width)
            ]

        self.lin = cat("lin", 3, 2)
        self.bil = cat("bil", 4, 3)
        self.sq = cat("sq", 3, 2)
        self.ssq = cat("ssq", 3, 2)
        self.pow = cat("pow", 4, 2)
        self.const = cat("const", 2, 1)
        m, n = self.n_rows, self.n_vars
        self._const_vec = np.bincount(self.const[0], self.const[1], minlength=m).astype(float)

        # Jacobian pattern
        jr = np.concatenate([self.lin[0], self.bil[0], self.bil[0], self.sq[0], self.ssq[0], self.pow[0]])
        jc = np.concatenate([self.lin[1], self.bil[1], self.bil[2], self.sq[1], self.ssq[1], self.pow[1]])
        keys, self._jslot = np.unique(jr.astype(np.int64) * n + jc, return_inverse=True)
        self.jac_rows = (keys // n).astype(int)
        self.jac_cols = (keys % n).astype(int)
        self._jac_const = np.bincount(self._jslot[: len(self.lin[0])], self.lin[2], minlength=len(keys))

        # Hessian pattern, lower triangle
        a, b = self.bil[1], self.bil[2]
        hr = np.concatenate([np.maximum(a, b), self.sq[1], self.ssq[1], self.pow[1]])
        hc = np.concatenate([np.minimum(a, b), self.sq[1], self.ssq[1], self.pow[1]])
        hkeys, self._hslot = np.unique(hr.astype(np.int64) * n + hc, return_inverse=True)
        self.hess_rows = (hkeys // n).astype(int)
        self.hess_cols = (hkeys % n).astype(int)
        self._bil_diag = np.where(a == b, 2.0, 1.0)
        self._final = True
        return self

    # ---------------------------------------------------------- evaluation
    def _ssq(self, x):
        eps = self.smoothing
        if eps is None:
            return x * np.abs(x), 2.0 * np.abs(x), 2.0 * np.sign(x)
        s = np.sqrt(x * x + eps * eps)
        return x * s, s + x * x / s, x * (2.0 * x * x + 3.0 * eps * eps) / s**3

    def values(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        m = self.n_rows
        out = self._const_vec.copy()
        r, c, k = self.lin
        out += np.bincount(r, k * x[c], minlength=m)
        r, a, b, k = self.bil
        out += np.bincount(r, k * x[a] * x[b], minlength=m)
        r, c, k = self.sq
        out += np.bincount(r, k * x[c] ** 2, minlength=m)
        r, c, k = self.ssq
        out += np.bincount(r, k * self._ssq(x[c])[0], minlength=m)
        r, c, k, p = self.pow
        out += np.bincount(r, k * np.power(x[c], p), minlength=m)
        return out

    def jacobian_values(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r, a, b, kb = self.bil
        _, c2, k2 = self.sq
        _, c3, k3 = self.ssq
        _, c4, k4, p4 = self.pow
        contrib = np.concatenate(
            [
                np.zeros(len(self.lin[0])),
                kb * x[b],
                kb * x[a],
                2.0 * k2 * x[c2],
                k3 * self._ssq(x[c3])[1],
                k4 * p4 * np.power(x[c4], p4 - 1.0),
            ]
        )
        return self._jac_const + np.bincount(self._jslot, contrib, minlength=len(self.jac_rows))

    def jacobian(self, x) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.jacobian_values(x), (self.jac_rows, self.jac_cols)), shape=(self.n_rows, self.n_vars)
        )

    def hessian_values(self, x, weights) -> np.ndarray:
        """Lower-triangle values of ``sum_r weights[r] * Hessian(row r)``."""
        x = np.asarray(x, dtype=float)
        w = np.asarray(weights, dtype=float)
        rb, _, _, kb = self.bil
        r2, c2, k2 = self.sq
        r3, c3, k3 = self.ssq
        r4, c4, k4, p4 = self.pow
        contrib = np.concatenate(
            [
                w[rb] * kb * self._bil_diag,
                2.0 * w[r2] * k2,
                w[r3] * k3 * self._ssq(x[c3])[2],
                w[r4] * k4 * p4 * (p4 - 1.0) * np.power(x[c4], p4 - 2.0),
            ]
        )
        return np.bincount(self._hslot, contrib, minlength=len(self.hess_rows))

    def hessian(self, x, weights) -> sp.csr_matrix:
        """Full symmetric weighted Hessian as a sparse matrix."""
        v = self.hessian_values(x, weights)
        n = self.n_vars
        low = sp.coo_matrix((v, (self.hess_rows, self.hess_cols)), shape=(n, n))
        off = self.hess_rows != self.hess_cols
        up = sp.coo_matrix((v[off], (self.hess_cols[off], self.hess_rows[off])), shape=(n, n))
        return (low + up).tocsr()
