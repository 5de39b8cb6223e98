"""Super-symmetric tensors stored by canonical (sorted) multi-index.

A tensor of order ``d`` over ``n`` bands keeps one value per non-decreasing
multi-index, ``comb(n + d - 1, d)`` values in total, laid out in
lexicographic order. Indices in the public API are 1-based.
"""
from __future__ import annotations

import enum
import functools
import json
import math

import numpy as np

from .errors import BoundsError, ValidationError

__all__ = [
    "Area",
    "SymTensor",
    "canonical_table",
    "canonical_rank",
    "compressed_unfolding",
    "element_area",
    "fiber_cut",
    "get",
    "n_canonical",
    "off_diag_ratio",
    "unfold_mode1",
]


def n_canonical(n: int, d: int) -> int:
    return math.comb(n + d - 1, d)


@functools.lru_cache(maxsize=16)
def canonical_table(n: int, d: int) -> np.ndarray:
    """All non-decreasing 0-based multi-indices of length ``d`` over ``n``,
    one per row, in lexicographic order (read-only)."""
    if d < 1 or n < 1:
        raise ValidationError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    dtype = np.int16 if n < 2**15 else np.int32
    table = np.arange(n, dtype=dtype)[:, None]
    for _ in range(d - 1):
        # rows whose leading entry is >= a form a suffix of the previous table
        starts = np.searchsorted(table[:, 0], np.arange(n), side="left")
        sizes = len(table) - starts
        lead = np.repeat(np.arange(n, dtype=dtype), sizes)
        body = np.concatenate([table[s:] for s in starts])
        table = np.column_stack([lead, body])
    table.setflags(write=False)
    return table


@functools.lru_cache(maxsize=32)
def _binom_table(size: int, d: int) -> np.ndarray:
    out = np.zeros((size + 1, d + 1), dtype=np.int64)
    for a in range(size + 1):
        for b in range(d + 1):
            out[a, b] = math.comb(a, b)
    return out


def canonical_rank(sorted_idx, n: int) -> np.ndarray:
    """Position of sorted 0-based multi-indices (last axis) in the canonical
    lexicographic layout."""
    idx = np.asarray(sorted_idx, dtype=np.int64)
    d = idx.shape[-1]
    big_n = n + d - 1
    binom = _binom_table(big_n, d)
    j = idx + np.arange(d)
    rank = np.full(idx.shape[:-1], math.comb(big_n, d) - 1, dtype=np.int64)
    for k in range(d):
        rank -= binom[big_n - 1 - j[..., k], d - k]
    return rank


class Area(enum.Enum):
    DIAGONAL = "diagonal"
    PARTIALLY_DIAGONAL = "partially_diagonal"
    OFF_DIAGONAL = "off_diagonal"


def element_area(idx) -> Area:
    """Classify a multi-index: all equal, all distinct, or neither."""
    distinct = len(set(idx))
    if distinct == 1:
        return Area.DIAGONAL
    if distinct == len(idx):
        return Area.OFF_DIAGONAL
    return Area.PARTIALLY_DIAGONAL


def off_diag_ratio(n: int, d: int) -> float:
    """Fraction of the ``n**d`` multi-indices whose entries are all distinct."""
    if n < 1 or d < 2:
        raise ValidationError(f"need n >= 1 and d >= 2, got n={n}, d={d}")
    return math.perm(n, d) / n**d


class SymTensor:
    """Super-symmetric tensor of order ``order`` and dimension ``dim``.

    ``values`` holds the canonical entries in lexicographic order. The object
    is treated as immutable once built; ``set_canonical`` exists for the
    construction phase only.
    """

    __slots__ = ("order", "dim", "values")

    def __init__(self, order: int, dim: int, values=None):
        if order < 1 or dim < 1:
            raise ValidationError(f"need order >= 1 and dim >= 1, got {order}, {dim}")
        size = n_canonical(dim, order)
        if values is None:
            values = np.zeros(size)
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (size,):
            raise ValidationError(
                f"order-{order} tensor over {dim} bands needs {size} canonical "
                f"values, got shape {values.shape}"
            )
        self.order = order
        self.dim = dim
        self.values = values

    @classmethod
    def from_dense(cls, array, atol: float = 1e-12) -> "SymTensor":
        array = np.asarray(array, dtype=np.float64)
        d = array.ndim
        n = array.shape[0]
        if any(s != n for s in array.shape):
            raise ValidationError(f"dense tensor must be cubical, got {array.shape}")
        table = canonical_table(n, d)
        values = array[tuple(table.T)] if d > 1 else array.copy()
        out = cls(d, n, values)
        if not np.allclose(out.to_dense(), array, rtol=0, atol=atol):
            raise ValidationError("dense tensor is not super-symmetric")
        return out

    def _check(self, idx):
        if len(idx) != self.order:
            raise BoundsError(f"multi-index {tuple(idx)} has length {len(idx)}, tensor order is {self.order}")
        for i in idx:
            if not 1 <= i <= self.dim:
                raise BoundsError(f"index {i} in {tuple(idx)} outside [1, {self.dim}]")

    def _position(self, idx) -> int:
        self._check(idx)
        key = np.sort(np.asarray(idx, dtype=np.int64) - 1)
        return int(canonical_rank(key, self.dim))

    def get(self, idx) -> float:
        return float(self.values[self._position(idx)])

    __getitem__ = get

    def set_canonical(self, idx, value: float) -> None:
        self.values[self._position(idx)] = value

    def to_dense(self) -> np.ndarray:
        n, d = self.dim, self.order
        if d == 1:
            return self.values.copy()
        grid = np.indices((n,) * d).reshape(d, -1).T
        pos = canonical_rank(np.sort(grid, axis=1), n)
        return self.values[pos].reshape((n,) * d)

    def unfold_mode1(self) -> np.ndarray:
        return unfold_mode1(self)

    def fiber_cut(self, r: int) -> "SymTensor":
        return fiber_cut(self, r)

    def allclose(self, other: "SymTensor", rtol=1e-10, atol=0.0) -> bool:
        return (
            self.order == other.order
            and self.dim == other.dim
            and np.allclose(self.values, other.values, rtol=rtol, atol=atol)
        )

    def to_dict(self) -> dict:
        table = canonical_table(self.dim, self.order) + 1
        return {
            "order": self.order,
            "dim": self.dim,
            "entries": [[row.tolist(), float(v)] for row, v in zip(table, self.values)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, payload: dict) -> "SymTensor":
        out = cls(int(payload["order"]), int(payload["dim"]))
        for idx, value in payload["entries"]:
            out.set_canonical(idx, value)
        return out

    def __repr__(self):
        return f"SymTensor(order={self.order}, dim={self.dim})"


def get(tensor: SymTensor, idx) -> float:
    return tensor.get(idx)


def unfold_mode1(tensor: SymTensor) -> np.ndarray:
    """Dense ``n x n**(d-1)`` mode-1 matricisation.

    Column ``j`` (0-based) of row ``i_1`` holds the element whose remaining
    indices satisfy ``j = sum_l (i_l - 1) n**(l-2)``, i.e. ``i_2`` varies fastest.
    """
    if tensor.order < 2:
        raise ValidationError("unfolding needs order >= 2")
    n = tensor.dim
    return tensor.to_dense().reshape(n, -1, order="F")


def fiber_cut(tensor: SymTensor, r: int) -> SymTensor:
    """Drop every entry whose multi-index touches band position ``r`` (1-based).

    Relabelling the surviving bands is monotone, so the surviving canonical
    entries keep their relative lexicographic order.
    """
    n = tensor.dim
    if not 1 <= r <= n:
        raise BoundsError(f"fiber position {r} outside [1, {n}]")
    if n == 1:
        raise ValidationError("cannot cut the only band of a tensor")
    table = canonical_table(n, tensor.order)
    keep = ~(table == r - 1).any(axis=1)
    return SymTensor(tensor.order, n - 1, tensor.values[keep])


@functools.lru_cache(maxsize=16)
def _compressed_layout(n: int, d: int):
    tails = canonical_table(n, d - 1)
    m = d - 1
    # multiplicity of a sorted tuple = m! / prod(run lengths!)
    denom = np.ones(len(tails), dtype=np.float64)
    run = np.ones(len(tails), dtype=np.float64)
    for k in range(1, m):
        same = tails[:, k] == tails[:, k - 1]
        run = np.where(same, run + 1, 1.0)
        denom *= run
    weights = math.factorial(m) / denom
    pos = np.empty((n, len(tails)), dtype=np.int64)
    for a in range(n):
        rows = np.sort(np.column_stack([np.full(len(tails), a, dtype=tails.dtype), tails]), axis=1)
        pos[a] = canonical_rank(rows, n)
    pos.setflags(write=False)
    weights.setflags(write=False)
    return tails, weights, pos


def compressed_unfolding(tensor: SymTensor):
    """Mode-1 unfolding with duplicate columns merged.

    Returns ``(tails, weights, u)``: ``tails`` are the canonical 0-based
    ``(d-1)``-tuples labelling the columns, ``weights`` how many dense columns
    each one stands for, and ``u`` the ``n x len(tails)`` matrix. For every
    row pair ``u @ diag(weights) @ u.T`` equals the dense Gram product.
    """
    if tensor.order < 2:
        raise ValidationError("unfolding needs order >= 2")
    tails, weights, pos = _compressed_layout(tensor.dim, tensor.order)
    return tails, weights, tensor.values[pos]
