"""Moment and cumulant tensor estimation from a realisation matrix."""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import BoundsError, UnsupportedOrderError, ValidationError
from .symtensor import SymTensor, canonical_rank, canonical_table, n_canonical

__all__ = [
    "MAX_ORDER",
    "CumulantSet",
    "DataMatrix",
    "central_moment",
    "central_moments",
    "cumulant",
    "cumulant_oracle",
    "cumulants",
    "expected_value",
    "set_partitions",
]

MAX_ORDER = 5


@dataclass(frozen=True)
class DataMatrix:
    """``t x n`` matrix of realisations (pixels) by marginals (bands).

    ``shape`` records the ``(p_x, p_y)`` scene grid when the matrix came from
    unfolding a cube, so per-pixel results can be folded back.
    """

    values: np.ndarray
    band_ids: tuple = None
    wavelengths: np.ndarray | None = None
    shape: tuple | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise ValidationError(f"data matrix must be 2-D, got {values.ndim}-D")
        t, n = values.shape
        bad = ~np.isfinite(values)
        if bad.any():
            cols = sorted({int(c) for c in np.flatnonzero(bad.any(axis=0))})
            raise ValidationError(f"data holds non-finite values in column(s) {[c + 1 for c in cols]}")
        if t < 1 or n < 1:
            raise ValidationError(f"need at least one realisation and one band, got {t} x {n}")
        band_ids = tuple(range(1, n + 1)) if self.band_ids is None else tuple(self.band_ids)
        if len(band_ids) != n:
            raise ValidationError(f"{len(band_ids)} band ids for {n} columns")
        if len(set(band_ids)) != n:
            raise ValidationError("band ids must be unique")
        wavelengths = self.wavelengths
        if wavelengths is not None:
            wavelengths = np.asarray(wavelengths, dtype=np.float64)
            if wavelengths.shape != (n,):
                raise ValidationError(f"{wavelengths.shape[0]} wavelengths for {n} bands")
        if self.shape is not None and int(np.prod(self.shape)) != t:
            raise ValidationError(f"scene shape {self.shape} does not hold {t} pixels")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "band_ids", band_ids)
        object.__setattr__(self, "wavelengths", wavelengths)

    @property
    def t(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def columns(self, positions) -> "DataMatrix":
        """Sub-matrix of the given 0-based column positions, metadata carried."""
        positions = list(positions)
        wl = None if self.wavelengths is None else self.wavelengths[positions]
        return DataMatrix(
            self.values[:, positions],
            tuple(self.band_ids[p] for p in positions),
            wl,
            self.shape,
        )


@dataclass
class CumulantSet:
    source_t: int
    tensors: dict
    warnings: list = field(default_factory=list)

    def __getitem__(self, order: int) -> SymTensor:
        return self.tensors[order]

    @property
    def dim(self) -> int:
        return next(iter(self.tensors.values())).dim


def _as_data(data) -> DataMatrix:
    data = data if isinstance(data, DataMatrix) else DataMatrix(data)
    if data.t < 2:
        raise ValidationError(f"moment estimation needs t >= 2 realisations, got {data.t}")
    return data


def _columns(data: DataMatrix, idx) -> list:
    cols = []
    for i in idx:
        if not 1 <= i <= data.n:
            raise BoundsError(f"band position {i} outside [1, {data.n}]")
        cols.append(i - 1)
    return cols


def expected_value(data, idx) -> float:
    """Plain ``1/t`` estimator of ``E(X_i1 ... X_id)``; ``idx`` is 1-based."""
    data = _as_data(data)
    cols = _columns(data, idx)
    return float(np.prod(data.values[:, cols], axis=1).mean())


def _centred(data: DataMatrix) -> np.ndarray:
    return data.values - data.values.mean(axis=0)


def central_moment(data, idx) -> float:
    data = _as_data(data)
    cols = _columns(data, idx)
    return float(np.prod(_centred(data)[:, cols], axis=1).mean())


def _moment_values(xt: np.ndarray, k: int) -> np.ndarray:
    n = xt.shape[0]
    prefixes = np.ascontiguousarray(canonical_table(n, k - 1), dtype=np.int64)
    heads = np.column_stack([prefixes, prefixes[:, -1]])
    offsets = np.ascontiguousarray(canonical_rank(heads, n))
    out = np.empty(n_canonical(n, k))
    return _kernels.accumulate(xt, prefixes, offsets, out)


def central_moments(data, k: int) -> SymTensor:
    """All central moments of order ``k >= 2`` as a symmetric tensor."""
    data = _as_data(data)
    if k < 2:
        raise ValidationError("central moment tensors start at order 2")
    xt = np.ascontiguousarray(_centred(data).T)
    return SymTensor(k, data.n, _moment_values(xt, k))


def set_partitions(items):
    """Yield every partition of ``items`` as a list of tuples."""
    items = list(items)
    if not items:
        yield []
        return
    head, rest = items[0], items[1:]
    for part in set_partitions(rest):
        yield [(head,)] + part
        for b in range(len(part)):
            yield part[:b] + [(head,) + part[b]] + part[b + 1:]


@functools.lru_cache(maxsize=None)
def _pairings(d: int):
    """Partitions of ``d`` positions without singleton blocks, with their
    moment-to-cumulant coefficients ``(-1)**(b-1) (b-1)!``."""
    out = []
    for part in set_partitions(range(d)):
        if min(len(b) for b in part) < 2:
            continue
        b = len(part)
        out.append(((-1) ** (b - 1) * math.factorial(b - 1), [tuple(sorted(x)) for x in part]))
    return out


def _check_order(d: int):
    if not 1 <= d <= MAX_ORDER:
        raise UnsupportedOrderError(f"cumulant order {d} not supported (1..{MAX_ORDER})")


def _combine(n: int, d: int, moments: dict) -> np.ndarray:
    # centred moments: every block of size one vanishes, so only the
    # singleton-free partitions contribute
    table = canonical_table(n, d)
    out = np.zeros(len(table))
    for coef, blocks in _pairings(d):
        term = np.ones(len(table))
        for block in blocks:
            sub = table[:, list(block)]
            term *= moments[len(block)][canonical_rank(sub, n)]
        out += coef * term
    return out


def _zero_variance_warnings(data: DataMatrix) -> list:
    flat = np.ptp(data.values, axis=0) == 0
    return [f"band {data.band_ids[i]} has zero variance" for i in np.flatnonzero(flat)]


def cumulants(data, orders=(2, 3)) -> CumulantSet:
    """Estimate several cumulant tensors, sharing the central moments."""
    data = _as_data(data)
    orders = sorted(set(orders))
    for d in orders:
        _check_order(d)
    needed = set()
    for d in orders:
        if d >= 2:
            needed.add(d)
            for _, blocks in _pairings(d):
                needed.update(len(b) for b in blocks)
    xt = np.ascontiguousarray(_centred(data).T)
    moments = {k: _moment_values(xt, k) for k in sorted(needed)}
    tensors = {}
    for d in orders:
        if d == 1:
            tensors[1] = SymTensor(1, data.n, data.values.mean(axis=0))
        elif d <= 3:
            tensors[d] = SymTensor(d, data.n, moments[d].copy())
        else:
            tensors[d] = SymTensor(d, data.n, _combine(data.n, d, moments))
    return CumulantSet(data.t, tensors, _zero_variance_warnings(data))


def cumulant(data, d: int) -> SymTensor:
    """Order-``d`` cumulant tensor, ``1 <= d <= 5``.

    Orders 1-3 are the mean, covariance and third central moment. Orders 4
    and 5 subtract every product of lower central moments over
    singleton-free partitions of the index positions (3 pairings at order 4,
    10 at order 5).
    """
    _check_order(d)
    return cumulants(data, (d,))[d]


def cumulant_oracle(data, d: int) -> SymTensor:
    """Brute-force cumulant tensor for testing.

    Evaluates the moment-to-cumulant formula over all set partitions using raw
    (uncentred) moments, one canonical element at a time. It suffers the
    usual cancellation when column means are large relative to spread, so
    feed it roughly centred data.
    """
    data = _as_data(data)
    _check_order(d)
    if data.n > 6 or data.t > 10_000:
        raise ValidationError("oracle limited to n <= 6 and t <= 10000")
    x = data.values
    raw = {}

    def moment(cols):
        key = tuple(sorted(cols))
        if key not in raw:
            prod = np.ones(data.t)
            for c in key:
                prod = prod * x[:, c]
            raw[key] = math.fsum(prod) / data.t
        return raw[key]

    parts = [
        ((-1) ** (len(p) - 1) * math.factorial(len(p) - 1), p)
        for p in set_partitions(range(d))
    ]
    values = []
    for idx in itertools.combinations_with_replacement(range(data.n), d):
        total = 0.0
        for coef, part in parts:
            term = float(coef)
            for block in part:
                term *= moment([idx[p] for p in block])
            total += term
        values.append(total)
    return SymTensor(d, data.n, values)
