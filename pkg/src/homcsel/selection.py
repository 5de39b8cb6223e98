"""Greedy band elimination driven by cumulant-tensor target functions.

All determinants are taken in the log domain through a Cholesky factor, since
raw values for order 5 and 50 bands leave double-precision range. For order
``d >= 3`` the score of a band subset is

    log f_d = 1/2 logdet(M_d) - d/2 logdet(C_2)

with ``M_d`` the Gram matrix of the mode-1 unfolding of ``C_d``. Order 2 is the
maximum-ellipsoid-volume baseline, scored by ``logdet(C_2)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateSelectionError,
    NumericalError,
    SingularCovarianceError,
    UnsupportedOrderError,
    ValidationError,
)
from .symtensor import SymTensor, compressed_unfolding

__all__ = [
    "SelectionConfig",
    "SelectionResult",
    "breaking_point_limit",
    "candidate_scores",
    "dependency_matrix",
    "log_target_f",
    "log_target_mev",
    "select_bands",
]

SUPPORTED_ORDERS = (2, 3, 4, 5)
METHOD_NAMES = {2: "MEV", 3: "JSBS", 4: "JKFS", 5: "JHSFS"}


@dataclass(frozen=True)
class SelectionConfig:
    order: int
    n_left: int
    ridge: float = 0.0
    warn_below_limit: bool = True

    def __post_init__(self):
        if self.order not in SUPPORTED_ORDERS:
            raise UnsupportedOrderError(f"selection order must be one of {SUPPORTED_ORDERS}, got {self.order}")
        if self.n_left < 1:
            raise ValidationError(f"n_left must be >= 1, got {self.n_left}")
        if not self.ridge >= 0:
            raise ValidationError(f"ridge must be >= 0, got {self.ridge}")


@dataclass
class SelectionResult:
    order: int
    n_left: int
    retained: list
    removal_trace: list = field(default_factory=list)
    limit_warning: str | None = None

    @property
    def removed(self) -> list:
        return [band for band, _ in self.removal_trace]

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "n_left": self.n_left,
            "retained": list(self.retained),
            "trace": [{"removed": b, "log_target": v} for b, v in self.removal_trace],
            "limit_warning": self.limit_warning,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, payload: dict) -> "SelectionResult":
        return cls(
            order=int(payload["order"]),
            n_left=int(payload["n_left"]),
            retained=list(payload["retained"]),
            removal_trace=[(s["removed"], float(s["log_target"])) for s in payload["trace"]],
            limit_warning=payload.get("limit_warning"),
        )


def breaking_point_limit(d: int) -> int:
    """Smallest band count whose order-``d`` tensor is at least one third
    off-diagonal. Below it the selection usually degrades."""
    if not 3 <= d <= 6:
        raise UnsupportedOrderError(f"breaking-point limit defined for d in 3..6, got {d}")
    n = d
    # exact integer form of perm(n, d) / n**d >= 1/3
    while 3 * math.perm(n, d) < n**d:
        n += 1
    return n


def _logdet(mat: np.ndarray) -> float:
    """``log det`` of a symmetric matrix, ``-inf`` unless it factors as PD."""
    if mat.shape[0] == 0:
        return 0.0
    try:
        chol = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        return -math.inf
    diag = np.diagonal(chol)
    # a pivot at rounding level relative to its own diagonal entry means the
    # factorisation only succeeded by accident; the test is scale-free
    tol = 32.0 * mat.shape[0] * np.finfo(np.float64).eps
    if not np.all(diag**2 > tol * np.diagonal(mat)):
        return -math.inf
    return 2.0 * float(np.log(diag).sum())


def _covariance(c2: SymTensor, ridge: float, band_ids=None) -> np.ndarray:
    if c2.order != 2:
        raise ValidationError(f"expected an order-2 tensor, got order {c2.order}")
    cov = c2.to_dense()
    if ridge:
        cov = cov + ridge * np.eye(c2.dim)
    if math.isinf(_logdet(cov)):
        raise _singular(cov, band_ids)
    return cov


def _singular(cov: np.ndarray, band_ids=None) -> SingularCovarianceError:
    n = cov.shape[0]
    ids = list(range(1, n + 1)) if band_ids is None else list(band_ids)
    var = np.diagonal(cov)
    flat = np.flatnonzero(var <= 0)
    if flat.size:
        bad = [ids[i] for i in flat]
        return SingularCovarianceError(f"covariance is singular: zero variance in band(s) {bad}", bad)
    scale = np.sqrt(var)
    corr = cov / np.outer(scale, scale)
    np.fill_diagonal(corr, 0.0)
    i, j = np.unravel_index(np.argmax(np.abs(corr)), corr.shape)
    bad = [ids[min(i, j)], ids[max(i, j)]]
    return SingularCovarianceError(
        f"covariance is singular: bands {bad[0]} and {bad[1]} have correlation "
        f"{corr[i, j]:+.6f}; drop one or pass a ridge",
        bad,
    )


def dependency_matrix(cd: SymTensor) -> np.ndarray:
    """Gram matrix ``U U^T`` of the mode-1 unfolding ``U`` of ``cd``.

    Computed from the merged-column unfolding, which never materialises the
    ``n**(d-1)`` dense columns.
    """
    _, weights, u = compressed_unfolding(cd)
    return (u * weights) @ u.T


def log_target_f(c2: SymTensor, cd: SymTensor, d: int | None = None, ridge: float = 0.0) -> float:
    """Natural log of ``sqrt(det M_d) / det(C_2)**(d/2)``.

    Returns ``-inf`` when ``M_d`` is singular. For a single band this is the
    log of the absolute skewness (d=3) or absolute excess kurtosis (d=4).
    """
    d = cd.order if d is None else d
    if cd.order != d:
        raise ValidationError(f"tensor order {cd.order} does not match d={d}")
    if d < 3:
        raise ValidationError("log_target_f needs d >= 3; use log_target_mev for order 2")
    if c2.dim != cd.dim:
        raise ValidationError(f"dimension mismatch: C2 over {c2.dim} bands, C{d} over {cd.dim}")
    cov = _covariance(c2, ridge)
    return 0.5 * _logdet(dependency_matrix(cd)) - 0.5 * d * _logdet(cov)


def log_target_mev(c2: SymTensor, ridge: float = 0.0) -> float:
    """``log det(C_2 + ridge I)``; raises on a singular covariance."""
    return _logdet(_covariance(c2, ridge))


class _Scorer:
    """Candidate scoring state for one greedy run.

    Keeps the merged-column unfolding of ``C_d`` for the full band set and
    narrows the alive rows and columns as bands are removed, which equals
    fiber-cutting the tensor.
    """

    def __init__(self, cov: np.ndarray, cd: SymTensor | None):
        n = cov.shape[0]
        self.cov = cov
        self.order = 2 if cd is None else cd.order
        self.alive = list(range(n))
        if cd is not None:
            tails, weights, u = compressed_unfolding(cd)
            self.b = u * np.sqrt(weights)
            self.contains = np.zeros((n, len(tails)), dtype=bool)
            for k in range(tails.shape[1]):
                self.contains[tails[:, k], np.arange(len(tails))] = True
            self.cols = np.ones(len(tails), dtype=bool)

    def current(self) -> float:
        keep = self.alive
        lc = _logdet(self.cov[np.ix_(keep, keep)])
        if self.order == 2:
            return lc
        b = self.b[np.ix_(keep, np.flatnonzero(self.cols))]
        return 0.5 * _logdet(b @ b.T) - 0.5 * self.order * lc

    def scores(self) -> np.ndarray:
        alive = self.alive
        m = len(alive)
        out = np.empty(m)
        if self.order >= 3:
            cols = np.flatnonzero(self.cols)
            b_step = self.b[np.ix_(alive, cols)]
            contains = self.contains[np.ix_(alive, cols)]
        for i in range(m):
            keep = alive[:i] + alive[i + 1:]
            lc = _logdet(self.cov[np.ix_(keep, keep)])
            if math.isinf(lc):
                raise NumericalError(f"covariance minor without band position {alive[i] + 1} is singular")
            if self.order == 2:
                out[i] = lc
                continue
            rows = [k for k in range(m) if k != i]
            bi = b_step[np.ix_(rows, np.flatnonzero(~contains[i]))]
            out[i] = 0.5 * _logdet(bi @ bi.T) - 0.5 * self.order * lc
        out[np.isnan(out)] = -math.inf
        return out

    def remove(self, i: int) -> None:
        pos = self.alive.pop(i)
        if self.order >= 3:
            self.cols &= ~self.contains[pos]


def _prepare(c2: SymTensor, cd: SymTensor, order: int, ridge: float, band_ids):
    if order not in SUPPORTED_ORDERS:
        raise UnsupportedOrderError(f"selection order must be one of {SUPPORTED_ORDERS}, got {order}")
    if order >= 3:
        if cd is None or cd.order != order:
            got = None if cd is None else cd.order
            raise ValidationError(f"order-{order} selection needs an order-{order} tensor, got {got}")
        if cd.dim != c2.dim:
            raise ValidationError(f"dimension mismatch: C2 over {c2.dim} bands, C{order} over {cd.dim}")
    cov = _covariance(c2, ridge, band_ids)
    return _Scorer(cov, cd if order >= 3 else None)


def candidate_scores(c2: SymTensor, cd: SymTensor | None, order: int, ridge: float = 0.0) -> np.ndarray:
    """Log target after cutting each band position in turn (one greedy step)."""
    return _prepare(c2, cd, order, ridge, None).scores()


def select_bands(c2: SymTensor, cd: SymTensor | None, config: SelectionConfig, band_ids=None) -> SelectionResult:
    """Remove bands one at a time, each time the one whose removal leaves
    the highest target, until ``config.n_left`` remain.

    Exact score ties go to the lowest band id. ``cd`` is ignored (may be
    ``None``) for order 2.
    """
    n = c2.dim
    ids = list(range(1, n + 1)) if band_ids is None else list(band_ids)
    if len(ids) != n:
        raise ValidationError(f"{len(ids)} band ids for {n} bands")
    if config.n_left > n:
        raise ValidationError(f"n_left={config.n_left} exceeds the {n} available bands")
    scorer = _prepare(c2, cd, config.order, config.ridge, ids)
    trace = []
    for _ in range(n - config.n_left):
        scores = scorer.scores()
        best = scores.max()
        if best == -math.inf:
            raise DegenerateSelectionError(
                f"every candidate removal among {len(scorer.alive)} bands leaves a singular "
                f"dependency matrix",
                trace,
            )
        ties = np.flatnonzero(scores == best)
        i = min(ties, key=lambda k: ids[scorer.alive[k]])
        trace.append((ids[scorer.alive[i]], float(best)))
        scorer.remove(int(i))
    warning = None
    if config.warn_below_limit and config.order >= 3:
        limit = breaking_point_limit(config.order)
        if config.n_left < limit:
            warning = (
                f"n_left={config.n_left} is below the order-{config.order} breaking point "
                f"({limit}); detection performance may collapse"
            )
    return SelectionResult(
        order=config.order,
        n_left=config.n_left,
        retained=[ids[p] for p in scorer.alive],
        removal_trace=trace,
        limit_warning=warning,
    )


def reference_log_target(c2: SymTensor, cd: SymTensor | None, order: int, ridge: float = 0.0) -> float:
    """Log target of the full band set (no removal)."""
    return _prepare(c2, cd, order, ridge, None).current()

