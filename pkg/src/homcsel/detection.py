"""Spectral Angle Mapper scoring and thresholding."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cumulants import DataMatrix
from .errors import AlignmentError, InputError, UndefinedAngleError, ValidationError

__all__ = [
    "ScoreMap",
    "Signature",
    "detect_map",
    "read_scores",
    "sam_angle",
    "sam_angles",
    "threshold",
]


@dataclass(frozen=True)
class Signature:
    values: np.ndarray
    band_ids: tuple
    name: str = "target"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or len(values) != len(self.band_ids):
            raise ValidationError(f"{len(values)} signature values for {len(self.band_ids)} band ids")
        if not np.any(values):
            raise UndefinedAngleError("signature is the zero vector")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "band_ids", tuple(self.band_ids))

    def restrict(self, band_ids) -> "Signature":
        pos = {b: i for i, b in enumerate(self.band_ids)}
        missing = [b for b in band_ids if b not in pos]
        if missing:
            raise AlignmentError(f"signature lacks band(s) {missing}")
        return Signature(self.values[[pos[b] for b in band_ids]], tuple(band_ids), self.name)


@dataclass
class ScoreMap:
    """Per-pixel SAM angles on the ``(width, height)`` scene grid."""

    angles: np.ndarray
    flagged: np.ndarray = field(default=None)

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=np.float64)
        if self.angles.ndim != 2:
            raise ValidationError("score map must be 2-D (width, height)")
        if self.flagged is None:
            self.flagged = np.zeros(self.angles.shape, dtype=bool)

    @property
    def width(self) -> int:
        return self.angles.shape[0]

    @property
    def height(self) -> int:
        return self.angles.shape[1]

    @property
    def shape(self) -> tuple:
        return self.angles.shape

    def flat(self) -> np.ndarray:
        """Angles in realisation order (x varies fastest)."""
        return self.angles.reshape(-1, order="F")

    def write_csv(self, path) -> None:
        xs, ys = np.meshgrid(np.arange(self.width), np.arange(self.height), indexing="ij")
        with open(path, "w") as fh:
            fh.write("x,y,angle\n")
            for x, y, a in zip(xs.ravel(order="F"), ys.ravel(order="F"), self.flat()):
                fh.write(f"{x},{y},{float(a)!r}\n")

    def write_grid(self, path) -> Path:
        """Little-endian float32, ``height`` rows of ``width`` values, plus a
        ``<path>.txt`` sidecar holding ``width height``."""
        path = Path(path)
        self.angles.T.astype("<f4").tofile(path)
        sidecar = path.with_name(path.name + ".txt")
        sidecar.write_text(f"{self.width} {self.height}\n")
        return sidecar


def read_scores(path) -> ScoreMap:
    """Load a score map from its CSV export or its raw float32 grid."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"score file not found: {path}")
    if path.suffix.lower() == ".csv":
        try:
            rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        except ValueError as exc:
            raise InputError(f"malformed score CSV {path}: {exc}") from None
        xs = rows[:, 0].astype(int)
        ys = rows[:, 1].astype(int)
        angles = np.full((xs.max() + 1, ys.max() + 1), np.nan)
        angles[xs, ys] = rows[:, 2]
        if np.isnan(angles).any():
            raise InputError(f"score CSV {path} does not cover a full grid")
        return ScoreMap(angles)
    sidecar = path.with_name(path.name + ".txt")
    if not sidecar.exists():
        raise InputError(f"raw score grid {path} needs its sidecar {sidecar}")
    try:
        width, height = (int(v) for v in sidecar.read_text().split())
    except ValueError:
        raise InputError(f"sidecar {sidecar} must hold 'width height'") from None
    raw = np.fromfile(path, dtype="<f4")
    if raw.size != width * height:
        raise InputError(f"raw score grid holds {raw.size} values, sidecar says {width}x{height}")
    return ScoreMap(raw.reshape(height, width).T.astype(np.float64))


def sam_angle(pixel, sig) -> float:
    """Angle in radians between a spectrum and a signature."""
    x = np.asarray(pixel, dtype=np.float64)
    s = np.asarray(sig.values if isinstance(sig, Signature) else sig, dtype=np.float64)
    if x.shape != s.shape:
        raise ValidationError(f"pixel has {x.size} bands, signature {s.size}")
    nx, ns = np.linalg.norm(x), np.linalg.norm(s)
    if nx == 0 or ns == 0:
        raise UndefinedAngleError("SAM angle undefined for a zero vector")
    return math.acos(min(1.0, max(-1.0, float(x @ s) / (nx * ns))))


def sam_angles(values, sig):
    """Vectorised SAM over the rows of ``values``.

    Returns ``(angles, flagged)``; zero-norm rows get angle pi and are flagged.
    """
    x = np.asarray(values, dtype=np.float64)
    s = np.asarray(sig.values if isinstance(sig, Signature) else sig, dtype=np.float64)
    ns = np.linalg.norm(s)
    if ns == 0:
        raise UndefinedAngleError("SAM angle undefined for a zero signature")
    nx = np.linalg.norm(x, axis=1)
    flagged = nx == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = (x @ s) / (nx * ns)
    angles = np.arccos(np.clip(cos, -1.0, 1.0))
    angles[flagged] = math.pi
    return angles, flagged


def detect_map(data: DataMatrix, sig: Signature, shape=None) -> ScoreMap:
    """Score every pixel of ``data`` against ``sig`` and fold to the grid.

    ``sig`` must cover exactly ``data``'s bands in the same order.
    """
    if tuple(sig.band_ids) != tuple(data.band_ids):
        only_data = sorted(set(data.band_ids) - set(sig.band_ids))
        only_sig = sorted(set(sig.band_ids) - set(data.band_ids))
        detail = f"only in data: {only_data}, only in signature: {only_sig}"
        if not only_data and not only_sig:
            detail = "same bands in a different order"
        raise AlignmentError(f"signature and data bands differ ({detail})")
    shape = data.shape if shape is None else tuple(shape)
    if shape is None:
        shape = (data.t, 1)
    if shape[0] * shape[1] != data.t:
        raise ValidationError(f"grid {shape} does not hold {data.t} pixels")
    angles, flagged = sam_angles(data.values, sig)
    return ScoreMap(angles.reshape(shape, order="F"), flagged.reshape(shape, order="F"))


def threshold(scores: ScoreMap, tau: float) -> np.ndarray:
    """Target mask: angle at most ``tau``."""
    if not 0.0 <= tau <= math.pi:
        raise ValidationError(f"threshold must lie in [0, pi], got {tau}")
    return scores.angles <= tau
