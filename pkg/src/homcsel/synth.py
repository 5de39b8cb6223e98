"""Seeded synthetic scenes: Gaussian background, a few target pixels that
deviate only in chosen bands.

Randomness comes from numpy's Philox counter-based generator keyed by the
scene seed, drawn in a fixed order (background, target placement, target
deviations), so a seed pins the scene.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .detection import Signature
from .errors import NumericalError, ValidationError
from .evaluation import GroundTruthMask
from .ingest import HsiCube, LibrarySpectrum, write_cube, write_mask, write_spectrum

__all__ = ["SceneSpec", "TARGET_MODELS", "generate", "write_scene"]

TARGET_MODELS = ("mean-shift", "skewed", "heavy-tail")

# E|T| for Student's t with 3 degrees of freedom
_ABS_T3_MEAN = 2.0 * math.sqrt(3.0) / math.pi


@dataclass
class SceneSpec:
    p_x: int = 100
    p_y: int = 100
    n_bands: int = 30
    seed: int = 0
    background_level: float = 0.3
    background_sd: float = 0.01
    informative_sd: float | None = 0.002
    correlation: float = 0.0
    n_targets: int = 25
    informative_bands: list = field(default_factory=lambda: [6, 12, 18, 24, 30])
    target_model: str = "skewed"
    contrast: float = 6.0
    wavelength_range: tuple = (400.0, 2500.0)

    def __post_init__(self):
        self.informative_bands = [int(b) for b in self.informative_bands]
        self.wavelength_range = tuple(float(w) for w in self.wavelength_range)
        if self.p_x < 1 or self.p_y < 1 or self.n_bands < 1:
            raise ValidationError("scene dimensions must be positive")
        if self.n_targets < 0 or self.n_targets >= 0.05 * self.p_x * self.p_y:
            raise ValidationError(
                f"{self.n_targets} targets is not a small-target scene "
                f"(need fewer than 5% of {self.p_x * self.p_y} pixels)"
            )
        bad = [b for b in self.informative_bands if not 1 <= b <= self.n_bands]
        if bad:
            raise ValidationError(f"informative band(s) {bad} outside [1, {self.n_bands}]")
        if self.target_model not in TARGET_MODELS:
            raise ValidationError(f"target model must be one of {TARGET_MODELS}, got {self.target_model!r}")
        lo, hi = self.wavelength_range
        if not hi > lo:
            raise ValidationError("wavelength range must be increasing")

    @classmethod
    def from_dict(cls, payload: dict) -> "SceneSpec":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(payload) - known)
        if unknown:
            raise ValidationError(f"unknown scene spec key(s) {unknown}")
        return cls(**payload)

    @classmethod
    def from_json(cls, path) -> "SceneSpec":
        try:
            payload = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"scene spec {path} is not valid JSON: {exc}") from None
        return cls.from_dict(payload)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["wavelength_range"] = list(self.wavelength_range)
        return out

    def band_sd(self) -> np.ndarray:
        sd = np.full(self.n_bands, float(self.background_sd))
        if self.informative_sd is not None:
            sd[np.array(self.informative_bands) - 1] = float(self.informative_sd)
        return sd

    def mean_spectrum(self) -> np.ndarray:
        u = np.linspace(0.0, 1.0, self.n_bands)
        return self.background_level * (1.0 + 0.3 * np.sin(2.0 * np.pi * u) + 0.2 * u)

    def wavelengths(self) -> np.ndarray:
        return np.linspace(*self.wavelength_range, self.n_bands)


def _background_factor(spec: SceneSpec) -> np.ndarray:
    sd = spec.band_sd()
    rho = spec.correlation
    if np.any(sd <= 0) or not -1.0 < rho < 1.0:
        raise NumericalError("background covariance is degenerate (need sd > 0 and |rho| < 1)")
    lag = np.abs(np.subtract.outer(np.arange(spec.n_bands), np.arange(spec.n_bands)))
    cov = np.outer(sd, sd) * rho**lag
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise NumericalError("background covariance is not positive definite") from None


def generate(spec: SceneSpec):
    """Build ``(cube, mask, signature)`` for ``spec``.

    The signature is the expected target spectrum: background mean plus the
    mean deviation of the target model.
    """
    rng = np.random.Generator(np.random.Philox(spec.seed))
    t = spec.p_x * spec.p_y
    n = spec.n_bands
    chol = _background_factor(spec)
    mean = spec.mean_spectrum()
    pixels = mean + rng.standard_normal((t, n)) @ chol.T

    where = np.sort(rng.permutation(t)[: spec.n_targets])
    inf = np.array(spec.informative_bands) - 1
    # alternating signs, so the target differs from the background in shape and not only brightness
    sign = np.where(np.arange(len(inf)) % 2 == 0, 1.0, -1.0)
    scale = sign * spec.contrast * spec.band_sd()[inf]
    k = len(where)
    if spec.target_model == "mean-shift":
        dev = np.ones((k, len(inf)))
    elif spec.target_model == "skewed":
        dev = 0.8 + 0.2 * rng.standard_exponential((k, len(inf)))
    else:
        dev = 0.8 + 0.2 * np.abs(rng.standard_t(3, (k, len(inf)))) / _ABS_T3_MEAN
    pixels[np.ix_(where, inf)] += dev * scale

    labels = np.zeros(t, dtype=bool)
    labels[where] = True
    shape = (spec.p_x, spec.p_y)
    cube = HsiCube(pixels.reshape(spec.p_x, spec.p_y, n, order="F"), None, spec.wavelengths())
    mask = GroundTruthMask(labels.reshape(shape, order="F"))
    sig_values = mean.copy()
    sig_values[inf] += scale
    signature = Signature(sig_values, cube.band_ids, f"synthetic-{spec.target_model}")
    return cube, mask, signature


def write_scene(spec: SceneSpec, out_dir) -> dict:
    """Write cube, mask and spectrum in the formats ``ingest`` reads."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cube, mask, signature = generate(spec)
    cube_path = out_dir / "cube.bsq"
    header = write_cube(cube, cube_path)
    mask_path = out_dir / "mask.pgm"
    write_mask(mask, mask_path)
    spectrum_path = out_dir / "spectrum.csv"
    write_spectrum(LibrarySpectrum(cube.wavelengths, signature.values, signature.name), spectrum_path)
    spec_path = out_dir / "scene.json"
    spec_path.write_text(json.dumps(spec.to_dict(), indent=2) + "\n")
    return {
        "cube": cube_path,
        "header": header,
        "mask": mask_path,
        "spectrum": spectrum_path,
        "spec": spec_path,
    }
