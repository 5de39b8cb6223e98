"""Reading and writing cubes, masks and spectra; cube unfolding and band
bookkeeping.

Cubes use a subset of the ENVI raw+header convention. Only ``samples``,
``lines``, ``bands``, ``interleave``, ``data type``, ``byte order``,
``header offset``, ``wavelength`` and ``wavelength units`` are honoured;
other keys are kept in ``HsiCube.header_notes`` and otherwise ignored.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cumulants import DataMatrix
from .detection import Signature
from .errors import ExtrapolationError, InputError, ValidationError
from .evaluation import GroundTruthMask

__all__ = [
    "CUPRITE_REMOVED_BANDS",
    "HsiCube",
    "LibrarySpectrum",
    "cuprite_preset",
    "fold",
    "load_cube",
    "load_mask",
    "load_spectrum",
    "read_header",
    "resample_signature",
    "subset_bands",
    "unfold_cube",
    "write_cube",
    "write_mask",
    "write_spectrum",
]

ENVI_DTYPES = {4: "f4", 2: "i2"}
_KNOWN_KEYS = {
    "samples",
    "lines",
    "bands",
    "interleave",
    "data type",
    "byte order",
    "header offset",
    "wavelength",
    "wavelength units",
}

# noisy and water-absorption channels of the 224-band AVIRIS product
CUPRITE_REMOVED_BANDS = (
    tuple(range(1, 4)) + tuple(range(104, 114)) + tuple(range(148, 168)) + tuple(range(221, 225))
)


@dataclass
class HsiCube:
    """Reflectance cube in band-last layout, ``values[x, y, band]``."""

    values: np.ndarray
    band_ids: tuple = None
    wavelengths: np.ndarray | None = None
    header_notes: list = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ValidationError(f"cube must be 3-D (p_x, p_y, n), got shape {self.values.shape}")
        n = self.values.shape[2]
        self.band_ids = tuple(range(1, n + 1)) if self.band_ids is None else tuple(self.band_ids)
        if len(self.band_ids) != n:
            raise ValidationError(f"{len(self.band_ids)} band ids for {n} bands")
        if self.wavelengths is not None:
            self.wavelengths = np.asarray(self.wavelengths, dtype=np.float64)
            if self.wavelengths.shape != (n,):
                raise ValidationError(f"{len(self.wavelengths)} wavelengths for {n} bands")
            if np.any(np.diff(self.wavelengths) <= 0):
                raise ValidationError("wavelengths must be strictly increasing")

    @property
    def p_x(self) -> int:
        return self.values.shape[0]

    @property
    def p_y(self) -> int:
        return self.values.shape[1]

    @property
    def n(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class LibrarySpectrum:
    wavelengths: np.ndarray
    reflectance: np.ndarray
    name: str = "spectrum"

    def __post_init__(self):
        wl = np.asarray(self.wavelengths, dtype=np.float64)
        rf = np.asarray(self.reflectance, dtype=np.float64)
        if wl.shape != rf.shape or wl.ndim != 1:
            raise ValidationError("spectrum needs matching 1-D wavelength and reflectance arrays")
        if len(wl) < 2:
            raise ValidationError("spectrum needs at least 2 samples")
        if np.any(np.diff(wl) <= 0):
            raise ValidationError("spectrum wavelengths must be strictly increasing")
        object.__setattr__(self, "wavelengths", wl)
        object.__setattr__(self, "reflectance", rf)


def read_header(path) -> dict:
    """Parse ``key = value`` pairs, including brace-delimited multi-line values."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read header {path}: {exc}") from None
    if not text.lstrip().upper().startswith("ENVI"):
        raise InputError(f"malformed header {path}: first line must be 'ENVI'")
    out = {}
    body = text.lstrip()[4:]
    for match in re.finditer(r"^\s*([^=\n]+?)\s*=\s*(\{[^}]*\}|[^\n]*)", body, flags=re.M):
        key = match.group(1).strip().lower()
        value = match.group(2).strip()
        if value.startswith("{"):
            value = value[1:-1].strip()
        out[key] = value
    return out


def _int_field(header, key, path, default=None):
    if key not in header:
        if default is not None:
            return default
        raise InputError(f"malformed header {path}: missing '{key}'")
    try:
        return int(header[key])
    except ValueError:
        raise InputError(f"malformed header {path}: '{key}' = {header[key]!r} is not an integer") from None


def _default_header_path(path: Path) -> Path:
    for cand in (path.with_name(path.name + ".hdr"), path.with_suffix(".hdr")):
        if cand.exists():
            return cand
    return path.with_suffix(".hdr")


def load_cube(path, header_path=None) -> HsiCube:
    """Load a BSQ/BIL/BIP raw cube into the canonical ``(x, y, band)`` layout.

    ``samples`` counts pixels along x, ``lines`` along y.
    """
    path = Path(path)
    header_path = _default_header_path(path) if header_path is None else Path(header_path)
    header = read_header(header_path)
    samples = _int_field(header, "samples", header_path)
    lines = _int_field(header, "lines", header_path)
    bands = _int_field(header, "bands", header_path)
    code = _int_field(header, "data type", header_path)
    order = _int_field(header, "byte order", header_path)
    offset = _int_field(header, "header offset", header_path, default=0)
    interleave = header.get("interleave", "").strip().lower()
    if interleave not in ("bsq", "bil", "bip"):
        raise InputError(f"malformed header {header_path}: interleave {interleave!r} not bsq/bil/bip")
    if code not in ENVI_DTYPES:
        raise InputError(f"unsupported data type {code} (supported: 4 = float32, 2 = int16)")
    if order not in (0, 1):
        raise InputError(f"malformed header {header_path}: byte order must be 0 or 1")
    dtype = np.dtype(("<" if order == 0 else ">") + ENVI_DTYPES[code])
    count = samples * lines * bands
    try:
        size = path.stat().st_size
    except OSError as exc:
        raise InputError(f"cannot read cube {path}: {exc}") from None
    expected = offset + count * dtype.itemsize
    if size != expected:
        raise InputError(f"size mismatch: {path} has {size} bytes, header implies {expected}")
    raw = np.fromfile(path, dtype=dtype, count=count, offset=offset)
    if interleave == "bsq":
        values = raw.reshape(bands, lines, samples).transpose(2, 1, 0)
    elif interleave == "bil":
        values = raw.reshape(lines, bands, samples).transpose(2, 0, 1)
    else:
        values = raw.reshape(lines, samples, bands).transpose(1, 0, 2)
    wavelengths = None
    if "wavelength" in header:
        try:
            wavelengths = np.array([float(v) for v in header["wavelength"].split(",") if v.strip()])
        except ValueError:
            raise InputError(f"malformed header {header_path}: non-numeric wavelength list") from None
        if len(wavelengths) != bands:
            raise InputError(f"malformed header {header_path}: {len(wavelengths)} wavelengths for {bands} bands")
        units = header.get("wavelength units", "nanometers").strip().lower()
        if units.startswith("micro") or units in ("um", "µm"):
            wavelengths = wavelengths * 1000.0
    notes = [f"ignored header key '{k}'" for k in header if k not in _KNOWN_KEYS]
    return HsiCube(np.ascontiguousarray(values, dtype=np.float64), None, wavelengths, notes)


def write_cube(cube: HsiCube, path, interleave="bsq", data_type=4, byte_order=0) -> Path:
    """Write ``cube`` as raw data plus ``<path>.hdr``; returns the header path."""
    path = Path(path)
    interleave = interleave.lower()
    if data_type not in ENVI_DTYPES:
        raise ValidationError(f"unsupported data type {data_type}")
    dtype = np.dtype(("<" if byte_order == 0 else ">") + ENVI_DTYPES[data_type])
    v = cube.values
    if interleave == "bsq":
        raw = v.transpose(2, 1, 0)
    elif interleave == "bil":
        raw = v.transpose(1, 2, 0)
    elif interleave == "bip":
        raw = v.transpose(1, 0, 2)
    else:
        raise ValidationError(f"interleave must be bsq, bil or bip, got {interleave!r}")
    np.ascontiguousarray(raw).astype(dtype).tofile(path)
    lines = [
        "ENVI",
        f"samples = {cube.p_x}",
        f"lines = {cube.p_y}",
        f"bands = {cube.n}",
        "header offset = 0",
        f"data type = {data_type}",
        f"interleave = {interleave}",
        f"byte order = {byte_order}",
    ]
    if cube.wavelengths is not None:
        lines.append("wavelength units = nanometers")
        lines.append("wavelength = {" + ", ".join(repr(float(w)) for w in cube.wavelengths) + "}")
    header = path.with_name(path.name + ".hdr")
    header.write_text("\n".join(lines) + "\n")
    return header


def unfold_cube(cube: HsiCube) -> DataMatrix:
    """Pixels as rows, bands as columns; row ``x + p_x * y`` is pixel ``(x, y)``."""
    t = cube.p_x * cube.p_y
    values = cube.values.reshape(t, cube.n, order="F")
    return DataMatrix(values, cube.band_ids, cube.wavelengths, (cube.p_x, cube.p_y))


def fold(data: DataMatrix, shape=None) -> HsiCube:
    shape = data.shape if shape is None else tuple(shape)
    if shape is None:
        raise ValidationError("no scene shape recorded; pass one explicitly")
    values = np.asarray(data.values).reshape(shape[0], shape[1], data.n, order="F")
    return HsiCube(values.copy(), data.band_ids, data.wavelengths)


def subset_bands(data: DataMatrix, keep) -> DataMatrix:
    """Keep the columns whose band id is in ``keep``, in their current order."""
    keep = list(keep)
    if not keep:
        raise ValidationError("band subset is empty")
    known = set(data.band_ids)
    unknown = [b for b in keep if b not in known]
    if unknown:
        raise ValidationError(f"unknown band id(s) {unknown}")
    wanted = set(keep)
    return data.columns([i for i, b in enumerate(data.band_ids) if b in wanted])


def cuprite_preset(band_ids=tuple(range(1, 225)), last=50) -> list:
    """Band ids left after dropping the noisy and water-absorption channels,
    then keeping the last ``last`` of those that remain."""
    remaining = [b for b in band_ids if b not in set(CUPRITE_REMOVED_BANDS)]
    return remaining[-last:]


def _read_pgm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    tokens = []
    pos = 0
    # magic, width, height, maxval; '#' starts a comment up to end of line
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise InputError(f"malformed PGM {path}: truncated header")
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    magic = tokens[0]
    try:
        width, height, maxval = (int(tok) for tok in tokens[1:])
    except ValueError:
        raise InputError(f"malformed PGM {path}: bad header fields") from None
    if magic == b"P5":
        pos += 1
        dtype = ">u2" if maxval > 255 else "u1"
        raster = np.frombuffer(data[pos:], dtype=dtype)
        if raster.size < width * height:
            raise InputError(f"malformed PGM {path}: raster shorter than {width}x{height}")
        raster = raster[: width * height]
    elif magic == b"P2":
        try:
            raster = np.array(data[pos:].split(), dtype=np.int64)
        except ValueError:
            raise InputError(f"malformed PGM {path}: non-integer raster value") from None
        if raster.size != width * height:
            raise InputError(f"malformed PGM {path}: {raster.size} values for {width}x{height}")
    else:
        raise InputError(f"malformed PGM {path}: magic {magic!r} is neither P2 nor P5")
    return raster.reshape(height, width).astype(np.int64)


def _read_mask_csv(path: Path) -> np.ndarray:
    rows = []
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rows.append([int(float(v)) for v in line.split(",")])
        except ValueError:
            raise InputError(f"malformed mask CSV {path}: {line!r}") from None
    if not rows or len({len(r) for r in rows}) != 1:
        raise InputError(f"malformed mask CSV {path}: ragged or empty")
    return np.array(rows, dtype=np.int64)


def load_mask(path, expected_shape=None, ignore_codes=(2,), target_codes=None) -> GroundTruthMask:
    """Load a ground-truth map from PGM (P2/P5) or CSV.

    Raster rows run along y. Code 0 is background and, by default, 2 marks
    ignored pixels; every other nonzero code not listed in
    ``ignore_codes`` is a target; ``target_codes`` narrows that set.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"mask file not found: {path}")
    if path.suffix.lower() == ".csv":
        raster = _read_mask_csv(path)
    else:
        raster = _read_pgm(path)
    codes = raster.T
    ignore = np.isin(codes, list(ignore_codes))
    if target_codes is None:
        labels = (codes != 0) & ~ignore
    else:
        labels = np.isin(codes, list(target_codes)) & ~ignore
    if expected_shape is not None and tuple(expected_shape) != codes.shape:
        raise InputError(f"mask {path} is {codes.shape[0]}x{codes.shape[1]}, expected {tuple(expected_shape)}")
    return GroundTruthMask(labels, ignore)


def write_mask(mask: GroundTruthMask, path, ignore_code=2) -> None:
    """Write a mask as binary PGM (``.pgm``) or CSV (anything else); targets
    are 1, background 0, ignored pixels ``ignore_code``."""
    path = Path(path)
    codes = mask.labels.astype(np.uint8)
    codes[mask.ignore] = ignore_code
    raster = codes.T
    if path.suffix.lower() == ".pgm":
        head = f"P5\n{mask.width} {mask.height}\n255\n".encode()
        path.write_bytes(head + np.ascontiguousarray(raster).tobytes())
    else:
        with open(path, "w") as fh:
            for row in raster:
                fh.write(",".join(str(int(v)) for v in row) + "\n")


def load_spectrum(path, name=None) -> LibrarySpectrum:
    """Two-column CSV ``wavelength_nm, reflectance``; ``#`` lines are comments
    and a non-numeric first row is taken as a header."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"spectrum file not found: {path}")
    wl, rf = [], []
    for k, line in enumerate(path.read_text().splitlines()):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p for p in re.split(r"[,\s]+", line) if p]
        try:
            w, r = float(parts[0]), float(parts[1])
        except (ValueError, IndexError):
            if not wl:
                continue
            raise InputError(f"malformed spectrum {path} line {k + 1}: {line!r}") from None
        wl.append(w)
        rf.append(r)
    try:
        return LibrarySpectrum(np.array(wl), np.array(rf), name or path.stem)
    except ValidationError as exc:
        raise InputError(f"malformed spectrum {path}: {exc}") from None


def write_spectrum(spec: LibrarySpectrum, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# {spec.name}\n")
        fh.write("wavelength_nm,reflectance\n")
        for w, r in zip(spec.wavelengths, spec.reflectance):
            fh.write(f"{float(w)!r},{float(r)!r}\n")


def resample_signature(spec: LibrarySpectrum, wavelengths, band_ids=None) -> Signature:
    """Linearly interpolate ``spec`` at band centres; never extrapolates."""
    wavelengths = np.asarray(wavelengths, dtype=np.float64)
    lo, hi = spec.wavelengths[0], spec.wavelengths[-1]
    outside = wavelengths[(wavelengths < lo) | (wavelengths > hi)]
    if outside.size:
        raise ExtrapolationError(
            f"band centre(s) {outside.tolist()} nm outside the spectrum range [{lo}, {hi}] nm"
        )
    values = np.interp(wavelengths, spec.wavelengths, spec.reflectance)
    if band_ids is None:
        band_ids = tuple(range(1, len(wavelengths) + 1))
    return Signature(values, tuple(band_ids), spec.name)
