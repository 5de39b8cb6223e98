"""Command-line entry point: ``homcsel <command> [options]``.

Every option may also be given in a JSON file passed with ``--config``; keys
match the option names (dashes or underscores). Command-line flags win over
the file. Each run writes ``manifest.json`` next to its outputs.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .cumulants import cumulants
from .detection import detect_map, read_scores
from .errors import DegenerateSelectionError, HomcError, InputError, ValidationError
from .evaluation import roc
from .ingest import cuprite_preset, load_cube, load_mask, load_spectrum, resample_signature, subset_bands, unfold_cube
from .selection import (
    SelectionConfig,
    SelectionResult,
    breaking_point_limit,
    reference_log_target,
    select_bands,
)
from .symtensor import off_diag_ratio
from .synth import SceneSpec, write_scene

log = logging.getLogger("homcsel")

DEFAULTS = {
    "select": {"header": None, "mask": None, "ridge": 0.0, "preset": "none", "bands": None, "ignore_codes": [2]},
    "detect": {"header": None},
    "eval": {"ignore_codes": [2]},
    "sweep": {
        "header": None,
        "orders": [2, 3, 4, 5],
        "n_left_min": 3,
        "n_left_max": None,
        "ridge": 0.0,
        "preset": "none",
        "bands": None,
        "ignore_codes": [2],
    },
    "synth": {"spec": None},
    "diag-offdiag": {"d_min": 2, "d_max": 6, "n_min": 1, "n_max": 30},
}
COMMON = {"out": None, "seed": 0, "workers": 1, "config": None}
REQUIRED = {
    "select": ("cube", "order", "n_left", "out"),
    "detect": ("cube", "bands_file", "spectrum", "out"),
    "eval": ("scores", "mask", "out"),
    "sweep": ("cube", "mask", "spectrum", "out"),
    "synth": ("out",),
    "diag-offdiag": (),
}


def _int_list(text):
    if isinstance(text, list):
        return [int(v) for v in text]
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="homcsel", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text, argument_default=S)
        p.add_argument("--out", help="output directory (diag-offdiag: optional CSV path)")
        p.add_argument("--config", help="JSON file with option values")
        p.add_argument("--seed", type=int, help="random seed recorded in (and for synth, driving) the run")
        p.add_argument("--workers", type=int, help="concurrent sweep cells")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    def cube_args(p):
        p.add_argument("--cube", help="raw cube file")
        p.add_argument("--header", help="header file (default: <cube>.hdr)")

    p = command("select", "greedy band selection")
    cube_args(p)
    p.add_argument("--mask", help="optional mask; its ignored pixels are left out of estimation")
    p.add_argument("--ignore-codes", type=_int_list)
    p.add_argument("--order", type=int, help="2 (MEV), 3, 4 or 5")
    p.add_argument("--n-left", type=int)
    p.add_argument("--ridge", type=float)
    p.add_argument("--preset", choices=["none", "cuprite"])
    p.add_argument("--bands", type=_int_list, help="band ids to start from, e.g. 5-40,44")

    p = command("detect", "SAM detection on selected bands")
    cube_args(p)
    p.add_argument("--bands-file", help="selection.json from 'select'")
    p.add_argument("--spectrum", help="two-column CSV reference spectrum")

    p = command("eval", "ROC / AUC of a score map")
    p.add_argument("--scores", help="scores.csv or scores.f32")
    p.add_argument("--mask")
    p.add_argument("--ignore-codes", type=_int_list)

    p = command("sweep", "AUC over (order, n_left)")
    cube_args(p)
    p.add_argument("--mask")
    p.add_argument("--ignore-codes", type=_int_list)
    p.add_argument("--spectrum")
    p.add_argument("--orders", type=_int_list)
    p.add_argument("--n-left-min", type=int)
    p.add_argument("--n-left-max", type=int)
    p.add_argument("--ridge", type=float)
    p.add_argument("--preset", choices=["none", "cuprite"])
    p.add_argument("--bands", type=_int_list)

    p = command("synth", "generate a synthetic scene")
    p.add_argument("--spec", help="SceneSpec JSON (default: built-in scene)")

    p = command("diag-offdiag", "off-diagonal fraction table")
    p.add_argument("--d-min", type=int)
    p.add_argument("--d-max", type=int)
    p.add_argument("--n-min", type=int)
    p.add_argument("--n-max", type=int)
    return parser


def resolve(command: str, flags: dict) -> dict:
    params = dict(COMMON)
    params.update(DEFAULTS[command])
    if flags.get("config"):
        path = Path(flags["config"])
        try:
            payload = json.loads(path.read_text())
        except OSError as exc:
            raise InputError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config {path} is not valid JSON: {exc}") from None
        params.update({k.replace("-", "_"): v for k, v in payload.items()})
    params.update(flags)
    for key in ("orders", "bands", "ignore_codes"):
        if params.get(key) is not None:
            params[key] = _int_list(params[key])
    missing = [k for k in REQUIRED[command] if params.get(k) is None]
    if missing:
        raise ValidationError(f"{command}: missing required option(s) {', '.join('--' + m.replace('_', '-') for m in missing)}")
    return params


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _manifest(out_dir: Path, command, params, inputs, outputs, started):
    manifest = {
        "command": command,
        "parameters": {k: v for k, v in params.items() if not k.startswith("_")},
        "inputs": {str(p): _digest(p) for p in inputs if p is not None and Path(p).exists()},
        "outputs": [str(p) for p in outputs],
        "version": __version__,
        "kernel_backend": _kernels.backend(),
        "seed": params.get("seed"),
        "duration_s": round(time.perf_counter() - started, 6),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    return path


def _out_dir(params) -> Path:
    out = Path(params["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _header_path(params):
    if params.get("header"):
        return Path(params["header"])
    cube = Path(params["cube"])
    cand = cube.with_name(cube.name + ".hdr")
    return cand if cand.exists() else cube.with_suffix(".hdr")


def _load_data(params):
    cube = load_cube(params["cube"], _header_path(params))
    for note in cube.header_notes:
        log.debug(note)
    data = unfold_cube(cube)
    keep = None
    if params.get("preset") == "cuprite":
        keep = cuprite_preset(data.band_ids)
    if params.get("bands"):
        keep = [b for b in (keep or data.band_ids) if b in set(params["bands"])]
    if keep is not None:
        data = subset_bands(data, keep)
    return data


def _estimation_rows(data, params):
    """Pixels used for estimation: all, minus the mask's ignore set."""
    if not params.get("mask"):
        return data.values
    mask = load_mask(params["mask"], expected_shape=data.shape, ignore_codes=params.get("ignore_codes", [2]))
    keep = ~mask.ignore.reshape(-1, order="F")
    return data.values[keep]


def _signature_for(data, spectrum_path):
    if data.wavelengths is None:
        raise ValidationError("cube header has no wavelength table; add 'wavelength = {...}' to the header")
    spectrum = load_spectrum(spectrum_path)
    return resample_signature(spectrum, data.wavelengths, data.band_ids)


def cmd_select(params) -> int:
    started = time.perf_counter()
    out = _out_dir(params)
    config = SelectionConfig(params["order"], params["n_left"], float(params["ridge"]))
    data = _load_data(params)
    orders = (2,) if config.order == 2 else (2, config.order)
    cs = cumulants(_estimation_rows(data, params), orders)
    for w in cs.warnings:
        log.warning(w)
    result = select_bands(cs[2], cs.tensors.get(config.order) if config.order > 2 else None, config, data.band_ids)
    if result.limit_warning:
        print(f"warning: {result.limit_warning}", file=sys.stderr)
    path = out / "selection.json"
    path.write_text(result.to_json(indent=2) + "\n")
    inputs = [params["cube"], _header_path(params), params.get("mask"), params.get("config")]
    _manifest(out, "select", params, inputs, [path], started)
    print(f"retained bands: {result.retained}")
    return 0


def _detect(data, result_bands, signature):
    sub = subset_bands(data, result_bands)
    return detect_map(sub, signature.restrict(sub.band_ids))


def cmd_detect(params) -> int:
    started = time.perf_counter()
    out = _out_dir(params)
    data = _load_data(params)
    try:
        selection = SelectionResult.from_dict(json.loads(Path(params["bands_file"]).read_text()))
    except OSError as exc:
        raise InputError(f"cannot read bands file: {exc}") from None
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise InputError(f"malformed bands file {params['bands_file']}: {exc}") from None
    signature = _signature_for(data, params["spectrum"])
    scores = _detect(data, selection.retained, signature)
    csv_path = out / "scores.csv"
    grid_path = out / "scores.f32"
    scores.write_csv(csv_path)
    sidecar = scores.write_grid(grid_path)
    inputs = [params["cube"], _header_path(params), params["bands_file"], params["spectrum"], params.get("config")]
    _manifest(out, "detect", params, inputs, [csv_path, grid_path, sidecar], started)
    return 0


def cmd_eval(params) -> int:
    started = time.perf_counter()
    out = _out_dir(params)
    scores = read_scores(params["scores"])
    mask = load_mask(params["mask"], expected_shape=scores.shape, ignore_codes=params.get("ignore_codes", [2]))
    curve = roc(scores, mask)
    roc_path = out / "roc.csv"
    auc_path = out / "auc.json"
    curve.write_csv(roc_path)
    curve.write_summary(auc_path)
    _manifest(out, "eval", params, [params["scores"], params["mask"], params.get("config")], [roc_path, auc_path], started)
    print(f"auc: {curve.auc:.6f}")
    return 0


def _retained_at(band_ids, trace, k):
    gone = {b for b, _ in trace[: len(band_ids) - k]}
    return [b for b in band_ids if b not in gone]


def cmd_sweep(params) -> int:
    started = time.perf_counter()
    out = _out_dir(params)
    data = _load_data(params)
    mask = load_mask(params["mask"], expected_shape=data.shape, ignore_codes=params.get("ignore_codes", [2]))
    signature = _signature_for(data, params["spectrum"])
    n = data.n
    orders = sorted(set(params["orders"]) | {2})
    for d in orders:
        SelectionConfig(d, 1)
    lo = int(params["n_left_min"])
    hi = n if params.get("n_left_max") is None else min(int(params["n_left_max"]), n)
    if not 1 <= lo <= hi:
        raise ValidationError(f"empty n_left range [{lo}, {hi}] for {n} bands")

    estimation = data.values[~mask.ignore.reshape(-1, order="F")]
    cs = cumulants(estimation, orders)
    for w in cs.warnings:
        log.warning(w)

    cells = [("none", n, list(data.band_ids), None, None, None)]
    for d in orders:
        cd = cs.tensors.get(d) if d > 2 else None
        config = SelectionConfig(d, lo, float(params["ridge"]), warn_below_limit=False)
        error = None
        try:
            trace = select_bands(cs[2], cd, config, data.band_ids).removal_trace
        except DegenerateSelectionError as exc:
            trace, error = exc.trace, str(exc)
        except HomcError as exc:
            trace, error = [], str(exc)
        base = None
        try:
            base = reference_log_target(cs[2], cd, d, float(params["ridge"]))
        except HomcError:
            pass
        limit = breaking_point_limit(d) if d >= 3 else None
        for k in range(hi, lo - 1, -1):
            flag = limit is not None and k < limit
            if n - k > len(trace):
                cells.append((d, k, None, None, flag, error or "selection did not reach this n_left"))
                continue
            target = trace[n - k - 1][1] if k < n else base
            cells.append((d, k, _retained_at(list(data.band_ids), trace, k), target, flag, None))

    def run(cell):
        order, k, bands, target, flag, error = cell
        row = {"order": order, "n_left": k, "auc": None, "log_target": target, "limit_flag": flag,
               "convexity_deficit": None, "error": error}
        if bands is None:
            return row
        try:
            curve = roc(_detect(data, bands, signature), mask)
        except HomcError as exc:
            row["error"] = str(exc)
            return row
        cell_dir = out / "cells" / f"order-{order}_nleft-{k}"
        cell_dir.mkdir(parents=True, exist_ok=True)
        curve.write_csv(cell_dir / "roc.csv")
        curve.write_summary(cell_dir / "auc.json")
        (cell_dir / "bands.json").write_text(json.dumps(bands) + "\n")
        row["auc"] = curve.auc
        row["convexity_deficit"] = curve.convexity_deficit
        return row

    workers = max(1, int(params.get("workers") or 1))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(run, cells))

    table = out / "auc_table.csv"
    fields = ["order", "n_left", "auc", "log_target", "limit_flag", "convexity_deficit", "error"]
    with open(table, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if v is None else v) for k, v in row.items()})
    inputs = [params["cube"], _header_path(params), params["mask"], params["spectrum"], params.get("config")]
    _manifest(out, "sweep", params, inputs, [table], started)
    failed = sum(1 for r in rows if r["error"])
    print(f"{len(rows)} cells, {failed} with errors -> {table}")
    return 0


def cmd_synth(params) -> int:
    started = time.perf_counter()
    out = _out_dir(params)
    spec = SceneSpec.from_json(params["spec"]) if params.get("spec") else SceneSpec()
    if "seed" in params.get("_given", ()):
        spec.seed = int(params["seed"])
    params["seed"] = spec.seed
    files = write_scene(spec, out)
    _manifest(out, "synth", params, [params.get("spec"), params.get("config")], list(files.values()), started)
    return 0


def offdiag_rows(d_min, d_max, n_min, n_max):
    rows = []
    for d in range(d_min, d_max + 1):
        crossed = False
        for n in range(n_min, n_max + 1):
            ratio = off_diag_ratio(n, d)
            first = not crossed and 3 * math.perm(n, d) >= n**d
            crossed = crossed or first
            rows.append((d, n, ratio, first))
    return rows


def cmd_diag_offdiag(params) -> int:
    started = time.perf_counter()
    d_min, d_max = int(params["d_min"]), int(params["d_max"])
    n_min, n_max = int(params["n_min"]), int(params["n_max"])
    if d_min < 2 or d_max < d_min or n_min < 1 or n_max < n_min:
        raise ValidationError("need 2 <= d_min <= d_max and 1 <= n_min <= n_max")
    rows = offdiag_rows(d_min, d_max, n_min, n_max)
    lines = ["d,n,ratio,first_at_or_above_third"]
    lines += [f"{d},{n},{r!r},{int(first)}" for d, n, r, first in rows]
    text = "\n".join(lines) + "\n"
    if params.get("out"):
        out = Path(params["out"])
        if out.suffix.lower() != ".csv":
            out.mkdir(parents=True, exist_ok=True)
            out = out / "offdiag.csv"
        else:
            out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        _manifest(out.parent, "diag-offdiag", params, [params.get("config")], [out], started)
    else:
        sys.stdout.write(text)
    return 0


COMMANDS = {
    "select": cmd_select,
    "detect": cmd_detect,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "synth": cmd_synth,
    "diag-offdiag": cmd_diag_offdiag,
}


def main(argv=None) -> int:
    parser = build_parser()
    ns = vars(parser.parse_args(argv))
    command = ns.pop("command")
    verbose = ns.pop("verbose", False)
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        params = resolve(command, ns)
        params["_given"] = sorted(ns)
        code = COMMANDS[command](params)
    except HomcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return InputError.exit_code
    return code


if __name__ == "__main__":
    sys.exit(main())
