"""Acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL/SKIP line, printed in the terminal summary.
Criterion 10 runs only when the Cuprite inputs are supplied through
HOMCSEL_CUPRITE_CUBE, HOMCSEL_CUPRITE_MASK and HOMCSEL_CUPRITE_SPECTRUM
(optionally HOMCSEL_CUPRITE_HEADER).
"""
import csv
import math
import os
import time

import numpy as np
import pytest

from conftest import excess_kurtosis, relerr, report, skewness, skip_report
from homcsel.cli import main
from homcsel.cumulants import cumulant, cumulant_oracle, cumulants
from homcsel.detection import detect_map
from homcsel.evaluation import GroundTruthMask, auc_pairs, roc
from homcsel.ingest import HsiCube, fold, load_cube, subset_bands, unfold_cube, write_cube
from homcsel.selection import SelectionConfig, breaking_point_limit, log_target_f, select_bands
from homcsel.symtensor import off_diag_ratio
from homcsel.synth import SceneSpec, generate


def test_criterion_1_gaussian_null():
    # the maximum over ~500 elements of one run is a noisy statistic (a single
    # seed lands in [1.5, 3] only about half the time), so the shrink factor
    # compares maxima averaged over independent replicates at each t
    start = time.perf_counter()
    replicates = 8
    seeds = np.random.SeedSequence(1).spawn(2 * replicates)
    maxima = {100_000: [], 400_000: []}
    for i in range(replicates):
        for j, t in enumerate(maxima):
            x = np.random.default_rng(seeds[2 * i + j]).standard_normal((t, 8))
            cs = cumulants(x, (3, 4))
            maxima[t].append([np.abs(cs[3].values).max(), np.abs(cs[4].values).max()])
    small, large = np.array(maxima[100_000]), np.array(maxima[400_000])
    m3, m4 = small.max(axis=0)
    r3, r4 = small.mean(axis=0) / large.mean(axis=0)
    elapsed = time.perf_counter() - start
    ok = m3 < 0.05 and m4 < 0.15 and 1.5 <= r3 <= 3 and 1.5 <= r4 <= 3 and elapsed < 30
    report(1, ok, f"t=1e5 over {replicates} runs max|C3|={m3:.4f} max|C4|={m4:.4f}; "
                  f"shrink at t=4e5 C3 x{r3:.2f} C4 x{r4:.2f}; {elapsed:.1f} s")
    assert ok


def test_criterion_2_univariate_reduction():
    rng = np.random.default_rng(2)
    sets = [rng.exponential(size=1000), rng.gamma(0.5, size=700) + 4.0, rng.lognormal(0, 0.8, size=500)]
    worst = 0.0
    for col in sets:
        cs = cumulants(col[:, None], (2, 3, 4))
        worst = max(
            worst,
            abs(math.exp(log_target_f(cs[2], cs[3])) / abs(skewness(col)) - 1),
            abs(math.exp(log_target_f(cs[2], cs[4])) / abs(excess_kurtosis(col)) - 1),
        )
    ok = worst <= 1e-10
    report(2, ok, f"worst relative error {worst:.2e} (tolerance 1e-10)")
    assert ok


def test_criterion_3_scale_invariance():
    rng = np.random.default_rng(3)
    x = np.column_stack([rng.gamma(a, size=2000) for a in (0.5, 1.0, 2.0, 4.0, 8.0, 16.0)])
    worst, same_trace = 0.0, True
    for d in (3, 4, 5):
        base = cumulants(x, (2, d))
        ref = log_target_f(base[2], base[d])
        ref_trace = select_bands(base[2], base[d], SelectionConfig(d, 1, warn_below_limit=False)).removed
        for alpha in (0.01, 1.0, 100.0):
            cs = cumulants(alpha * x, (2, d))
            worst = max(worst, abs(log_target_f(cs[2], cs[d]) - ref))
            trace = select_bands(cs[2], cs[d], SelectionConfig(d, 1, warn_below_limit=False)).removed
            same_trace &= trace == ref_trace
    ok = worst < 1e-8 and same_trace
    report(3, ok, f"max |delta log f| {worst:.2e} (tolerance 1e-8), identical traces: {same_trace}")
    assert ok


def test_criterion_4_oracle_equivalence():
    start = time.perf_counter()
    worst = 0.0
    for k in range(20):
        rng = np.random.default_rng(400 + k)
        n = 1 + k % 4
        x = rng.gamma(1.0 + k % 3, size=(200, n)) * rng.uniform(0.5, 2.0, size=n)
        for d in range(1, 6):
            worst = max(worst, relerr(cumulant(x, d).values, cumulant_oracle(x, d).values))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and elapsed < 10
    report(4, ok, f"worst relative error {worst:.2e} over 20 instances x d=1..5, {elapsed:.1f} s")
    assert ok


def test_criterion_5_fiber_cut_consistency():
    worst = 0.0
    for k in range(10):
        x = np.random.default_rng(500 + k).gamma(2.0, size=(300, 6))
        for d in (3, 4, 5):
            full = cumulant(x, d)
            for r in range(1, 7):
                direct = cumulant(np.delete(x, r - 1, axis=1), d)
                worst = max(worst, relerr(full.fiber_cut(r).values, direct.values))
    ok = worst <= 1e-12
    report(5, ok, f"worst relative deviation {worst:.2e} (tolerance 1e-12)")
    assert ok


def test_criterion_6_breaking_points():
    got = {d: breaking_point_limit(d) for d in (3, 4, 5, 6)}
    searched = {d: next(n for n in range(1, 100) if off_diag_ratio(n, d) >= 1 / 3) for d in (3, 4, 5, 6)}
    ok = got == {3: 4, 4: 7, 5: 11, 6: 16} and got == searched
    report(6, ok, f"limits {got}, direct search {searched}")
    assert ok


def test_criterion_7_synthetic_pipeline():
    start = time.perf_counter()
    spec = SceneSpec()
    assert (spec.p_x, spec.p_y, spec.n_bands, spec.n_targets, len(spec.informative_bands)) == (100, 100, 30, 25, 5)
    assert spec.target_model == "skewed"
    cube, mask, sig = generate(spec)
    data = unfold_cube(cube)
    cs = cumulants(data, (2, 3, 4))
    informative = set(spec.informative_bands)
    all_auc = roc(detect_map(data, sig), mask).auc
    parts, ok = [f"all-band AUC {all_auc:.3f}"], True
    for d in (3, 4):
        kept = select_bands(cs[2], cs[d], SelectionConfig(d, 10)).retained
        sub = subset_bands(data, kept)
        auc = roc(detect_map(sub, sig.restrict(sub.band_ids)), mask).auc
        hits = len(informative & set(kept))
        ok &= hits >= 4 and auc >= all_auc - 0.02
        parts.append(f"d={d}: {hits}/5 informative, AUC {auc:.3f}")
    mev = select_bands(cs[2], None, SelectionConfig(2, 10)).retained
    mev_hits = len(informative & set(mev))
    ok &= mev_hits <= 3
    elapsed = time.perf_counter() - start
    ok &= elapsed < 120
    parts.append(f"MEV {mev_hits}/5 informative, {elapsed:.1f} s")
    report(7, ok, "; ".join(parts))
    assert ok


def test_criterion_8_roc_exactness():
    sep = roc(np.array([[0.1, 0.2, 0.7, 0.9]]), GroundTruthMask(np.array([[1, 1, 0, 0]], bool))).auc
    const = roc(np.full((1, 6), 0.4), GroundTruthMask(np.array([[1, 0, 1, 0, 0, 0]], bool))).auc
    four = roc(np.array([[0.1, 0.6, 0.3, 0.9]]), GroundTruthMask(np.array([[1, 1, 0, 0]], bool))).auc
    worst = 0.0
    for k in range(100):
        rng = np.random.default_rng(800 + k)
        size = int(rng.integers(5, 400))
        angles = rng.uniform(size=(size, 1))
        if k % 2:
            angles = np.round(angles, 1)
        labels = rng.uniform(size=(size, 1)) < rng.uniform(0.05, 0.5)
        labels[0], labels[1] = True, False
        m = GroundTruthMask(labels)
        worst = max(worst, abs(roc(angles, m).auc - auc_pairs(angles, m)))
    ok = sep == 1.0 and const == 0.5 and four == 0.75 and worst <= 1e-12
    report(8, ok, f"AUC separated {sep}, constant {const}, 4-sample {four}; trapezoid vs pairs {worst:.1e}")
    assert ok


def test_criterion_9_determinism_roundtrips(tmp_path):
    for name in ("a", "b"):
        assert main(["synth", "--out", str(tmp_path / name), "--seed", "9"]) == 0
    files = ("cube.bsq", "cube.bsq.hdr", "mask.pgm", "spectrum.csv", "scene.json")
    identical = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files)

    cube = load_cube(tmp_path / "a" / "cube.bsq")
    loaded = []
    for il in ("bsq", "bil", "bip"):
        write_cube(cube, tmp_path / f"c.{il}", interleave=il)
        loaded.append(load_cube(tmp_path / f"c.{il}").values)
    interleave_ok = all(np.array_equal(loaded[0], v) for v in loaded[1:]) and np.array_equal(loaded[0], cube.values)

    folded = fold(unfold_cube(cube)).values
    fold_ok = np.array_equal(folded, cube.values) and folded.tobytes() == cube.values.tobytes()

    x = unfold_cube(cube).values[:, :8]
    perm = np.random.default_rng(9).permutation(len(x))
    worst = 0.0
    a, b = cumulants(x, (2, 3, 4, 5)), cumulants(x[perm], (2, 3, 4, 5))
    for d in (2, 3, 4, 5):
        diff = np.abs(a[d].values - b[d].values)
        worst = max(worst, float(np.max(diff / np.maximum(np.abs(a[d].values), 1e-300))))
    ok = identical and interleave_ok and fold_ok and worst < 1e-10
    report(9, ok, f"synth byte-identical {identical}, interleaves equal {interleave_ok}, "
                  f"fold exact {fold_ok}, row-permutation max rel change {worst:.1e}")
    assert ok


def test_criterion_10_cuprite_hook(tmp_path):
    env = {k: os.environ.get(f"HOMCSEL_CUPRITE_{k.upper()}") for k in ("cube", "mask", "spectrum", "header")}
    if not all(env[k] for k in ("cube", "mask", "spectrum")):
        skip_report(10, "Cuprite inputs not supplied (set HOMCSEL_CUPRITE_CUBE, _MASK, _SPECTRUM)")
        pytest.skip("Cuprite data not supplied")
    out = tmp_path / "sweep"
    args = ["sweep", "--cube", env["cube"], "--mask", env["mask"], "--spectrum", env["spectrum"],
            "--orders", "2,3,4,5", "--n-left-min", "3", "--n-left-max", "50", "--preset", "cuprite",
            "--out", str(out)]
    if env["header"]:
        args += ["--header", env["header"]]
    code = main(args)
    rows = []
    if code == 0:
        with open(out / "auc_table.csv") as fh:
            rows = list(csv.DictReader(fh))
    cells = {(r["order"], int(r["n_left"])) for r in rows if r["order"] != "none"}
    expected = {(str(d), k) for d in (2, 3, 4, 5) for k in range(3, 51)}
    baseline = [r for r in rows if r["order"] == "none"]
    ok = code == 0 and cells == expected and len(baseline) == 1 and baseline[0]["n_left"] == "50"
    errors = sum(1 for r in rows if r.get("error"))
    report(10, ok, f"exit {code}, {len(cells)}/{len(expected)} cells, baseline rows {len(baseline)}, cell errors {errors}")
    assert ok
