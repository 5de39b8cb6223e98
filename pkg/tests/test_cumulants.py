import itertools
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import relerr
from homcsel import _kernels
from homcsel.cumulants import (
    DataMatrix,
    central_moment,
    central_moments,
    cumulant,
    cumulant_oracle,
    cumulants,
    expected_value,
    set_partitions,
)
from homcsel.errors import BoundsError, UnsupportedOrderError, ValidationError


def test_expected_value_examples():
    assert expected_value(np.array([[1.0], [2.0], [3.0]]), (1,)) == 2.0
    assert expected_value(np.array([[1.0], [-1.0]]), (1, 1)) == 1.0
    x = np.column_stack([np.zeros(5), np.arange(5.0)])
    assert expected_value(x, (1, 1, 2)) == 0.0


def test_expected_value_bounds():
    with pytest.raises(BoundsError):
        expected_value(np.ones((3, 2)), (3,))


def test_central_moment_examples():
    x = np.array([[1.0], [-1.0]])
    assert central_moment(x, (1, 1)) == 1.0
    assert central_moment(x, (1, 1, 1)) == 0.0
    assert central_moment(x, (1, 1, 1, 1)) == 1.0
    const = np.full((6, 1), 3.5)
    for k in (2, 3, 4):
        assert central_moment(const, (1,) * k) == 0.0
    col = np.random.default_rng(1).standard_normal(50)
    twin = np.column_stack([col, col])
    assert central_moment(twin, (1, 2)) == central_moment(twin, (1, 1))


def test_central_moments_tensor_matches_pointwise(rng):
    x = rng.standard_normal((40, 3))
    for k in (2, 3, 4):
        t = central_moments(x, k)
        for idx in itertools.combinations_with_replacement(range(1, 4), k):
            assert t.get(idx) == pytest.approx(central_moment(x, idx), rel=1e-12, abs=1e-15)


def test_univariate_alternating():
    x = np.array([[1.0], [-1.0], [1.0], [-1.0]])
    cs = cumulants(x, (2, 3, 4, 5))
    assert cs[2].get((1, 1)) == pytest.approx(1.0)
    assert cs[3].get((1, 1, 1)) == pytest.approx(0.0, abs=1e-15)
    assert cs[4].get((1, 1, 1, 1)) == pytest.approx(-2.0)
    assert cs[5].get((1,) * 5) == pytest.approx(0.0, abs=1e-15)
    assert cumulant_oracle(x, 4).get((1, 1, 1, 1)) == pytest.approx(-2.0)


def test_correlated_columns_covariance(rng):
    col = rng.standard_normal(100)
    c2 = cumulant(np.column_stack([col, col]), 2)
    v = np.var(col)
    np.testing.assert_allclose(c2.to_dense(), [[v, v], [v, v]], rtol=1e-12)


def test_order2_is_population_covariance(rng):
    x = rng.standard_normal((300, 4))
    np.testing.assert_allclose(cumulant(x, 2).to_dense(), np.cov(x.T, bias=True), rtol=1e-12)


def test_unsupported_order(rng):
    x = rng.standard_normal((10, 2))
    for d in (0, 6):
        with pytest.raises(UnsupportedOrderError):
            cumulant(x, d)


def test_too_few_realisations():
    with pytest.raises(ValidationError):
        cumulant(DataMatrix(np.ones((1, 3))), 2)
    with pytest.raises(ValidationError):
        DataMatrix(np.ones((0, 3)))


def test_non_finite_rejected():
    x = np.ones((4, 3))
    x[2, 1] = np.nan
    with pytest.raises(ValidationError, match=r"\[2\]"):
        DataMatrix(x)


def test_zero_variance_warning():
    x = np.column_stack([np.arange(10.0), np.full(10, 2.0)])
    cs = cumulants(DataMatrix(x, band_ids=(7, 9)), (2, 3))
    assert any("9" in w for w in cs.warnings)


def test_set_partition_counts():
    bell = [1, 1, 2, 5, 15, 52]
    for k in range(1, 6):
        assert sum(1 for _ in set_partitions(list(range(k)))) == bell[k]


@pytest.mark.parametrize("d", [1, 2, 3, 4, 5])
def test_matches_oracle(rng, d):
    x = rng.gamma(2.0, size=(200, 4)) + rng.standard_normal((200, 4))
    assert relerr(cumulant(x, d).values, cumulant_oracle(x, d).values) <= 1e-10


def test_oracle_limits():
    with pytest.raises(ValidationError):
        cumulant_oracle(np.ones((5, 7)), 3)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(2, 5))
def test_band_permutation_equivariance(seed, d):
    rng = np.random.default_rng(seed)
    x = rng.exponential(size=(60, 4))
    perm = rng.permutation(4)
    a = cumulant(x, d)
    b = cumulant(x[:, perm], d)
    for idx in itertools.combinations_with_replacement(range(4), d):
        mapped = tuple(int(perm[i]) + 1 for i in idx)
        assert b.get(tuple(i + 1 for i in idx)) == pytest.approx(a.get(mapped), rel=1e-9, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(2, 5), alpha=st.floats(0.01, 100.0))
def test_scaling_and_shift(seed, d, alpha):
    rng = np.random.default_rng(seed)
    x = rng.exponential(size=(80, 3))
    base = cumulant(x, d).values
    scaled = cumulant(alpha * x + 5.0, d).values
    assert relerr(scaled, alpha**d * base) < 1e-9


def test_covariance_psd(rng):
    x = rng.standard_normal((50, 6)) @ rng.standard_normal((6, 6))
    assert np.linalg.eigvalsh(cumulant(x, 2).to_dense()).min() > -1e-10


def test_gaussian_null_small():
    x = np.random.default_rng(7).standard_normal((100_000, 5))
    cs = cumulants(x, (3, 4))
    assert np.abs(cs[3].values).max() < 0.05
    assert np.abs(cs[4].values).max() < 0.15


@pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba unavailable")
@pytest.mark.parametrize("k", [2, 3, 4, 5])
def test_backend_parity(rng, k):
    from homcsel.symtensor import canonical_rank, canonical_table, n_canonical

    n = 7
    x = rng.standard_normal((500, n))
    xt = np.ascontiguousarray((x - x.mean(axis=0)).T)
    prefixes = np.ascontiguousarray(canonical_table(n, k - 1), dtype=np.int64)
    offsets = canonical_rank(np.column_stack([prefixes, prefixes[:, -1]]), n)
    a = _kernels.accumulate_numpy(xt, prefixes, offsets, np.empty(n_canonical(n, k)))
    b = _kernels.accumulate_numba(xt, prefixes, offsets, np.empty(n_canonical(n, k)))
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


def test_numpy_chunking_matches(rng, monkeypatch):
    x = rng.standard_normal((300, 6))
    ref = cumulant(x, 4).values
    monkeypatch.setattr(_kernels, "USE_NUMBA", False)
    monkeypatch.setattr(_kernels, "_NUMPY_BUFFER", 600)
    np.testing.assert_allclose(cumulant(x, 4).values, ref, rtol=1e-12, atol=1e-14)


def test_env_flag_selects_numpy():
    env = dict(os.environ, HOMCSEL_DISABLE_NUMBA="1")
    out = subprocess.run(
        [sys.executable, "-c", "from homcsel import _kernels; print(_kernels.backend())"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "numpy"
