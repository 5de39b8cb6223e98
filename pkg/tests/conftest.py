import itertools
import math

import numpy as np
import pytest


def dense_symmetric(rng, n, d):
    """Random, exactly super-symmetric dense array: one draw per sorted
    multi-index, copied to every permutation."""
    draws = {}
    out = np.empty((n,) * d)
    for idx in itertools.product(range(n), repeat=d):
        key = tuple(sorted(idx))
        if key not in draws:
            draws[key] = rng.standard_normal()
        out[idx] = draws[key]
    return out


def dense_unfold_formula(dense):
    """Mode-1 matricisation evaluated entry by entry from the column formula
    j = sum_l (i_l - 1) n**(l - 2), independent of any reshape convention."""
    d = dense.ndim
    n = dense.shape[0]
    out = np.zeros((n, n ** (d - 1)))
    for idx in itertools.product(range(n), repeat=d):
        j = sum(idx[l] * n ** (l - 1) for l in range(1, d))
        out[idx[0], j] = dense[idx]
    return out


def skewness(x):
    c = x - x.mean()
    return np.mean(c**3) / np.mean(c**2) ** 1.5


def excess_kurtosis(x):
    c = x - x.mean()
    return np.mean(c**4) / np.mean(c**2) ** 2 - 3.0


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def relerr(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    scale = max(np.max(np.abs(b)), 1e-300)
    return float(np.max(np.abs(a - b)) / scale)


def logdet_dense(mat):
    sign, val = np.linalg.slogdet(mat)
    return val if sign > 0 else -math.inf


# acceptance criteria report one line each; printed after the run
ACCEPTANCE = {}


def report(number, ok, detail):
    ACCEPTANCE[number] = ("PASS" if ok else "FAIL", detail)
    return ok


def skip_report(number, detail):
    ACCEPTANCE[number] = ("SKIP", detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"{status} criterion {number}: {detail}")
