"""Hot loops for moment accumulation.

Two interchangeable backends compute the same quantity: for every canonical
(non-decreasing) multi-index ``(p_1, ..., p_{k-1}, b)`` with ``b >= p_{k-1}``,

    out[offset(p) + b - p_{k-1}] = mean_j  xt[p_1, j] * ... * xt[p_{k-1}, j] * xt[b, j]

where ``xt`` is the band-major (n x t) centred data. Entries sharing a prefix
are contiguous in lexicographic order, so each prefix contributes one run.

The numba backend is used when numba imports and ``HOMCSEL_DISABLE_NUMBA`` is
unset (or ``0``). Setting it to ``1`` forces the pure-numpy path.
"""
import os
import warnings

import numpy as np

_FLAG = os.environ.get("HOMCSEL_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _FLAG not in ("", "0", "false", "no")

# numba probes for TBB on first parallel launch and warns when it is too old;
# the workqueue/omp layers are used instead, so the message is noise
warnings.filterwarnings("ignore", message="The TBB threading layer")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not _DISABLED

# upper bound on the (prefix chunk x t) product buffer of the numpy path
_NUMPY_BUFFER = 1 << 22


def accumulate_numpy(xt, prefixes, offsets, out):
    n, t = xt.shape
    n_pre, width = prefixes.shape
    last = prefixes[:, -1]
    chunk = max(1, _NUMPY_BUFFER // max(t, 1))
    cols = np.arange(n)
    for start in range(0, n_pre, chunk):
        stop = min(start + chunk, n_pre)
        w = xt[prefixes[start:stop, 0]].copy()
        for m in range(1, width):
            w *= xt[prefixes[start:stop, m]]
        r = w @ xt.T
        r /= t
        lo = last[start:stop, None]
        keep = cols[None, :] >= lo
        dest = offsets[start:stop, None] + cols[None, :] - lo
        out[dest[keep]] = r[keep]
    return out


if HAVE_NUMBA:

    # fastmath lets the dot-product reductions vectorise; DataMatrix rejects
    # non-finite input, so the no-NaN/inf assumption holds
    @numba.njit(parallel=True, cache=True, fastmath=True)
    def _accumulate_jit(xt, prefixes, offsets, out):  # pragma: no cover - jitted
        n, t = xt.shape
        n_pre, width = prefixes.shape
        inv_t = 1.0 / t
        for q in numba.prange(n_pre):
            w = xt[prefixes[q, 0]].copy()
            for m in range(1, width):
                row = xt[prefixes[q, m]]
                for j in range(t):
                    w[j] *= row[j]
            lo = prefixes[q, width - 1]
            base = offsets[q]
            for b in range(lo, n):
                row = xt[b]
                acc = 0.0
                for j in range(t):
                    acc += w[j] * row[j]
                out[base + b - lo] = acc * inv_t
        return out


def accumulate_numba(xt, prefixes, offsets, out):
    if not HAVE_NUMBA:
        raise RuntimeError("numba is not importable")
    return _accumulate_jit(xt, prefixes, offsets, out)


def accumulate(xt, prefixes, offsets, out):
    """Dispatch to the active backend. All arrays must be C-contiguous."""
    if USE_NUMBA:
        return _accumulate_jit(xt, prefixes, offsets, out)
    return accumulate_numpy(xt, prefixes, offsets, out)


def backend():
    return "numba" if USE_NUMBA else "numpy"
