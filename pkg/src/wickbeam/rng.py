"""Counter-based random numbers (Philox4x32-10), vectorized with numpy.

Every draw is a pure function of ``(seed, counter)``.  No generator state is
carried around, so draws do not depend on evaluation order, chunking or the
number of workers.

When numba is installed the block function and the Box-Muller transform run
in a compiled kernel; otherwise the numpy implementation below is used.  Both
produce the same integer stream.
"""

from __future__ import annotations

import math

import numpy as np

try:  # optional accelerator
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

__all__ = ["philox4x32", "uniform_pair", "complex_normal", "uniform"]

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK = np.uint64(0xFFFFFFFF)
_SHIFT = np.uint64(32)


def philox4x32(c0, c1, c2, c3, key: tuple[int, int], rounds: int = 10):
    """Philox4x32 block function.

    Args:
        c0, c1, c2, c3: counter words (broadcastable integer arrays < 2**32).
        key: two 32-bit key words.
        rounds: number of rounds (10 is the standard choice).

    Returns:
        Four ``uint64`` arrays holding 32-bit output words.
    """
    x0, x1, x2, x3 = (np.asarray(c, dtype=np.uint64) & _MASK for c in (c0, c1, c2, c3))
    x0, x1, x2, x3 = np.broadcast_arrays(x0, x1, x2, x3)
    k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & 0xFFFFFFFF
            k1 = (k1 + _W1) & 0xFFFFFFFF
        p0 = _M0 * x0
        p1 = _M1 * x2
        hi0, lo0 = p0 >> _SHIFT, p0 & _MASK
        hi1, lo1 = p1 >> _SHIFT, p1 & _MASK
        x0, x1, x2, x3 = hi1 ^ x1 ^ np.uint64(k0), lo1, hi0 ^ x3 ^ np.uint64(k1), lo0
    return x0, x1, x2, x3


def _split_seed(seed: int) -> tuple[int, int]:
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return seed & 0xFFFFFFFF, seed >> 32


_TWO53 = float(2**53)


def uniform_pair(seed: int, c0, c1, c2, c3):
    """Two independent 53-bit uniforms on ``[0, 1)`` per counter."""
    w0, w1, w2, w3 = philox4x32(c0, c1, c2, c3, _split_seed(seed))
    u1 = ((w0 >> np.uint64(5)) * np.uint64(67108864) + (w1 >> np.uint64(6))).astype(float) / _TWO53
    u2 = ((w2 >> np.uint64(5)) * np.uint64(67108864) + (w3 >> np.uint64(6))).astype(float) / _TWO53
    return u1, u2


def uniform(seed: int, c0, c1, c2, c3) -> np.ndarray:
    """One uniform on ``[0, 1)`` per counter."""
    return uniform_pair(seed, c0, c1, c2, c3)[0]


def complex_normal(seed: int, c0, c1, c2, c3, use_numba: bool | None = None) -> np.ndarray:
    """Standard complex Gaussian per counter: ``E|z|^2 = 1``, independent parts.

    Uses the Box-Muller transform on the two uniforms of one Philox block.
    """
    if use_numba is None:
        use_numba = numba is not None
    if use_numba:
        arrs = np.broadcast_arrays(*(np.asarray(c, dtype=np.uint64) for c in (c0, c1, c2, c3)))
        shape = arrs[0].shape
        k0, k1 = _split_seed(seed)
        flat = [np.ascontiguousarray(a).ravel() for a in arrs]
        return _kernel()(flat[0], flat[1], flat[2], flat[3], np.uint64(k0), np.uint64(k1)).reshape(shape)
    u1, u2 = uniform_pair(seed, c0, c1, c2, c3)
    r = np.sqrt(-np.log1p(-u1))  # -log(1 - u1), u1 < 1
    ang = 2.0 * np.pi * u2
    return r * np.cos(ang) + 1j * r * np.sin(ang)


_compiled = None


def _kernel():
    global _compiled
    if _compiled is None:
        _compiled = _build_kernel()
    return _compiled


def _build_kernel():
    M0, M1 = np.uint64(0xD2511F53), np.uint64(0xCD9E8D57)
    W0, W1 = np.uint64(_W0), np.uint64(_W1)
    MASK, SH = np.uint64(0xFFFFFFFF), np.uint64(32)
    S5, S6, MUL = np.uint64(5), np.uint64(6), np.uint64(67108864)
    inv53 = 1.0 / _TWO53
    twopi = 2.0 * math.pi

    @numba.njit(cache=True)
    def kernel(c0, c1, c2, c3, k0_in, k1_in):
        n = c0.shape[0]
        out = np.empty(n, dtype=np.complex128)
        for i in range(n):
            x0 = c0[i] & MASK
            x1 = c1[i] & MASK
            x2 = c2[i] & MASK
            x3 = c3[i] & MASK
            k0 = k0_in
            k1 = k1_in
            for r in range(10):
                if r > 0:
                    k0 = (k0 + W0) & MASK
                    k1 = (k1 + W1) & MASK
                p0 = M0 * x0
                p1 = M1 * x2
                y0 = (p1 >> SH) ^ x1 ^ k0
                y2 = (p0 >> SH) ^ x3 ^ k1
                x1 = p1 & MASK
                x3 = p0 & MASK
                x0 = y0
                x2 = y2
            u1 = float((x0 >> S5) * MUL + (x1 >> S6)) * inv53
            u2 = float((x2 >> S5) * MUL + (x3 >> S6)) * inv53
            rad = math.sqrt(-math.log1p(-u1))
            ang = twopi * u2
            out[i] = complex(rad * math.cos(ang), rad * math.sin(ang))
        return out

    return kernel
