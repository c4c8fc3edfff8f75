"""Hermite calculus, renormalization constants and Wick-ordered powers.

``H_k(x; sigma)`` are the Hermite polynomials with generating function
``exp(t x - sigma t^2 / 2)``.  Two variance constants enter the models:

* ``sigma_N(t)``: variance of the truncated undamped stochastic convolution,
  ``sum_{|n|<=N} int_0^t sin^2(tau |n|^2) / |n|^4 dtau`` with the zero mode
  contributing ``t^3 / 3``;
* ``alpha_N``: variance of the truncated massive free field,
  ``sum_{|n|<=N} <n>^-4``.

Both are exact lattice sums grouped by shells ``|n|^2 = m``.
"""

from __future__ import annotations

import csv
import functools
import math
import threading
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .spectral import SpectralField, _padded_size, from_physical, to_physical

__all__ = [
    "hermite",
    "hermite_coefficients",
    "shell_counts",
    "sigma_N",
    "alpha_N",
    "mode_variance_undamped",
    "VarianceRow",
    "variance_table",
    "write_variance_csv",
    "wick_power",
    "renormalized_nonlinearity",
    "wick_nonlinearity",
]


def hermite(ell: int, x, sigma):
    """``H_ell(x; sigma)`` by the upward three-term recurrence.

    ``H_0 = 1``, ``H_1 = x`` and ``H_{l+1} = x H_l - sigma l H_{l-1}``.
    Relative accuracy degrades when ``|x| >> sqrt(sigma)`` cancels against the
    lower-order terms; degrees used here are small (at most 8).
    """
    if ell < 0:
        raise ValueError("Hermite degree must be non-negative")
    x = np.asarray(x, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise ValueError("variance parameter must be non-negative")
    if ell == 0:
        return np.ones(np.broadcast(x, sigma).shape) if (x.ndim or sigma.ndim) else 1.0
    if ell == 1:
        cur = x + 0.0 * sigma
        return cur if cur.ndim else float(cur)
    prev, cur = x, x * x - sigma
    for j in range(2, ell):
        prev, cur = cur, x * cur - sigma * j * prev
    return cur if cur.ndim else float(cur)


def hermite_coefficients(ell: int, sigma: float) -> np.ndarray:
    """Monomial coefficients of ``H_ell(.; sigma)``, lowest degree first."""
    prev = np.zeros(ell + 2)
    prev[0] = 1.0
    if ell == 0:
        return prev[:1].copy()
    cur = np.zeros(ell + 2)
    cur[1] = 1.0
    for j in range(1, ell):
        nxt = np.roll(cur, 1) - sigma * j * prev
        nxt[0] = -sigma * j * prev[0]
        prev, cur = cur, nxt
    return cur[: ell + 1].copy()


# ---------------------------------------------------------------------------
# lattice sums

_cache_lock = threading.Lock()


@functools.lru_cache(maxsize=32)
def _shell_counts_cached(m_max: int, d: int) -> np.ndarray:
    r = math.isqrt(m_max)
    one = np.zeros(m_max + 1, dtype=np.int64)
    for a in range(-r, r + 1):
        one[a * a] += 1
    out = np.zeros(m_max + 1, dtype=np.int64)
    out[0] = 1
    for _ in range(d):
        out = np.convolve(out, one)[: m_max + 1]
    out.setflags(write=False)
    return out


def shell_counts(m_max: int, d: int = 4) -> np.ndarray:
    """Number of ``n in Z^d`` with ``|n|^2 = m`` for ``m = 0..m_max``."""
    with _cache_lock:
        return _shell_counts_cached(int(m_max), int(d))


def _ball_m_max(N: float) -> int:
    if N < 0:
        raise ValueError("cutoff must be non-negative")
    return int(math.floor(N * N + 1e-9))


def mode_variance_undamped(t, omega):
    """``int_0^t sin^2(tau omega)/omega^2 dtau`` per mode, ``t^3/3`` at ``omega = 0``.

    The closed form ``(t/2 - sin(2 t omega)/(4 omega)) / omega^2`` loses
    relative accuracy when ``t omega`` is small, so a short series is used
    there instead.
    """
    t = np.asarray(t, dtype=float)
    omega = np.asarray(omega, dtype=float)
    t, omega = np.broadcast_arrays(t, omega)
    x = 2.0 * t * omega
    safe = np.where(omega == 0, 1.0, omega)
    closed = (0.5 * t - np.sin(x) / (4.0 * safe)) / safe**2
    # 1 - sin(x)/x = x^2/6 - x^4/120 + x^6/5040 - x^8/362880
    x2 = x * x
    series_factor = x2 / 6.0 - x2 * x2 / 120.0 + x2**3 / 5040.0 - x2**4 / 362880.0
    series = 0.5 * t * series_factor / safe**2
    out = np.where(np.abs(x) < 1e-2, series, closed)
    out = np.where(omega == 0, t**3 / 3.0, out)
    return out if out.ndim else float(out)


def sigma_N(t, N: float, d: int = 4):
    """Variance of the truncated undamped stochastic convolution at time ``t``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be non-negative")
    m_max = _ball_m_max(N)
    counts = shell_counts(m_max, d).astype(float)
    m = np.arange(m_max + 1, dtype=float)
    per = mode_variance_undamped(t[..., None], m)
    out = np.sum(per * counts, axis=-1)
    return out if out.ndim else float(out)


def alpha_N(N: float, d: int = 4) -> float:
    """``sum_{|n| <= N} <n>^-4`` over the lattice ``Z^d``."""
    m_max = _ball_m_max(N)
    counts = shell_counts(m_max, d).astype(float)
    m = np.arange(m_max + 1, dtype=float)
    return float(np.sum(counts / (1.0 + m) ** 2))


@dataclass(frozen=True)
class VarianceRow:
    kind: str
    N: float
    t: float | None
    value: float


def variance_table(kind: str, N_values: Iterable[float], times: Sequence[float] | None = None,
                   d: int = 4) -> list[VarianceRow]:
    """Rows of ``sigma_N(t)`` (``kind='sigma'``) or ``alpha_N`` (``kind='alpha'``)."""
    rows = []
    if kind == "alpha":
        for N in N_values:
            rows.append(VarianceRow("alpha", N, None, alpha_N(N, d)))
    elif kind == "sigma":
        if not times:
            raise ValueError("sigma tables need at least one time")
        for N in N_values:
            vals = np.atleast_1d(sigma_N(np.asarray(times, float), N, d))
            for t, v in zip(times, vals):
                rows.append(VarianceRow("sigma", N, float(t), float(v)))
    else:
        raise ValueError(f"unknown variance kind {kind!r}; expected 'alpha' or 'sigma'")
    return rows


def write_variance_csv(rows: Sequence[VarianceRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "N", "t", "value"])
        for r in rows:
            w.writerow([r.kind, _fmt_num(r.N), "" if r.t is None else repr(float(r.t)), repr(float(r.value))])


def _fmt_num(x) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


# ---------------------------------------------------------------------------
# Wick powers


def wick_power(samples, sigma: float, ell: int):
    """Pointwise ``H_ell(samples; sigma)``."""
    if ell == 1:
        return np.array(samples, dtype=float, copy=True)
    return hermite(ell, samples, sigma)


def renormalized_nonlinearity(v: SpectralField, wick_powers: Sequence[SpectralField], k: int,
                              pad_size: int | None = None) -> SpectralField:
    """``sum_l C(k, l) Xi_l v^(k-l)`` with alias-free products.

    Args:
        v: remainder field.
        wick_powers: ``[Xi_0, ..., Xi_k]`` on ``v``'s grid with ``Xi_0 = 1``.
        k: degree.
        pad_size: optional explicit padded grid size.
    """
    if len(wick_powers) != k + 1:
        raise ValueError(f"expected {k + 1} Wick powers (Xi_0..Xi_k), got {len(wick_powers)}")
    g = v.grid
    for xi in wick_powers:
        if xi.grid != g:
            raise ValueError("Wick powers must live on the remainder grid")
    zero = (0,) * g.d
    c0 = wick_powers[0].coeffs
    if not (np.allclose(c0[(Ellipsis,) + zero], 1.0) and np.allclose(np.sum(np.abs(c0) ** 2, axis=tuple(range(-g.d, 0))), 1.0)):
        raise ValueError("Xi_0 must be the constant field 1")
    P = _padded_size(g, k, g.N_max, pad_size)
    vp = to_physical(v, P)
    total = np.zeros_like(vp)
    vpow = np.ones_like(vp)
    for j in range(0, k + 1):  # j = k - l
        ell = k - j
        term = math.comb(k, ell) * vpow
        if ell > 0:
            term = term * to_physical(wick_powers[ell], P)
        total += term
        vpow = vpow * vp
    return from_physical(total, g)


def wick_nonlinearity(v: SpectralField, psi: SpectralField | None, sigma: float, k: int,
                      pad_size: int | None = None) -> SpectralField:
    """Projection of ``:(psi + v)^k: = H_k(psi + v; sigma)`` onto ``v``'s grid.

    Both fields are evaluated exactly on a padded grid, so the result equals
    ``renormalized_nonlinearity`` with the exact Wick powers of ``psi``.
    """
    g = v.grid
    P = _padded_size(g, k, g.N_max, pad_size)
    if psi is not None:
        if psi.grid != g:
            raise ValueError("psi must live on the remainder grid")
        v = v + psi
    return from_physical(hermite(k, to_physical(v, P), sigma), g)
