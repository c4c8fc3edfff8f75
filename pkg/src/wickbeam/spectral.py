"""Grids, Fourier transforms, radial multipliers and norms on the d-torus.

The torus is ``(R/Z)^d`` with unit volume and Fourier modes
``e_n(x) = exp(2 pi i n.x)``.  Following the usual convention for beam
equations the Laplacian symbol is ``|n|^2`` (the factor ``(2 pi)^2`` is
dropped), and ``<n> = (1 + |n|^2)^(1/2)``.

Coefficients are stored in the standard FFT layout, normalized so that
``u(x) = sum_n c(n) e_n(x)``; in other words ``c = fftn(samples) / M^d``.
A field with ``M`` points per axis represents frequencies
``|n_i| <= N_max = M/2 - 1`` unambiguously.  The Nyquist plane ``|n_i| = M/2``
is kept by :func:`forward_transform` so that round trips are exact, but it is
treated as empty by every band-limited operation (products, mode sets).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.fft as sfft

__all__ = [
    "DimensionError",
    "PaddingError",
    "Grid",
    "SpectralField",
    "MultiplierSpec",
    "forward_transform",
    "inverse_transform",
    "multiplier_symbol",
    "apply_multiplier",
    "i_operator_symbol",
    "lp_bump",
    "littlewood_paley",
    "dyadic_scales",
    "sobolev_norm",
    "lebesgue_norm",
    "dealiased_product",
    "required_padded_size",
    "to_physical",
    "from_physical",
    "integrate_power",
    "random_field",
]

#: FFT worker count used by scipy.fft; set by the command line front end.
FFT_WORKERS = 1


class DimensionError(ValueError):
    """Raised when an array does not have the shape implied by a grid."""


class PaddingError(ValueError):
    """Raised when a padded grid is too small for an exact product."""

    def __init__(self, message: str, required_pad_factor: int):
        super().__init__(message)
        self.required_pad_factor = required_pad_factor


@dataclass(frozen=True)
class Grid:
    """Uniform grid with ``M`` points per axis on the unit d-torus.

    Attributes:
        M: points per axis; even and at least 4.
        d: spatial dimension, 1 to 4.
        pad_factor: optional fixed padding ratio for products.  When ``None``
            the degree dependent default ``ceil((k + 1) / 2)`` is used.
    """

    M: int
    d: int = 4
    pad_factor: int | None = None

    def __post_init__(self):
        if not isinstance(self.M, (int, np.integer)) or self.M < 4 or self.M % 2:
            raise ValueError(f"grid size M must be an even integer >= 4, got {self.M!r}")
        if self.d not in (1, 2, 3, 4):
            raise ValueError(f"dimension d must be 1, 2, 3 or 4, got {self.d!r}")
        if self.pad_factor is not None and self.pad_factor < 1:
            raise ValueError("pad_factor must be >= 1")

    @property
    def N_max(self) -> int:
        return self.M // 2 - 1

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.M,) * self.d

    @property
    def size(self) -> int:
        return self.M**self.d

    @property
    def weight(self) -> float:
        """Quadrature weight per grid point (unit-volume torus)."""
        return 1.0 / self.size

    def freqs(self) -> np.ndarray:
        """Integer frequencies along one axis in FFT order."""
        return _freqs(self.M)

    def axis_freqs(self) -> list[np.ndarray]:
        """Per-axis integer frequencies shaped for broadcasting."""
        return _axis_freqs(self.M, self.d)

    def nsq(self) -> np.ndarray:
        """``|n|^2`` on the full FFT layout (float array, read only)."""
        return _nsq(self.M, self.d)

    def band_mask(self) -> np.ndarray:
        """True where every ``|n_i| <= N_max`` (Nyquist planes excluded)."""
        return _band_mask(self.M, self.d)

    def points(self) -> list[np.ndarray]:
        """Physical coordinates ``x_i = j / M`` shaped for broadcasting."""
        x = np.arange(self.M) / self.M
        out = []
        for i in range(self.d):
            shp = [1] * self.d
            shp[i] = self.M
            out.append(x.reshape(shp))
        return out


@functools.lru_cache(maxsize=None)
def _freqs(M: int) -> np.ndarray:
    f = np.fft.fftfreq(M, 1.0 / M).round().astype(np.int64)
    f.setflags(write=False)
    return f


@functools.lru_cache(maxsize=None)
def _axis_freqs(M: int, d: int) -> list[np.ndarray]:
    f = _freqs(M)
    out = []
    for i in range(d):
        shp = [1] * d
        shp[i] = M
        out.append(f.reshape(shp))
    return out


@functools.lru_cache(maxsize=64)
def _nsq(M: int, d: int) -> np.ndarray:
    total = np.zeros((M,) * d)
    for fi in _axis_freqs(M, d):
        total = total + fi.astype(float) ** 2
    total.setflags(write=False)
    return total


@functools.lru_cache(maxsize=64)
def _band_mask(M: int, d: int) -> np.ndarray:
    ok = np.abs(_freqs(M)) < M // 2
    mask = np.ones((M,) * d, dtype=bool)
    for i in range(d):
        shp = [1] * d
        shp[i] = M
        mask = mask & ok.reshape(shp)
    mask.setflags(write=False)
    return mask


def _trailing_axes(d: int) -> tuple[int, ...]:
    return tuple(range(-d, 0))


def _reflect(coeffs: np.ndarray, d: int) -> np.ndarray:
    """Return the array ``c(-n)`` in FFT layout."""
    axes = _trailing_axes(d)
    return np.roll(np.flip(coeffs, axis=axes), 1, axis=axes)


@dataclass
class SpectralField:
    """Fourier coefficients of a real field (optionally a batch of fields).

    ``coeffs`` has shape ``batch + (M,) * d``; leading axes index ensemble
    members.  Real-valuedness means Hermitian symmetry ``c(-n) = conj c(n)``.
    """

    grid: Grid
    coeffs: np.ndarray
    blown_up: bool = field(default=False)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape[self.coeffs.ndim - self.grid.d:] != self.grid.shape or self.coeffs.ndim < self.grid.d:
            raise DimensionError(
                f"coefficient array of shape {self.coeffs.shape} does not end with grid shape {self.grid.shape}"
            )

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[: self.coeffs.ndim - self.grid.d]

    @classmethod
    def zeros(cls, grid: Grid, batch: tuple[int, ...] = ()) -> "SpectralField":
        return cls(grid, np.zeros(batch + grid.shape, dtype=complex))

    @classmethod
    def from_modes(cls, grid: Grid, modes: dict) -> "SpectralField":
        """Build a field from ``{n: value}``; the conjugate mode is filled in."""
        c = np.zeros(grid.shape, dtype=complex)
        for n, val in modes.items():
            n = tuple(int(v) for v in n)
            if len(n) != grid.d or max(abs(v) for v in n) > grid.N_max:
                raise ValueError(f"mode {n} not representable on {grid}")
            c[tuple(v % grid.M for v in n)] = val
            c[tuple(-v % grid.M for v in n)] = np.conj(val)
        return cls(grid, c)

    def mode(self, n: Sequence[int]) -> np.ndarray | complex:
        """Coefficient(s) at integer frequency ``n``."""
        idx = tuple(int(v) % self.grid.M for v in n)
        return self.coeffs[(Ellipsis,) + idx]

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs.copy(), self.blown_up)

    def physical(self) -> np.ndarray:
        return inverse_transform(self)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        ref = np.conj(_reflect(self.coeffs, self.grid.d))
        scale = max(1.0, float(np.max(np.abs(self.coeffs), initial=0.0)))
        return bool(np.max(np.abs(self.coeffs - ref), initial=0.0) <= tol * scale)

    def hermitian_part(self) -> "SpectralField":
        ref = np.conj(_reflect(self.coeffs, self.grid.d))
        return SpectralField(self.grid, 0.5 * (self.coeffs + ref))

    def band_limited(self) -> "SpectralField":
        """Copy with the Nyquist planes cleared."""
        return SpectralField(self.grid, np.where(self.grid.band_mask(), self.coeffs, 0.0))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.coeffs)))

    def _check(self, other: "SpectralField"):
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.grid, -self.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__


# ---------------------------------------------------------------------------
# transforms


def forward_transform(samples: np.ndarray, grid: Grid) -> SpectralField:
    """Fourier coefficients of real samples on ``grid`` (leading batch axes allowed)."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim < grid.d or samples.shape[samples.ndim - grid.d:] != grid.shape:
        raise DimensionError(f"expected samples ending with shape {grid.shape}, got {samples.shape}")
    c = sfft.fftn(samples, axes=_trailing_axes(grid.d), workers=FFT_WORKERS) / grid.size
    return SpectralField(grid, c)


def inverse_transform(f: SpectralField) -> np.ndarray:
    """Physical samples of a field on its own grid."""
    vals = sfft.ifftn(f.coeffs, axes=_trailing_axes(f.grid.d), workers=FFT_WORKERS)
    return vals.real * f.grid.size


def _index_lists(M_src: int, M_dst: int, K: int):
    """Index maps for frequencies ``-K..K`` between two FFT layouts."""
    fr = np.arange(-K, K + 1)
    return fr % M_src, fr % M_dst


def _embed_half(coeffs: np.ndarray, M: int, P: int, d: int, K: int | None = None) -> np.ndarray:
    """Embed full-layout coefficients (size ``M``) into a half spectrum of size ``P``.

    Only frequencies ``|n_i| <= K`` (default ``M/2 - 1``) are copied, which
    drops the Nyquist planes.
    """
    K = M // 2 - 1 if K is None else K
    batch = coeffs.shape[: coeffs.ndim - d]
    out = np.zeros(batch + (P,) * (d - 1) + (P // 2 + 1,), dtype=complex)
    src, dst = _index_lists(M, P, K)
    last = np.arange(0, K + 1)
    src_ix = np.ix_(*([src] * (d - 1) + [last]))
    dst_ix = np.ix_(*([dst] * (d - 1) + [last]))
    out[(Ellipsis,) + dst_ix] = coeffs[(Ellipsis,) + src_ix]
    return out


def _extract_full(half: np.ndarray, P: int, M_out: int, d: int) -> np.ndarray:
    """Full-layout coefficients ``|n_i| <= M_out/2 - 1`` from a real half spectrum."""
    K = M_out // 2 - 1
    batch = half.shape[: half.ndim - d]
    out = np.zeros(batch + (M_out,) * d, dtype=complex)
    fr = np.arange(-K, K + 1)
    src_all = fr % P
    dst_all = fr % M_out
    nonneg = np.arange(0, K + 1)
    out[(Ellipsis,) + np.ix_(*([dst_all] * (d - 1) + [nonneg]))] = half[
        (Ellipsis,) + np.ix_(*([src_all] * (d - 1) + [nonneg]))
    ]
    if K > 0:
        neg = np.arange(-K, 0)
        # c(n) = conj c(-n) for the negative last-axis frequencies
        src_neg = (-fr) % P
        out[(Ellipsis,) + np.ix_(*([dst_all] * (d - 1) + [neg % M_out]))] = np.conj(
            half[(Ellipsis,) + np.ix_(*([src_neg] * (d - 1) + [-neg]))]
        )
    return out


def to_physical(f: SpectralField, P: int | None = None, K: int | None = None) -> np.ndarray:
    """Exact samples of the band-limited part of ``f`` on a ``P^d`` grid.

    Args:
        f: field (batch allowed).
        P: padded points per axis (default: the field's own grid size).
        K: optional smaller per-axis band to keep.
    """
    g = f.grid
    P = g.M if P is None else int(P)
    if P < g.M and (K is None or 2 * K + 1 >= P):
        raise ValueError("target grid too small for the requested band")
    half = _embed_half(f.coeffs, g.M, P, g.d, K)
    vals = sfft.irfftn(half, s=(P,) * g.d, axes=_trailing_axes(g.d), workers=FFT_WORKERS)
    return vals * P**g.d


def from_physical(values: np.ndarray, out_grid: Grid) -> SpectralField:
    """Band-limited projection of samples on a ``P^d`` grid onto ``out_grid``."""
    d = out_grid.d
    P = values.shape[-1]
    if 2 * out_grid.N_max + 1 > P:
        raise ValueError("output band exceeds the sampling grid")
    half = sfft.rfftn(values, axes=_trailing_axes(d), workers=FFT_WORKERS) / P**d
    return SpectralField(out_grid, _extract_full(half, P, out_grid.M, d))


# ---------------------------------------------------------------------------
# multipliers

_KINDS = (
    "projector",
    "littlewood-paley",
    "i-operator",
    "i-operator-smooth",
    "bessel",
    "sin-propagator",
    "damped-dispersion",
)


@dataclass(frozen=True)
class MultiplierSpec:
    """A radial Fourier multiplier.

    Kinds and parameters:

    * ``projector``: sharp cutoff onto ``|n| <= N``.
    * ``littlewood-paley``: ``phi_N`` for dyadic ``N`` (see :func:`lp_bump`).
    * ``i-operator``: ``min(1, (N/|n|)^(2-s))``; ``i-operator-smooth`` blends
      the two regimes over ``N <= |n| <= 2N`` with a C2 smoothstep in
      ``log|n|``.
    * ``bessel``: ``<n>^s``.
    * ``sin-propagator``: ``sin(t|n|^2)/|n|^2`` with value ``t`` at ``n = 0``;
      the time is passed as ``t``.  This is the only signed kind.
    * ``damped-dispersion``: ``<<n>>^2 = (<n>^4 - 1/4)^(1/2)``.
    """

    kind: str
    N: float | None = None
    s: float | None = None
    t: float | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown multiplier kind {self.kind!r}; expected one of {_KINDS}")
        if self.kind in ("projector", "littlewood-paley", "i-operator", "i-operator-smooth"):
            if self.N is None or not np.isfinite(self.N) or self.N < (0 if self.kind == "projector" else 1):
                raise ValueError(f"{self.kind} requires a cutoff N >= 1, got {self.N!r}")
        if self.kind == "littlewood-paley":
            lg = math.log2(self.N)
            if abs(lg - round(lg)) > 1e-12:
                raise ValueError(f"Littlewood-Paley scale must be dyadic, got {self.N}")
        if self.kind in ("i-operator", "i-operator-smooth"):
            if self.s is None or not 0 < self.s < 2:
                raise ValueError(f"I-operator needs 0 < s < 2, got {self.s!r}")
        if self.kind == "bessel" and (self.s is None or not np.isfinite(self.s)):
            raise ValueError("bessel multiplier needs a finite exponent s")
        if self.kind == "sin-propagator" and (self.t is None or not np.isfinite(self.t)):
            raise ValueError("sin-propagator needs a time t")

    def __call__(self, nsq: np.ndarray) -> np.ndarray:
        """Evaluate the symbol at ``|n|^2`` values."""
        return _symbol_from_nsq(self, np.asarray(nsq, dtype=float))


def _smoothstep(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)


def i_operator_symbol(r: np.ndarray, N: float, s: float, smooth: bool = False) -> np.ndarray:
    """I-operator symbol ``m_N`` at radii ``r = |n|``."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        logratio = np.log(np.maximum(r, 1e-300) / N)
    if not smooth:
        return np.where(r <= N, 1.0, np.exp(-(2.0 - s) * np.maximum(logratio, 0.0)))
    theta = logratio / math.log(2.0)
    w = np.where(r <= N, 0.0, np.where(theta >= 1.0, 1.0, _smoothstep(theta)))
    return np.where(r <= N, 1.0, np.exp(-(2.0 - s) * np.maximum(logratio, 0.0) * w))


def lp_bump(r: np.ndarray) -> np.ndarray:
    """Smooth bump: 1 on ``|r| <= 5/4``, 0 on ``|r| >= 8/5``.

    In between, with ``x = (|r| - 5/4) / (8/5 - 5/4)``, the value is
    ``f(1 - x) / (f(1 - x) + f(x))`` where ``f(y) = exp(-1/y)`` for ``y > 0``.
    """
    a, b = 1.25, 1.6
    r = np.abs(np.asarray(r, dtype=float))
    x = np.clip((r - a) / (b - a), 0.0, 1.0)

    def f(y):
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(y > 0, np.exp(-1.0 / np.where(y > 0, y, 1.0)), 0.0)

    fa, fb = f(1.0 - x), f(x)
    return np.where(r <= a, 1.0, np.where(r >= b, 0.0, fa / np.where(fa + fb > 0, fa + fb, 1.0)))


def _symbol_from_nsq(spec: MultiplierSpec, nsq: np.ndarray) -> np.ndarray:
    r = np.sqrt(nsq)
    kind = spec.kind
    if kind == "projector":
        return (nsq <= spec.N * spec.N * (1 + 1e-14)).astype(float)
    if kind == "littlewood-paley":
        if spec.N == 1:
            return lp_bump(r)
        return lp_bump(r / spec.N) - lp_bump(2.0 * r / spec.N)
    if kind == "i-operator":
        return i_operator_symbol(r, spec.N, spec.s)
    if kind == "i-operator-smooth":
        return i_operator_symbol(r, spec.N, spec.s, smooth=True)
    if kind == "bessel":
        return (1.0 + nsq) ** (0.5 * spec.s)
    if kind == "sin-propagator":
        return _sin_over(spec.t, nsq)
    if kind == "damped-dispersion":
        return np.sqrt((1.0 + nsq) ** 2 - 0.25)
    raise AssertionError(kind)


def _sin_over(t, omega):
    """``sin(t omega) / omega`` with the limit ``t`` at ``omega = 0``."""
    omega = np.asarray(omega, dtype=float)
    safe = np.where(omega == 0, 1.0, omega)
    return np.where(omega == 0, t, np.sin(t * omega) / safe)


def multiplier_symbol(spec: MultiplierSpec, grid: Grid) -> np.ndarray:
    """Symbol values on the grid's FFT layout (cached, read only)."""
    return _cached_symbol(spec, grid.M, grid.d)


@functools.lru_cache(maxsize=128)
def _cached_symbol(spec: MultiplierSpec, M: int, d: int) -> np.ndarray:
    out = _symbol_from_nsq(spec, _nsq(M, d))
    out.setflags(write=False)
    return out


def apply_multiplier(f: SpectralField, spec: MultiplierSpec) -> SpectralField:
    return SpectralField(f.grid, f.coeffs * multiplier_symbol(spec, f.grid))


def dyadic_scales(grid: Grid) -> list[int]:
    """Dyadic ``N = 1, 2, 4, ...`` whose Littlewood-Paley pieces cover the grid."""
    rmax = math.sqrt(grid.d) * grid.M / 2
    scales = [1]
    while 1.25 * scales[-1] < rmax:
        scales.append(2 * scales[-1])
    return scales


def littlewood_paley(f: SpectralField, N: int) -> SpectralField:
    return apply_multiplier(f, MultiplierSpec("littlewood-paley", N=N))


# ---------------------------------------------------------------------------
# norms


def sobolev_norm(f: SpectralField, s: float) -> np.ndarray | float:
    """``(sum_n <n>^(2s) |c(n)|^2)^(1/2)``, one value per batch member."""
    w = (1.0 + f.grid.nsq()) ** s
    val = np.sqrt(np.sum(w * np.abs(f.coeffs) ** 2, axis=_trailing_axes(f.grid.d)))
    return float(val) if np.ndim(val) == 0 else val


def lebesgue_norm(f: SpectralField, p: float, sigma: float = 0.0, refine: int = 1) -> np.ndarray | float:
    """Discrete ``W^{sigma,p}`` norm: apply ``<n>^sigma`` then grid quadrature.

    Args:
        f: field.
        p: exponent in ``[1, inf]``; ``inf`` gives the grid maximum.
        sigma: Bessel exponent applied first.
        refine: evaluate on a grid ``refine`` times finer (zero padded);
            with ``refine * M > p * N_max`` and even ``p`` the quadrature is
            exact for the band-limited field.
    """
    if not (p >= 1):
        raise ValueError("p must be >= 1")
    g = f.grid
    if sigma != 0.0:
        f = apply_multiplier(f, MultiplierSpec("bessel", s=sigma))
    if refine == 1:
        vals = inverse_transform(f)
    else:
        vals = to_physical(f, refine * g.M)
    axes = _trailing_axes(g.d)
    a = np.abs(vals)
    if math.isinf(p):
        out = np.max(a, axis=axes)
    else:
        out = np.mean(a**p, axis=axes) ** (1.0 / p)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# products


def required_padded_size(k: int, K_in: int, K_out: int) -> int:
    """Smallest even ``P`` with ``P > k*K_in + K_out`` (alias-free projection)."""
    P = k * K_in + K_out + 1
    return P + (P % 2)


def _padded_size(grid: Grid, k: int, K_out: int, pad_size: int | None) -> int:
    need = k * grid.N_max + K_out
    if pad_size is not None:
        P = int(pad_size)
        if P <= need:
            req = -(-(need + 1) // grid.M)
            raise PaddingError(
                f"padded size {P} too small for a degree-{k} product on M={grid.M}; "
                f"need more than {need} points per axis (pad_factor >= {req})",
                req,
            )
        return P
    pf = grid.pad_factor if grid.pad_factor is not None else -(-(k + 1) // 2)
    P = pf * grid.M
    if P <= need:
        req = -(-(need + 1) // grid.M)
        raise PaddingError(
            f"pad_factor {pf} too small for a degree-{k} product on M={grid.M} "
            f"(output band {K_out}); required pad_factor >= {req}",
            req,
        )
    return P


def dealiased_product(*fields: SpectralField, out_grid: Grid | None = None, pad_size: int | None = None) -> SpectralField:
    """Exact Fourier coefficients of a pointwise product of band-limited fields.

    The factors are zero padded to ``P`` points per axis, multiplied in
    physical space and transformed back.  Retained modes are exact as long as
    ``P > k*N_in + N_out``; the default ``P = ceil((k+1)/2) * M`` satisfies this
    for ``out_grid`` equal to the input grid.  Nyquist-plane content of the
    inputs is ambiguous and is discarded.

    Raises:
        PaddingError: if the padded grid cannot hold the product exactly.
    """
    if not fields:
        raise ValueError("need at least one factor")
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise ValueError("all factors must share one grid")
    out_grid = g if out_grid is None else out_grid
    if out_grid.d != g.d:
        raise ValueError("output grid dimension differs")
    P = _padded_size(g, len(fields), out_grid.N_max, pad_size)
    prod = to_physical(fields[0], P)
    for f in fields[1:]:
        prod = prod * to_physical(f, P)
    return from_physical(prod, out_grid)


def integrate_power(f: SpectralField, p: int, pad_size: int | None = None) -> np.ndarray | float:
    """Exact ``int f^p dx`` for a band-limited field and integer ``p >= 1``."""
    g = f.grid
    P = _padded_size(g, p, 0, pad_size)
    vals = to_physical(f, P)
    out = np.mean(vals**p, axis=_trailing_axes(g.d))
    return float(out) if np.ndim(out) == 0 else out


def random_field(grid: Grid, s: float, rng: np.random.Generator, band: int | None = None,
                 normalize: bool = True, batch: tuple[int, ...] = ()) -> SpectralField:
    """Gaussian field with ``<n>^(-s-d/2)`` coefficient decay, unit ``H^s`` norm.

    The decay sits at the ``H^s`` borderline in every dimension; on the 4D
    torus it is ``<n>^(-s-2)``.

    Args:
        grid: target grid.
        s: regularity index used for both decay and normalization.
        rng: numpy generator (seeded by the caller).
        band: optional Euclidean band limit ``|n| <= band``.
        normalize: scale each member to unit ``H^s`` norm.
        batch: leading batch shape.
    """
    shape = batch + grid.shape
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    nsq = grid.nsq()
    amp = (1.0 + nsq) ** (-(s + grid.d / 2.0) / 2.0) * grid.band_mask()
    if band is not None:
        amp = amp * (nsq <= band * band)
    f = SpectralField(grid, z * amp).hermitian_part()
    zero = (0,) * grid.d
    f.coeffs[(Ellipsis,) + zero] = f.coeffs[(Ellipsis,) + zero].real
    if normalize:
        nrm = np.asarray(sobolev_norm(f, s))
        f.coeffs /= nrm.reshape(nrm.shape + (1,) * grid.d)
    return f
