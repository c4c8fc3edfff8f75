"""I-method diagnostics.

The I-operator ``I = I_N`` has symbol ``m_N(n) = 1`` for ``|n| <= N`` and
``(N/|n|)^(2-s)`` above; it maps ``H^s`` into ``H^2``.  This module evaluates
the modified energy ``E(I v)``, audits its increment along remainder
trajectories of the cubic equation, and measures the scaling laws behind
the commutator and Strichartz estimates.

Fields whose Fourier support lies in the 2D sublattice ``n_3 = n_4 = 0`` are
genuine functions on the 4D torus that do not depend on the last two
coordinates.  Their products stay in the sublattice, the I-operator acts on
them through the 2D norm, and every ``L^p`` norm equals the 2D one, so such
fields are computed exactly on a 2D grid.  The scaling probes accept
``dim=2`` for this embedding, which reaches frequencies far beyond what a
native 4D grid allows.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import scipy.fft as sfft
from scipy import stats
from scipy.special import ndtr

from .dynamics import RemainderNode
from . import spectral as _spectral
from .noise import NoiseStream, Tag
from .spectral import (
    Grid,
    MultiplierSpec,
    SpectralField,
    _padded_size,
    apply_multiplier,
    from_physical,
    integrate_power,
    lebesgue_norm,
    random_field,
    to_physical,
)
from .state import PairState
from .wick import hermite, mode_variance_undamped, shell_counts

__all__ = [
    "i_operator",
    "modified_energy",
    "h2_norm_sq",
    "EnergyLedger",
    "energy_increment_audit",
    "ScalingReport",
    "fit_slope",
    "commutator_scaling",
    "strichartz_probe",
    "ipsi_variance",
    "iPsi_exponential_moment",
    "energy_pairing",
    "double_exponential_envelope",
    "audit_run",
]


def i_operator(N: float, s: float) -> MultiplierSpec:
    if not 0 < s < 2:
        raise ValueError(f"the I-operator needs 0 < s < 2, got s={s}")
    return MultiplierSpec("i-operator", N=N, s=s)


def _inner(a: SpectralField, b: SpectralField):
    """``int a b dx`` for real fields on one grid (per batch member)."""
    ax = tuple(range(-a.grid.d, 0))
    out = np.sum((np.conj(a.coeffs) * b.coeffs).real, axis=ax)
    return float(out) if np.ndim(out) == 0 else out


def modified_energy(state: PairState, N: float, s: float, pad_size: int | None = None):
    """``E(I v) = 1/2 ||Delta I v||^2 + 1/2 ||I v_t||^2 + 1/4 int (I v)^4``.

    The quartic term is integrated exactly on a padded grid.

    Raises:
        PaddingError: if ``pad_size`` is too small for the quartic term.
    """
    I = i_operator(N, s)
    iv = apply_multiplier(state.position, I)
    ivt = apply_multiplier(state.velocity, I)
    g = state.grid
    ax = tuple(range(-g.d, 0))
    quad = 0.5 * np.sum(g.nsq() ** 2 * np.abs(iv.coeffs) ** 2, axis=ax) + 0.5 * np.sum(np.abs(ivt.coeffs) ** 2, axis=ax)
    out = quad + 0.25 * np.asarray(integrate_power(iv, 4, pad_size))
    return float(out) if np.ndim(out) == 0 else out


def h2_norm_sq(f: SpectralField):
    """``||f||_{L^2}^2 + ||Delta f||_{L^2}^2``."""
    g = f.grid
    out = np.sum((1.0 + g.nsq() ** 2) * np.abs(f.coeffs) ** 2, axis=tuple(range(-g.d, 0)))
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# energy increment audit


@dataclass
class EnergyLedger:
    """Modified energy along a trajectory and its decomposition per interval.

    ``commutator``, ``cross`` and ``pure`` hold the trapezoid integrals of the
    three increment terms over each interval ``[t_i, t_{i+1}]``;
    ``defect[i]`` is the energy change minus their sum.
    """

    N: float
    s: float
    times: list
    energy: list
    commutator: list = field(default_factory=list)
    cross: list = field(default_factory=list)
    pure: list = field(default_factory=list)
    defect: list = field(default_factory=list)

    @property
    def total_defect(self) -> float:
        """Telescoped defect ``E(T) - E(0) - sum of all terms``."""
        return float(sum(self.defect))

    @property
    def max_interval_defect(self) -> float:
        return float(max((abs(x) for x in self.defect), default=0.0))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["total_defect"] = self.total_defect
        d["schema"] = "wickbeam.energy_ledger/1"
        return d

    def csv_rows(self) -> list[list]:
        rows = [["t_start", "t_end", "E_start", "E_end", "commutator", "cross", "pure", "defect"]]
        for i in range(len(self.defect)):
            rows.append([repr(self.times[i]), repr(self.times[i + 1]), repr(self.energy[i]), repr(self.energy[i + 1]),
                         repr(self.commutator[i]), repr(self.cross[i]), repr(self.pure[i]), repr(self.defect[i])])
        return rows


def _increment_integrands(node: RemainderNode, I: MultiplierSpec, pad_size: int | None):
    """Integrands of the three energy increment terms at one node."""
    st = node.state
    g = st.grid
    P = _padded_size(g, 3, g.N_max, pad_size)
    ivt = apply_multiplier(st.velocity, I)
    v = to_physical(st.position, P)
    iv = to_physical(apply_multiplier(st.position, I), P)
    comm = from_physical(iv**3, g) - apply_multiplier(from_physical(v**3, g), I)
    a = _inner(ivt, comm)
    if node.psi is None:
        return a, 0.0, 0.0
    psi = to_physical(node.psi, P)
    sig = node.sigma
    cross = from_physical(v * v * psi + v * hermite(2, psi, sig), g)
    pure = from_physical(hermite(3, psi, sig), g)
    b = -3.0 * _inner(ivt, apply_multiplier(cross, I))
    c = -_inner(ivt, apply_multiplier(pure, I))
    return a, b, c


def energy_increment_audit(nodes: Sequence[RemainderNode], N: float, s: float,
                           pad_size: int | None = None) -> EnergyLedger:
    """Decompose ``E(I v)(t_{i+1}) - E(I v)(t_i)`` along a cubic defocusing run.

    For ``v'' + Delta^2 v + :(Psi + v)^3: = 0`` the increment equals the time
    integral of

    * ``int (d_t I v) {(I v)^3 - I(v^3)}`` (commutator term),
    * ``-3 int (d_t I v) {I(v^2 Psi) + I(v :Psi^2:)}`` (cross Wick terms),
    * ``-int (d_t I v) I(:Psi^3:)`` (pure noise term).

    Each is integrated with the trapezoid rule on the stored nodes; the
    defect is what the quadrature and the time stepper leave unexplained.

    Args:
        nodes: trajectory nodes (for example from ``iter_remainder``), each
            carrying ``v``, ``v_t`` and ``Psi`` with its variance; a node
            with ``psi=None`` means ``Psi = 0``.
        N: I-operator cutoff.
        s: I-operator regularity.

    Raises:
        ValueError: if some nodes carry Wick data and others do not.
    """
    nodes = list(nodes)
    if len(nodes) < 2:
        raise ValueError("the audit needs at least two nodes")
    have = [n.psi is not None for n in nodes]
    if any(have) and not all(have):
        missing = [n.t for n in nodes if n.psi is None]
        raise ValueError(f"Wick data missing at nodes t={missing[:5]}")
    I = i_operator(N, s)
    times = [float(n.t) for n in nodes]
    energy = [float(modified_energy(n.state, N, s, pad_size)) for n in nodes]
    terms = [_increment_integrands(n, I, pad_size) for n in nodes]
    led = EnergyLedger(N, s, times, energy)
    for i in range(len(nodes) - 1):
        h = times[i + 1] - times[i]
        a = 0.5 * h * (terms[i][0] + terms[i + 1][0])
        b = 0.5 * h * (terms[i][1] + terms[i + 1][1])
        c = 0.5 * h * (terms[i][2] + terms[i + 1][2])
        led.commutator.append(a)
        led.cross.append(b)
        led.pure.append(c)
        led.defect.append(energy[i + 1] - energy[i] - (a + b + c))
    return led


# ---------------------------------------------------------------------------
# scaling fits


@dataclass
class ScalingReport:
    """Measured quantity against ``N`` with a log-log slope fit.

    ``passed`` applies the one-sided rule ``slope <= target + tolerance``
    (the estimates are upper bounds).  An identically vanishing quantity is
    reported with ``exact_zero=True`` and no slope.
    """

    quantity: str
    N: list
    values: list
    target: float | None
    tolerance: float = 0.15
    slope: float | None = None
    ci_low: float | None = None
    ci_high: float | None = None
    exact_zero: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        if self.exact_zero:
            return True
        if self.slope is None or self.target is None:
            return False
        return self.slope <= self.target + self.tolerance

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        d["schema"] = "wickbeam.scaling_report/1"
        return d

    def csv_rows(self) -> list[list]:
        rows = [["N", self.quantity]]
        rows += [[repr(float(n)), repr(float(v))] for n, v in zip(self.N, self.values)]
        return rows

    def gnuplot_script(self, csv_name: str) -> str:
        """A gnuplot script plotting the data and the fitted power law."""
        lines = [
            "set datafile separator ','",
            "set logscale xy",
            "set key top right",
            "set xlabel 'N'",
            f"set ylabel '{self.quantity}'",
        ]
        plot = f"plot '{csv_name}' using 1:2 skip 1 with linespoints title 'measured'"
        if self.slope is not None and self.values and self.values[0] > 0:
            n0, v0 = float(self.N[0]), float(self.values[0])
            plot += f", {v0!r}*(x/{n0!r})**({self.slope!r}) title 'slope {self.slope:.3f}'"
        lines.append(plot)
        return "\n".join(lines) + "\n"


def fit_slope(N: Sequence[float], values: Sequence[float], level: float = 0.95):
    """Least-squares slope of ``log values`` on ``log N`` with a ``level`` interval."""
    N = np.asarray(N, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(N) < 3 or len(np.unique(N)) < 3:
        raise ValueError("a scaling fit needs at least three distinct N values")
    if np.any(values <= 0):
        raise ValueError("log-log fit needs positive values")
    res = stats.linregress(np.log(N), np.log(values))
    q = stats.t.ppf(0.5 + level / 2, len(N) - 2)
    return float(res.slope), float(res.slope - q * res.stderr), float(res.slope + q * res.stderr)


def _sublattice_grid(K: int, dim: int) -> Grid:
    return Grid(2 * K + 2, dim)


def _full_coeffs(f: SpectralField, P: int, K: int | None = None) -> np.ndarray:
    """Full FFT-layout coefficients of ``f`` on a ``P^d`` grid (zero padded)."""
    vals = to_physical(f, P, K)
    return sfft.fftn(vals, axes=tuple(range(-f.grid.d, 0))) / P**f.grid.d


def _i_symbol(P: int, d: int, N: float, s: float) -> np.ndarray:
    fr = np.fft.fftfreq(P, 1.0 / P)
    nsq = np.zeros((P,) * d)
    for i in range(d):
        shape = [1] * d
        shape[i] = P
        nsq = nsq + (fr.reshape(shape)) ** 2
    from .spectral import i_operator_symbol

    return i_operator_symbol(np.sqrt(nsq), N, s)


def commutator_scaling(k: int, s: float, N_list: Sequence[float], n_samples: int = 8, seed: int = 0,
                       variant: str = "C1", band: int | None = None, dim: int = 2, gamma: float | None = None,
                       gamma0: float = 0.05, p: float = 40.0, tolerance: float = 0.15) -> ScalingReport:
    """Measure a commutator norm of the I-operator across ``N`` and fit its slope.

    Variants (``f`` an ``H^s``-normalized random field, ``g`` a rough
    Gaussian field of regularity ``0-``):

    * ``C1``: ``||(I f)^k - I(f^k)||_{L^2} / ||I f||_{H^2}^k``, target
      ``-2 + k (2 - s)``;
    * ``C2``: ``||(I f)(I g) - I(f g)||_{L^2} / (||f||_{H^{2-gamma}} ||g||_{W^{-gamma0,p}})``,
      target ``-(1 - gamma)/2``;
    * ``C3``: ``||I(f^k g) - (I f)^k I g||_{L^2} / (||I f||_{H^2}^k ||g||_{W^{-gamma0,p}})``,
      target ``-(1 - k (2 - s))/2``.

    The value per ``N`` is the sample mean of the ratio over ``n_samples``
    fields drawn once (common random numbers across ``N``).

    Args:
        k: power (1, 2 or 3 for C1; 1 or 2 for C3).
        s: regularity index.
        N_list: at least three distinct cutoffs.
        n_samples: number of random fields.
        seed: seed of the field generator.
        variant: ``C1``, ``C2`` or ``C3``.
        band: frequency band of the random fields (default ``4 max(N)``).
        dim: 2 for the sublattice embedding, 4 for native 4D fields.
        gamma: C2 exponent (default ``k (2 - s)``).
        gamma0, p: norm of the rough factor ``g``.

    Raises:
        ValueError: with fewer than three distinct ``N`` values.
    """
    N_list = [float(n) for n in N_list]
    if len(set(N_list)) < 3:
        raise ValueError("a scaling fit needs at least three distinct N values")
    if variant not in ("C1", "C2", "C3"):
        raise ValueError(f"unknown commutator variant {variant!r}")
    if variant == "C2":
        k = 1
    if k < 1:
        raise ValueError("k must be positive")
    K = int(band) if band is not None else int(4 * max(N_list))
    grid = _sublattice_grid(K, dim)
    rng = np.random.default_rng(seed)
    fs = random_field(grid, s, rng, band=K, batch=(n_samples,))
    degree = k + (0 if variant == "C1" else 1)
    P = 2 * degree * K + 2  # exact coefficients of the degree-``degree`` product
    axes = tuple(range(-dim, 0))
    if variant != "C1":
        amp = (1.0 + grid.nsq()) ** (-dim / 4.0) * grid.band_mask() * (grid.nsq() <= K * K)
        z = rng.standard_normal((n_samples,) + grid.shape) + 1j * rng.standard_normal((n_samples,) + grid.shape)
        gs = SpectralField(grid, z * amp).hermitian_part()
        g_norm = np.atleast_1d(lebesgue_norm(gs, p, sigma=-gamma0, refine=2))
    if gamma is None:
        gamma = k * (2 - s)
    if variant == "C1":
        target = -2.0 + k * (2.0 - s)
    elif variant == "C2":
        target = -(1.0 - gamma) / 2.0
    else:
        target = -(1.0 - k * (2.0 - s)) / 2.0
    fr = np.fft.fftfreq(P, 1.0 / P)
    nsqP = sum(np.meshgrid(*([fr**2] * dim), indexing="ij"))
    symbols = [_i_symbol(P, dim, N, s) for N in N_list]
    ratios = np.zeros((len(N_list), n_samples))

    def phys(c):
        return sfft.ifftn(c, axes=axes, workers=_spectral.FFT_WORKERS).real * P**dim

    def spec(v):
        return sfft.fftn(v, axes=axes, workers=_spectral.FFT_WORKERS) / P**dim

    for i in range(n_samples):
        fhat = _full_coeffs(SpectralField(grid, fs.coeffs[i]), P, K)
        f_vals = phys(fhat)
        if variant != "C1":
            ghat = _full_coeffs(SpectralField(grid, gs.coeffs[i]), P, K)
            g_vals = phys(ghat)
            fg_hat = spec(f_vals**k * g_vals) if variant == "C3" else spec(f_vals * g_vals)
        else:
            fk_hat = spec(f_vals**k)
        for j, m in enumerate(symbols):
            if_vals = phys(fhat * m)
            If_h2 = math.sqrt(float(np.sum((1.0 + nsqP**2) * np.abs(fhat * m) ** 2)))
            if variant == "C1":
                diff = spec(if_vals**k) - m * fk_hat
                denom = If_h2**k
            elif variant == "C2":
                diff = spec(if_vals * phys(ghat * m)) - m * fg_hat
                f_norm = math.sqrt(float(np.sum((1.0 + nsqP) ** (2.0 - gamma) * np.abs(fhat) ** 2)))
                denom = f_norm * g_norm[i]
            else:
                diff = m * fg_hat - spec(if_vals**k * phys(ghat * m))
                denom = If_h2**k * g_norm[i]
            ratios[j, i] = math.sqrt(float(np.sum(np.abs(diff) ** 2))) / denom
    values = [float(v) for v in ratios.mean(axis=1)]
    zero = bool(np.all(ratios < 1e-13))
    rep = ScalingReport(f"{variant}_ratio_k{k}", N_list, values, target, tolerance,
                        extra={"s": s, "k": k, "band": K, "dim": dim, "n_samples": n_samples, "variant": variant})
    if zero:
        rep.exact_zero = True
        return rep
    rep.slope, rep.ci_low, rep.ci_high = fit_slope(N_list, values)
    return rep


# ---------------------------------------------------------------------------
# Strichartz probe


def _gauss_nodes(n: int, T: float = 1.0):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * T * (x + 1.0), 0.5 * T * w


def strichartz_probe(p: float, N_list: Sequence[int], n_samples: int = 50, seed: int = 0, dim: int = 2,
                     data: str = "random", time_nodes: int = 64) -> ScalingReport:
    """``||e^{it Delta} P_{<=N} f||_{L^p([0,1] x T^4)} / (N^{2-6/p} ||f||_{L^2})`` across ``N``.

    Space integrals use a grid fine enough to integrate ``|u|^p`` exactly for
    even integer ``p`` (``P > p N`` points per axis); time integrals use
    Gauss-Legendre nodes on ``[0, 1]``.  For ``p = inf`` the norm is the
    maximum over a grid refined four times and over the time nodes.

    Args:
        p: Lebesgue exponent (``> 3``).
        N_list: cutoffs.
        n_samples: random data per ``N`` (ignored for deterministic data).
        seed: seed of the data generator.
        dim: 2 for sublattice data, 4 for native 4D data.
        data: ``random`` (complex Gaussian, unit L^2), ``dirichlet``
            (``P_{<=N}`` of a delta) or ``single`` (one unit mode).
        time_nodes: number of Gauss-Legendre nodes in time.

    The reported value per ``N`` is the maximum over samples; the mean is in
    ``extra['mean']`` and the raw norms in ``extra['norms']``.

    Raises:
        ValueError: if ``p <= 3`` (the endpoint ``p = 3`` is excluded).
    """
    p = float(p)
    if not p > 3:
        raise ValueError(f"Strichartz probe needs p > 3 (the endpoint p = 3 is excluded), got p={p}")
    if data not in ("random", "dirichlet", "single"):
        raise ValueError(f"unknown data family {data!r}")
    N_list = [int(n) for n in N_list]
    rng = np.random.default_rng(seed)
    tn, tw = _gauss_nodes(time_nodes)
    maxes, means, norms_out = [], [], []
    for N in N_list:
        if math.isinf(p):
            P = 4 * (2 * N + 2)
        elif p == int(p) and int(p) % 2 == 0:
            P = int(p) * N + 2
        else:
            P = 2 * (int(math.ceil(p)) * N + 2)
        fr = np.fft.fftfreq(P, 1.0 / P)
        nsq = sum(np.meshgrid(*([fr**2] * dim), indexing="ij"))
        ball = nsq <= N * N
        count = 1 if data != "random" else n_samples
        axes = tuple(range(-dim, 0))
        ratios, raw = [], []
        for _ in range(count):
            c = np.zeros((P,) * dim, dtype=complex)
            if data == "random":
                z = rng.standard_normal(int(ball.sum())) + 1j * rng.standard_normal(int(ball.sum()))
                c[ball] = z
            elif data == "dirichlet":
                c[ball] = 1.0
            else:
                c[(N % P,) + (0,) * (dim - 1)] = 1.0
            c /= math.sqrt(float(np.sum(np.abs(c) ** 2)))
            acc = 0.0
            for t, w in zip(tn, tw):
                u = sfft.ifftn(c * np.exp(-1j * t * nsq), axes=axes) * P**dim
                a = np.abs(u)
                if math.isinf(p):
                    acc = max(acc, float(np.max(a)))
                else:
                    acc += w * float(np.mean(a**p))
            norm = acc if math.isinf(p) else acc ** (1.0 / p)
            raw.append(norm)
            ratios.append(norm / N ** (2.0 - 6.0 / p))
        maxes.append(float(np.max(ratios)))
        means.append(float(np.mean(ratios)))
        norms_out.append([float(x) for x in raw])
    rep = ScalingReport(f"strichartz_ratio_p{p:g}", [float(n) for n in N_list], maxes, 0.0, 0.0,
                        extra={"mean": means, "norms": norms_out, "p": p, "dim": dim, "data": data,
                               "time_nodes": time_nodes})
    if len(set(N_list)) >= 3:
        rep.slope, rep.ci_low, rep.ci_high = fit_slope(N_list, maxes)
    return rep


# ---------------------------------------------------------------------------
# I Psi variance and exponential moments


def ipsi_variance(N: float, t: float, s: float, shells: int | None = None) -> float:
    """``Var(I_N Psi(t, x))`` for the undamped stochastic convolution on the 4D lattice.

    The lattice sum is exact over ``|n|^2 <= shells`` (default ``(8N)^2``);
    the remainder uses the continuum shell density ``2 pi^2 r^3`` and the
    large-frequency form ``t / (2 |n|^4)`` of the mode variance.
    """
    if t == 0:
        return 0.0
    m_max = int((8 * N) ** 2) if shells is None else int(shells)
    counts = shell_counts(m_max, 4)
    m = np.arange(m_max + 1, dtype=float)
    from .spectral import i_operator_symbol

    mult = i_operator_symbol(np.sqrt(m), N, s) ** 2
    var = mode_variance_undamped(t, m)
    total = float(np.sum(counts * mult * var))
    R = math.sqrt(m_max + 0.5)
    a = 2.0 * (2.0 - s)
    # int_R^inf 2 pi^2 r^3 (N/r)^a t/(2 r^4) dr
    total += math.pi**2 * t * N**a * R ** (-a) / a
    return total


def iPsi_exponential_moment(N_list: Sequence[float], t_list: Sequence[float], n_samples: int, s: float = 1.8,
                            seed: int = 0) -> dict:
    """Variance of ``I_N Psi(t, x)`` and ``E exp(|I_N Psi(t, x)|)``.

    ``I_N Psi(t, x)`` is a centred Gaussian with the lattice variance of
    :func:`ipsi_variance`.  Samples are drawn from the counter-based stream
    (one per path, shared across ``(N, t)``), giving Monte Carlo estimates of
    the variance and exponential moment next to their exact values
    ``E e^{|X|} = 2 e^{v/2} Phi(sqrt v)``.  The fitted ``C_0`` is the smallest
    constant with ``Var <= C_0 t log N`` on all rows.
    """
    stream = NoiseStream(seed)
    paths = np.arange(n_samples, dtype=np.uint64)
    z = math.sqrt(2.0) * stream.normals(0, 0, paths, Tag.TEST_FIELD).real
    rows = []
    for N in N_list:
        for t in t_list:
            v = ipsi_variance(float(N), float(t), s)
            x = math.sqrt(v) * z
            e = np.exp(np.abs(x))
            rows.append({
                "N": float(N),
                "t": float(t),
                "variance": v,
                "mc_variance": float(np.mean(x * x)),
                "exp_moment": float(2.0 * math.exp(v / 2.0) * ndtr(math.sqrt(v))),
                "mc_exp_moment": float(np.mean(e)),
                "mc_exp_moment_se": float(np.std(e, ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else float("nan"),
            })
    ratios = [r["variance"] / (r["t"] * math.log(r["N"])) for r in rows if r["t"] > 0 and r["N"] > 1]
    return {"rows": rows, "C0": max(ratios) if ratios else 0.0, "s": s, "n_samples": n_samples}


# ---------------------------------------------------------------------------
# auxiliary estimates


def energy_pairing(state: PairState, w: SpectralField, N: float, s: float, k: int, lam: float,
                   pad_size: int | None = None):
    """Both sides of the pairing estimate for ``int (d_t I v)(I v)^k I w``.

    Returns ``(lhs, scale)`` with ``lhs = |int (d_t I v)(I v)^k I w dx|`` and
    ``scale = N^lam (1 + E^{3/4}) ||w||_{W^{-lam,4}}``; the estimate asserts
    ``lhs <= C scale`` with ``C`` independent of the state.
    """
    if k not in (0, 1):
        raise ValueError("the pairing estimate covers k = 0 and k = 1")
    I = i_operator(N, s)
    g = state.grid
    P = _padded_size(g, k + 2, 0, pad_size)
    ivt = to_physical(apply_multiplier(state.velocity, I), P)
    iv = to_physical(apply_multiplier(state.position, I), P)
    iw = to_physical(apply_multiplier(w, I), P)
    lhs = np.abs(np.mean(ivt * iv**k * iw, axis=tuple(range(-g.d, 0))))
    E = np.asarray(modified_energy(state, N, s, pad_size))
    wn = np.asarray(lebesgue_norm(w, 4, sigma=-lam, refine=2))
    scale = N**lam * (1.0 + E**0.75) * wn
    return lhs, scale


def double_exponential_envelope(t, v0_norm: float, C: float = 1.0, c: float = 1.0, C_omega: float = 1.0):
    """``C exp(c log(2 + ||v(0)||) e^{C_omega t^2})``."""
    t = np.asarray(t, dtype=float)
    return C * np.exp(c * math.log(2.0 + v0_norm) * np.exp(C_omega * t * t))


def audit_run(M: int, N: float, s: float, dt: float, T: float, seed: int, noise_cutoff: float | None = None,
              base_dt: float | None = None, noisy: bool = True, amplitude: float = 1.0,
              pad_size: int | None = None) -> EnergyLedger:
    """Integrate the cubic defocusing remainder equation and audit ``E(I v)``.

    The initial remainder is ``amplitude`` times a unit ``H^s`` random field
    (seeded by ``seed``) with zero velocity.  The noise is the undamped
    stochastic convolution with ball cutoff ``noise_cutoff`` (default: the
    grid band), sampled on the common refinement ``base_dt`` so runs at
    different ``dt`` share one Brownian path.
    """
    from .dynamics import IntegratorConfig, iter_remainder
    from .noise import sample_wick_trajectory

    grid = Grid(M, 4)
    n_steps = int(round(T / dt))
    if n_steps < 1 or abs(n_steps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError("T must be a positive multiple of dt")
    rng = np.random.default_rng(seed)
    v0 = random_field(grid, s, rng) * amplitude
    init = PairState(v0, SpectralField.zeros(grid), 0.0)
    enhanced = None
    if noisy:
        times = dt * np.arange(n_steps + 1)
        enhanced = sample_wick_trajectory("undamped", 3, times, NoiseStream(seed), grid, noise_cutoff,
                                          base_dt=base_dt if base_dt is not None else dt)
    cfg = IntegratorConfig(dt=dt, s=s, pad_size=pad_size)
    nodes = list(iter_remainder(init, enhanced, 3, 1, cfg, n_steps))
    return energy_increment_audit(nodes, N, s, pad_size)
