"""Time stepping for the truncated Wick-renormalized beam equations.

Two problems are integrated:

* the remainder ``v = u - Psi`` of the undamped equation,
  ``v'' + Delta^2 v + sign * :(Psi + v)^k: = 0``, with the Wick data of
  ``Psi`` supplied by :class:`~wickbeam.noise.EnhancedData`;
* the damped truncated system
  ``u'' + u' + (1 - Delta)^2 u + pi_N :(pi_N u)^k: = sqrt(2) xi``.

Both use Strang splitting in which the nonlinearity is a velocity kick and
the linear flow is exact.  In the damped case the velocity additionally
undergoes an exact Ornstein-Uhlenbeck step on the modes ``|n| <= N``, while
the modes ``|n| > N`` follow the exact damped linear flow with exact Gaussian
increments.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .noise import (
    EnhancedData,
    ModeSet,
    NoiseStream,
    Tag,
    apply_transition,
    transition_for,
    undamped_transition,
)
from .spectral import Grid, SpectralField, integrate_power, sobolev_norm, to_physical
from .state import PairState
from .wick import hermite, wick_nonlinearity

__all__ = [
    "PairState",
    "BlowUpError",
    "IntegratorConfig",
    "linear_step_undamped",
    "quadratic_energy",
    "hamiltonian_energy",
    "remainder_force",
    "step_remainder",
    "iter_remainder",
    "LowModeBasis",
    "DampedStepper",
    "step_damped",
    "ModelSpec",
    "TrajectoryRecord",
    "run_trajectory",
    "remainder_cutoff_gap",
]


class BlowUpError(RuntimeError):
    """The state norm crossed the blow-up threshold."""

    def __init__(self, t: float, norm: float, threshold: float):
        super().__init__(f"blow-up at t={t:.6g}: norm {norm:.6g} exceeds threshold {threshold:.6g}")
        self.t = t
        self.norm = norm
        self.threshold = threshold


@dataclass(frozen=True)
class IntegratorConfig:
    """Step size, splitting scheme and blow-up criterion.

    Attributes:
        dt: time step (> 0).
        scheme: ``strang`` (default) or ``lie``.
        blowup_threshold: stop when ``||(v, v_t)||_{H^{s'} x H^{s'-2}}`` exceeds it.
        s: regularity of the initial data.
        s_prime: diagnostic index; defaults to ``min(s, 2 - 0.01)``.
        pad_size: optional explicit padded grid size for the nonlinearity.
        noise_refinement: fine noise steps per step for the damped system
            (even; two gives one draw per Ornstein-Uhlenbeck half step).
    """

    dt: float
    scheme: str = "strang"
    blowup_threshold: float = 1e6
    s: float = 1.0
    s_prime: float | None = None
    pad_size: int | None = None
    noise_refinement: int = 2

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.scheme not in ("strang", "lie"):
            raise ValueError(f"unknown splitting scheme {self.scheme!r}")
        if not self.blowup_threshold > 0:
            raise ValueError("blow-up threshold must be positive")
        if self.noise_refinement < 2 or self.noise_refinement % 2:
            raise ValueError("noise_refinement must be an even integer >= 2")

    @property
    def diag_index(self) -> float:
        return min(self.s, 2.0 - 0.01) if self.s_prime is None else self.s_prime


# ---------------------------------------------------------------------------
# undamped linear flow and energies


def _rotate(pos: np.ndarray, vel: np.ndarray, omega: np.ndarray, dt: float):
    """Exact step of ``x'' + omega^2 x = 0`` per mode (free motion at ``omega = 0``)."""
    tr = undamped_transition(omega, dt)
    return apply_transition(tr, pos, vel, None, None)


def linear_step_undamped(state: PairState, dt: float) -> PairState:
    """Apply ``S(dt)`` of ``v'' + Delta^2 v = 0`` mode by mode."""
    omega = state.grid.nsq()
    p, v = _rotate(state.position.coeffs, state.velocity.coeffs, omega, dt)
    g = state.grid
    return PairState(SpectralField(g, p), SpectralField(g, v), state.t + dt)


def quadratic_energy(state: PairState):
    """``1/2 ||Delta v||^2 + 1/2 ||v_t||^2``."""
    g = state.grid
    ax = tuple(range(-g.d, 0))
    val = 0.5 * np.sum(g.nsq() ** 2 * np.abs(state.position.coeffs) ** 2, axis=ax)
    val = val + 0.5 * np.sum(np.abs(state.velocity.coeffs) ** 2, axis=ax)
    return float(val) if np.ndim(val) == 0 else val


def hamiltonian_energy(state: PairState, k: int = 3, pad_size: int | None = None):
    """``1/2 ||Delta v||^2 + 1/2 ||v_t||^2 + 1/(k+1) int v^(k+1)``."""
    return quadratic_energy(state) + np.asarray(integrate_power(state.position, k + 1, pad_size)) / (k + 1)


# ---------------------------------------------------------------------------
# remainder equation


def remainder_force(v: SpectralField, psi: SpectralField | None, sigma: float, k: int, sign: int = 1,
                    pad_size: int | None = None) -> SpectralField:
    """``sign * :(psi + v)^k:`` projected onto the grid."""
    return wick_nonlinearity(v, psi, sigma, k, pad_size) * float(sign)


def _check_norm(state: PairState, config: IntegratorConfig):
    nrm = np.max(np.atleast_1d(state.norm(config.diag_index)))
    if not np.isfinite(nrm) or nrm > config.blowup_threshold:
        raise BlowUpError(state.t, float(nrm), config.blowup_threshold)


def _psi_at(enhanced: EnhancedData | None, t: float):
    if enhanced is None:
        return None, 0.0
    i = enhanced.index_of(t)
    return enhanced.psi_field(i), float(enhanced.sigma[i])


def step_remainder(state: PairState, enhanced: EnhancedData | None, k: int, sign: int,
                   config: IntegratorConfig) -> PairState:
    """One split step of the remainder equation.

    Strang: half kick with the Wick data at ``t``, exact linear step, half
    kick with the data at ``t + dt``.  Lie: full kick then linear step.
    ``enhanced=None`` means no noise (``Psi = 0``, ``sigma = 0``).

    Raises:
        BlowUpError: if the new state exceeds the blow-up threshold.
        KeyError: if the Wick data are missing at a kick time.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 (defocusing) or -1 (focusing)")
    dt = config.dt
    v, vt = state.position, state.velocity
    psi0, s0 = _psi_at(enhanced, state.t)
    if config.scheme == "strang":
        vt = vt - remainder_force(v, psi0, s0, k, sign, config.pad_size) * (0.5 * dt)
        mid = linear_step_undamped(PairState(v, vt, state.t), dt)
        psi1, s1 = _psi_at(enhanced, state.t + dt)
        vt = mid.velocity - remainder_force(mid.position, psi1, s1, k, sign, config.pad_size) * (0.5 * dt)
        out = PairState(mid.position, vt, state.t + dt)
    else:
        vt = vt - remainder_force(v, psi0, s0, k, sign, config.pad_size) * dt
        out = linear_step_undamped(PairState(v, vt, state.t), dt)
    _check_norm(out, config)
    return out


@dataclass
class RemainderNode:
    """A stored node of a remainder trajectory."""

    t: float
    state: PairState
    psi: SpectralField | None
    sigma: float


def iter_remainder(initial: PairState, enhanced: EnhancedData | None, k: int, sign: int,
                   config: IntegratorConfig, n_steps: int) -> Iterator[RemainderNode]:
    """Yield the initial node and the node after each Strang step.

    The closing half kick of one step and the opening half kick of the next
    use the same force, so each step costs one nonlinear evaluation.
    """
    if config.scheme != "strang":
        st = initial
        yield RemainderNode(st.t, st, *_psi_at(enhanced, st.t))
        for _ in range(n_steps):
            st = step_remainder(st, enhanced, k, sign, config)
            yield RemainderNode(st.t, st, *_psi_at(enhanced, st.t))
        return
    dt = config.dt
    st = initial
    psi, sig = _psi_at(enhanced, st.t)
    force = remainder_force(st.position, psi, sig, k, sign, config.pad_size)
    yield RemainderNode(st.t, st, psi, sig)
    for j in range(n_steps):
        t_next = initial.t + (j + 1) * dt
        vt = st.velocity - force * (0.5 * dt)
        mid = linear_step_undamped(PairState(st.position, vt, st.t), dt)
        psi, sig = _psi_at(enhanced, t_next)
        force = remainder_force(mid.position, psi, sig, k, sign, config.pad_size)
        st = PairState(mid.position, mid.velocity - force * (0.5 * dt), t_next)
        _check_norm(st, config)
        yield RemainderNode(st.t, st, psi, sig)


# ---------------------------------------------------------------------------
# damped system


class LowModeBasis:
    """Exact synthesis and analysis of the modes ``|n| <= N``.

    Values are taken on a point set on which every trigonometric polynomial
    with frequencies in the ``(k + 1)``-fold sum set of the low modes is
    integrated exactly.  Projections of degree ``k`` products onto the low
    modes and integrals of degree ``k + 1`` polynomials are then alias free.

    Two point sets are available: a rank-1 lattice ``{j z / Q}`` with a
    Korobov generator ``z = (1, a, a^2, ...) mod Q`` (found by search, used
    when it is smaller), on which synthesis is a 1D FFT of length ``Q``; and
    the tensor grid with ``M_w > (k + 1) N`` points per axis.
    """

    def __init__(self, reps: np.ndarray, k: int, d: int, chunk: int = 4096, allow_lattice: bool = True):
        self.reps = np.asarray(reps, dtype=np.int64)
        self.d = d
        self.k = k
        C = int(np.max(np.abs(self.reps))) if len(self.reps) else 0
        Mw = (k + 1) * C + 1
        Mw = max(4, Mw + (Mw % 2))
        self.Mw = Mw
        self.chunk = chunk
        self.lattice = None
        if allow_lattice and len(self.reps):
            self.lattice = _find_lattice(self.reps, k + 1, d, Mw**d)
        if self.lattice is not None:
            Q, z = self.lattice
            self.Q = Q
            self._bins = (self.reps @ z) % Q
            self._neg_bins = (-self.reps @ z) % Q
        else:
            self.Q = Mw**d
            self._grid = Grid(Mw, d)
            self._modes = ModeSet(self._grid)
            lookup = {tuple(r): i for i, r in enumerate(self._modes.reps)}
            self._idx = np.array([lookup[tuple(r)] for r in self.reps])

    def synth(self, c: np.ndarray) -> np.ndarray:
        """Values ``(P, Q)`` at the quadrature points of coefficients ``(P, K)``."""
        if self.lattice is not None:
            full = np.zeros((c.shape[0], self.Q), dtype=complex)
            full[:, self._neg_bins] = np.conj(c)
            full[:, self._bins] = c
            return np.fft.ifft(full, axis=1).real * self.Q
        full = np.zeros((c.shape[0], len(self._modes)), dtype=complex)
        full[:, self._idx] = c
        vals = to_physical(self._modes.to_field(full))
        return vals.reshape(c.shape[0], -1)

    def analyse(self, f: np.ndarray) -> np.ndarray:
        """Low-mode coefficients ``(P, K)`` of the projection of values ``(P, Q)``."""
        if self.lattice is not None:
            return np.fft.fft(f, axis=1)[:, self._bins] / self.Q
        vals = f.reshape((f.shape[0],) + (self.Mw,) * self.d)
        coeffs = np.fft.fftn(vals, axes=tuple(range(1, self.d + 1))) / self.Mw**self.d
        return self._modes.gather(coeffs)[:, self._idx]

    def mean(self, f: np.ndarray) -> np.ndarray:
        """Exact spatial mean of values ``(P, Q)``."""
        return np.mean(f, axis=1)

    def map_paths(self, fun: Callable[[np.ndarray], np.ndarray], c: np.ndarray) -> np.ndarray:
        """Apply ``fun`` to chunks of paths (bounds the memory of the ``(P, Q)`` values)."""
        out = [fun(c[i: i + self.chunk]) for i in range(0, c.shape[0], self.chunk)]
        return np.concatenate(out, axis=0) if out else np.zeros((0,) + c.shape[1:], dtype=complex)


def _sum_set(reps: np.ndarray, order: int) -> np.ndarray:
    """Non-zero sums of ``order`` frequencies from the symmetric set ``+-reps``."""
    full = np.unique(np.concatenate([reps, -reps]), axis=0)
    S = full
    for _ in range(order - 1):
        S = np.unique((S[:, None, :] + full[None, :, :]).reshape(-1, full.shape[1]), axis=0)
    return S[np.any(S != 0, axis=1)]


@functools.lru_cache(maxsize=32)
def _find_lattice_cached(key: bytes, shape: tuple, order: int, d: int, q_max: int):
    reps = np.frombuffer(key, dtype=np.int64).reshape(shape)
    if len(reps) * 2 * max(1, len(reps)) > 200_000:
        return None
    S = _sum_set(reps, order)
    q0 = max(8, len(np.unique(np.concatenate([reps, -reps]), axis=0)))
    for Q in range(q0, q_max):
        if len(S) * Q > 20_000_000:
            return None
        a = np.arange(1, Q, dtype=np.int64)
        z = np.empty((len(a), d), dtype=np.int64)
        z[:, 0] = 1
        for i in range(1, d):
            z[:, i] = (z[:, i - 1] * a) % Q
        ok = np.all((S @ z.T) % Q != 0, axis=0)
        if ok.any():
            return Q, z[int(np.argmax(ok))]
    return None


def _find_lattice(reps: np.ndarray, order: int, d: int, q_max: int):
    reps = np.ascontiguousarray(reps, dtype=np.int64)
    return _find_lattice_cached(reps.tobytes(), reps.shape, order, d, q_max)


class DampedStepper:
    """Strang splitting for the damped truncated system on a fixed grid.

    State arrays are representative coefficients ``(P, K)`` over all band
    modes of ``grid``.  One step of size ``dt`` is

    1. exact Ornstein-Uhlenbeck half step on the low-mode velocities,
    2. half kick ``v -= dt/2 * pi_N H_k(pi_N u; alpha_N)``,
    3. exact rotation with frequency ``<n>^2`` on the low modes,
    4. half kick,
    5. exact Ornstein-Uhlenbeck half step,

    while high modes follow the exact damped linear flow.  All noise is keyed
    by fine steps of size ``delta = dt/r`` (``r`` = ``noise_refinement``), so
    runs at ``dt`` and ``dt/2`` with ``r`` and ``r/2`` share one Brownian
    path.  High modes jump exactly over ``high_jump`` fine steps at a time
    (default: one jump per step); the jump ending at fine index ``f`` is
    applied in the step whose interval contains ``f``.  With a common
    ``high_jump`` the high modes are bitwise identical across step sizes at
    every multiple of ``high_jump * delta``.
    """

    def __init__(self, grid: Grid, k: int | None, N: float, config: IntegratorConfig, stream: NoiseStream,
                 sign: int = 1, modes: ModeSet | None = None, high_jump: int | None = None):
        if k is not None and (k < 1 or k % 2 == 0):
            raise ValueError("the damped Gibbs dynamics needs an odd degree k")
        self.grid = grid
        self.k = k
        self.N = N
        self.config = config
        self.stream = stream
        self.sign = sign
        self.modes = ModeSet(grid) if modes is None else modes
        self.low = self.modes.subset(N)
        self.high = ~self.low
        self.alpha = float(np.sum(self.modes.mult[self.low] / self.modes.bessel_sq[self.low] ** 2))
        r = config.noise_refinement
        self.r = r
        self.delta = config.dt / r
        self.low_codes = self.modes.codes[self.low]
        self.high_codes = self.modes.codes[self.high]
        self.low_zero = self.modes.is_zero[self.low]
        self.high_zero = self.modes.is_zero[self.high]
        self._rot = undamped_transition(self.modes.bessel_sq[self.low], config.dt)
        self.high_jump = r if high_jump is None else int(high_jump)
        if self.high_jump < 1:
            raise ValueError("high_jump must be a positive number of fine steps")
        self._high_tr = transition_for("damped", self.modes.nsq[self.high], self.high_jump * self.delta)
        self.basis = LowModeBasis(self.modes.reps[self.low], k if k is not None else 1, grid.d)

    # -- noise -------------------------------------------------------------
    def _draw(self, codes, zero, fine, paths, tag, sub=0):
        z = self.stream.normals(codes[None, :], fine, paths[:, None], tag, sub)
        if np.any(zero):
            z[:, zero] = math.sqrt(2.0) * z[:, zero].real
        return z

    def _ou(self, vel_low, fine0, count, paths):
        """Exact OU flow ``dy = -y dt + sqrt(2) dW`` over ``count`` fine steps."""
        decay = math.exp(-self.delta)
        amp = math.sqrt(-math.expm1(-2.0 * self.delta))
        y = vel_low
        for i in range(count):
            y = decay * y + amp * self._draw(self.low_codes, self.low_zero, fine0 + i, paths, Tag.OU)
        return y

    # -- nonlinearity ------------------------------------------------------
    def force(self, pos_low: np.ndarray) -> np.ndarray:
        """``sign * pi_N H_k(pi_N u; alpha_N)`` on low representatives."""
        if self.k is None:
            return np.zeros_like(pos_low)
        k, a = self.k, self.alpha

        def f(c):
            return self.basis.analyse(hermite(k, self.basis.synth(c), a))

        return self.sign * self.basis.map_paths(f, pos_low)

    def potential(self, pos_low: np.ndarray) -> np.ndarray:
        """``R_N = 1/(k+1) int H_{k+1}(pi_N u; alpha_N)`` per path."""
        k = self.k if self.k is not None else 3
        a = self.alpha

        def f(c):
            return self.basis.mean(hermite(k + 1, self.basis.synth(c), a))[:, None] / (k + 1)

        return self.basis.map_paths(f, pos_low)[:, 0].real

    # -- step --------------------------------------------------------------
    def step(self, pos: np.ndarray, vel: np.ndarray, j: int, paths: np.ndarray):
        """Advance ``(pos, vel)`` of shape ``(P, K)`` by one step with index ``j``."""
        dt = self.config.dt
        r = self.r
        fine0 = j * r
        pos = pos.copy()
        vel = vel.copy()
        lo, hi = self.low, self.high
        xl, yl = pos[:, lo], vel[:, lo]
        yl = self._ou(yl, fine0, r // 2, paths)
        if self.k is not None:
            yl = yl - 0.5 * dt * self.force(xl)
        xl, yl = apply_transition(self._rot, xl, yl, None, None)
        if self.k is not None:
            yl = yl - 0.5 * dt * self.force(xl)
        yl = self._ou(yl, fine0 + r // 2, r // 2, paths)
        pos[:, lo], vel[:, lo] = xl, yl
        if np.any(hi):
            H = self.high_jump
            ends = [f for f in range(fine0 + 1, fine0 + r + 1) if f % H == 0]
            if ends:
                xh, yh = pos[:, hi], vel[:, hi]
                for f in ends:
                    z1 = self._draw(self.high_codes, self.high_zero, f - H, paths, Tag.HIGH_MODES, 0)
                    z2 = self._draw(self.high_codes, self.high_zero, f - H, paths, Tag.HIGH_MODES, 1)
                    xh, yh = apply_transition(self._high_tr, xh, yh, z1, z2)
                pos[:, hi], vel[:, hi] = xh, yh
        return pos, vel

    def check(self, pos, vel, t):
        s = self.config.diag_index
        w = self.modes.mult
        nrm = np.sqrt(np.sum(w * (self.modes.bessel_sq**s * np.abs(pos) ** 2
                                  + self.modes.bessel_sq ** (s - 2) * np.abs(vel) ** 2), axis=1))
        worst = float(np.max(nrm)) if nrm.size else 0.0
        if not np.isfinite(worst) or worst > self.config.blowup_threshold:
            raise BlowUpError(t, worst, self.config.blowup_threshold)

    def run(self, pos, vel, n_steps: int, paths: np.ndarray, j0: int = 0, t0: float = 0.0):
        for j in range(j0, j0 + n_steps):
            pos, vel = self.step(pos, vel, j, paths)
            self.check(pos, vel, t0 + (j - j0 + 1) * self.config.dt)
        return pos, vel


@functools.lru_cache(maxsize=8)
def _stepper(grid: Grid, k, N, config, seed, sign):
    return DampedStepper(grid, k, N, config, NoiseStream(seed), sign)


def step_damped(state: PairState, k: int, stream: NoiseStream, config: IntegratorConfig, N: float,
                step_index: int = 0, paths=None, sign: int = 1) -> PairState:
    """One split step of the damped truncated system for a ``PairState``.

    Args:
        state: current pair (batch axis = paths, or unbatched for one path).
        k: odd degree of the nonlinearity, or ``None`` for the linear flow.
        stream: noise source.
        config: integrator settings.
        N: nonlinearity cutoff.
        step_index: global step number (keys the noise).
        paths: path indices for the batch axis (default ``0..P-1``).
        sign: +1 defocusing.
    """
    if k is not None and k % 2 == 0:
        raise ValueError("the damped Gibbs dynamics needs an odd degree k")
    stp = _stepper(state.grid, k, float(N), config, stream.seed, sign)
    batched = state.position.coeffs.ndim > state.grid.d
    pos = stp.modes.gather(state.position.coeffs)
    vel = stp.modes.gather(state.velocity.coeffs)
    if not batched:
        pos, vel = pos[None], vel[None]
    ids = np.arange(pos.shape[0], dtype=np.uint64) if paths is None else np.asarray(paths, dtype=np.uint64)
    pos, vel = stp.step(pos, vel, step_index, ids)
    stp.check(pos, vel, state.t + config.dt)
    if not batched:
        pos, vel = pos[0], vel[0]
    return PairState(stp.modes.to_field(pos), stp.modes.to_field(vel), state.t + config.dt)


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class ModelSpec:
    """Model selection for :func:`run_trajectory`.

    Attributes:
        k: degree of the nonlinearity, or ``None`` for the linear equation.
        sign: +1 defocusing, -1 focusing.
        damped: damped truncated system instead of the undamped remainder.
        N: nonlinearity cutoff (damped) or noise cutoff (undamped).
        noisy: include the stochastic forcing.
    """

    k: int | None = 3
    sign: int = 1
    damped: bool = False
    N: float = 4.0
    noisy: bool = True


@dataclass
class TrajectoryRecord:
    times: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    stopped_at: float | None = None
    final: PairState | None = None
    blowup: BlowUpError | None = None

    def add(self, t: float, values: dict):
        self.times.append(float(t))
        for name, v in values.items():
            self.diagnostics.setdefault(name, []).append(float(v))


DIAGNOSTICS = ("norm", "energy", "quadratic_energy", "l2", "velocity_l2")


def _diagnose(state: PairState, names: Sequence[str], k: int | None, s: float) -> dict:
    out = {}
    for name in names:
        if name == "norm":
            out[name] = state.norm(s)
        elif name == "energy":
            out[name] = hamiltonian_energy(state, k or 3) if k else quadratic_energy(state)
        elif name == "quadratic_energy":
            out[name] = quadratic_energy(state)
        elif name == "l2":
            out[name] = sobolev_norm(state.position, 0.0)
        elif name == "velocity_l2":
            out[name] = sobolev_norm(state.velocity, 0.0)
        else:
            raise ValueError(f"unknown diagnostic {name!r}; choose from {DIAGNOSTICS}")
    return out


def run_trajectory(initial: PairState, model: ModelSpec, config: IntegratorConfig, T: float,
                   diagnostics: Sequence[str] = ("norm", "energy"), every: int = 1,
                   stream: NoiseStream | None = None) -> TrajectoryRecord:
    """Integrate one unbatched trajectory to time ``T`` recording scalar diagnostics.

    The undamped model integrates the remainder ``v`` driven by an exactly
    sampled stochastic convolution with ball cutoff ``model.N``; the damped
    model integrates the full truncated system.  A blow-up stops the run and
    records its time in ``stopped_at``.
    """
    if initial.position.coeffs.ndim != initial.grid.d:
        raise ValueError("run_trajectory integrates a single (unbatched) state")
    n_steps = int(round(T / config.dt))
    if abs(n_steps * config.dt - T) > 1e-9 * max(1.0, T):
        raise ValueError("T must be a multiple of dt")
    rec = TrajectoryRecord()
    s = config.diag_index
    if model.noisy and stream is None:
        raise ValueError("a noisy model needs a NoiseStream")
    if model.damped:
        if model.k is not None and model.k % 2 == 0:
            raise ValueError("the damped Gibbs dynamics needs an odd degree k")
        stp = DampedStepper(initial.grid, model.k, model.N, config, stream or NoiseStream(0), model.sign)
        pos = stp.modes.gather(initial.position.coeffs)[None]
        vel = stp.modes.gather(initial.velocity.coeffs)[None]
        ids = np.zeros(1, dtype=np.uint64)
        st = initial
        rec.add(0.0 + initial.t, _diagnose(st, diagnostics, model.k, s))
        try:
            for j in range(n_steps):
                pos, vel = stp.step(pos, vel, j, ids)
                t = initial.t + (j + 1) * config.dt
                stp.check(pos, vel, t)
                if (j + 1) % every == 0 or j + 1 == n_steps:
                    st = PairState(stp.modes.to_field(pos[0]), stp.modes.to_field(vel[0]), t)
                    rec.add(t, _diagnose(st, diagnostics, model.k, s))
        except BlowUpError as exc:
            rec.stopped_at, rec.blowup = exc.t, exc
        rec.final = PairState(stp.modes.to_field(pos[0]), stp.modes.to_field(vel[0]), initial.t + n_steps * config.dt)
        return rec
    enhanced = None
    if model.noisy:
        from .noise import sample_wick_trajectory

        times = initial.t + config.dt * np.arange(n_steps + 1)
        enhanced = sample_wick_trajectory("undamped", model.k or 1, times, stream, initial.grid, model.N,
                                          paths=None, base_dt=config.dt)
    k = model.k
    last = initial
    try:
        if k is None:
            st = initial
            rec.add(st.t, _diagnose(st, diagnostics, None, s))
            for j in range(n_steps):
                st = linear_step_undamped(st, config.dt)
                if (j + 1) % every == 0 or j + 1 == n_steps:
                    rec.add(st.t, _diagnose(st, diagnostics, None, s))
            last = st
        else:
            for j, node in enumerate(iter_remainder(initial, enhanced, k, model.sign, config, n_steps)):
                last = node.state
                if j % every == 0 or j == n_steps:
                    rec.add(node.t, _diagnose(node.state, diagnostics, k, s))
    except BlowUpError as exc:
        rec.stopped_at, rec.blowup = exc.t, exc
    rec.final = last
    return rec


def remainder_cutoff_gap(N_list: Sequence[int], n_samples: int, seed: int, M: int, T: float, dt: float,
                         k: int = 3, sign: int = 1, s: float = 1.0, s_prime: float | None = None,
                         pad_size: int | None = None, chunk: int = 10) -> dict:
    """Same-seed gap between remainder solutions driven by ``Psi_N`` and ``Psi_2N``.

    For each sample the initial data ``(u_0, u_1)`` (unit ``H^s x H^{s-2}``
    random fields) and the Brownian motions are shared by every cutoff, so
    ``Psi_N`` is the projection of ``Psi_2N``.  Returns, per ``N``, the
    ``H^{s'} x H^{s'-2}`` norms of ``v_N(T) - v_2N(T)`` for all samples.
    Paths that blow up yield ``nan``.
    """
    from .noise import sample_wick_trajectory
    from .spectral import random_field

    N_list = sorted(int(n) for n in N_list)
    grid = Grid(M, 4)
    if 2 * max(N_list) > grid.N_max:
        raise ValueError(f"cutoff 2N={2 * max(N_list)} exceeds the grid band N_max={grid.N_max}")
    n_steps = int(round(T / dt))
    if n_steps < 1 or abs(n_steps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError("T must be a positive multiple of dt")
    cfg = IntegratorConfig(dt=dt, s=s, s_prime=s_prime, pad_size=pad_size)
    sp = cfg.diag_index
    rng = np.random.default_rng(seed)
    u0 = random_field(grid, s, rng, batch=(n_samples,))
    u1 = random_field(grid, s - 2.0, rng, batch=(n_samples,))
    cutoffs = sorted(set(N_list) | {2 * n for n in N_list})
    times = dt * np.arange(n_steps + 1)
    stream = NoiseStream(seed)
    finals = {c: [] for c in cutoffs}
    for a in range(0, n_samples, chunk):
        ids = np.arange(a, min(n_samples, a + chunk))
        init = PairState(SpectralField(grid, u0.coeffs[ids]), SpectralField(grid, u1.coeffs[ids]), 0.0)
        for c in cutoffs:
            enh = sample_wick_trajectory("undamped", k, times, stream, grid, c, paths=ids, base_dt=dt)
            last = None
            try:
                for node in iter_remainder(init, enh, k, sign, cfg, n_steps):
                    last = node.state
                finals[c].append(last)
            except BlowUpError:
                finals[c].append(None)
    out = {}
    for N in N_list:
        gaps = []
        sizes = [min(chunk, n_samples - a) for a in range(0, n_samples, chunk)]
        for size, lo, hi in zip(sizes, finals[N], finals[2 * N]):
            if lo is None or hi is None:
                gaps.append(np.full(size, np.nan))
                continue
            diff = PairState(lo.position - hi.position, lo.velocity - hi.velocity, lo.t)
            gaps.append(np.atleast_1d(diff.norm(sp)))
        out[N] = np.concatenate(gaps)[:n_samples]
    return out
