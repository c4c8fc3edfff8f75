import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wickbeam.dynamics import (
    BlowUpError,
    DampedStepper,
    IntegratorConfig,
    ModelSpec,
    hamiltonian_energy,
    iter_remainder,
    linear_step_undamped,
    quadratic_energy,
    remainder_cutoff_gap,
    run_trajectory,
    step_damped,
    step_remainder,
)
from wickbeam.noise import ModeSet, NoiseStream, sample_initial_mu2, sample_wick_trajectory
from wickbeam.spectral import Grid, SpectralField, random_field
from wickbeam.state import PairState


def random_state(grid, rng, s=1.0, amp=1.0, batch=()):
    return PairState(random_field(grid, s, rng, batch=batch) * amp, random_field(grid, s - 2, rng, batch=batch) * amp)


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [dict(dt=0.0), dict(dt=-1.0), dict(dt=0.1, scheme="rk4"), dict(dt=0.1, blowup_threshold=0.0),
         dict(dt=0.1, noise_refinement=3)],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            IntegratorConfig(**kwargs)

    def test_diagnostic_index(self):
        assert IntegratorConfig(dt=0.1, s=1.0).diag_index == 1.0
        assert IntegratorConfig(dt=0.1, s=2.5).diag_index == pytest.approx(1.99)
        assert IntegratorConfig(dt=0.1, s=1.0, s_prime=0.5).diag_index == 0.5


class TestLinearStep:
    @given(seed=st.integers(0, 2**32 - 1), t1=st.floats(-2, 2), t2=st.floats(-2, 2))
    def test_group_property(self, seed, t1, t2):
        g = Grid(8, 4)
        s0 = random_state(g, np.random.default_rng(seed))
        a = linear_step_undamped(linear_step_undamped(s0, t1), t2)
        b = linear_step_undamped(s0, t1 + t2)
        assert np.max(np.abs(a.position.coeffs - b.position.coeffs)) < 1e-13
        assert np.max(np.abs(a.velocity.coeffs - b.velocity.coeffs)) < 1e-12

    def test_half_period(self):
        g = Grid(4, 4)
        u = SpectralField.from_modes(g, {(1, 0, 0, 0): 0.7})
        out = linear_step_undamped(PairState(u, SpectralField.zeros(g)), math.pi)
        assert np.allclose(out.position.coeffs, -u.coeffs, atol=1e-15)
        assert np.max(np.abs(out.velocity.coeffs)) < 1e-15

    def test_zero_mode_free_motion(self):
        g = Grid(4, 4)
        c = SpectralField.from_modes(g, {(0, 0, 0, 0): 2.0})
        out = linear_step_undamped(PairState(SpectralField.zeros(g), c), 0.3)
        assert out.position.mode((0, 0, 0, 0)) == pytest.approx(0.6)
        assert out.velocity.mode((0, 0, 0, 0)) == pytest.approx(2.0)

    def test_energy_conserved_over_many_steps(self, rng):
        g = Grid(8, 4)
        st0 = random_state(g, rng)
        e0 = quadratic_energy(st0)
        cur = st0
        for _ in range(1000):
            cur = linear_step_undamped(cur, 0.013)
        assert abs(quadratic_energy(cur) - e0) <= 1e-12 * e0


class TestRemainderStep:
    def test_zero_state_stays_zero(self):
        g = Grid(8, 4)
        z = PairState(SpectralField.zeros(g), SpectralField.zeros(g))
        cfg = IntegratorConfig(dt=0.1)
        out = step_remainder(z, None, 3, 1, cfg)
        assert np.max(np.abs(out.position.coeffs)) == 0 and np.max(np.abs(out.velocity.coeffs)) == 0

    def _trajectory(self, st0, dt, T, k=3, sign=1):
        cfg = IntegratorConfig(dt=dt)
        return list(iter_remainder(st0, None, k, sign, cfg, int(round(T / dt))))

    def test_energy_drift_is_second_order(self, rng):
        g = Grid(8, 4)
        st0 = random_state(g, rng, amp=2.0)
        e0 = hamiltonian_energy(st0)
        C = []
        for dt in (0.02, 0.01, 0.005):
            nodes = self._trajectory(st0, dt, 1.0)
            drift = max(abs(hamiltonian_energy(n.state) - e0) for n in nodes)
            C.append(drift / dt**2)
        assert C[0] > 0
        assert max(C) / min(C) < 1.5

    def test_self_convergence_rate_two(self, rng):
        g = Grid(8, 4)
        st0 = random_state(g, rng, amp=2.0)
        finals = [self._trajectory(st0, dt, 0.5)[-1].state for dt in (0.02, 0.01, 0.005)]
        e1 = finals[0].position - finals[1].position
        e2 = finals[1].position - finals[2].position
        from wickbeam.spectral import sobolev_norm

        rate = math.log2(sobolev_norm(e1, 1.0) / sobolev_norm(e2, 1.0))
        assert rate == pytest.approx(2.0, abs=0.2)

    def test_time_reversible(self, rng):
        g = Grid(8, 4)
        st0 = random_state(g, rng, amp=2.0)
        cfg = IntegratorConfig(dt=0.05)
        fwd = step_remainder(st0, None, 3, 1, cfg)
        flipped = PairState(fwd.position, -fwd.velocity, 0.0)
        back = step_remainder(flipped, None, 3, 1, cfg)
        assert np.max(np.abs(back.position.coeffs - st0.position.coeffs)) < 1e-10
        assert np.max(np.abs(back.velocity.coeffs + st0.velocity.coeffs)) < 1e-10

    def test_sign_flips_the_kick_only(self, rng):
        g = Grid(8, 4)
        st0 = random_state(g, rng)
        cfg = IntegratorConfig(dt=0.05, scheme="lie")
        lin = linear_step_undamped(st0, 0.05)
        plus = step_remainder(st0, None, 3, 1, cfg)
        minus = step_remainder(st0, None, 3, -1, cfg)
        for part in ("position", "velocity"):
            dp = getattr(plus, part).coeffs - getattr(lin, part).coeffs
            dm = getattr(minus, part).coeffs - getattr(lin, part).coeffs
            assert np.max(np.abs(dp + dm)) < 1e-13
            assert np.max(np.abs(dp)) > 1e-6
        with pytest.raises(ValueError):
            step_remainder(st0, None, 3, 0, cfg)

    def test_noisy_step_uses_wick_data(self, rng):
        g = Grid(6, 4)
        enh = sample_wick_trajectory("undamped", 3, [0.0, 0.1], NoiseStream(1), g, 2)
        st0 = random_state(g, rng)
        cfg = IntegratorConfig(dt=0.1)
        quiet = step_remainder(st0, None, 3, 1, cfg)
        noisy = step_remainder(st0, enh, 3, 1, cfg)
        assert np.max(np.abs(noisy.velocity.coeffs - quiet.velocity.coeffs)) > 0
        with pytest.raises(KeyError):
            step_remainder(PairState(st0.position, st0.velocity, 0.05), enh, 3, 1, cfg)

    def test_blow_up_detected(self, rng):
        g = Grid(6, 4)
        st0 = random_state(g, rng, amp=50.0)
        cfg = IntegratorConfig(dt=0.05, blowup_threshold=1e3)
        with pytest.raises(BlowUpError) as exc:
            for _ in iter_remainder(st0, None, 3, -1, cfg, 200):
                pass
        assert exc.value.t > 0 and exc.value.threshold == 1e3


class TestDampedStep:
    def test_ou_half_step_preserves_unit_variance(self):
        for dt in (1e-3, 0.1, 1.0, 5.0):
            delta = dt / 2
            decay = math.exp(-delta)
            amp = math.sqrt(-math.expm1(-2 * delta))
            assert decay**2 + amp**2 == pytest.approx(1.0, abs=1e-15)

    def test_linear_damped_flow_is_stationary(self):
        g = Grid(6, 4)
        s = NoiseStream(17)
        st = sample_initial_mu2(s, g, paths=20_000)
        cfg = IntegratorConfig(dt=0.25)
        for j in range(4):
            st = step_damped(st, None, s, cfg, N=1.0, step_index=j)
        ms = ModeSet(g)
        pos, vel = ms.gather(st.position.coeffs), ms.gather(st.velocity.coeffs)
        for q in (0.0, 1.0, 2.0):
            sel = np.flatnonzero(ms.nsq == q)[0]
            for arr, target in ((pos, (1 + q) ** -2), (vel, 1.0)):
                x = np.abs(arr[:, sel]) ** 2
                assert abs(np.mean(x) - target) <= 3 * np.std(x, ddof=1) / math.sqrt(len(x))

    def test_high_modes_follow_linear_flow(self):
        g = Grid(6, 4)
        s = NoiseStream(5)
        st0 = sample_initial_mu2(s, g, paths=8)
        cfg = IntegratorConfig(dt=0.1)
        a, b = st0, st0
        for j in range(3):
            a = step_damped(a, 3, s, cfg, N=1.0, step_index=j)
            b = step_damped(b, None, s, cfg, N=1.0, step_index=j)
        ms = ModeSet(g)
        high = ~ms.subset(1.0)
        for part in ("position", "velocity"):
            xa, xb = ms.gather(getattr(a, part).coeffs), ms.gather(getattr(b, part).coeffs)
            assert np.array_equal(xa[:, high], xb[:, high])
            assert np.max(np.abs(xa[:, ~high] - xb[:, ~high])) > 1e-6

    def test_rejects_even_degree(self):
        g = Grid(6, 4)
        st0 = sample_initial_mu2(NoiseStream(0), g)
        with pytest.raises(ValueError):
            step_damped(st0, 2, NoiseStream(0), IntegratorConfig(dt=0.1), N=1.0)

    def test_shared_noise_across_refinements(self):
        g = Grid(6, 4)
        s = NoiseStream(3)
        ids = np.arange(4, dtype=np.uint64)
        st0 = sample_initial_mu2(s, g, paths=4)
        out = {}
        # every run uses the same fine noise spacing dt / r = 0.0125
        for dt, r in ((0.2, 16), (0.1, 8), (0.05, 4), (0.025, 2)):
            stepper = DampedStepper(g, 3, 1.0, IntegratorConfig(dt=dt, noise_refinement=r), s, high_jump=16)
            p0, v0 = stepper.modes.gather(st0.position.coeffs), stepper.modes.gather(st0.velocity.coeffs)
            out[dt] = stepper.run(p0, v0, int(round(0.8 / dt)), ids)
        high = ~ModeSet(g).subset(1.0)
        for dt in (0.1, 0.05, 0.025):
            assert np.array_equal(out[dt][0][:, high], out[0.2][0][:, high])
        errs = [np.max(np.abs(out[dt][0] - out[0.025][0])) for dt in (0.2, 0.1, 0.05)]
        assert errs[0] > errs[1] > errs[2]


class TestRunTrajectory:
    def test_zero_data_zero_noise(self):
        g = Grid(6, 4)
        z = PairState(SpectralField.zeros(g), SpectralField.zeros(g))
        rec = run_trajectory(z, ModelSpec(k=3, noisy=False), IntegratorConfig(dt=0.1), 0.5, ("norm", "l2"))
        assert rec.times == pytest.approx([0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
        assert max(rec.diagnostics["norm"]) == 0.0
        assert rec.stopped_at is None

    def test_linear_energy_constant(self, rng):
        g = Grid(8, 4)
        rec = run_trajectory(random_state(g, rng), ModelSpec(k=None, noisy=False), IntegratorConfig(dt=0.1), 5.0,
                             ("quadratic_energy",))
        e = np.array(rec.diagnostics["quadratic_energy"])
        assert np.max(np.abs(e - e[0])) <= 1e-12 * e[0]

    def test_initial_diagnostics_only_for_zero_horizon(self, rng):
        g = Grid(6, 4)
        rec = run_trajectory(random_state(g, rng), ModelSpec(k=3, N=2), IntegratorConfig(dt=0.01), 0.0,
                             ("norm", "energy"), stream=NoiseStream(0))
        assert rec.times == [0.0]

    def test_damped_trajectory(self):
        g = Grid(6, 4)
        st0 = sample_initial_mu2(NoiseStream(1), g)
        rec = run_trajectory(st0, ModelSpec(k=3, damped=True, N=1), IntegratorConfig(dt=0.1), 0.5,
                             ("norm", "velocity_l2"), every=2, stream=NoiseStream(1))
        assert rec.times == pytest.approx([0.0, 0.2, 0.4, 0.5])
        assert all(np.isfinite(rec.diagnostics["norm"]))

    def test_blow_up_recorded(self, rng):
        g = Grid(6, 4)
        rec = run_trajectory(random_state(g, rng, amp=50.0), ModelSpec(k=3, sign=-1, noisy=False),
                             IntegratorConfig(dt=0.05, blowup_threshold=1e3), 5.0, ("norm",))
        assert rec.stopped_at is not None and rec.stopped_at < 5.0
        assert isinstance(rec.blowup, BlowUpError)

    def test_validation(self, rng):
        g = Grid(6, 4)
        st0 = random_state(g, rng)
        with pytest.raises(ValueError):
            run_trajectory(st0, ModelSpec(), IntegratorConfig(dt=0.3), 1.0)
        with pytest.raises(ValueError):
            run_trajectory(st0, ModelSpec(noisy=True), IntegratorConfig(dt=0.1), 1.0)
        with pytest.raises(ValueError):
            run_trajectory(st0, ModelSpec(noisy=False), IntegratorConfig(dt=0.1), 1.0, ("mystery",))


class TestCutoffGap:
    def test_small_run_reproducible(self):
        kw = dict(N_list=[1, 2], n_samples=3, seed=4, M=10, T=0.1, dt=0.05, chunk=2)
        a = remainder_cutoff_gap(**kw)
        b = remainder_cutoff_gap(**kw)
        assert set(a) == {1, 2}
        for N in a:
            assert a[N].shape == (3,)
            assert np.all(a[N] > 0)
            assert np.array_equal(a[N], b[N])

    def test_grid_too_small(self):
        with pytest.raises(ValueError):
            remainder_cutoff_gap([4], 1, 0, M=10, T=0.1, dt=0.05)
