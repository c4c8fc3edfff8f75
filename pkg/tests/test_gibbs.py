import math

import numpy as np
import pytest
from scipy import integrate

from wickbeam.gibbs import (
    GibbsSpec,
    compute_RN,
    density_convergence_probe,
    invariance_test,
    sample_rhoN,
)
from wickbeam.noise import ModeSet, NoiseStream
from wickbeam.spectral import Grid, PaddingError, SpectralField, inverse_transform, random_field
from wickbeam.wick import alpha_N, hermite


class TestComputeRN:
    def test_zero_field(self):
        g = Grid(6, 4)
        for N in (0, 1, 2):
            a = alpha_N(N)
            assert compute_RN(SpectralField.zeros(g), N) == pytest.approx(0.75 * a * a, rel=1e-12)

    def test_constant_field(self):
        g = Grid(6, 4)
        u = SpectralField.from_modes(g, {(0, 0, 0, 0): 1.7})
        assert compute_RN(u, 1) == pytest.approx(hermite(4, 1.7, 3.0) / 4, rel=1e-12)
        assert compute_RN(u, 1, k=5) == pytest.approx(hermite(6, 1.7, 3.0) / 6, rel=1e-12)

    def test_matches_direct_quadrature(self, rng):
        g = Grid(8, 4)
        u = random_field(g, 1.0, rng, batch=(3,))
        n = np.stack(np.meshgrid(*([np.fft.fftfreq(8, 1 / 8)] * 4), indexing="ij"), -1)
        mask = np.sum(n * n, axis=-1) <= 1
        low = SpectralField(g, u.coeffs * mask)
        direct = np.mean(hermite(4, inverse_transform(low), alpha_N(1)), axis=(1, 2, 3, 4)) / 4
        assert np.allclose(compute_RN(u, 1), direct, rtol=1e-10)

    def test_padding_check(self, rng):
        g = Grid(8, 4)
        u = random_field(g, 1.0, rng)
        with pytest.raises(PaddingError):
            compute_RN(u, 1, pad_size=4)
        assert compute_RN(u, 1, pad_size=5) == pytest.approx(compute_RN(u, 1), rel=1e-12)

    def test_cutoff_beyond_grid(self):
        with pytest.raises(ValueError):
            compute_RN(SpectralField.zeros(Grid(6, 4)), 5)


class TestGibbsSpec:
    @pytest.mark.parametrize(
        "kwargs",
        [dict(k=2), dict(k=1), dict(N=-1), dict(sampler="gibbs"), dict(burn_in=-1), dict(pcn_beta=0.0),
         dict(pcn_beta=1.5)],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            GibbsSpec(**kwargs)

    def test_defaults(self):
        s = GibbsSpec()
        assert (s.k, s.sampler, s.burn_in, s.pcn_beta) == (3, "pcn", 2000, 0.3)


def _shell_var(ens, part, q):
    arr = getattr(ens, part)
    sel = ens.modes.nsq == q
    return np.abs(arr[:, sel]) ** 2


class TestSampler:
    def test_gaussian_limit_has_mu2_moments(self):
        ens = sample_rhoN(GibbsSpec(k=None, N=1), NoiseStream(2), n_samples=4000)
        assert ens.acceptance_rate == 1.0
        for q in (0.0, 1.0, 2.0):
            for part, target in (("position", (1 + q) ** -2), ("velocity", 1.0)):
                x = _shell_var(ens, part, q).ravel()
                assert abs(np.mean(x) - target) <= 4 * np.std(x) / math.sqrt(len(x) / 8)

    def test_zero_mode_measure_matches_quadrature(self):
        ens = sample_rhoN(GibbsSpec(k=3, N=0, burn_in=500), NoiseStream(8), n_samples=4000)
        x = ens.position[:, ens.modes.is_zero][:, 0]
        assert np.max(np.abs(x.imag)) == 0
        x = x.real

        def dens(y):
            return math.exp(-y * y / 2 - hermite(4, y, 1.0) / 4)

        Z = integrate.quad(dens, -np.inf, np.inf)[0]
        m2 = integrate.quad(lambda y: y * y * dens(y), -np.inf, np.inf)[0] / Z
        m4 = integrate.quad(lambda y: y**4 * dens(y), -np.inf, np.inf)[0] / Z
        for vals, ref in ((x**2, m2), (x**4, m4)):
            assert abs(np.mean(vals) - ref) <= 4 * np.std(vals) / math.sqrt(len(vals))
        assert abs(np.mean(x)) <= 4 * np.std(x) / math.sqrt(len(x))

    def test_velocity_and_high_modes_untouched(self):
        ens = sample_rhoN(GibbsSpec(k=3, N=1, burn_in=50), NoiseStream(4), n_samples=2000)
        assert 0 < ens.acceptance_rate < 1
        for q in (0.0, 1.0, 2.0):
            x = _shell_var(ens, "velocity", q).ravel()
            assert abs(np.mean(x) - 1.0) <= 4 * np.std(x) / math.sqrt(len(x) / 8)
        x = _shell_var(ens, "position", 2.0).ravel()
        assert abs(np.mean(x) - 1 / 9) <= 4 * np.std(x) / math.sqrt(len(x) / 8)
        low0 = ens.position[:, ens.modes.is_zero][:, 0].real
        high = ens.position[:, ens.modes.nsq == 2.0][:, 0].real
        assert abs(np.corrcoef(low0**2, high**2)[0, 1]) < 0.1

    def test_chain_keyed_by_index(self):
        a = sample_rhoN(GibbsSpec(k=3, N=1, burn_in=20), NoiseStream(6), n_samples=6)
        b = sample_rhoN(GibbsSpec(k=3, N=1, burn_in=20), NoiseStream(6), n_samples=3, path_offset=3)
        assert np.array_equal(a.position[3:], b.position)
        st = a.to_pair_state()
        assert st.position.coeffs.shape == (6,) + a.modes.grid.shape

    def test_low_acceptance_warns(self):
        class Wild(NoiseStream):
            # proposals after the first draw land far out in the quartic well
            def normals(self, codes, step, paths, tag, sub=0):
                z = super().normals(codes, step, paths, tag, sub)
                return z if step == 0 else 1e3 * z

        with pytest.warns(RuntimeWarning, match="acceptance"):
            ens = sample_rhoN(GibbsSpec(k=3, N=1, burn_in=5), Wild(0), n_samples=4)
        assert ens.acceptance_rate == 0.0

    def test_cutoff_beyond_grid(self):
        with pytest.raises(ValueError):
            sample_rhoN(GibbsSpec(N=3), NoiseStream(0), grid=Grid(4, 4), n_samples=2)


class TestDensityProbe:
    def test_table(self):
        rows = density_convergence_probe([2, 1], 3, 24, NoiseStream(3), chunk=8)
        assert [r["N"] for r in rows] == [1.0, 2.0]
        for r in rows:
            assert 0 < r["mean_exp_minus_R"] < math.inf
            assert r["se_exp_minus_R"] > 0
        assert rows[0]["var_diff_next"] > 0
        assert math.isnan(rows[1]["var_diff_next"])
        again = density_convergence_probe([1, 2], 3, 24, NoiseStream(3), chunk=5)
        for x, y in zip(again, rows):
            assert x.keys() == y.keys()
            assert all(x[key] == y[key] or (math.isnan(x[key]) and math.isnan(y[key])) for key in x)


class TestInvariance:
    def test_linear_dynamics_preserves_gaussian(self):
        rep = invariance_test(GibbsSpec(k=None, N=1), 0.1, 0.5, 600, NoiseStream(12), levels=2)
        assert rep.passed
        assert rep.weak_order_ok() is None
        d = rep.to_dict()
        assert d["schema"] == "wickbeam.invariance_report/1" and d["passed"] is True
        rows = rep.csv_rows()
        assert rows[0][0] == "observable" and len(rows) == 1 + len(rep.observables)

    def test_chunking_does_not_change_result(self):
        spec = GibbsSpec(k=3, N=1, burn_in=30)
        a = invariance_test(spec, 0.1, 0.2, 12, NoiseStream(5), levels=2)
        b = invariance_test(spec, 0.1, 0.2, 12, NoiseStream(5), levels=2, chunk=5)
        assert [o.after for o in a.observables] == pytest.approx([o.after for o in b.observables], rel=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            invariance_test(GibbsSpec(k=None), 0.1, 0.5, 10, NoiseStream(0), levels=1)
        with pytest.raises(ValueError):
            invariance_test(GibbsSpec(k=None), 0.3, 0.5, 10, NoiseStream(0))
        with pytest.raises(ValueError):
            invariance_test(GibbsSpec(k=None), 0.1, 0.2, 10, NoiseStream(0), observables=("bogus",))
