import csv
import math

import numpy as np
import pytest
import sympy
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from wickbeam.noise import NoiseStream, sample_wick_trajectory
from wickbeam.spectral import Grid, SpectralField, forward_transform, from_physical, inverse_transform
from wickbeam.wick import (
    alpha_N,
    hermite,
    hermite_coefficients,
    mode_variance_undamped,
    renormalized_nonlinearity,
    shell_counts,
    sigma_N,
    variance_table,
    wick_nonlinearity,
    wick_power,
    write_variance_csv,
)

# Frozen from an independent oracle: scipy.integrate.quad of sin^2(tau)
# over [0, 1] for the eight |n| = 1 modes plus 1/3 for the zero mode.
SIGMA_1_AT_1 = 2.51473847968197


def _low_band_field(grid, rng, K=1):
    """Random real field with every |n_i| <= K."""
    c = np.zeros(grid.shape, dtype=complex)
    idx = np.arange(-K, K + 1) % grid.M
    sub = np.ix_(*([idx] * grid.d))
    c[sub] = rng.standard_normal(c[sub].shape) + 1j * rng.standard_normal(c[sub].shape)
    return SpectralField(grid, c).hermitian_part()


class TestHermite:
    def test_reference_values(self):
        assert hermite(2, 3.0, 2.0) == pytest.approx(7.0)
        assert hermite(4, 1.0, 1.0) == pytest.approx(-2.0)

    def test_explicit_polynomials(self, rng):
        x = rng.uniform(-4, 4, 1000)
        s = rng.uniform(0, 4, 1000)
        assert np.max(np.abs(hermite(2, x, s) - (x**2 - s))) < 1e-12
        assert np.max(np.abs(hermite(3, x, s) - (x**3 - 3 * s * x))) < 1e-12
        assert np.max(np.abs(hermite(4, x, s) - (x**4 - 6 * s * x**2 + 3 * s**2))) < 1e-12

    def test_generating_function_h6(self):
        t, x, s = sympy.symbols("t x s")
        series = sympy.series(sympy.exp(t * x - s * t**2 / 2), t, 0, 7).removeO()
        h6 = sympy.lambdify((x, s), sympy.expand(series.coeff(t, 6) * sympy.factorial(6)), "numpy")
        xs = np.linspace(-3, 3, 61)
        for sig in (0.0, 0.5, 1.0, 2.0):
            assert np.max(np.abs(hermite(6, xs, sig) - h6(xs, sig))) < 1e-12 * max(1.0, np.max(np.abs(h6(xs, sig))))

    @given(ell=st.integers(0, 8), x=st.floats(-5, 5))
    def test_sigma_zero_is_monomial(self, ell, x):
        assert hermite(ell, x, 0.0) == pytest.approx(x**ell, rel=1e-12, abs=1e-300)

    @given(ell=st.integers(1, 7), x=st.floats(-3, 3), s=st.floats(0, 3))
    def test_three_term_recurrence(self, ell, x, s):
        lhs = hermite(ell + 1, x, s)
        rhs = x * hermite(ell, x, s) - s * ell * hermite(ell - 1, x, s)
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)

    @given(k=st.integers(0, 6), x=st.floats(-3, 3), y=st.floats(-3, 3), s=st.floats(0, 3))
    def test_binomial_identity(self, k, x, y, s):
        lhs = hermite(k, x + y, s)
        rhs = sum(math.comb(k, ell) * x ** (k - ell) * hermite(ell, y, s) for ell in range(k + 1))
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)

    def test_coefficients(self):
        c = hermite_coefficients(4, 2.0)
        assert np.allclose(c[:5], [12.0, 0.0, -12.0, 0.0, 1.0])

    def test_validation(self):
        with pytest.raises(ValueError):
            hermite(-1, 0.0, 1.0)
        with pytest.raises(ValueError):
            hermite(2, 0.0, -1.0)


class TestVarianceSums:
    def test_shell_counts(self):
        c = shell_counts(4)
        assert list(c[:5]) == [1, 8, 24, 32, 24]

    def test_alpha_values(self):
        assert alpha_N(0) == 1.0
        assert alpha_N(1) == pytest.approx(3.0, abs=1e-14)

    def test_alpha_matches_brute_force(self):
        r = np.arange(-4, 5)
        n = np.stack(np.meshgrid(r, r, r, r, indexing="ij"), -1).reshape(-1, 4)
        nsq = np.sum(n * n, axis=1)
        for N in (1.5, 2, 3.2, 4):
            brute = np.sum((1.0 + nsq[nsq <= N * N]) ** -2.0)
            assert alpha_N(N) == pytest.approx(brute, rel=1e-12)

    def test_alpha_logarithmic_growth(self):
        a32, a64 = alpha_N(32), alpha_N(64)
        assert 0 < a64 / a32 - 1 < 0.35
        r32, r64 = a32 / math.log(32), a64 / math.log(64)
        assert abs(r64 - r32) / r64 < 0.10

    def test_sigma_examples(self):
        for N in (0, 1, 4):
            assert sigma_N(0.0, N) == 0.0
        for t in (0.3, 1.0, 2.5):
            assert sigma_N(t, 0) == pytest.approx(t**3 / 3, rel=1e-14)
        assert sigma_N(1.0, 1) == pytest.approx(SIGMA_1_AT_1, rel=1e-12)
        assert sigma_N(1.0, 1) == pytest.approx(1 / 3 + 4 - 2 * math.sin(2.0), rel=1e-14)
        assert sigma_N(1.0, 1) == pytest.approx(2.514740, abs=5e-6)

    def test_sigma_against_quadrature(self):
        quad = 1 / 3 + 8 * integrate.quad(lambda u: math.sin(u) ** 2, 0, 1, epsabs=1e-14)[0]
        assert sigma_N(1.0, 1) == pytest.approx(quad, abs=1e-8)
        for w in (1.0, 2.0, 5.0, 1e-3):
            for t in (0.5, 2.0):
                ref = integrate.quad(lambda u: math.sin(u * w) ** 2 / w**2, 0, t, epsabs=1e-15, limit=200)[0]
                assert mode_variance_undamped(t, w) == pytest.approx(ref, rel=1e-10)

    def test_sigma_grows_like_t_log_n(self):
        ratios = [sigma_N(t, N) / (t * math.log(N)) for N in (8, 16, 32, 64) for t in (0.5, 1.0, 2.0)]
        assert max(ratios) / min(ratios) < 3

    @given(N=st.floats(0, 12), dN=st.floats(0, 5), t=st.floats(0, 3))
    def test_monotone_in_cutoff(self, N, dN, t):
        assert sigma_N(t, N + dN) >= sigma_N(t, N)
        assert alpha_N(N + dN) >= alpha_N(N)

    def test_table_and_csv(self, tmp_path):
        rows = variance_table("alpha", [0, 1, 2])
        assert [r.value for r in rows][:2] == [1.0, pytest.approx(3.0)]
        rows = variance_table("sigma", [1], times=[0.0, 1.0])
        assert rows[1].value == pytest.approx(SIGMA_1_AT_1)
        path = tmp_path / "v.csv"
        write_variance_csv(rows, path)
        with open(path) as fh:
            data = list(csv.reader(fh))
        assert data[0] == ["kind", "N", "t", "value"]
        assert data[2][:3] == ["sigma", "1", "1.0"]
        with pytest.raises(ValueError):
            variance_table("beta", [1])
        with pytest.raises(ValueError):
            variance_table("sigma", [1])


class TestWickPowers:
    def test_identity_and_constants(self, rng):
        x = rng.standard_normal((4, 4))
        assert np.array_equal(wick_power(x, 2.0, 1), x)
        assert np.all(wick_power(x, 2.0, 0) == 1.0)
        assert np.allclose(wick_power(np.zeros(5), 1.7, 2), -1.7)

    def test_wick_square_is_mean_zero(self):
        grid = Grid(4, 4)
        enh = sample_wick_trajectory("undamped", 2, [1.0], NoiseStream(7), grid, 1.0, paths=10_000)
        psi = enh.psi[0]
        at_origin = psi[:, enh.modes.is_zero].real.sum(axis=1) + 2 * psi[:, ~enh.modes.is_zero].real.sum(axis=1)
        w = hermite(2, at_origin, enh.sigma[0])
        assert enh.sigma[0] == pytest.approx(sigma_N(1.0, 1))
        assert abs(np.mean(w)) <= 3 * np.std(w, ddof=1) / math.sqrt(len(w))
        assert np.var(at_origin) == pytest.approx(enh.sigma[0], rel=0.05)

    @pytest.mark.parametrize("ell", [2, 3])
    def test_tail_has_decaying_envelope(self, ell):
        grid = Grid(4, 4)
        enh = sample_wick_trajectory("undamped", ell, [1.0], NoiseStream(11), grid, 1.0, paths=10_000)
        vals = inverse_transform(enh.psi_field(0))
        norms = np.sqrt(np.mean(hermite(ell, vals, enh.sigma[0]) ** 2, axis=(1, 2, 3, 4)))
        lam = np.quantile(norms, [0.5, 0.8, 0.9, 0.95, 0.98, 0.99, 0.995])
        logp = np.log([np.mean(norms > v) for v in lam])
        slope = np.polyfit(lam ** (2 / ell), logp, 1)[0]
        assert slope < 0


class TestNonlinearity:
    def test_plain_power_without_noise(self, rng):
        g = Grid(8, 2)
        v = _low_band_field(g, rng)
        zero = SpectralField.zeros(g)
        one = forward_transform(np.ones(g.shape), g)
        out = renormalized_nonlinearity(v, [one, zero, zero, zero], 3)
        assert np.allclose(inverse_transform(out), inverse_transform(v) ** 3, atol=1e-12)

    def test_zero_remainder_returns_top_power(self, rng):
        g = Grid(8, 2)
        one = forward_transform(np.ones(g.shape), g)
        xis = [one] + [_low_band_field(g, rng) for _ in range(3)]
        out = renormalized_nonlinearity(SpectralField.zeros(g), xis, 3)
        assert np.allclose(out.coeffs, xis[3].band_limited().coeffs, atol=1e-14)

    def test_matches_pointwise_evaluation_on_8d4(self, rng):
        g = Grid(8, 4)
        one = forward_transform(np.ones(g.shape), g)
        v = _low_band_field(g, rng)
        xis = [one] + [_low_band_field(g, rng) for _ in range(3)]
        out = renormalized_nonlinearity(v, xis, 3)
        x = inverse_transform(v)
        ref = sum(math.comb(3, ell) * inverse_transform(xis[ell]) * x ** (3 - ell) for ell in range(4))
        assert np.max(np.abs(inverse_transform(out) - ref)) < 1e-10

    @given(seed=st.integers(0, 2**32 - 1), sigma=st.floats(0, 3), k=st.integers(1, 3))
    def test_two_forms_agree(self, seed, sigma, k):
        r = np.random.default_rng(seed)
        g = Grid(8, 2)
        v, psi = _low_band_field(g, r), _low_band_field(g, r)
        x = inverse_transform(psi)
        xis = [forward_transform(np.ones(g.shape), g)] + [from_physical(hermite(ell, x, sigma), g) for ell in range(1, k + 1)]
        a = renormalized_nonlinearity(v, xis, k)
        b = wick_nonlinearity(v, psi, sigma, k)
        assert np.max(np.abs(a.coeffs - b.coeffs)) < 1e-8
        pointwise = hermite(k, inverse_transform(v) + x, sigma)
        assert np.max(np.abs(inverse_transform(b) - pointwise)) < 1e-8

    def test_input_validation(self, rng):
        g = Grid(8, 2)
        v = _low_band_field(g, rng)
        with pytest.raises(ValueError):
            renormalized_nonlinearity(v, [v, v], 3)
        with pytest.raises(ValueError):
            renormalized_nonlinearity(v, [v, v, v, v], 3)
