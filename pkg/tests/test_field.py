import numpy as np
import pytest

from pollenqpi.field import (ComplexField, FieldError, GridSpec, PhaseMap, amplitude_of, fft2, ifft2,
                             phase_of, wrap)

from conftest import complex_normal


def field(values):
    values = np.asarray(values, dtype=complex)
    return ComplexField(GridSpec(values.shape[1], values.shape[0]), values)


class TestGridSpec:
    def test_minimum_size(self):
        with pytest.raises(FieldError):
            GridSpec(7, 8)
        with pytest.raises(FieldError):
            GridSpec(8, 4)
        assert GridSpec(8, 8).shape == (8, 8)

    @pytest.mark.parametrize("kw", [{"pixel_pitch": 0}, {"pixel_pitch": -1}, {"wavelength": 0}])
    def test_positive_optics(self, kw):
        with pytest.raises(FieldError):
            GridSpec(16, 16, **kw)

    def test_shape_is_rows_by_columns(self):
        g = GridSpec(32, 16)
        x, y = g.coordinates()
        assert g.shape == (16, 32) == x.shape
        assert x[0, 5] == 5 and y[3, 0] == 3


class TestContainers:
    def test_shape_mismatch(self):
        with pytest.raises(FieldError):
            ComplexField(GridSpec(8, 8), np.zeros((8, 9)))

    def test_non_finite_rejected(self):
        v = np.zeros((8, 8), complex)
        v[2, 3] = np.nan
        with pytest.raises(FieldError):
            ComplexField(GridSpec(8, 8), v)
        with pytest.raises(FieldError):
            PhaseMap(GridSpec(8, 8), np.full((8, 8), np.inf), wrapped=False)

    def test_wrapped_range(self):
        g = GridSpec(8, 8)
        PhaseMap(g, np.full((8, 8), -np.pi), wrapped=True)
        with pytest.raises(FieldError):
            PhaseMap(g, np.full((8, 8), np.pi), wrapped=True)
        PhaseMap(g, np.full((8, 8), 10.0), wrapped=False)

    def test_values_are_copied_and_frozen(self):
        src = np.ones((8, 8), complex)
        f = field(src)
        src[0, 0] = 5
        assert f.values[0, 0] == 1
        with pytest.raises(ValueError):
            f.values[0, 0] = 2


class TestFFT:
    def test_impulse_has_flat_spectrum(self):
        v = np.zeros((16, 16), complex)
        v[0, 0] = 1
        spec = fft2(field(v)).values
        np.testing.assert_allclose(np.abs(spec), 1.0, rtol=0, atol=1e-15)

    def test_constant_concentrates_at_dc(self):
        spec = fft2(field(np.ones((16, 16)))).values
        assert spec[0, 0] == pytest.approx(256)
        off = spec.copy()
        off[0, 0] = 0
        assert np.abs(off).max() < 1e-12

    def test_round_trip(self, rng):
        f = field(complex_normal(rng, (16, 16)))
        back = ifft2(fft2(f)).values
        assert np.linalg.norm(back - f.values) / np.linalg.norm(f.values) < 1e-10

    def test_parseval(self, rng):
        # unnormalized forward transform: sum |F|^2 == N sum |f|^2
        f = field(complex_normal(rng, (24, 16)))
        e_in = np.sum(np.abs(f.values) ** 2)
        e_out = np.sum(np.abs(fft2(f).values) ** 2) / f.values.size
        assert e_out == pytest.approx(e_in, rel=1e-10)

    def test_odd_sizes(self, rng):
        f = field(complex_normal(rng, (9, 13)))
        np.testing.assert_allclose(ifft2(fft2(f)).values, f.values, atol=1e-12)


class TestPhase:
    @pytest.mark.parametrize("z, expected", [
        (1 + 0j, 0.0), (1j, np.pi / 2), (-1 - 1j, -3 * np.pi / 4), (-1 + 0j, -np.pi),
        (0j, 0.0), (-1j, -np.pi / 2),
    ])
    def test_quadrants(self, z, expected):
        p = phase_of(field(np.full((8, 8), z)))
        assert p.wrapped
        np.testing.assert_allclose(p.values, expected, atol=1e-15)

    def test_negative_zero_imag_folds_to_minus_pi(self):
        p = phase_of(field(np.full((8, 8), complex(-2.0, -0.0))))
        assert np.all(p.values == -np.pi)

    def test_polar_reconstruction(self, rng):
        v = complex_normal(rng, (16, 16))
        f = field(v)
        rebuilt = amplitude_of(f) * np.exp(1j * phase_of(f).values)
        np.testing.assert_allclose(rebuilt, v, atol=1e-10)

    def test_positive_scaling_invariance(self, rng):
        f = field(complex_normal(rng, (16, 16)))
        # equal up to rounding of the scaled components
        np.testing.assert_allclose(phase_of(f).values, phase_of(field(3.7 * f.values)).values, rtol=0, atol=1e-15)


class TestWrap:
    @pytest.mark.parametrize("x, expected", [
        (0.0, 0.0), (3 * np.pi, -np.pi), (-5 * np.pi / 2, -np.pi / 2), (np.pi, -np.pi),
        (-np.pi, -np.pi), (2 * np.pi, 0.0), (7.0, 7.0 - 2 * np.pi),
    ])
    def test_examples(self, x, expected):
        assert wrap(x) == pytest.approx(expected, abs=1e-12)

    def test_tiny_negative_stays_in_range(self):
        out = wrap(np.array([-1e-17, -np.pi - 1e-16]))
        assert np.all(out >= -np.pi) and np.all(out < np.pi)

    def test_array_and_idempotent(self, rng):
        x = rng.uniform(-50, 50, size=1000)
        w = wrap(x)
        assert w.shape == x.shape
        assert np.all((w >= -np.pi) & (w < np.pi))
        np.testing.assert_allclose(np.cos(w), np.cos(x), atol=1e-9)
        np.testing.assert_array_equal(wrap(w), w)

    def test_rejects_non_finite(self):
        with pytest.raises(FieldError):
            wrap(np.nan)


def test_amplitude():
    f = field(np.full((8, 8), 3 + 4j))
    np.testing.assert_array_equal(amplitude_of(f), 5.0)
    assert np.all(amplitude_of(field(np.zeros((8, 8)))) == 0)


def test_amplitude_squared_identity(rng):
    v = complex_normal(rng, (16, 16))
    np.testing.assert_allclose(amplitude_of(field(v)) ** 2, v.real ** 2 + v.imag ** 2, rtol=1e-12)
