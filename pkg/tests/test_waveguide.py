import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from randwg.errors import OutOfDomain, StandingWave
from randwg.grid import GridSpec
from randwg.waveguide import (FrequencyBand, ModeSet, SourceSpec, WaveguideGeometry,
                              discrete_ideal_transfer, eigenfunction, fractional_part,
                              ideal_field, ideal_paraxial_amplitude, ideal_transfer,
                              initial_amplitude, mode_count, source_coefficients)


def brute_force_count(k, D):
    # modes propagate while the transverse wavenumber (j - 1/2) pi / D stays below k
    j = 1
    while (j - 0.5) * np.pi / D < k:
        j += 1
    return j - 1


@settings(max_examples=60, deadline=None)
@given(st.floats(0.5, 200.0), st.floats(0.2, 5.0))
def test_mode_count_matches_brute_force(k, D):
    x = k * D / np.pi + 0.5
    if abs(x - round(x)) < 1e-9:
        return
    assert mode_count(k, D) == brute_force_count(k, D)
    a = fractional_part(k, D)
    assert 0 < a < 1


def test_standing_wave_rejected():
    with pytest.raises(StandingWave):
        mode_count(4.5 * np.pi, 1.0)
    with pytest.raises(StandingWave):
        ModeSet.from_wavenumber(2.5 * np.pi)


def test_wavenumbers_and_group_slowness():
    ms = ModeSet(WaveguideGeometry(2.0, 1.5), 40.0)
    k = 40.0 / 1.5
    j = ms.indices
    assert np.allclose(ms.beta, np.sqrt(k ** 2 - ((j - 0.5) * np.pi / 2.0) ** 2), rtol=1e-14)
    h = 1e-6
    fd = (ModeSet(ms.geometry, 40.0 + h).beta - ModeSet(ms.geometry, 40.0 - h).beta) / (2 * h)
    assert np.allclose(ms.beta_prime(j), fd, rtol=1e-7)
    with pytest.raises(IndexError):
        ms.beta_j(ms.N + 1)


def test_eigenfunctions_orthonormal_and_boundary_conditions():
    D = 1.7
    for j in range(1, 5):
        for l in range(1, 5):
            v, _ = integrate.quad(lambda y: eigenfunction(j, y, D) * eigenfunction(l, y, D), 0, D)
            assert v == pytest.approx(float(j == l), abs=1e-12)
        assert eigenfunction(j, D, D) == pytest.approx(0, abs=1e-14)
        d0 = (eigenfunction(j, 1e-6, D) - eigenfunction(j, 0.0, D)) / 1e-6
        assert abs(d0) < 1e-4
    with pytest.raises(OutOfDomain):
        eigenfunction(1, 1.1, 1.0)


def test_band_rejects_mode_count_change():
    g = WaveguideGeometry()
    FrequencyBand.uniform(g, 2 * np.pi, 1.0, 5)
    with pytest.raises(StandingWave):
        FrequencyBand(g, 2 * np.pi, 4.0)


def gaussian_beam(X, Z, beta, w0):
    # Fresnel propagation of exp(-X^2 / (2 w0^2)) in closed form
    q = w0 ** 2 + 1j * Z / beta
    return w0 / np.sqrt(q) * np.exp(-X ** 2 / (2 * q))


def test_ideal_transfer_convolves_to_gaussian_beam():
    ms = ModeSet.from_wavenumber(2 * np.pi)
    b, Z, w0 = ms.beta[0], 3.0, 0.7
    for X in (0.0, 0.9, -2.1):
        f = lambda s, part: getattr(ideal_transfer(ms, 1, X, s, Z) * np.exp(-s * s / (2 * w0 * w0)), part)
        re, _ = integrate.quad(f, -12, 12, args=("real",), limit=400, epsabs=1e-12)
        im, _ = integrate.quad(f, -12, 12, args=("imag",), limit=400, epsabs=1e-12)
        assert re + 1j * im == pytest.approx(gaussian_beam(X, Z, b, w0), abs=1e-9)


def test_ideal_paraxial_amplitude_is_spectrally_exact():
    ms = ModeSet.from_wavenumber(2 * np.pi)
    g = GridSpec(64.0, 512)
    w0, Z = 1.0, 5.0
    F = 2j * ms.beta[0] * np.exp(-g.x ** 2 / (2 * w0 ** 2))
    a = ideal_paraxial_amplitude(ms, 1, g, Z, F)
    assert np.max(np.abs(a - gaussian_beam(g.x, Z, ms.beta[0], w0))) < 1e-12


def test_discrete_transfer_equals_fft_propagation_of_delta():
    g = GridSpec(16.0, 64)
    beta, Z = 5.0, 0.8
    d = g.delta(1.0)
    fft_prop = np.fft.ifft(np.fft.fft(d) * np.exp(-0.5j * g.kappa ** 2 * Z / beta))
    direct = discrete_ideal_transfer(g, beta, g.x, 1.0, Z)
    assert np.max(np.abs(fft_prop - direct)) < 1e-12 * np.max(np.abs(direct))


def test_source_projection_and_field_sum():
    ms = ModeSet.from_wavenumber(3 * np.pi)
    src = SourceSpec(theta_X=0.2, theta_eta=0.02, center=(0.0, 0.4))
    src.check_normalization()
    X = np.array([0.0, 0.1])
    F = source_coefficients(src, ms, X)
    # a Gaussian depth bump far from the walls smooths cos(k_j eta) by exp(-(k_j theta)^2 / 2)
    rho = np.exp(-0.5 * (X / 0.2) ** 2) / np.sqrt(2 * np.pi) / 0.2
    kj = np.pi * (ms.indices[:, None] - 0.5)
    oracle = ms.phi(ms.indices[:, None], 0.4) * np.exp(-0.5 * (kj * 0.02) ** 2) * rho
    assert np.allclose(F, oracle, rtol=1e-8)
    a = initial_amplitude(ms, F)
    p = ideal_field(ms, a, np.array([0.3, 0.6]))
    manual = sum(ms.phi(j, np.array([0.3, 0.6]))[:, None] * a[j - 1] for j in ms.indices)
    assert np.allclose(p, manual)
