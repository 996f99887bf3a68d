import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.constants import c

from trapifa.designs import design_mesh
from trapifa.farfield import (
    FarFieldError, GridSpec, azimuth_spread_db, directivity_gain, grid_from_intensity, pattern_summary,
    radiate, radiated_power,
)
from trapifa.geometry import build_dipole
from trapifa.solver import solve_at

# Directivity of the sinusoidal half-wave dipole, 1.64085 (mpmath), and of a Hertzian element, 1.5.
HALF_WAVE_DBI = 2.151
HERTZIAN_DBI = 10 * math.log10(1.5)


def test_isotropic_power():
    g = grid_from_intensity(lambda th, ph: np.ones_like(th))
    assert radiated_power(g) == pytest.approx(4 * math.pi, rel=1e-12)


def test_sin_squared_power_exact():
    g = grid_from_intensity(lambda th, ph: np.sin(th) ** 2)
    assert radiated_power(g) == pytest.approx(8 * math.pi / 3, rel=1e-12)


@pytest.mark.parametrize("U", [
    lambda th, ph: np.exp(np.cos(th)) * (1.2 + np.cos(ph)),
    lambda th, ph: (1 + np.sin(th) * np.cos(ph)) ** 2,
])
def test_grid_doubling_converged(U):
    coarse = radiated_power(grid_from_intensity(U, GridSpec(37, 72)))
    fine = radiated_power(grid_from_intensity(U, GridSpec(74, 144)))
    assert abs(fine - coarse) <= 1e-8 * fine


def test_incomplete_grid_rejected():
    g = grid_from_intensity(lambda th, ph: np.ones_like(th))
    g.theta_weights = g.theta_weights[:-1]
    with pytest.raises(FarFieldError):
        radiated_power(g)


def test_power_balance_violation_rejected():
    g = grid_from_intensity(lambda th, ph: np.ones_like(th))
    with pytest.raises(FarFieldError, match="power balance"):
        directivity_gain(g, p_in=1.0)


def test_lossless_gain_equals_directivity():
    g = grid_from_intensity(lambda th, ph: np.sin(th) ** 2)
    s = directivity_gain(g, p_in=radiated_power(g))
    assert np.allclose(s.D, s.G, rtol=1e-15)
    assert s.efficiency == pytest.approx(1.0)


@settings(max_examples=30)
@given(st.floats(0.05, 0.99))
def test_gain_never_exceeds_directivity(eff):
    g = grid_from_intensity(lambda th, ph: np.sin(th) ** 2)
    s = directivity_gain(g, p_in=radiated_power(g) / eff)
    assert np.all(s.G <= s.D)
    assert s.efficiency == pytest.approx(eff)


def _dipole_summary(length, radius, n):
    mesh = build_dipole(length, radius, n)
    r = solve_at(mesh, c)
    return mesh, r, pattern_summary(mesh, r)[1]


def test_half_wave_dipole_directivity_and_balance():
    _, _, s = _dipole_summary(0.5, 1e-3, 64)
    assert s.max_directivity_dbi == pytest.approx(HALF_WAVE_DBI, abs=0.1)
    assert s.power_balance_error <= 0.02


def test_hertzian_directivity():
    _, _, s = _dipole_summary(0.01, 1e-5, 2)
    assert s.max_directivity_dbi == pytest.approx(HERTZIAN_DBI, abs=0.05)


def test_dipole_is_omnidirectional_in_azimuth():
    mesh, r, _ = _dipole_summary(0.5, 1e-3, 32)
    assert azimuth_spread_db(mesh, r.currents, c) < 1e-9


def test_radiated_power_linear_in_current_squared():
    mesh, r, _ = _dipole_summary(0.5, 1e-3, 32)
    p1 = radiated_power(radiate(mesh, r.currents, c))
    p2 = radiated_power(radiate(mesh, 2 * r.currents, c))
    assert p2 == pytest.approx(4 * p1, rel=1e-12)


@pytest.mark.parametrize("f", [867.5e6, 912.5e6])
def test_lossless_ifa_power_balance(f):
    mesh = design_mesh("B")
    _, s = pattern_summary(mesh, solve_at(mesh, f))
    assert s.power_balance_error <= 0.02
    assert s.efficiency == pytest.approx(1.0, abs=0.02)


def test_ifa_is_quasi_omni_in_azimuth():
    mesh = design_mesh("B")
    r = solve_at(mesh, 912.5e6)
    assert azimuth_spread_db(mesh, r.currents, r.f) < 10
