"""Test the double-Gaussian closed forms."""

import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis.strategies import floats
from scipy.integrate import trapezoid

from pdc_g2.errors import (
    ImagingConditionViolated,
    InvalidProbability,
    NonPositiveInput,
    ZeroDispersion,
    ZeroMagnification,
)
from pdc_g2.model.gaussian import (
    bandwidth,
    build_biphoton,
    check_imaging,
    events_outside,
    feasibility,
    g1_normalized,
    g1_unnormalized,
    g2,
    g2_magnified,
    heralded_g2,
    integrated_cross_correlation,
    intensity,
    intensity_magnified,
    jta,
    lens_focal_gdd,
    magnified_widths,
)
from pdc_g2.model.params import derive_params, ppktp


@given(
    floats(min_value=0.3, max_value=30.0),
    floats(min_value=0.1, max_value=10.0),
    floats(min_value=-10.0, max_value=10.0),
)
def test_k_c_identity(pump, tau_o, tau_e):
    assume(abs(tau_o - tau_e) > 1e-3)
    p = derive_params(pump, tau_o, tau_e)
    assume(abs(1.0 + p.t_o * p.t_e) > 1e-6)
    b = build_biphoton(p)
    k2 = b.k_number ** 2
    assert abs(k2 - (1.0 + 4.0 / b.coherence_c ** 2)) / k2 <= 1e-12


def test_reference_point_30ps(biphoton_30ps):
    b = biphoton_30ps
    assert b.delta_t_o == pytest.approx(13.0, rel=0.05)
    assert b.delta_tau_o == pytest.approx(5.3, rel=0.05)
    assert b.coherence_c == pytest.approx(0.41, rel=0.05)
    assert b.k_number == pytest.approx(5.0, rel=0.05)


def test_reference_point_3ps(biphoton_3ps):
    b = biphoton_3ps
    assert b.delta_t_o == pytest.approx(1.8, rel=0.05)
    assert b.k_number == pytest.approx(1.0, rel=0.01)
    # quoted values are rounded; the closed forms give about 118 and 214 ps
    assert b.coherence_c == pytest.approx(125.0, rel=0.1)
    assert b.delta_tau_o == pytest.approx(226.0, rel=0.1)


def test_lam_is_half_inverse_of_m(biphoton_30ps):
    b = biphoton_30ps
    np.testing.assert_allclose(b.lam_matrix, 0.5 * np.linalg.inv(b.m_matrix), rtol=1e-12)


def test_jta_peak_and_symmetry(biphoton_30ps):
    b = biphoton_30ps
    assert jta(b, 0.0, 0.0) == 1.0
    t = np.linspace(-20, 20, 9)
    np.testing.assert_allclose(jta(b, t, t[::-1]), jta(b, -t, -t[::-1]))


def test_intensity_unit_area(preset_params):
    b = build_biphoton(preset_params)
    t = np.linspace(-10 * b.delta_t_o, 10 * b.delta_t_o, 4001)
    assert trapezoid(intensity(b, t), t) == pytest.approx(1.0, rel=1e-9)


def test_intensity_magnified_scaling(biphoton_30ps):
    b = biphoton_30ps
    t = np.linspace(-5e4, 5e4, 11)
    np.testing.assert_allclose(intensity_magnified(b, -1000.0, t), intensity(b, t / 1000.0) / 1000.0)
    with pytest.raises(ZeroMagnification):
        intensity_magnified(b, 0.0, t)


def test_g1_and_g2(biphoton_30ps):
    b = biphoton_30ps
    assert g2(b, 0.0) == 2.0
    assert g2(b, 1e4) == pytest.approx(1.0, abs=1e-12)
    assert g1_normalized(b, b.delta_tau_o) == pytest.approx(math.exp(-0.5))
    assert g2_magnified(b, 1000.0, 1000.0 * b.delta_tau_o) == pytest.approx(g2(b, b.delta_tau_o))


def test_g1_unnormalized_at_zero_delay(biphoton_30ps):
    t = np.linspace(-30, 30, 7)
    np.testing.assert_allclose(g1_unnormalized(biphoton_30ps, t, 0.0), intensity(biphoton_30ps, t))


def test_magnified_widths(biphoton_30ps):
    dt, dtau = magnified_widths(biphoton_30ps, -1000.0)
    assert dt == pytest.approx(1000.0 * biphoton_30ps.delta_t_o)
    assert dtau == pytest.approx(1000.0 * biphoton_30ps.delta_tau_o / math.sqrt(2.0))


def test_heralded_values_at_02(biphoton_30ps):
    sh, dh = heralded_g2(biphoton_30ps, 0.2, np.array([0.0, 1e4]))
    assert dh[0] == pytest.approx(0.306, abs=1e-3)
    assert dh[1] == pytest.approx(0.153, abs=1e-3)
    assert sh[0] == pytest.approx(2 * 1.1 / 1.2)
    sh_x, dh_x = heralded_g2(biphoton_30ps, 0.2, 0.0, in_same_period=False)
    assert sh_x == 1.0 and dh_x == 1.0


@pytest.mark.parametrize("p_b", [0.0, 1.0, -0.1])
def test_heralded_rejects_probability(biphoton_30ps, p_b):
    with pytest.raises(InvalidProbability):
        heralded_g2(biphoton_30ps, p_b, 0.0)


def test_integrated_cross_correlation():
    assert integrated_cross_correlation(0.2) == pytest.approx(6.0)
    assert integrated_cross_correlation(0.2, in_same_period=False) == 1.0


def test_feasibility_numbers(biphoton_30ps):
    assert events_outside(4.9, 1e6) == pytest.approx(1.0, rel=0.1)
    with pytest.raises(NonPositiveInput):
        events_outside(4.9, 0)
    n_out, rate = feasibility(biphoton_30ps, 1e6, 1000.0)
    assert n_out > 1e5
    assert rate > 0


def test_imaging_condition():
    d_f = lens_focal_gdd(1.0, -1000.0)
    system = check_imaging(1.0, -1000.0, d_f)
    assert system.magnification == pytest.approx(1000.0)
    with pytest.raises(ImagingConditionViolated) as e:
        check_imaging(1.0, -1000.0, 1.01 * d_f)
    assert e.value.residual > e.value.tol
    with pytest.raises(ZeroDispersion):
        lens_focal_gdd(1.0, -1.0)
    with pytest.raises(ZeroDispersion):
        check_imaging(0.0, 1.0, 1.0)


def test_bandwidth_units():
    bw = bandwidth(ppktp(30.0))
    assert bw["omega_p_ghz"] == pytest.approx(ppktp(30.0).omega_p / (2 * math.pi) * 1e3)
    assert "fwhm_nm" in bw and bw["fwhm_nm"] > 0
