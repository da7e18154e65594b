"""Test pump and crystal parameters."""

import math

import pytest
from hypothesis import given
from hypothesis.strategies import floats

from pdc_g2.errors import DegenerateAdvance, NonPositiveInput
from pdc_g2.model.params import (
    PPKTP_TAU_O,
    SIGMA_S,
    derive_params,
    pump_bandwidth,
    pump_duration_for_t,
    ppktp,
    single_mode_pump_duration,
)


def test_pump_bandwidth_30ps():
    assert pump_bandwidth(30.0) == pytest.approx(math.sqrt(2 * math.log(2)) / 30.0, rel=1e-15)


def test_advance_times_30ps():
    p = ppktp(30.0)
    assert p.t_o == pytest.approx(0.10170, rel=1e-3)
    assert p.t_e == pytest.approx(-p.t_o, rel=1e-15)


def test_metadata_kept():
    p = ppktp(3.0)
    assert p.crystal_length == 40.0
    assert p.poling_period == 47.6


@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_nonpositive_pump(bad):
    with pytest.raises(NonPositiveInput):
        derive_params(bad, 2.95, -2.95)


def test_nonpositive_sigma_s():
    with pytest.raises(NonPositiveInput):
        derive_params(30.0, 2.95, -2.95, sigma_s=0.0)


def test_degenerate_advance():
    with pytest.raises(DegenerateAdvance):
        derive_params(30.0, 1.0, 1.0)


def test_single_mode_duration():
    assert single_mode_pump_duration(PPKTP_TAU_O) == pytest.approx(3.051, abs=1e-3)


@given(floats(min_value=0.05, max_value=20.0, allow_nan=False, allow_infinity=False))
def test_pump_duration_for_t_inverts(t_o):
    tau_p = pump_duration_for_t(t_o, PPKTP_TAU_O)
    if abs(t_o - 1.0) < 1e-6:
        return
    assert ppktp(tau_p).t_o == pytest.approx(t_o, rel=1e-12)


def test_scaled_keeps_crystal():
    p = ppktp(30.0)
    q = p.scaled(3.0)
    assert q.tau_o == p.tau_o and q.crystal_length == p.crystal_length
    assert q.t_o == pytest.approx(10.0 * p.t_o, rel=1e-12)
    assert q.sigma_s == SIGMA_S
