"""Path-loss and power-budget oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dawnet import linkbudget as lb
from dawnet.errors import ConfigError


def test_fspl_geo_ku_band():
    # 36,000 km slant range at 11.7 GHz
    assert abs(lb.fspl_db(36_000_000.0, 11.7e9) - 204.94) <= 0.01


def test_fspl_unity_point():
    # distance c/(4 pi f)*... : choose d = c/(4 pi) at 1 Hz -> argument 1 -> 0 dB
    d = lb.SPEED_OF_LIGHT_M_S / (4.0 * math.pi)
    assert abs(lb.fspl_db(d, 1.0)) < 1e-9


@settings(max_examples=50, deadline=None)
@given(st.floats(1e3, 1e8), st.floats(1e6, 1e12))
def test_fspl_doubling_adds_6db(d, f):
    delta = lb.fspl_db(2.0 * d, f) - lb.fspl_db(d, f)
    assert abs(delta - 20.0 * math.log10(2.0)) < 1e-9
    assert abs(delta - 6.0206) < 1e-3


def test_fspl_domain_errors():
    with pytest.raises(ConfigError):
        lb.fspl_db(0.0, 1e9)
    with pytest.raises(ConfigError):
        lb.fspl_db(-5.0, 1e9)
    with pytest.raises(ConfigError):
        lb.fspl_db(1e6, 0.0)


def test_carrier_power_budget():
    link = lb.LinkGeometry(eirp_dbw=40.0, rx_gain_db=30.0, fspl_db=200.0,
                           add_loss_db=5.0)
    assert abs(lb.carrier_power(link) - 10.0 ** (-13.5)) < 1e-25


def test_interference_overlap_scaling():
    link = lb.LinkGeometry(eirp_dbw=10.0, rx_gain_db=0.0, fspl_db=10.0,
                           add_loss_db=0.0, spectral_overlap=0.25)
    assert abs(lb.interference_power(link) - 0.25) < 1e-12
    zero = lb.LinkGeometry(eirp_dbw=10.0, rx_gain_db=0.0, fspl_db=10.0,
                           add_loss_db=0.0, spectral_overlap=0.0)
    assert lb.interference_power(zero) == 0.0


def test_aggregate_is_linear_sum():
    links = [
        lb.LinkGeometry(0.0, 0.0, 0.0, 0.0, spectral_overlap=1.0),
        lb.LinkGeometry(0.0, 0.0, 3.0103, 0.0, spectral_overlap=1.0),
    ]
    # 1 + 0.5
    assert abs(lb.aggregate_interference(links) - 1.5) < 1e-4


def test_geometry_validation():
    with pytest.raises(ConfigError):
        lb.LinkGeometry(0.0, 0.0, 0.0, 0.0, spectral_overlap=1.5)
    with pytest.raises(ConfigError):
        lb.LinkGeometry(0.0, 0.0, 0.0, add_loss_db=-1.0)


def test_db_round_trip():
    for x in (1e-12, 0.5, 1.0, 42.0):
        assert abs(lb.db_to_linear(lb.linear_to_db(x)) - x) < 1e-9 * x
    with pytest.raises(ConfigError):
        lb.linear_to_db(0.0)
