import math

import pytest
from hypothesis import given, strategies as st

from coexqkd.mathcore import (binary_entropy, check_wavelength, db_per_km_to_nepers,
                              db_to_linear, dbm_to_watts, hoeffding_delta, linear_to_db,
                              photon_energy, watts_to_dbm)


def test_db_conversions():
    assert db_to_linear(10.0) == pytest.approx(0.1)
    assert db_to_linear(0.0) == 1.0
    assert linear_to_db(0.01) == pytest.approx(20.0)
    assert linear_to_db(0.0) == math.inf
    assert dbm_to_watts(0.0) == pytest.approx(1e-3)
    assert dbm_to_watts(8.9) == pytest.approx(7.762471166286917e-3)
    assert watts_to_dbm(1.0) == pytest.approx(30.0)
    assert watts_to_dbm(0.0) == -math.inf


def test_attenuation_units():
    # 0.3644 dB/km over 95.5 km is 34.8 dB
    a = db_per_km_to_nepers(0.3644)
    assert a == pytest.approx(0.0839062, rel=1e-6)
    assert -10 * math.log10(math.exp(-a * 95.5)) == pytest.approx(34.8002, rel=1e-9)


@given(st.floats(-60, 60))
def test_dbm_round_trip(p):
    assert watts_to_dbm(dbm_to_watts(p)) == pytest.approx(p, abs=1e-9)


@given(st.floats(0, 200))
def test_db_round_trip(x):
    assert linear_to_db(db_to_linear(x)) == pytest.approx(x, abs=1e-9)


def test_binary_entropy():
    assert binary_entropy(0.0) == 0.0
    assert binary_entropy(1.0) == 0.0
    assert binary_entropy(0.5) == 1.0
    assert binary_entropy(0.11) == pytest.approx(0.4999162, rel=1e-6)
    with pytest.raises(ValueError):
        binary_entropy(1.2)


@given(st.floats(0.0, 1.0))
def test_binary_entropy_symmetric(p):
    assert binary_entropy(p) == pytest.approx(binary_entropy(1.0 - p), abs=1e-12)


def test_hoeffding_delta():
    assert hoeffding_delta(0, 0.1) == 0.0
    assert hoeffding_delta(2e6, math.exp(-1)) == pytest.approx(1000.0)
    assert hoeffding_delta(1e6, 1e-9 / 19) == pytest.approx(3440.0367, rel=1e-7)
    for eps in (0.0, 1.0):
        with pytest.raises(ValueError):
            hoeffding_delta(10, eps)
    with pytest.raises(ValueError):
        hoeffding_delta(-1, 0.1)


def test_photon_energy():
    assert photon_energy(1310.0) == pytest.approx(1.516372e-19, rel=1e-6)
    # 655 nm carries exactly twice the energy
    assert photon_energy(655.0) == pytest.approx(2 * photon_energy(1310.0))


def test_check_wavelength():
    assert check_wavelength(1550) == 1550.0
    with pytest.raises(ValueError):
        check_wavelength(800)
