import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xbarsim.devices import (
    HRS,
    LRS,
    CellGrid,
    CellState,
    LinearDeviceParams,
    NonlinearDeviceParams,
    VariationSpec,
    device_conductance,
    device_current,
    ideal_state_currents,
    sample_cell,
    variation_factor,
)

NOVAR = VariationSpec(0.0, 0)


def sinh_by_exp(x):
    # independent evaluation via the exponential identity
    return (math.exp(x) - math.exp(-x)) / 2.0


class TestDeviceCurrent:
    def test_linear_lrs_ohms_law(self):
        cell = sample_cell(LRS, LinearDeviceParams(), NOVAR, 0, 0)
        assert device_current(cell, 0.5) == pytest.approx(0.5e-6, rel=1e-15)

    def test_nonlinear_zero_voltage(self):
        cell = sample_cell(LRS, NonlinearDeviceParams(), NOVAR, 0, 0)
        assert device_current(cell, 0.0) == 0.0

    def test_nonlinear_at_half_volt(self):
        # oracle: 1e-8 * (e^1.5 - e^-1.5)/2
        expected = 1e-8 * sinh_by_exp(1.5)
        assert expected == pytest.approx(2.1292794550948175e-08, rel=1e-14)
        cell = sample_cell(LRS, NonlinearDeviceParams(), NOVAR, 0, 0)
        assert device_current(cell, 0.5) == pytest.approx(expected, rel=1e-12)

    def test_odd_symmetry_both_models(self):
        for base in (LinearDeviceParams(), NonlinearDeviceParams()):
            cell = sample_cell(LRS, base, VariationSpec(0.1, 3), 2, 4)
            for v in np.linspace(-1.5, 1.5, 201):
                i_pos = device_current(cell, v)
                i_neg = device_current(cell, -v)
                assert abs(i_pos + i_neg) <= 1e-15 * abs(i_pos) + 1e-300

    def test_monotone_increasing_nonlinear(self):
        cell = sample_cell(HRS, NonlinearDeviceParams(), NOVAR, 0, 0)
        grid = np.linspace(-1.5, 1.5, 1000)
        currents = np.array([device_current(cell, v) for v in grid])
        assert (np.diff(currents) > 0).all()

    @given(
        k=st.floats(1e-12, 1e-6),
        a=st.floats(0.5, 10.0),
        v=st.floats(-1.5, 1.5),
    )
    @settings(max_examples=100, deadline=None)
    def test_odd_symmetry_property(self, k, a, v):
        cell = CellState(LRS, NonlinearDeviceParams(k_on=k, k_off=k / 1e3, a=a))
        assert device_current(cell, -v) == pytest.approx(-device_current(cell, v), abs=1e-30)


class TestDeviceConductance:
    def test_linear_hrs_constant(self):
        cell = sample_cell(HRS, LinearDeviceParams(), NOVAR, 0, 0)
        for v in (-1.0, 0.0, 0.7):
            assert device_conductance(cell, v) == pytest.approx(1e-9, rel=1e-15)

    def test_nonlinear_zero_bias(self):
        cell = sample_cell(LRS, NonlinearDeviceParams(), NOVAR, 0, 0)
        assert device_conductance(cell, 0.0) == pytest.approx(3e-8, rel=1e-15)

    def test_matches_finite_difference(self):
        # oracle: central difference of device_current at h = 1e-7 V
        cell = sample_cell(LRS, NonlinearDeviceParams(), NOVAR, 0, 0)
        h = 1e-7
        for v in (0.0, 0.25, 0.5, 1.2):
            fd = (device_current(cell, v + h) - device_current(cell, v - h)) / (2 * h)
            assert device_conductance(cell, v) == pytest.approx(fd, rel=1e-6)
        assert device_conductance(cell, 0.5) == pytest.approx(7.057228845729741e-08, rel=1e-12)

    def test_always_positive(self):
        for base in (LinearDeviceParams(), NonlinearDeviceParams()):
            for bit in (LRS, HRS):
                cell = sample_cell(bit, base, VariationSpec(0.1, 9), 1, 1)
                assert all(device_conductance(cell, v) > 0 for v in (-1.5, 0.0, 1.5))


class TestStateOrdering:
    @pytest.mark.parametrize("base", [LinearDeviceParams(), NonlinearDeviceParams()])
    def test_lrs_hrs_ratio_at_read_voltage(self, base):
        on = device_current(sample_cell(LRS, base, NOVAR, 0, 0), 0.5)
        off = device_current(sample_cell(HRS, base, NOVAR, 0, 0), 0.5)
        assert on / off >= 100

    def test_cellstate_preserves_dominance_under_variation(self):
        var = VariationSpec(0.10, 77)
        for base in (LinearDeviceParams(), NonlinearDeviceParams()):
            for k in range(64):
                cell = sample_cell(LRS, base, var, k, 3 * k + 1)
                g_on = device_conductance(CellState(LRS, cell.params), 0.5)
                g_off = device_conductance(CellState(HRS, cell.params), 0.5)
                assert g_on > g_off


class TestSampling:
    def test_zero_sigma_is_nominal(self, linear_base):
        cell = sample_cell(LRS, linear_base, NOVAR, 5, 7)
        assert cell.params == linear_base

    def test_deterministic_per_cell(self, nonlinear_base):
        var = VariationSpec(0.10, 123)
        assert sample_cell(LRS, nonlinear_base, var, 3, 9) == sample_cell(
            LRS, nonlinear_base, var, 3, 9
        )

    def test_grid_matches_scalar_path(self, linear_base):
        var = VariationSpec(0.10, 5)
        grid = CellGrid.sample(4, 6, linear_base, var)
        for i in range(4):
            for j in range(6):
                assert grid.cell(i, j, LRS).params == sample_cell(LRS, linear_base, var, i, j).params

    def test_factor_statistics(self):
        # oracle: sample stddev of the truncated factor over 10^6 draws
        var = VariationSpec(0.10, 2024)
        ii, jj = np.meshgrid(np.arange(1000), np.arange(1000), indexing="ij")
        factors = variation_factor(var, ii, jj, draw=0)
        assert 0.097 <= factors.std() <= 0.103
        assert abs(factors.mean() - 1.0) < 1e-3

    def test_truncation_bounds(self):
        var = VariationSpec(0.10, 8)
        ii, jj = np.meshgrid(np.arange(300), np.arange(300), indexing="ij")
        factors = variation_factor(var, ii, jj, draw=1)
        assert factors.min() >= 1 - 3 * 0.10
        assert factors.max() <= 1 + 3 * 0.10

    def test_order_independence(self, linear_base):
        var = VariationSpec(0.10, 31)
        a = sample_cell(HRS, linear_base, var, 9, 2)
        CellGrid.sample(3, 3, linear_base, var)  # unrelated sampling in between
        b = sample_cell(HRS, linear_base, var, 9, 2)
        assert a == b


class TestValidation:
    def test_linear_params_rejects_bad_values(self):
        with pytest.raises(ValueError):
            LinearDeviceParams(lrs_ohms=-1.0)
        with pytest.raises(ValueError):
            LinearDeviceParams(lrs_ohms=1e9, hrs_ohms=1e6)

    def test_nonlinear_params_rejects_bad_values(self):
        with pytest.raises(ValueError):
            NonlinearDeviceParams(k_on=1e-11, k_off=1e-8)
        with pytest.raises(ValueError):
            NonlinearDeviceParams(a=0.0)

    def test_variation_sigma_range(self):
        with pytest.raises(ValueError):
            VariationSpec(relative_sigma=0.34)
        with pytest.raises(ValueError):
            VariationSpec(relative_sigma=-0.01)

    def test_cellstate_bit_domain(self, linear_base):
        with pytest.raises(ValueError):
            CellState(2, linear_base)


def test_ideal_state_currents_match_models():
    i_on, i_off = ideal_state_currents(LinearDeviceParams(), 0.5)
    assert i_on == pytest.approx(0.5e-6, rel=1e-15)
    assert i_off == pytest.approx(0.5e-9, rel=1e-15)
    i_on, i_off = ideal_state_currents(NonlinearDeviceParams(), 0.5)
    assert i_on == pytest.approx(1e-8 * sinh_by_exp(1.5), rel=1e-12)
    assert i_off == pytest.approx(1e-11 * sinh_by_exp(1.5), rel=1e-12)
