# pylint: disable=missing-function-docstring,redefined-outer-name

import numpy as np
import pytest

from airfoil_inverse_design.aero.models import CpDistribution
from airfoil_inverse_design.encoding.sdf import SdfGrid, check_resolution, decode, encode
from airfoil_inverse_design.geometry.airfoil import surface_abscissae
from airfoil_inverse_design.utils.exceptions import DecodeError, OutOfDomainError


@pytest.fixture
def straight_cp():
    xs = surface_abscissae()
    return CpDistribution(xs=xs, cp_upper=-0.6 + 0.4 * xs, cp_lower=0.4 - 0.2 * xs)


@pytest.mark.encoding
def test_decode_recovers_straight_curves(straight_cp):
    grid = encode(straight_cp, 64)
    decoded = decode(grid)
    tolerance = 0.25 * grid.cp_cell_size
    assert np.max(np.abs(decoded.cp_upper - straight_cp.cp_upper)) < tolerance
    assert np.max(np.abs(decoded.cp_lower - straight_cp.cp_lower)) < tolerance


@pytest.mark.encoding
def test_sign_is_positive_inside_the_loop(straight_cp):
    grid = encode(straight_cp, 64)
    # cell centred near x=0.5, cp=0 lies between the curves
    assert grid.values[36, 32] > 0
    assert grid.values[0, 0] < 0
    assert grid.values[-1, -1] < 0


@pytest.mark.encoding
def test_field_has_unit_gradient_almost_everywhere(straight_cp):
    grid = encode(straight_cp, 64)
    d_row, d_col = np.gradient(grid.values)
    magnitude = np.hypot(d_row, d_col)
    assert np.mean(np.abs(magnitude - 1.0) <= 0.1) >= 0.9


@pytest.mark.encoding
def test_unsigned_grid_decodes_within_a_cell(straight_cp):
    grid = encode(straight_cp, 64, sdf_abs=True)
    assert grid.sdf_abs
    assert np.all(grid.values >= 0)
    stations = np.linspace(0.1, 0.9, 9)
    decoded = decode(grid, stations)
    expected_upper = -0.6 + 0.4 * stations
    expected_lower = 0.4 - 0.2 * stations
    assert np.max(np.abs(decoded.cp_upper - expected_upper)) < grid.cp_cell_size
    assert np.max(np.abs(decoded.cp_lower - expected_lower)) < grid.cp_cell_size


@pytest.mark.encoding
def test_normalised_values_round_trip(straight_cp):
    grid = encode(straight_cp, 16)
    assert np.max(np.abs(grid.normalized())) <= 1.0
    restored = SdfGrid.from_normalized(grid.normalized())
    assert restored.resolution == 16
    np.testing.assert_allclose(restored.values, grid.values)


@pytest.mark.encoding
def test_out_of_domain_cp_rejected(straight_cp):
    deep = straight_cp.shifted(-1.0)
    with pytest.raises(OutOfDomainError) as info:
        encode(deep, 32)
    assert info.value.details["min_cp"] < -1.5


@pytest.mark.encoding
@pytest.mark.parametrize("resolution", [0, 4, 60, 100])
def test_resolution_must_be_multiple_of_eight(resolution):
    with pytest.raises(ValueError):
        check_resolution(resolution)


@pytest.mark.encoding
def test_split_column_fails_to_decode():
    values = -np.ones((16, 16))
    values[4:8, :] = 1.0
    values[10:15, 5] = 1.0
    with pytest.raises(DecodeError) as info:
        decode(SdfGrid(resolution=16, values=values))
    assert info.value.column == 5


@pytest.mark.encoding
def test_specks_are_cleaned_before_decoding():
    values = -np.ones((16, 16))
    values[4:8, :] = 1.0
    values[12, 9] = 1.0
    decoded = decode(SdfGrid(resolution=16, values=values))
    assert decoded.xs.size == 65
    assert np.all(decoded.cp_upper < decoded.cp_lower)
