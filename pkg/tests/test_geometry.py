"""Tests for the cosine grid, CST parameterisation, sampling and repair."""

# pylint: disable=missing-function-docstring,redefined-outer-name

import numpy as np
import pytest
from pydantic import ValidationError

from airfoil_inverse_design.geometry.airfoil import (
    AirfoilCoords,
    AirfoilProfile,
    cosine_x_grid,
    repair,
    surface_abscissae,
)
from airfoil_inverse_design.geometry.cst import CstParams, airfoil_from_cst, cst_evaluate, cst_fit
from airfoil_inverse_design.geometry.sampling import coefficient_bounds, sample_dataset
from airfoil_inverse_design.utils.exceptions import FitError, RepairError


@pytest.fixture
def params():
    return CstParams(
        upper=[0.17, 0.16, 0.20, 0.17, 0.23, 0.18, 0.21],
        lower=[-0.13, -0.15, -0.08, -0.25, 0.04, 0.08, 0.05],
        zte_upper=0.0005,
        zte_lower=-0.0005,
    )


@pytest.mark.geometry
def test_cosine_grid_layout():
    grid = cosine_x_grid(130)
    assert grid.shape == (131,)
    assert grid[0] == 1.0
    assert grid[-1] == 1.0
    assert grid[65] == 0.0
    np.testing.assert_array_equal(grid, grid[::-1])


@pytest.mark.geometry
@pytest.mark.parametrize("count", [3, 129, 2])
def test_cosine_grid_rejects_bad_counts(count):
    with pytest.raises(ValueError):
        cosine_x_grid(count)


@pytest.mark.geometry
def test_surface_abscissae_span_the_chord():
    stations = surface_abscissae()
    assert stations.size == 65
    assert stations[0] == 0.0
    assert stations[-1] == 1.0
    assert np.all(np.diff(stations) > 0)


@pytest.mark.geometry
def test_airfoil_coords_require_shared_grid():
    with pytest.raises(ValidationError):
        AirfoilCoords(x=np.linspace(0.0, 1.0, 131), y=np.zeros(131))


@pytest.mark.geometry
def test_ordinates_exclude_leading_edge(params):
    airfoil = airfoil_from_cst(params)
    ordinates = airfoil.ordinates()
    assert ordinates.shape == (130,)
    rebuilt = AirfoilCoords.from_ordinates(ordinates)
    np.testing.assert_allclose(rebuilt.y, airfoil.y, atol=1e-15)


@pytest.mark.geometry
def test_scaled_airfoil_round_trips(params):
    airfoil = airfoil_from_cst(params)
    scaled = airfoil.scaled(1000.0)
    assert scaled.y_scale == 1000.0
    np.testing.assert_allclose(scaled.unscaled().y, airfoil.y)
    assert scaled.max_thickness() == pytest.approx(airfoil.max_thickness())


@pytest.mark.geometry
def test_cst_surface_endpoints(params):
    assert cst_evaluate(params, "upper", np.array([0.0]))[0] == 0.0
    assert cst_evaluate(params, "lower", np.array([1.0]))[0] == pytest.approx(params.zte_lower)


@pytest.mark.geometry
def test_cst_evaluate_rejects_abscissae_outside_chord(params):
    with pytest.raises(ValueError):
        cst_evaluate(params, "upper", np.array([0.5, 1.2]))


@pytest.mark.geometry
def test_cst_fit_recovers_generating_parameters(params):
    result = cst_fit(airfoil_from_cst(params), order=6)
    assert result.max_residual < 1e-12
    np.testing.assert_allclose(result.params.as_vector(), params.as_vector(), atol=1e-8)
    assert result.params.zte_upper == pytest.approx(params.zte_upper, abs=1e-10)


@pytest.mark.geometry
def test_cst_fit_of_embedded_baseline(baseline_fit):
    assert baseline_fit.params.order == 6
    assert baseline_fit.max_residual < 7e-4


@pytest.mark.geometry
def test_cst_fit_rejects_low_order(params):
    with pytest.raises(ValueError, match="order"):
        cst_fit(airfoil_from_cst(params), order=1)


@pytest.mark.geometry
def test_cst_fit_rejects_non_finite_points():
    upper = np.array([[0.0, 0.0], [0.3, 0.06], [0.6, np.nan], [1.0, 0.0]])
    lower = np.array([[0.0, 0.0], [0.3, -0.05], [0.6, -0.03], [1.0, 0.0]])
    with pytest.raises(FitError):
        cst_fit(AirfoilProfile(upper=upper, lower=lower), order=2)


@pytest.mark.geometry
def test_cst_params_reject_mismatched_orders():
    with pytest.raises(ValidationError):
        CstParams(upper=[0.1, 0.2, 0.3], lower=[-0.1, -0.2, -0.3, -0.1])


@pytest.mark.geometry
def test_sample_dataset_respects_box(params):
    samples = sample_dataset(params, 0.25, 40, seed=5)
    low, high = coefficient_bounds(params, 0.25)
    assert len(samples) == 40
    for sample in samples:
        vector = sample.as_vector()
        assert np.all(vector >= low - 1e-15)
        assert np.all(vector <= high + 1e-15)
        assert sample.zte_upper == params.zte_upper


@pytest.mark.geometry
def test_sample_dataset_fills_every_stratum(params):
    n = 20
    samples = np.array([sample.as_vector() for sample in sample_dataset(params, 0.25, n, seed=1)])
    low, high = coefficient_bounds(params, 0.25)
    unit = (samples - low) / (high - low)
    strata = np.floor(unit * n).astype(int)
    for column in strata.T:
        np.testing.assert_array_equal(np.sort(column), np.arange(n))


@pytest.mark.geometry
def test_sample_dataset_is_deterministic(params):
    first = sample_dataset(params, 0.25, 8, seed=11)
    second = sample_dataset(params, 0.25, 8, seed=11)
    assert [s.as_vector().tolist() for s in first] == [s.as_vector().tolist() for s in second]


@pytest.mark.geometry
@pytest.mark.parametrize("fraction", [0.0, -0.1])
def test_sample_dataset_rejects_non_positive_fraction(params, fraction):
    with pytest.raises(ValueError, match="positive"):
        sample_dataset(params, fraction, 4, seed=0)


@pytest.mark.geometry
def test_repair_keeps_smooth_airfoil(params):
    airfoil = airfoil_from_cst(params)
    repaired = repair(airfoil.ordinates())
    assert np.max(np.abs(repaired.y - airfoil.y)) <= 8e-6 + 1e-12
    assert repaired.y[65] == 0.0


@pytest.mark.geometry
def test_repair_resolves_local_crossing(params):
    ordinates = airfoil_from_cst(params).ordinates()
    # upper point next to the trailing edge pushed below its lower partner
    ordinates[1] = ordinates[128] - 1e-3
    repaired = repair(ordinates)
    _, upper = repaired.upper_surface()
    _, lower = repaired.lower_surface()
    assert np.all(upper >= lower - 1e-12)


@pytest.mark.geometry
def test_repair_rejects_inverted_airfoil(params):
    ordinates = airfoil_from_cst(params).ordinates()
    inverted = np.concatenate((ordinates[65:][::-1], ordinates[:65][::-1]))
    with pytest.raises(RepairError):
        repair(inverted)


@pytest.mark.geometry
def test_repair_rejects_non_finite_input(params):
    ordinates = airfoil_from_cst(params).ordinates()
    ordinates[10] = np.inf
    with pytest.raises(RepairError):
        repair(ordinates)


@pytest.mark.geometry
def test_repair_rejects_wrong_length():
    with pytest.raises(ValueError):
        repair(np.zeros(129))
