# pylint: disable=missing-function-docstring,redefined-outer-name

import numpy as np
import pytest

from airfoil_inverse_design.aero.models import CpDistribution
from airfoil_inverse_design.features.extraction import (
    PressureFeatures,
    detect_anchors,
    extract,
    feature_error,
    feature_mae,
    feature_mre,
    moving_average,
)
from airfoil_inverse_design.geometry.airfoil import surface_abscissae
from airfoil_inverse_design.utils.constants import FEATURE_NAMES


@pytest.mark.features
def test_shock_located_at_recovery(synthetic_cp):
    features = extract(synthetic_cp)
    assert not features.degenerate
    assert abs(features.f_sw - 0.5) < 0.03
    assert 0.55 < features.f_ss < 0.75


@pytest.mark.features
def test_peaks_and_lower_minimum(synthetic_cp):
    features = extract(synthetic_cp)
    assert features.f_sp == pytest.approx(-1.0, abs=1e-9)
    assert features.f_lm == pytest.approx(0.1, abs=1e-9)


@pytest.mark.features
def test_pre_shock_gradient_and_area(synthetic_cp):
    features = extract(synthetic_cp)
    assert features.f_pg > 0.0
    assert 0.0 <= features.f_area < 0.01


@pytest.mark.features
def test_shock_follows_its_position(make_cp):
    early = extract(make_cp(shock_x=0.35))
    late = extract(make_cp(shock_x=0.7))
    assert early.f_sw < 0.4
    assert late.f_sw > 0.65


@pytest.mark.features
def test_steep_region_brackets_shock(synthetic_cp):
    anchors = detect_anchors(synthetic_cp)
    assert anchors.x2 < anchors.x_sw < anchors.x3
    assert anchors.x_sp == 0.0
    assert anchors.max_slope > 0.0


@pytest.fixture
def ramp_cp():
    xs = surface_abscissae()
    upper = np.interp(xs, [0.0, 0.5, 0.55, 1.0], [-1.0, -1.0, -0.2, -0.2])
    return CpDistribution(xs=xs, cp_upper=upper, cp_lower=np.full(xs.size, 0.2))


@pytest.mark.features
def test_linear_ramp_anchors_within_one_cell(ramp_cp):
    anchors = detect_anchors(ramp_cp)
    cell = 0.025
    assert not anchors.degenerate
    assert anchors.x2 == pytest.approx(0.5, abs=cell)
    assert anchors.x3 == pytest.approx(0.55, abs=cell)
    assert anchors.x_sw == pytest.approx(0.525, abs=cell)
    assert anchors.x2 <= anchors.x_sw <= anchors.x3


@pytest.mark.features
@pytest.mark.parametrize("curve", ["ramp", "tanh"])
def test_steep_region_ends_below_tenth_of_smoothed_maximum(curve, ramp_cp, synthetic_cp):
    cp = ramp_cp if curve == "ramp" else synthetic_cp
    anchors = detect_anchors(cp)
    threshold = 0.1 * anchors.max_slope
    raw_slope = np.diff(cp.cp_upper) / np.diff(cp.xs)
    assert np.all(raw_slope[anchors.foot_index : anchors.end_index] >= threshold)
    assert raw_slope[anchors.foot_index - 1] < threshold
    assert raw_slope[anchors.end_index] < threshold


@pytest.mark.features
def test_monotone_curve_is_degenerate():
    xs = surface_abscissae()
    cp = CpDistribution(xs=xs, cp_upper=-0.2 - 0.5 * xs, cp_lower=0.3 - 0.1 * xs)
    features = extract(cp)
    assert features.degenerate
    assert features.f_ss == 0.0
    assert features.f_pg == 0.0
    assert features.f_area == 0.0
    assert 0.0 <= features.f_sw <= 1.0


@pytest.mark.features
def test_slope_mode_reports_largest_slope(synthetic_cp):
    features = extract(synthetic_cp, fsw_mode="slope")
    assert features.fsw_mode == "slope"
    assert features.f_sw == pytest.approx(detect_anchors(synthetic_cp).max_slope)
    assert features.f_sw > 1.0


@pytest.mark.features
def test_window_edge_anchor(synthetic_cp):
    peak = extract(synthetic_cp)
    edge = extract(synthetic_cp, anchor_mode="window_edge")
    assert edge.f_sp == peak.f_sp
    assert edge.f_ss == peak.f_ss
    assert edge.f_pg > 0.0
    assert edge.f_area >= 0.0


@pytest.mark.features
def test_vector_follows_feature_order(synthetic_cp):
    features = extract(synthetic_cp)
    vector = features.to_vector()
    assert vector.shape == (len(FEATURE_NAMES),)
    assert vector[FEATURE_NAMES.index("f_lm")] == features.f_lm
    assert PressureFeatures.from_vector(vector) == features


@pytest.mark.features
@pytest.mark.parametrize(
    "override",
    [{"f_sw": 1.2}, {"f_ss": -0.1}, {"f_area": -0.01}, {"f_pg": float("nan")}],
)
def test_feature_ranges_validated(override):
    values = {"f_sp": -1.0, "f_sw": 0.5, "f_ss": 0.3, "f_pg": 0.4, "f_lm": 0.1, "f_area": 0.001}
    values.update(override)
    with pytest.raises(ValueError):
        PressureFeatures(**values)


@pytest.mark.features
def test_feature_error_metrics():
    target = PressureFeatures(f_sp=-1.0, f_sw=0.5, f_ss=0.4, f_pg=0.2, f_lm=0.1, f_area=0.0)
    observed = PressureFeatures(f_sp=-0.9, f_sw=0.5, f_ss=0.2, f_pg=0.2, f_lm=0.1, f_area=0.0)
    errors = feature_error(target, observed)
    np.testing.assert_allclose(errors, [0.1, 0.0, 0.2, 0.0, 0.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(feature_mae(np.vstack((errors, np.zeros(6)))), errors / 2.0)
    relative = feature_mre(target.to_vector(), observed.to_vector())
    assert relative[0] == pytest.approx(0.1)
    assert relative[2] == pytest.approx(0.5)
    assert relative[5] == 0.0


@pytest.mark.features
def test_moving_average_keeps_lines_and_edges():
    values = np.arange(10, dtype=float)
    smoothed = moving_average(values, 5)
    np.testing.assert_allclose(smoothed[2:-2], values[2:-2])
    assert smoothed[0] == pytest.approx((0 + 0 + 0 + 1 + 2) / 5)


@pytest.mark.features
def test_moving_average_needs_odd_window():
    with pytest.raises(ValueError):
        moving_average(np.zeros(5), 4)
