import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from brickyard.synth import Camera, HeatSource, Scene, synth_thermal_image
from brickyard.thermal import (HeatDetection, calibrate_from_images, calibrate_k, default_k, detect_heat,
                               distance_from_width)

CAM = Camera.simple(200.0, 160, 120)
THRESH = 8000  # 80 C


def frame(pos, temperature=150.0):
    return synth_thermal_image(Scene(heat_sources=(HeatSource(tuple(pos), 0.075, temperature),)), CAM)


def test_disk_at_two_meters():
    det = detect_heat(frame((0.0, 0.0, 2.0)), THRESH, CAM)
    assert det.width == pytest.approx(15, abs=1)
    assert 1.8 <= det.distance <= 2.2
    assert det.peak == 15000


def test_ambient_frame_none():
    img = np.full((120, 160), 3000, np.uint16)
    assert detect_heat(img, THRESH, CAM) is None


def test_centered_disk_on_axis():
    det = detect_heat(frame((0.0, 0.0, 3.0)), THRESH, CAM)
    ang = math.acos(det.position[2] / np.linalg.norm(det.position))
    assert math.degrees(ang) <= 1.0


def test_position_is_backprojected_center():
    det = detect_heat(frame((0.3, -0.2, 2.5)), THRESH, CAM)
    cu, cv = det.center
    expect = det.distance * np.array([(cu - CAM.cx) / CAM.fx, (cv - CAM.cy) / CAM.fy, 1.0])
    assert np.allclose(det.position, expect)
    assert det.distance > 0


@given(st.integers(1, 200), st.integers(1, 200))
def test_distance_monotone_in_width(a, b):
    k = default_k(CAM)
    if a < b:
        assert distance_from_width(a, k) > distance_from_width(b, k)


def test_largest_component_wins():
    img = synth_thermal_image(Scene(heat_sources=(HeatSource((0.4, 0.0, 3.5)), HeatSource((-0.3, 0.0, 1.5)))), CAM)
    det = detect_heat(img, THRESH, CAM)
    assert det.distance == pytest.approx(1.5, rel=0.15)


def test_calibration_recovers_k():
    dists = [1.0, 1.5, 2.0, 3.0, 4.0]
    k = calibrate_from_images([frame((0, 0, d)) for d in dists], dists, THRESH, CAM)
    assert k == pytest.approx(default_k(CAM), rel=0.05)
    assert calibrate_k([(2.0, 15.0), (1.0, 30.0)]) == pytest.approx(30.0)
    with pytest.raises(ValueError):
        calibrate_k([])


def test_json_roundtrip():
    det = detect_heat(frame((0.1, 0.1, 2.0)), THRESH, CAM)
    back = HeatDetection.from_json(det.to_json())
    assert back.bbox == det.bbox and np.allclose(back.position, det.position)
