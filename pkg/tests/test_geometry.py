from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sitetracker.exceptions import DegenerateConfiguration, PointAtInfinity, TooFewPoints
from sitetracker.geometry import (Correspondence, Homography, HomographyEstimator,
                                  dlt_homography, load_correspondences, project_point,
                                  project_points, reprojection_error, save_correspondences)

SQUARE = [(0, 0), (1, 0), (1, 1), (0, 1)]
H_KNOWN = np.array([[1.2, 0.1, 3.0],
                    [-0.05, 0.9, -1.0],
                    [0.001, 0.002, 1.0]])


def corr(src, dst):
    return [Correspondence(a, b) for a, b in zip(src, dst)]


def apply_h(h, pts):
    pts = np.asarray(pts, dtype=float)
    q = np.c_[pts, np.ones(len(pts))] @ h.T
    return q[:, :2] / q[:, 2:]


def test_square_to_itself_is_identity():
    H = dlt_homography(corr(SQUARE, SQUARE))
    np.testing.assert_allclose(H.h, np.eye(3), atol=1e-12)


def test_translation_case():
    dst = [(x + 2, y + 3) for x, y in SQUARE]
    H = dlt_homography(corr(SQUARE, dst))
    np.testing.assert_allclose(H.h[:, 2], [2, 3, 1], atol=1e-12)
    np.testing.assert_allclose(H.h[:2, :2], np.eye(2), atol=1e-12)
    np.testing.assert_allclose(project_point(H, (0, 0)), (2, 3), atol=1e-12)


def test_recovers_known_homography_from_eight_points():
    rng = np.random.default_rng(3)
    src = rng.uniform(0, 640, (8, 2))
    dst = apply_h(H_KNOWN, src)
    H = dlt_homography(corr(src, dst))
    np.testing.assert_allclose(H.h, H_KNOWN, atol=1e-8)
    assert reprojection_error(H, corr(src, dst)) < 1e-12


def test_too_few_and_degenerate_configurations():
    with pytest.raises(TooFewPoints):
        dlt_homography(corr(SQUARE[:3], SQUARE[:3]))
    line = [(0, 0), (1, 1), (2, 2), (3, 3)]
    with pytest.raises(DegenerateConfiguration):
        dlt_homography(corr(line, SQUARE))
    with pytest.raises(DegenerateConfiguration):
        dlt_homography(corr([(0, 0)] * 4, SQUARE))


def test_project_identity_and_point_at_infinity():
    np.testing.assert_allclose(project_point(Homography.identity(), (3.5, -2)), (3.5, -2))
    h = np.array([[1.0, 0, 0], [0, 1, 0], [1, 0, 1]])
    with pytest.raises(PointAtInfinity):
        project_point(h, (-1.0, 0.0))


def test_project_matches_rational_arithmetic():
    rng = np.random.default_rng(11)
    h = rng.integers(-9, 10, (3, 3)).astype(float)
    h[2, 2] = 7.0
    p = (Fraction(3, 4), Fraction(-5, 2))
    rows = [[Fraction(int(v)) for v in row] for row in h]
    q = [rows[i][0] * p[0] + rows[i][1] * p[1] + rows[i][2] for i in range(3)]
    expect = (float(q[0] / q[2]), float(q[1] / q[2]))
    np.testing.assert_allclose(project_point(h, (0.75, -2.5)), expect, rtol=1e-14)


def test_reprojection_error_examples():
    H = Homography.identity()
    assert reprojection_error(H, corr(SQUARE, SQUARE)) == 0.0
    assert reprojection_error(H, corr([(0, 0)], [(0.3, 0.4)])) == pytest.approx(0.25)
    assert reprojection_error(H, corr([(0, 0), (1, 1)], [(1, 0), (1, 3)])) == pytest.approx(5.0)


def test_correspondence_file_round_trip(tmp_path):
    c = corr(SQUARE, [(2 * x, 3 * y) for x, y in SQUARE])
    path = tmp_path / "c.txt"
    save_correspondences(path, c)
    assert load_correspondences(path) == c
    path.write_text("1 2 3\n")
    with pytest.raises(ValueError):
        load_correspondences(path)


def test_estimator_api():
    rng = np.random.default_rng(5)
    X = rng.uniform(0, 100, (10, 2))
    y = apply_h(H_KNOWN, X)
    est = HomographyEstimator().fit(X, y)
    np.testing.assert_allclose(est.transform(X), y, atol=1e-8)
    np.testing.assert_allclose(est.inverse_transform(y), X, atol=1e-6)
    assert est.reprojection_error_ < 1e-12


coord = st.floats(-50, 50, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-0.3, 0.3), min_size=8, max_size=8), coord, coord)
def test_inverse_round_trip(perturb, x, y):
    h = np.eye(3) + np.array(perturb + [0.0]).reshape(3, 3) * np.array([[1, 1, 10], [1, 1, 10], [0.01, 0.01, 0]])
    H = Homography(h)
    try:
        q = project_point(H, (x, y))
    except PointAtInfinity:
        return
    if not np.all(np.abs(q) < 1e6):
        return
    np.testing.assert_allclose(project_point(H.inverse(), q), (x, y), atol=1e-7)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 20.0))
def test_world_scaling_is_consistent(s):
    rng = np.random.default_rng(1)
    src = rng.uniform(0, 100, (6, 2))
    dst = apply_h(H_KNOWN, src)
    H1 = dlt_homography(corr(src, dst))
    H2 = dlt_homography(corr(src, dst * s))
    probe = rng.uniform(0, 100, (5, 2))
    np.testing.assert_allclose(project_points(H2, probe), s * project_points(H1, probe),
                               rtol=1e-8, atol=1e-8)
