""" Unittest module for the range image projection. """
import pytest
import numpy as np

from ptzprop.checks import check_random_state
from ptzprop.geometry import spherical_angles
from ptzprop.projector import (ImageGeometry, ImageSet, ProjectorConfig,
                               compute_normals, fill_gaps, gaussian_kernel,
                               masked_convolve, process, project, smooth)


def _image(geometry, range_img, intensity=None):
    """ ImageSet with exact pixel-centre rays, valid where range > 0. """
    range_img = np.asarray(range_img, dtype=np.float64)
    valid = range_img > 0
    if intensity is None:
        intensity = np.where(valid, 100.0, 0.0)
    return ImageSet(geometry, np.where(valid, range_img, 0.0),
                    np.asarray(intensity, dtype=np.float64), valid,
                    np.full(geometry.shape + (3,), np.nan),
                    np.full(geometry.shape, -1, dtype=np.int64),
                    geometry.pixel_rays())


def test_geometry_validation():
    geom = ImageGeometry()
    assert geom.shape == (180, 1200)
    assert geom.v_res == pytest.approx(1 / 3)
    assert geom.h_res == pytest.approx(0.3)
    with pytest.raises(ValueError, match='fov_down_deg'):
        ImageGeometry(fov_up_deg=-10, fov_down_deg=10)
    with pytest.raises(ValueError, match='odd'):
        ProjectorConfig(kernel_size=4)


def test_project_single_point():
    img = project(np.array([[10.0, 0.0, 0.0, 42.0]]))
    assert img.n_valid == 1
    assert img.valid[90, 0]
    assert img.range[90, 0] == pytest.approx(10)
    assert img.intensity[90, 0] == 42
    assert img.index[90, 0] == 0
    np.testing.assert_allclose(img.points[90, 0], [10, 0, 0])


def test_project_nearest_wins_and_discard():
    points = np.array([[10.0, 0.0, 0.0, 50.0],
                       [5.0, 0.0, 0.0, 100.0],
                       [1.0, 0.0, 1.0, 10.0]])
    img = project(points)
    assert img.n_valid == 1
    assert img.range[90, 0] == pytest.approx(5)
    assert img.intensity[90, 0] == 100
    assert img.index[90, 0] == 1
    assert img.n_discarded == 1


def test_project_wraps_azimuth():
    img = project(np.array([[10.0, -1e-3, 0.0, 1.0]]))
    assert img.valid[90, 1199]


def test_project_random_cloud():
    rng = check_random_state(0)
    geom = ImageGeometry()
    xyz = rng.randn(100000, 3) * [10, 10, 2]
    points = np.c_[xyz, rng.uniform(0, 255, len(xyz))]
    img = project(points, geom)

    r, az, el = spherical_angles(xyz)
    in_fov = (el <= geom.fov_up_deg) & (el >= geom.fov_down_deg)
    assert img.n_discarded == int((~in_fov).sum())

    row, col = geom.pixel_of(az[in_fov], el[in_fov])
    nearest = np.full(geom.shape, np.inf)
    np.minimum.at(nearest, (row, col), r[in_fov])
    expected_valid = np.isfinite(nearest)
    np.testing.assert_array_equal(img.valid, expected_valid)
    np.testing.assert_allclose(img.range[img.valid],
                               nearest[expected_valid])

    source = img.index[img.valid]
    np.testing.assert_allclose(img.points[img.valid], xyz[source],
                               atol=1e-9)
    np.testing.assert_array_equal(img.intensity[img.valid],
                                  points[source, 3])


def test_fill_gaps_midpoint():
    geom = ImageGeometry(rows=20, cols=4)
    range_img = np.zeros(geom.shape)
    range_img[10, 1] = 4.0
    range_img[14, 1] = 8.0
    img = fill_gaps(_image(geom, range_img), max_gap_rows=6)
    np.testing.assert_allclose(img.range[10:15, 1], [4, 5, 6, 7, 8])
    np.testing.assert_array_equal(np.flatnonzero(img.interpolated[:, 1]),
                                  [11, 12, 13])
    assert np.all(img.index[11:14, 1] == -1)
    # nothing to interpolate towards outside of the bracketing returns
    assert not img.valid[:10, 1].any() and not img.valid[15:, 1].any()
    np.testing.assert_allclose(np.linalg.norm(img.rays[11:14, 1], axis=1),
                               1)


@pytest.mark.parametrize('gap, filled', [(6, True), (7, False)])
def test_fill_gaps_cap(gap, filled):
    geom = ImageGeometry(rows=20, cols=4)
    range_img = np.zeros(geom.shape)
    range_img[2, 0] = 3.0
    range_img[3 + gap, 0] = 3.0
    img = fill_gaps(_image(geom, range_img), max_gap_rows=6)
    assert img.valid[3:3 + gap, 0].all() == filled
    assert img.valid[3:3 + gap, 0].any() == filled


def test_fill_gaps_ramp():
    geom = ImageGeometry(rows=30, cols=6)
    ramp = np.tile(np.linspace(2, 5, geom.rows)[:, None], (1, geom.cols))
    sparse = ramp.copy()
    sparse[1::3] = 0
    sparse[2::3] = 0
    img = fill_gaps(_image(geom, sparse), max_gap_rows=2)
    last = 3 * ((geom.rows - 1) // 3)
    np.testing.assert_allclose(img.range[:last + 1], ramp[:last + 1])


def test_gaussian_kernel():
    taps = gaussian_kernel(5, 1.0)
    assert taps.sum() == pytest.approx(1)
    np.testing.assert_allclose(taps, taps[::-1])
    assert np.argmax(taps) == 2


def test_smooth_constant_and_isolated():
    geom = ImageGeometry(rows=16, cols=24)
    range_img = np.full(geom.shape, 7.0)
    range_img[::3, ::4] = 0.0
    img = smooth(_image(geom, range_img))
    np.testing.assert_allclose(img.range[img.valid], 7)
    assert np.all(img.range[~img.valid] == 0)

    single = np.zeros(geom.shape)
    single[5, 23] = 3.0
    img = smooth(_image(geom, single))
    assert img.range[5, 23] == pytest.approx(3)
    assert img.n_valid == 1


@pytest.mark.parametrize('size, sigma', [(3, 0.8), (5, 1.0)])
def test_masked_convolve_naive(size, sigma):
    rng = check_random_state(3)
    rows, cols = 9, 11
    image = rng.uniform(1, 10, (rows, cols))
    mask = rng.rand(rows, cols) > 0.3
    taps = gaussian_kernel(size, sigma)
    half = size // 2

    expected = np.zeros((rows, cols))
    for r in range(rows):
        for c in range(cols):
            if not mask[r, c]:
                continue
            num = den = 0.0
            for i in range(-half, half + 1):
                for j in range(-half, half + 1):
                    rr, cc = r + i, (c + j) % cols
                    if not 0 <= rr < rows or not mask[rr, cc]:
                        continue
                    w = taps[i + half] * taps[j + half]
                    num += w * image[rr, cc]
                    den += w
            expected[r, c] = num / den

    out = masked_convolve(image, mask, size, sigma)
    np.testing.assert_allclose(out, expected, rtol=1e-10)


def test_normals_on_planes():
    geom = ImageGeometry(rows=60, cols=240)
    rays = geom.pixel_rays()
    # wall x = 5 in front of the sensor
    with np.errstate(divide='ignore'):
        wall = np.where(rays[..., 0] > 0.5, 5.0 / rays[..., 0], 0.0)
    img = compute_normals(_image(geom, wall))
    defined = img.has_normal
    assert defined.sum() > 0.85 * (wall > 0).sum()
    normals = img.normal[defined]
    np.testing.assert_allclose(normals, np.tile([-1, 0, 0],
                                                (len(normals), 1)),
                               atol=1e-9)

    # floor z = -1 below the sensor
    with np.errstate(divide='ignore'):
        floor = np.where(rays[..., 2] < -0.1, -1.0 / rays[..., 2], 0.0)
    img = compute_normals(_image(geom, floor))
    normals = img.normal[img.has_normal]
    assert len(normals) > 0
    assert np.std(normals, axis=0).max() < 0.005
    np.testing.assert_allclose(normals.mean(axis=0), [0, 0, 1], atol=1e-6)


def test_normals_isolated_pixel():
    geom = ImageGeometry(rows=10, cols=12)
    range_img = np.zeros(geom.shape)
    range_img[5, 5] = 2.0
    img = compute_normals(_image(geom, range_img))
    assert not img.has_normal.any()


def test_process_keeps_returns():
    rng = check_random_state(1)
    xyz = rng.randn(2000, 3) * [5, 5, 0.5]
    points = np.c_[xyz, rng.uniform(0, 255, len(xyz))]
    img = process(points)
    assert img.n_valid >= project(points).n_valid
    assert np.all(img.range[img.valid] > 0)
