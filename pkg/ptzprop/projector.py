""" Spherical projection of point clouds into co-registered images.

Rows follow the elevation (top row = upper edge of the vertical FoV),
columns follow the azimuth (0 deg at sensor +x, counter-clockwise).
"""
# License: BSD (3-clause)

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.signal import convolve2d

from .checks import check_in_range, check_positive, freeze
from .geometry import direction_from_angles, spherical_angles


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ImageGeometry:
    """ Resolution and vertical field of view of the images.

    Parameters
    ----------
    rows : int (default: 180), number of elevation bins.
    cols : int (default: 1200), number of azimuth bins over 360 deg.
    fov_up_deg : float (default: 30.0), elevation of the top edge.
    fov_down_deg : float (default: -30.0), elevation of the bottom edge.
    """
    rows: int = 180
    cols: int = 1200
    fov_up_deg: float = 30.0
    fov_down_deg: float = -30.0

    def __post_init__(self):
        for name in ('rows', 'cols'):
            value = getattr(self, name)
            if int(value) != value or value < 2:
                raise ValueError(f"{name} should be an integer >= 2, "
                                 f"got {value}")
        check_in_range(self.fov_up_deg, 'fov_up_deg', -90, 90)
        check_in_range(self.fov_down_deg, 'fov_down_deg', -90, 90)
        if self.fov_down_deg >= self.fov_up_deg:
            raise ValueError("fov_down_deg should be below fov_up_deg")

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def vertical_fov(self):
        return self.fov_up_deg - self.fov_down_deg

    @property
    def v_res(self):
        """ Vertical angular resolution in degrees per row. """
        return self.vertical_fov / self.rows

    @property
    def h_res(self):
        """ Horizontal angular resolution in degrees per column. """
        return 360.0 / self.cols

    def pixel_of(self, azimuth, elevation):
        """ Return (row, col) indices for angles in degrees. """
        row = np.floor((self.fov_up_deg - np.asarray(elevation)) * self.rows
                       / self.vertical_fov).astype(np.int64)
        col = np.floor(np.asarray(azimuth) * self.cols / 360.0)
        col = col.astype(np.int64) % self.cols
        return np.clip(row, 0, self.rows - 1), col

    def pixel_angles(self):
        """ Return (azimuth, elevation) of the pixel centres, each of shape
        (rows, cols). """
        elevation = self.fov_up_deg - (np.arange(self.rows) + 0.5) * \
            self.v_res
        azimuth = (np.arange(self.cols) + 0.5) * self.h_res
        return np.meshgrid(azimuth, elevation)

    def pixel_rays(self):
        """ Unit direction of every pixel centre, shape (rows, cols, 3). """
        return direction_from_angles(*self.pixel_angles())


@dataclass(frozen=True)
class ProjectorConfig:
    """ Image geometry plus gap filling and smoothing parameters.

    Parameters
    ----------
    rows, cols, fov_up_deg, fov_down_deg : see ImageGeometry.
    max_gap_rows : int (default: 6), largest run of empty rows filled by
        column-wise interpolation.
    kernel_size : int (default: 5), odd width of the Gaussian kernel.
    kernel_sigma : float (default: 1.0), Gaussian standard deviation in
        pixels.
    """
    rows: int = 180
    cols: int = 1200
    fov_up_deg: float = 30.0
    fov_down_deg: float = -30.0
    max_gap_rows: int = 6
    kernel_size: int = 5
    kernel_sigma: float = 1.0

    def __post_init__(self):
        self.geometry  # validate the geometry fields
        if int(self.max_gap_rows) != self.max_gap_rows or \
                self.max_gap_rows < 0:
            raise ValueError(f"max_gap_rows should be an integer >= 0, got "
                             f"{self.max_gap_rows}")
        if int(self.kernel_size) != self.kernel_size or \
                self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size should be an odd integer, got "
                             f"{self.kernel_size}")
        check_positive(self.kernel_sigma, 'kernel_sigma')

    @property
    def geometry(self):
        return ImageGeometry(self.rows, self.cols, self.fov_up_deg,
                             self.fov_down_deg)


@dataclass(frozen=True, eq=False)
class ImageSet:
    """ Co-registered images of one projected cloud.

    Parameters
    ----------
    geometry : ImageGeometry.
    range : array, shape (rows, cols), meters, 0 where invalid.
    intensity : array, shape (rows, cols), in [0, 255], 0 where invalid.
    valid : bool array, shape (rows, cols).
    normal : array, shape (rows, cols, 3), unit normals, NaN where
        undefined.
    index : int array, shape (rows, cols), index of the source point in the
        projected cloud, -1 for empty or interpolated pixels.
    rays : array, shape (rows, cols, 3), unit direction of the source point,
        or of the pixel centre where there is none.
    interpolated : bool array, shape (rows, cols), pixels filled by
        interpolation.
    n_discarded : int, points discarded for lying outside of the vertical
        FoV.
    """
    geometry: ImageGeometry
    range: np.ndarray
    intensity: np.ndarray
    valid: np.ndarray
    normal: np.ndarray
    index: np.ndarray
    rays: np.ndarray
    interpolated: np.ndarray = field(default=None)
    n_discarded: int = 0

    def __post_init__(self):
        if self.interpolated is None:
            object.__setattr__(self, 'interpolated',
                               np.zeros(self.geometry.shape, dtype=bool))
        for name in ('range', 'intensity', 'valid', 'index', 'interpolated'):
            if getattr(self, name).shape != self.geometry.shape:
                raise ValueError(f"{name} should have shape "
                                 f"{self.geometry.shape}")
        freeze(self.range, self.intensity, self.valid, self.normal,
               self.index, self.rays, self.interpolated)

    @classmethod
    def empty(cls, geometry=None):
        """ All-invalid ImageSet. """
        geometry = ImageGeometry() if geometry is None else geometry
        shape = geometry.shape
        return cls(geometry, np.zeros(shape), np.zeros(shape),
                   np.zeros(shape, dtype=bool), np.full(shape + (3,), np.nan),
                   np.full(shape, -1, dtype=np.int64), geometry.pixel_rays())

    def replace(self, **changes):
        return replace(self, **changes)

    @property
    def shape(self):
        return self.geometry.shape

    @cached_property
    def points(self):
        """ Back-projected 3D points, shape (rows, cols, 3), zero where
        invalid. """
        return self.rays * self.range[..., None]

    @property
    def n_valid(self):
        return int(self.valid.sum())

    @property
    def has_normal(self):
        return np.all(np.isfinite(self.normal), axis=-1)


def project(cloud, geometry=None):
    """ Project a cloud into range, intensity and index images.

    Each point lands on ``row = floor((fov_up - elevation) / v_res)`` and
    ``col = floor(azimuth / h_res)``; when several points share a pixel the
    nearest one is kept. Points outside of the vertical FoV are discarded
    and counted.

    Parameters
    ----------
    cloud : AccumulatedCloud, LidarScan or array of shape (n_points, 4).
    geometry : ImageGeometry or None, default 180x1200 over +-30 deg.

    Return
    ------
    img : ImageSet, normals are left undefined.
    """
    geometry = ImageGeometry() if geometry is None else geometry
    points = getattr(cloud, 'points', cloud)
    points = np.asarray(points, dtype=np.float64).reshape(-1, 4)
    rows, cols = geometry.shape

    r, azimuth, elevation = spherical_angles(points[:, :3])
    with np.errstate(invalid='ignore'):
        in_fov = (r > 0) & (elevation <= geometry.fov_up_deg) & \
            (elevation >= geometry.fov_down_deg)
    n_discarded = int(points.shape[0] - in_fov.sum())
    if n_discarded:
        logger.debug("discarded %d points outside of the vertical FoV",
                     n_discarded)

    source = np.flatnonzero(in_fov)
    row, col = geometry.pixel_of(azimuth[source], elevation[source])
    flat = row * cols + col

    # nearest wins: sort by pixel then range, keep the first of each pixel
    order = np.lexsort((r[source], flat))
    flat_sorted = flat[order]
    pixels, first = np.unique(flat_sorted, return_index=True)
    winners = source[order[first]]

    range_img = np.zeros(rows * cols)
    intensity = np.zeros(rows * cols)
    valid = np.zeros(rows * cols, dtype=bool)
    index = np.full(rows * cols, -1, dtype=np.int64)
    rays = geometry.pixel_rays().reshape(-1, 3)

    range_img[pixels] = r[winners]
    intensity[pixels] = points[winners, 3]
    valid[pixels] = True
    index[pixels] = winners
    rays[pixels] = points[winners, :3] / r[winners, None]

    shape = geometry.shape
    return ImageSet(geometry, range_img.reshape(shape),
                    intensity.reshape(shape), valid.reshape(shape),
                    np.full(shape + (3,), np.nan), index.reshape(shape),
                    rays.reshape(shape + (3,)), n_discarded=n_discarded)


def fill_gaps(img, max_gap_rows=6):
    """ Fill short vertical runs of empty pixels by linear interpolation.

    An invalid pixel is filled when the nearest valid pixels above and below
    it in its column enclose at most ``max_gap_rows`` invalid rows. Range,
    intensity and ray direction are interpolated, and filled pixels are
    flagged as interpolated.
    """
    rows, _ = img.shape
    row_idx = np.arange(rows)[:, None]
    above = np.maximum.accumulate(np.where(img.valid, row_idx, -1), axis=0)
    below = np.minimum.accumulate(
        np.where(img.valid, row_idx, rows)[::-1], axis=0)[::-1]
    fill = ~img.valid & (above >= 0) & (below < rows) & \
        (below - above - 1 <= max_gap_rows)
    if not fill.any():
        return img

    r_fill, c_fill = np.nonzero(fill)
    a, b = above[fill], below[fill]
    w = (r_fill - a) / (b - a)
    range_img = img.range.copy()
    intensity = img.intensity.copy()
    rays = img.rays.copy()
    range_img[fill] = (1 - w) * img.range[a, c_fill] + w * img.range[b, c_fill]
    intensity[fill] = (1 - w) * img.intensity[a, c_fill] + \
        w * img.intensity[b, c_fill]
    ray = (1 - w)[:, None] * img.rays[a, c_fill] + \
        w[:, None] * img.rays[b, c_fill]
    rays[fill] = ray / np.linalg.norm(ray, axis=1, keepdims=True)

    logger.debug("filled %d pixels", len(r_fill))
    return img.replace(range=range_img, intensity=intensity,
                       valid=img.valid | fill,
                       interpolated=img.interpolated | fill, rays=rays)


def gaussian_kernel(size=5, sigma=1.0):
    """ Return the normalized 1d Gaussian taps of the separable kernel. """
    x = np.arange(size) - size // 2
    taps = np.exp(-0.5 * (x / sigma) ** 2)
    return taps / taps.sum()


def _pad(image, half):
    """ Zero-pad rows and wrap columns. """
    image = np.pad(image, ((half, half), (0, 0)), mode='constant')
    return np.pad(image, ((0, 0), (half, half)), mode='wrap')


def masked_convolve(image, mask, size=5, sigma=1.0):
    """ Gaussian smoothing renormalized over the pixels of mask.

    Pixels outside of the mask carry no weight. Rows are zero-padded and
    columns wrap around. Values outside of the mask are returned as 0.
    """
    taps = gaussian_kernel(size, sigma)
    half = size // 2
    weight = mask.astype(np.float64)

    def conv(a):
        a = convolve2d(_pad(a, half), taps[None, :], mode='valid')
        return convolve2d(a, taps[:, None], mode='valid')

    num = conv(np.where(mask, image, 0.0))
    den = conv(weight)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=mask & (den > 0))
    return out


def smooth(img, kernel_size=5, kernel_sigma=1.0):
    """ Smooth range and intensity with a masked Gaussian kernel.

    The validity mask is left unchanged.
    """
    range_img = masked_convolve(img.range, img.valid, kernel_size,
                                kernel_sigma)
    intensity = masked_convolve(img.intensity, img.valid, kernel_size,
                                kernel_sigma)
    return img.replace(range=range_img, intensity=intensity)


def compute_normals(img):
    """ Surface normals from cross-products of neighboring points.

    The normal of a valid pixel is the normalized mean of
    ``(right - c) x (down - c)`` and ``(left - c) x (up - c)``, oriented
    towards the sensor. Columns wrap around; pixels missing one of the four
    neighbors keep an undefined (NaN) normal.
    """
    P = img.points
    valid = img.valid

    def shifted(a, drow, dcol, fill):
        a = np.roll(a, -dcol, axis=1)
        if drow:
            a = np.roll(a, -drow, axis=0)
            edge = slice(-1, None) if drow > 0 else slice(0, 1)
            a[edge] = fill
        return a

    right = shifted(P, 0, 1, 0.0)
    left = shifted(P, 0, -1, 0.0)
    down = shifted(P, 1, 0, 0.0)
    up = shifted(P, -1, 0, 0.0)
    usable = valid & shifted(valid, 0, 1, False) & \
        shifted(valid, 0, -1, False) & shifted(valid, 1, 0, False) & \
        shifted(valid, -1, 0, False)

    def unit(v):
        norm = np.linalg.norm(v, axis=-1, keepdims=True)
        with np.errstate(invalid='ignore', divide='ignore'):
            return v / norm

    n1 = unit(np.cross(right - P, down - P))
    n2 = unit(np.cross(left - P, up - P))
    normal = unit(n1 + n2)
    normal[~usable] = np.nan
    normal[~np.all(np.isfinite(normal), axis=-1)] = np.nan
    with np.errstate(invalid='ignore'):
        facing = np.sum(normal * img.rays, axis=-1) > 0
    normal[facing] *= -1
    return img.replace(normal=normal)


def process(cloud, config=None):
    """ Project a cloud then fill gaps, smooth and compute normals. """
    config = ProjectorConfig() if config is None else config
    img = project(cloud, config.geometry)
    img = fill_gaps(img, config.max_gap_rows)
    img = smooth(img, config.kernel_size, config.kernel_sigma)
    return compute_normals(img)
