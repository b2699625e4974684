""" Ground removal and object clustering on range images.

Pixels are grouped by a breadth-first labeling over 4-connected neighbors
(columns wrap around 360 deg), seeded at every unlabeled valid pixel. A
neighbor joins the traversal when the depth angle between the two returns
is large enough, which is the case on continuous surfaces, and when its
return is bright enough and of similar intensity.
"""
# License: BSD (3-clause)

import logging
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .checks import check_in_range, check_positive, freeze
from .geometry import angle_between


logger = logging.getLogger(__name__)

UNLABELED = 0
BACKGROUND = 1
FIRST_CLUSTER = 2
LABELING_METHODS = ('graph', 'bfs')


@dataclass(frozen=True)
class SegmenterConfig:
    """ Clustering, filtering and ground removal parameters.

    Parameters
    ----------
    beta_min_deg : float (default: 14.0), depth angle above which two
        neighbors lie on the same surface.
    intensity_min : float (default: 25.0), intensity floor of cluster
        members.
    intensity_band : float (default: 60.0), largest intensity difference
        between two neighbors of a cluster.
    volume_min_m3, volume_max_m3 : float (default: 0.01, 0.8), admissible
        bounding box volume.
    points_min, points_max : int (default: 50, 5000), admissible number of
        points.
    normal_stddev_min : float (default: 0.01), floor on the spread of the
        cluster normals, flat patches fall below it.
    ground_angle_deg : float (default: 10.0), largest inclination of a
        ground segment.
    ground_height_band_m : float (default: 0.3), largest height difference
        with the running ground height of the column.
    ground_min_run_m : float (default: 0.05), horizontal run below which
        the inclination is not measured.
    intensity_check : bool (default: True), use the intensity conditions
        in labeling.
    cluster_filters : bool (default: True), apply filter_clusters.
    ground_removal : bool (default: True), apply remove_ground.
    labeling : str (default: 'graph'), 'graph' or 'bfs', both give the
        same labels.
    """
    beta_min_deg: float = 14.0
    intensity_min: float = 25.0
    intensity_band: float = 60.0
    volume_min_m3: float = 0.01
    volume_max_m3: float = 0.8
    points_min: int = 50
    points_max: int = 5000
    normal_stddev_min: float = 0.01
    ground_angle_deg: float = 10.0
    ground_height_band_m: float = 0.3
    ground_min_run_m: float = 0.05
    intensity_check: bool = True
    cluster_filters: bool = True
    ground_removal: bool = True
    labeling: str = 'graph'

    def __post_init__(self):
        check_in_range(self.beta_min_deg, 'beta_min_deg', 0, 90,
                       closed=(False, False))
        check_in_range(self.intensity_min, 'intensity_min', 0, 255)
        check_positive(self.intensity_band, 'intensity_band')
        check_positive(self.volume_min_m3, 'volume_min_m3', strict=False)
        if self.volume_min_m3 >= self.volume_max_m3:
            raise ValueError("volume_min_m3 should be below volume_max_m3")
        check_positive(self.points_min, 'points_min', strict=False)
        if self.points_min >= self.points_max:
            raise ValueError("points_min should be below points_max")
        check_positive(self.normal_stddev_min, 'normal_stddev_min')
        check_in_range(self.ground_angle_deg, 'ground_angle_deg', 0, 90,
                       closed=(False, False))
        check_positive(self.ground_height_band_m, 'ground_height_band_m')
        check_positive(self.ground_min_run_m, 'ground_min_run_m')
        if self.labeling not in LABELING_METHODS:
            raise ValueError(f"labeling should be in {LABELING_METHODS}, "
                             f"got {self.labeling!r}")


###############################################################################
# Ground removal

def ground_mask(img, ground_angle=10.0, height_band=0.3, min_run=0.05):
    """ Flag the ground pixels of an ImageSet.

    Every column is swept from the bottom row upwards. The lowest valid
    pixel below the sensor seeds the ground. A later pixel is ground when
    the segment from the last ground anchor is inclined by at most
    ``ground_angle`` and its height is within ``height_band`` of the running
    ground height. Over horizontal runs shorter than ``min_run`` the height
    step is compared with ``tan(ground_angle) * min_run`` instead.

    Return
    ------
    mask : bool array, shape (rows, cols).
    """
    rows, cols = img.shape
    P = img.points
    valid = img.valid
    max_slope = np.tan(np.radians(ground_angle))
    max_step = max_slope * min_run

    mask = np.zeros((rows, cols), dtype=bool)
    seeded = np.zeros(cols, dtype=bool)
    anchor = np.zeros((cols, 3))
    height = np.zeros(cols)
    for row in range(rows - 1, -1, -1):
        p = P[row]
        v = valid[row]

        seed = v & ~seeded & (p[:, 2] < 0)
        anchor[seed] = p[seed]
        height[seed] = p[seed, 2]
        mask[row, seed] = True

        test = v & seeded
        run = np.hypot(p[:, 0] - anchor[:, 0], p[:, 1] - anchor[:, 1])
        dz = np.abs(p[:, 2] - anchor[:, 2])
        long_run = run >= min_run
        flat = np.where(long_run, dz <= max_slope * run, dz <= max_step)
        ground = test & flat & (np.abs(p[:, 2] - height) <= height_band)
        mask[row, ground] = True
        height[ground] = p[ground, 2]
        advance = ground & long_run
        anchor[advance] = p[advance]

        seeded |= seed
    return mask


def remove_ground(img, ground_angle=10.0, height_band=0.3, min_run=0.05):
    """ Invalidate the ground pixels of an ImageSet (see ground_mask). """
    mask = ground_mask(img, ground_angle, height_band, min_run)
    logger.debug("removed %d ground pixels out of %d valid", mask.sum(),
                 img.n_valid)
    keep = ~mask
    return img.replace(valid=img.valid & keep, range=img.range * keep,
                       intensity=img.intensity * keep,
                       interpolated=img.interpolated & keep)


###############################################################################
# Labeling

@dataclass(frozen=True, eq=False)
class LabelImage:
    """ Per-pixel labels: 0 unlabeled or invalid, 1 background, >= 2
    clusters numbered in row-major order of their seed pixel. """
    labels: np.ndarray

    def __post_init__(self):
        freeze(self.labels)

    @property
    def shape(self):
        return self.labels.shape

    @property
    def n_clusters(self):
        return max(int(self.labels.max(initial=0)) - 1, 0)

    def cluster_ids(self):
        return np.arange(FIRST_CLUSTER, FIRST_CLUSTER + self.n_clusters)


def depth_angle(range_a, range_b, alpha_deg):
    """ Depth angle in degrees between two neighboring returns.

    ``beta = arctan(d2 sin(alpha) / (d1 - d2 cos(alpha)))`` with d1 the
    larger and d2 the smaller range, alpha the angle between the two beams.
    """
    range_a = np.asarray(range_a, dtype=np.float64)
    range_b = np.asarray(range_b, dtype=np.float64)
    d1 = np.maximum(range_a, range_b)
    d2 = np.minimum(range_a, range_b)
    alpha = np.radians(alpha_deg)
    return np.degrees(np.arctan2(d2 * np.sin(alpha),
                                 d1 - d2 * np.cos(alpha)))


def _bright(img, cfg):
    """ Pixels a traversal may enter, the low ones only start their own. """
    if cfg.intensity_check:
        return img.valid & (img.intensity > cfg.intensity_min)
    return img.valid.copy()


def _joins(img, cfg):
    """ Depth angle and intensity band tests between neighbors.

    ``*_right[r, c]`` relate (r, c) and (r, c + 1 mod cols), ``*_down[r, c]``
    relate (r, c) and (r + 1, c).
    """
    geom = img.geometry
    rng, inten = img.range, img.intensity
    valid = img.valid
    beta_right = valid & np.roll(valid, -1, axis=1) & (depth_angle(
        rng, np.roll(rng, -1, axis=1), geom.h_res) > cfg.beta_min_deg)
    beta_down = valid[:-1] & valid[1:] & (depth_angle(
        rng[:-1], rng[1:], geom.v_res) > cfg.beta_min_deg)
    if cfg.intensity_check:
        band_right = np.abs(inten - np.roll(inten, -1, axis=1)) < \
            cfg.intensity_band
        band_down = np.abs(inten[:-1] - inten[1:]) < cfg.intensity_band
    else:
        band_right = np.ones_like(beta_right)
        band_down = np.ones_like(beta_down)
    return beta_right, beta_down, band_right, band_down


def _bright_components(bright, beta_right, beta_down, band_right, band_down):
    """ Connected components of the bright pixels.

    Return
    ------
    comp : int array, shape (rows, cols), component of each bright pixel,
        -1 elsewhere.
    first : int array, flat index of the first pixel of each component.
    """
    rows, cols = bright.shape
    right = bright & np.roll(bright, -1, axis=1) & beta_right & band_right
    down = bright[:-1] & bright[1:] & beta_down & band_down
    flat = np.arange(rows * cols).reshape(rows, cols)
    src = np.concatenate([flat[right], flat[:-1][down]])
    dst = np.concatenate([np.roll(flat, -1, axis=1)[right], flat[1:][down]])
    graph = coo_matrix((np.ones(len(src), dtype=np.int8), (src, dst)),
                       shape=(rows * cols, rows * cols))
    _, component = connected_components(graph, directed=False)

    comp = np.full(rows * cols, -1, dtype=np.int64)
    bright_flat = np.flatnonzero(bright)
    if bright_flat.size == 0:
        return comp.reshape(rows, cols), np.zeros(0, dtype=np.int64)
    _, first, inverse = np.unique(component[bright_flat], return_index=True,
                                  return_inverse=True)
    comp[bright_flat] = inverse.ravel()
    return comp.reshape(rows, cols), bright_flat[first]


def _alternate(start_ok, chained):
    """ Seeds along a run of low pixels.

    A low pixel starts a traversal when nothing reached it before, which
    includes the low pixel on its left when that one started. Along a
    chain of candidates the seeds therefore alternate.
    """
    pos = np.arange(start_ok.size)
    link = np.zeros(start_ok.size, dtype=bool)
    link[1:] = chained[1:] & start_ok[:-1]
    start = np.maximum.accumulate(np.where(link, 0, pos))
    return start_ok & ((pos - start) % 2 == 0)


def _label_graph(img, cfg):
    """ Component based labeling, same labels as the queue traversal.

    A traversal seeded on a bright pixel labels exactly its bright
    component. A traversal seeded on a low pixel marks nothing but itself
    and the bright components it enters directly. The low pixels seeding
    a traversal are resolved row by row; the other low pixels are reached
    from a neighbor and get the background label.
    """
    rows, cols = img.shape
    bright = _bright(img, cfg)
    low = img.valid & ~bright
    beta_right, beta_down, band_right, band_down = _joins(img, cfg)
    comp, first = _bright_components(bright, beta_right, beta_down,
                                     band_right, band_down)
    # time at which each component gets its label
    t_comp = first.copy()
    seed = np.zeros((rows, cols), dtype=bool)
    never = rows * cols

    for r in np.flatnonzero(low.any(axis=1)):
        idx = r * cols + np.arange(cols)
        # bright neighbors a low pixel of this row enters: (comp, push)
        neighbors = [
            (np.roll(comp[r], -1), beta_right[r], band_right[r]),
            (np.roll(comp[r], 1), np.roll(beta_right[r], 1),
             np.roll(band_right[r], 1))]
        if r > 0:
            neighbors.append((comp[r - 1], beta_down[r - 1],
                              band_down[r - 1]))
        if r < rows - 1:
            neighbors.append((comp[r + 1], beta_down[r], band_down[r]))
        neighbors = [(c, beta & (c >= 0), beta & band & (c >= 0))
                     for c, beta, band in neighbors]
        above = beta_down[r - 1] & seed[r - 1] if r > 0 else \
            np.zeros(cols, dtype=bool)
        chained = np.roll(low[r] & beta_right[r], 1)
        chained[0] = False
        wrap = low[r, -1] & beta_right[r, -1]

        t_row, row_seed = t_comp, None
        for _ in range(cols + 2):
            t_ext = np.append(t_row, never)
            reached = above.copy()
            for c, beta, _ in neighbors:
                reached |= beta & (t_ext[c] < idx)
            new_seed = _alternate(low[r] & ~reached, chained)
            if new_seed[0] and wrap:
                new_seed[-1] = False
            t_new = t_comp.copy()
            for c, _, push in neighbors:
                enter = new_seed & push
                np.minimum.at(t_new, c[enter], idx[enter])
            if row_seed is not None and np.array_equal(new_seed, row_seed) \
                    and np.array_equal(t_new, t_row):
                break
            t_row, row_seed = t_new, new_seed
        seed[r] = row_seed
        t_comp = t_row

    seed_flat = np.flatnonzero(seed)
    events = np.union1d(seed_flat, t_comp)
    labels = np.where(low, BACKGROUND, UNLABELED).astype(np.uint32).ravel()
    labels[seed_flat] = FIRST_CLUSTER + np.searchsorted(events, seed_flat)
    bright_flat = np.flatnonzero(bright)
    labels[bright_flat] = FIRST_CLUSTER + np.searchsorted(
        events, t_comp[comp.ravel()[bright_flat]])
    return labels.reshape(rows, cols)


def _label_bfs(img, cfg):
    """ Queue-based labeling in row-major order. """
    rows, cols = img.shape
    geom = img.geometry
    valid = img.valid
    rng, inten = img.range, img.intensity
    beta_min = cfg.beta_min_deg
    labels = np.zeros((rows, cols), dtype=np.uint32)

    label = FIRST_CLUSTER
    for r0 in range(rows):
        for c0 in range(cols):
            if not valid[r0, c0] or labels[r0, c0] != UNLABELED:
                continue
            labels[r0, c0] = label
            queue = deque([(r0, c0)])
            while queue:
                r, c = queue.popleft()
                for dr, dc, alpha in ((-1, 0, geom.v_res), (1, 0, geom.v_res),
                                      (0, -1, geom.h_res), (0, 1, geom.h_res)):
                    rn, cn = r + dr, (c + dc) % cols
                    if not 0 <= rn < rows or not valid[rn, cn] or \
                            labels[rn, cn] != UNLABELED:
                        continue
                    if depth_angle(rng[r, c], rng[rn, cn], alpha) <= beta_min:
                        continue
                    if not cfg.intensity_check:
                        labels[rn, cn] = label
                        queue.append((rn, cn))
                    elif inten[rn, cn] <= cfg.intensity_min:
                        labels[rn, cn] = BACKGROUND
                    elif abs(inten[r, c] - inten[rn, cn]) < \
                            cfg.intensity_band:
                        labels[rn, cn] = label
                        queue.append((rn, cn))
            label += 1
    return labels


def label_image(img, cfg=None, method=None):
    """ Label object clusters of an ImageSet.

    Every unlabeled valid pixel, in row-major order, seeds a traversal with
    a new label. A neighbor joins it when their depth angle is above
    ``beta_min_deg`` (alpha is the horizontal resolution between columns
    and the vertical one between rows), its intensity is above
    ``intensity_min`` and the intensity difference is below
    ``intensity_band``. A neighbor passing the depth angle test with an
    intensity at or below ``intensity_min`` gets the background label.
    Labels are never overwritten.

    Parameters
    ----------
    img : ImageSet, usually with the ground removed.
    cfg : SegmenterConfig or None.
    method : str or None, 'bfs' for the queue-based traversal, 'graph' for
        the component based equivalent; ``cfg.labeling`` if None.

    Return
    ------
    labels : LabelImage.
    """
    cfg = SegmenterConfig() if cfg is None else cfg
    method = cfg.labeling if method is None else method
    if method == 'graph':
        labels = _label_graph(img, cfg)
    elif method == 'bfs':
        labels = _label_bfs(img, cfg)
    else:
        raise ValueError(f"method should be in {LABELING_METHODS}, "
                         f"got {method!r}")
    return LabelImage(labels)


###############################################################################
# Clusters

@dataclass(frozen=True, eq=False)
class ObjectCluster:
    """ Summary of one cluster of pixels.

    Parameters
    ----------
    labels : tuple of int, labels of the pixels (several after merging).
    pixel_count : int, number of pixels, interpolated ones included.
    points : array, shape (point_count, 3), sensor frame points of the
        non-interpolated pixels.
    intensities : array, shape (point_count,).
    normals : array, shape (n_normals, 3), defined normals of the points.
    """
    labels: tuple
    pixel_count: int
    points: np.ndarray
    intensities: np.ndarray
    normals: np.ndarray
    centroid: np.ndarray = None
    aabb_min: np.ndarray = None
    aabb_max: np.ndarray = None
    volume: float = 0.0
    mean_intensity: float = 0.0
    normal_stddev: float = 0.0

    @classmethod
    def from_points(cls, labels, pixel_count, points, intensities, normals):
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if points.shape[0] == 0:
            raise ValueError("a cluster should hold at least one point")
        normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
        aabb_min, aabb_max = points.min(axis=0), points.max(axis=0)
        if normals.shape[0]:
            spread = normals - normals.mean(axis=0)
            normal_stddev = float(np.sqrt(np.mean(np.sum(spread ** 2,
                                                         axis=1))))
        else:
            normal_stddev = 0.0
        return cls(tuple(int(l) for l in labels), int(pixel_count),
                   freeze(points), freeze(np.asarray(intensities, float)),
                   freeze(normals), centroid=freeze(points.mean(axis=0)),
                   aabb_min=freeze(aabb_min), aabb_max=freeze(aabb_max),
                   volume=float(np.prod(aabb_max - aabb_min)),
                   mean_intensity=float(np.mean(intensities)),
                   normal_stddev=normal_stddev)

    @property
    def label(self):
        return self.labels[0]

    @property
    def point_count(self):
        return self.points.shape[0]

    @property
    def range(self):
        return float(np.linalg.norm(self.centroid))

    @classmethod
    def concat(cls, clusters):
        """ Cluster over the union of the point sets of ``clusters``. """
        return cls.from_points(
            sum((c.labels for c in clusters), ()),
            sum(c.pixel_count for c in clusters),
            np.vstack([c.points for c in clusters]),
            np.concatenate([c.intensities for c in clusters]),
            np.vstack([c.normals for c in clusters]))

    def __repr__(self):
        return (f"ObjectCluster(labels={self.labels}, "
                f"points={self.point_count}, range={self.range:.2f}, "
                f"volume={self.volume:.4f})")


def extract_clusters(labels, img, min_pixels=1):
    """ One ObjectCluster per label >= 2.

    Statistics only use non-interpolated pixels; clusters made of
    interpolated pixels only are skipped, as are clusters of fewer than
    ``min_pixels`` pixels.
    """
    lab = labels.labels.ravel()
    cluster_pixels = np.flatnonzero(lab >= FIRST_CLUSTER)
    if cluster_pixels.size == 0:
        return []
    ids, pixel_counts = np.unique(lab[cluster_pixels], return_counts=True)
    measured = ~img.interpolated.ravel()
    source = cluster_pixels[measured[cluster_pixels]]
    source = source[np.isin(lab[source], ids[pixel_counts >= min_pixels])]
    if source.size == 0:
        return []
    source = source[np.argsort(lab[source], kind='stable')]
    source_ids, starts = np.unique(lab[source], return_index=True)
    stops = np.append(starts[1:], source.size)

    points = img.points.reshape(-1, 3)
    intensity = img.intensity.ravel()
    normal = img.normal.reshape(-1, 3)
    has_normal = np.all(np.isfinite(normal), axis=1)

    clusters = []
    for label, start, stop in zip(source_ids, starts, stops):
        pixels = source[start:stop]
        count = pixel_counts[np.searchsorted(ids, label)]
        clusters.append(ObjectCluster.from_points(
            (label,), count, points[pixels], intensity[pixels],
            normal[pixels[has_normal[pixels]]]))
    return clusters


def filter_clusters(clusters, cfg=None):
    """ Keep the clusters within the volume, point count and normal spread
    bounds. """
    cfg = SegmenterConfig() if cfg is None else cfg
    return [c for c in clusters
            if cfg.volume_min_m3 <= c.volume <= cfg.volume_max_m3
            and cfg.points_min <= c.point_count <= cfg.points_max
            and c.normal_stddev >= cfg.normal_stddev_min]


def _merge_fov(cam_fov, range_m):
    if hasattr(cam_fov, 'fov_for_range'):
        return cam_fov.fov_for_range(range_m)
    return cam_fov


def merge_clusters(clusters, cam_fov):
    """ Greedily merge clusters seen within one camera field of view.

    Clusters are visited by ascending range and merged into the first
    already kept cluster whose centroid direction is closer than the FoV
    selected for the farther of the two. Passes repeat until no merge
    happens, so the output is a fixpoint.

    Parameters
    ----------
    clusters : list of ObjectCluster.
    cam_fov : float or ZoomSchedule, constant FoV in degrees or a schedule
        giving the FoV of the zoom selected for a range.
    """
    if not hasattr(cam_fov, 'fov_for_range'):
        check_positive(cam_fov, 'cam_fov')
    if not clusters:
        return []
    groups = [[c] for c in clusters]
    sums = np.array([c.points.sum(axis=0) for c in clusters])
    counts = np.array([c.point_count for c in clusters], dtype=np.float64)

    changed = True
    while changed:
        changed = False
        centroids = sums / counts[:, None]
        order = np.argsort(np.linalg.norm(centroids, axis=1), kind='stable')
        kept_groups = []
        kept_sums = np.empty((len(groups), 3))
        kept_counts = np.empty(len(groups))
        for i in order:
            n_kept = len(kept_groups)
            if n_kept:
                kept = kept_sums[:n_kept] / kept_counts[:n_kept, None]
                fov = _merge_fov(cam_fov, np.maximum(
                    np.linalg.norm(centroids[i]),
                    np.linalg.norm(kept, axis=1)))
                close = np.flatnonzero(
                    angle_between(kept, centroids[i]) < fov)
                if close.size:
                    j = close[0]
                    kept_groups[j] = kept_groups[j] + groups[i]
                    kept_sums[j] += sums[i]
                    kept_counts[j] += counts[i]
                    changed = True
                    continue
            kept_groups.append(groups[i])
            kept_sums[n_kept] = sums[i]
            kept_counts[n_kept] = counts[i]
        groups = kept_groups
        sums = kept_sums[:len(groups)]
        counts = kept_counts[:len(groups)]

    merged = [group[0] if len(group) == 1 else ObjectCluster.concat(group)
              for group in groups]
    return sorted(merged, key=lambda c: c.range)
