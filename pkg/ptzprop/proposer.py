""" Pan-tilt-zoom waypoints for object clusters.

A cluster becomes a proposal when enough of the voxels covering it were
never seen by the camera. Every emitted proposal marks the voxels inside the
camera field of view as observed, assuming the camera executes it.
"""
# License: BSD (3-clause)

import logging
from dataclasses import dataclass, field

import numpy as np

from .checks import check_in_range, check_positive, check_vector, freeze
from .exceptions import ZoomRangeError
from .geometry import Pose, angle_between, transform_aabb


logger = logging.getLogger(__name__)

DEFAULT_ZOOM_SCHEDULE = "4:1:60, 8:2:30, 15:3:15, 30:4:8"
IDENTITY_EXTRINSIC = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0)

# voxel indices are packed in 21 bits per axis
_KEY_BITS = 21
_KEY_OFFSET = 1 << (_KEY_BITS - 1)
_KEY_MASK = (1 << _KEY_BITS) - 1


@dataclass(frozen=True)
class ZoomLevel:
    max_range_m: float
    zoom: int
    fov_deg: float


@dataclass(frozen=True)
class ZoomSchedule:
    """ Ordered range bands, each with a zoom level and its horizontal FoV.

    Parameters
    ----------
    levels : tuple of ZoomLevel, by increasing max_range_m, decreasing
        fov_deg.
    """
    levels: tuple

    def __post_init__(self):
        levels = tuple(self.levels)
        if not levels:
            raise ValueError("a zoom schedule needs at least one level")
        for level in levels:
            check_positive(level.max_range_m, 'max_range_m')
            check_in_range(level.fov_deg, 'fov_deg', 0, 180,
                           closed=(False, True))
            if int(level.zoom) != level.zoom or level.zoom < 1:
                raise ValueError(f"zoom levels should be integers >= 1, "
                                 f"got {level.zoom}")
        for prev, level in zip(levels[:-1], levels[1:]):
            if level.max_range_m <= prev.max_range_m:
                raise ValueError("zoom schedule ranges should be strictly "
                                 "increasing")
            if level.fov_deg >= prev.fov_deg or level.zoom <= prev.zoom:
                raise ValueError("zoom schedule FoV should strictly decrease "
                                 "as the zoom increases")
        object.__setattr__(self, 'levels', levels)

    @classmethod
    def from_string(cls, text):
        """ Parse ``"max_range:zoom:fov, ..."``, e.g. ``"4:1:60, 8:2:30"``. """
        levels = []
        for item in text.split(','):
            parts = item.strip().split(':')
            if len(parts) != 3:
                raise ValueError(f"zoom level {item.strip()!r} should read "
                                 f"'max_range:zoom:fov'")
            levels.append(ZoomLevel(float(parts[0]), int(parts[1]),
                                    float(parts[2])))
        return cls(tuple(levels))

    @classmethod
    def default(cls):
        return cls.from_string(DEFAULT_ZOOM_SCHEDULE)

    def to_string(self):
        return ', '.join(f'{level.max_range_m:g}:{level.zoom}:'
                         f'{level.fov_deg:g}' for level in self.levels)

    @property
    def max_range(self):
        return self.levels[-1].max_range_m

    def select(self, range_m):
        """ Return (level, out_of_range) for a target range. """
        for level in self.levels:
            if range_m <= level.max_range_m:
                return level, False
        return self.levels[-1], True

    def fov_for_range(self, range_m):
        """ FoV of the level selected for a range, or for each of an array
        of ranges. """
        bounds = [level.max_range_m for level in self.levels]
        fovs = np.array([level.fov_deg for level in self.levels])
        index = np.searchsorted(bounds, range_m)
        return fovs[np.minimum(index, len(fovs) - 1)]


@dataclass(frozen=True, eq=False)
class Proposal:
    """ One camera waypoint.

    Parameters
    ----------
    id : int, strictly increasing over a run.
    query_index : int, index of the accumulation query.
    timestamp : float, data time of the query in seconds.
    centroid_sensor, centroid_world : array, shape (3,), cluster centroid.
    origin_world : array, shape (3,), camera position in the world frame.
    pan : float, degrees in (-180, 180].
    tilt : float, degrees in [-90, 90].
    zoom : int, zoom level.
    fov : float, horizontal FoV of the zoom level in degrees.
    range : float, camera to centroid distance in meters.
    point_count, volume, mean_intensity : cluster summary.
    labels : tuple of int, labels of the source cluster.
    out_of_range : bool, the range exceeds the zoom schedule.
    """
    id: int
    query_index: int
    timestamp: float
    centroid_sensor: np.ndarray
    centroid_world: np.ndarray
    origin_world: np.ndarray
    pan: float
    tilt: float
    zoom: int
    fov: float
    range: float
    point_count: int
    volume: float
    mean_intensity: float
    labels: tuple = ()
    out_of_range: bool = False

    def __post_init__(self):
        freeze(self.centroid_sensor, self.centroid_world, self.origin_world)

    @property
    def axis_world(self):
        """ Unit viewing direction of the camera in the world frame. """
        axis = self.centroid_world - self.origin_world
        return axis / np.linalg.norm(axis)


def pan_tilt(xyz):
    """ Pan and tilt in degrees pointing at a camera frame position. """
    x, y, z = np.asarray(xyz, dtype=np.float64)
    pan = float(np.degrees(np.arctan2(y, x)))
    if pan <= -180.0:
        pan = 180.0
    tilt = float(np.degrees(np.arctan2(z, np.hypot(x, y))))
    return pan, tilt


def pan_tilt_to_point(pan, tilt, range_m):
    """ Camera frame position at the given pan, tilt and range. """
    pan, tilt = np.radians(pan), np.radians(tilt)
    return range_m * np.array([np.cos(tilt) * np.cos(pan),
                               np.cos(tilt) * np.sin(pan), np.sin(tilt)])


def make_waypoint(cluster, pose, schedule=None, proposal_id=0, query_index=0,
                  timestamp=None, extrinsic=None, strict=False):
    """ Camera waypoint aiming at the centroid of a cluster.

    Parameters
    ----------
    cluster : ObjectCluster, in the sensor frame.
    pose : Pose, world <- sensor pose of the query.
    schedule : ZoomSchedule or None, default schedule if None.
    proposal_id, query_index : int, bookkeeping.
    timestamp : float or None, ``pose.timestamp`` if None.
    extrinsic : Pose or None, pose of the camera in the sensor frame,
        identity if None.
    strict : bool (default: False), raise ZoomRangeError when the cluster is
        beyond the schedule instead of flagging the proposal.
    """
    schedule = ZoomSchedule.default() if schedule is None else schedule
    extrinsic = Pose.identity() if extrinsic is None else extrinsic
    centroid = check_vector(cluster.centroid, 'centroid')
    target = extrinsic.inverse().transform_points(centroid[None])[0]
    range_m = float(np.linalg.norm(target))
    if range_m == 0:
        raise ValueError("cluster centroid coincides with the camera")
    pan, tilt = pan_tilt(target)

    level, out_of_range = schedule.select(range_m)
    if out_of_range:
        msg = (f"cluster at {range_m:.2f} m is beyond the zoom schedule "
               f"({schedule.max_range:g} m)")
        if strict:
            raise ZoomRangeError(msg)
        logger.warning("%s, using zoom %d", msg, level.zoom)

    return Proposal(
        id=int(proposal_id), query_index=int(query_index),
        timestamp=float(pose.timestamp if timestamp is None else timestamp),
        centroid_sensor=centroid.copy(),
        centroid_world=pose.transform_points(centroid[None])[0],
        origin_world=pose.transform_points(extrinsic.translation[None])[0],
        pan=pan, tilt=tilt, zoom=level.zoom, fov=level.fov_deg,
        range=range_m, point_count=cluster.point_count,
        volume=cluster.volume, mean_intensity=cluster.mean_intensity,
        labels=cluster.labels, out_of_range=out_of_range)


class VoxelObservationMap:
    """ Sparse voxel grid of what the camera already observed.

    Only touched voxels have an entry, holding an observed flag and the time
    of the last observation. Entries are stored as sorted packed integer
    keys.

    Parameters
    ----------
    voxel_size : float (default: 0.2), voxel edge in meters.
    """

    def __init__(self, voxel_size=0.2):
        self.voxel_size = check_positive(voxel_size, 'voxel_size')
        self.reset()

    def reset(self):
        self._keys = np.empty(0, dtype=np.int64)
        self._observed = np.empty(0, dtype=bool)
        self._timestamps = np.empty(0)

    def __len__(self):
        return self._keys.shape[0]

    @property
    def n_observed(self):
        return int(self._observed.sum())

    def voxel_index(self, points):
        """ Integer voxel coordinates of (N, 3) points. """
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return np.floor(points / self.voxel_size).astype(np.int64)

    def voxel_center(self, ijk):
        return (np.asarray(ijk, dtype=np.float64) + 0.5) * self.voxel_size

    @staticmethod
    def pack(ijk):
        ijk = np.asarray(ijk, dtype=np.int64).reshape(-1, 3) + _KEY_OFFSET
        if np.any(ijk < 0) or np.any(ijk > _KEY_MASK):
            raise ValueError("voxel index outside of the addressable grid")
        return (ijk[:, 0] << 2 * _KEY_BITS) | (ijk[:, 1] << _KEY_BITS) | \
            ijk[:, 2]

    @staticmethod
    def unpack(keys):
        keys = np.asarray(keys, dtype=np.int64)
        ijk = np.stack([(keys >> 2 * _KEY_BITS) & _KEY_MASK,
                        (keys >> _KEY_BITS) & _KEY_MASK,
                        keys & _KEY_MASK], axis=1)
        return ijk - _KEY_OFFSET

    def _find(self, keys):
        pos = np.searchsorted(self._keys, keys)
        found = pos < len(self._keys)
        found[found] = self._keys[pos[found]] == keys[found]
        return pos, found

    def is_observed(self, ijk):
        """ Observed flag of each voxel, False for untouched voxels. """
        pos, found = self._find(self.pack(ijk))
        observed = np.zeros(len(pos), dtype=bool)
        observed[found] = self._observed[pos[found]]
        return observed

    def timestamp_of(self, ijk):
        """ Last observation time of each voxel, NaN for untouched ones. """
        pos, found = self._find(self.pack(ijk))
        times = np.full(len(pos), np.nan)
        times[found] = self._timestamps[pos[found]]
        return times

    def mark(self, ijk, time):
        """ Flag voxels as observed at the given time. """
        keys = np.unique(self.pack(ijk))
        if keys.size == 0:
            return self
        _, found = self._find(keys)
        new = keys[~found]
        if new.size:
            all_keys = np.concatenate([self._keys, new])
            order = np.argsort(all_keys, kind='stable')
            self._keys = all_keys[order]
            self._observed = np.concatenate(
                [self._observed, np.zeros(new.size, dtype=bool)])[order]
            self._timestamps = np.concatenate(
                [self._timestamps, np.full(new.size, np.nan)])[order]
        pos, _ = self._find(keys)
        self._observed[pos] = True
        self._timestamps[pos] = time
        return self

    def voxels_in_box(self, aabb_min, aabb_max):
        """ Indices of the voxels intersecting an axis-aligned box. """
        lo = self.voxel_index(aabb_min)[0]
        hi = self.voxel_index(aabb_max)[0]
        axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
        grid = np.meshgrid(*axes, indexing='ij')
        return np.stack([g.ravel() for g in grid], axis=1)


def check_novelty(cluster, vmap, tau_obs=0.2, pose=None):
    """ Whether enough of the voxels covering a cluster are unobserved.

    Parameters
    ----------
    cluster : ObjectCluster.
    vmap : VoxelObservationMap.
    tau_obs : float in (0, 1], minimum fraction of unobserved voxels among
        those intersecting the world frame bounding box of the cluster.
    pose : Pose or None, world <- sensor pose, the cluster box is taken as
        already expressed in the world frame if None.
    """
    check_in_range(tau_obs, 'tau_obs', 0, 1, closed=(False, True))
    lo, hi = cluster.aabb_min, cluster.aabb_max
    if pose is not None:
        lo, hi = transform_aabb(pose, lo, hi)
    voxels = vmap.voxels_in_box(lo, hi)
    unobserved = ~vmap.is_observed(voxels)
    return bool(unobserved.mean() >= tau_obs)


def frustum_voxels(vmap, origin, axis, fov, max_range):
    """ Voxels whose centre lies in the viewing cone of the camera.

    The cone has its apex at origin, the half-angle ``fov / 2`` around axis,
    and is cut at ``max_range``. Occlusions are ignored.
    """
    origin = np.asarray(origin, dtype=np.float64)
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    half = np.radians(fov) / 2.0
    radius = max_range * np.sin(min(half, np.pi / 2))
    spread = radius * np.sqrt(np.clip(1.0 - axis ** 2, 0.0, 1.0))
    tip = origin + max_range * axis
    if half >= np.pi / 2:
        lo, hi = origin - max_range, origin + max_range
    else:
        lo = np.minimum(origin, tip) - spread
        hi = np.maximum(origin, tip) + spread
    candidates = vmap.voxels_in_box(lo, hi)
    offset = vmap.voxel_center(candidates) - origin
    inside = (np.linalg.norm(offset, axis=1) <= max_range) & \
        (angle_between(offset, axis) <= np.degrees(half))
    return candidates[inside]


def mark_observed(proposal, vmap, fov=None, max_range=None, time=None,
                  margin=1.0):
    """ Mark the voxels in the camera frustum of a proposal as observed.

    Parameters
    ----------
    proposal : Proposal.
    vmap : VoxelObservationMap, updated in place and returned.
    fov : float or None, cone aperture in degrees, ``proposal.fov`` if None.
    max_range : float or None, cut distance, the proposal range plus margin
        if None.
    time : float or None, ``proposal.timestamp`` if None.
    """
    fov = proposal.fov if fov is None else fov
    max_range = proposal.range + margin if max_range is None else max_range
    time = proposal.timestamp if time is None else time
    voxels = frustum_voxels(vmap, proposal.origin_world, proposal.axis_world,
                            fov, max_range)
    logger.debug("proposal %d marks %d voxels", proposal.id, len(voxels))
    return vmap.mark(voxels, time)


@dataclass(frozen=True)
class ProposerConfig:
    """ Waypoint generation parameters.

    Parameters
    ----------
    voxel_size_m : float (default: 0.2), edge of the observation voxels.
    novelty_min_fraction : float (default: 0.2), fraction of unobserved
        voxels above which a cluster is proposed.
    mark_margin_m : float (default: 1.0), depth marked behind a proposal.
    camera_extrinsic : tuple (default: identity), camera pose in the sensor
        frame as ``(tx, ty, tz, qx, qy, qz, qw)``.
    zoom_schedule : str, ``max_range:zoom:fov`` entries.
    strict_zoom : bool (default: False), raise on clusters beyond the
        schedule.
    """
    voxel_size_m: float = 0.2
    novelty_min_fraction: float = 0.2
    mark_margin_m: float = 1.0
    camera_extrinsic: tuple = field(default=IDENTITY_EXTRINSIC)
    zoom_schedule: str = DEFAULT_ZOOM_SCHEDULE
    strict_zoom: bool = False

    def __post_init__(self):
        check_positive(self.voxel_size_m, 'voxel_size_m')
        check_in_range(self.novelty_min_fraction, 'novelty_min_fraction', 0,
                       1, closed=(False, True))
        check_positive(self.mark_margin_m, 'mark_margin_m', strict=False)
        object.__setattr__(self, 'camera_extrinsic',
                           tuple(float(v) for v in self.camera_extrinsic))
        if len(self.camera_extrinsic) != 7:
            raise ValueError("camera_extrinsic should hold 7 values "
                             "(tx ty tz qx qy qz qw)")
        self.schedule
        self.extrinsic

    @property
    def schedule(self):
        return ZoomSchedule.from_string(self.zoom_schedule)

    @property
    def extrinsic(self):
        values = self.camera_extrinsic
        return Pose(values[:3], values[3:])


def propose(clusters, pose, vmap, config=None, query_index=0, timestamp=None,
            first_id=0):
    """ Proposals for the novel clusters, nearest first.

    Clusters are visited by ascending range; each novel one yields a
    waypoint whose frustum is immediately marked as observed, so later
    clusters of the same query see the update.
    """
    config = ProposerConfig() if config is None else config
    schedule, extrinsic = config.schedule, config.extrinsic
    timestamp = pose.timestamp if timestamp is None else timestamp
    proposals = []
    for cluster in sorted(clusters, key=lambda c: c.range):
        if not check_novelty(cluster, vmap, config.novelty_min_fraction,
                             pose=pose):
            continue
        proposal = make_waypoint(
            cluster, pose, schedule, proposal_id=first_id + len(proposals),
            query_index=query_index, timestamp=timestamp, extrinsic=extrinsic,
            strict=config.strict_zoom)
        mark_observed(proposal, vmap, time=timestamp,
                      margin=config.mark_margin_m)
        proposals.append(proposal)
    return proposals


class ProposalGenerator:
    """ Stateful proposer owning the observation map and the id counter.

    Parameters
    ----------
    config : ProposerConfig or None.
    """

    def __init__(self, config=None):
        self.config = ProposerConfig() if config is None else config
        self.vmap = VoxelObservationMap(self.config.voxel_size_m)
        self.next_id = 0

    def propose(self, clusters, pose, query_index=0, timestamp=None):
        proposals = propose(clusters, pose, self.vmap, self.config,
                            query_index=query_index, timestamp=timestamp,
                            first_id=self.next_id)
        self.next_id += len(proposals)
        return proposals

    def reset(self):
        self.vmap.reset()
