""" Rigid transforms and poses.

Poses follow the world <- sensor convention: ``pose.transform_points(p)``
maps points expressed in the sensor frame into the world frame. Rotations
are unit quaternions stored in scipy order ``(x, y, z, w)``.
"""
# License: BSD (3-clause)

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from .checks import check_vector, freeze
from .exceptions import PoseValidationError


QUATERNION_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class Pose:
    """ Timestamped rigid transform world <- sensor.

    Parameters
    ----------
    translation : array, shape (3,), position of the sensor in the world
        frame, in meters.
    rotation : array, shape (4,), unit quaternion (x, y, z, w).
    timestamp : float, time in seconds.
    extrapolated : bool, set when the pose was clamped to a trajectory end
        during alignment.
    """
    translation: np.ndarray
    rotation: np.ndarray = field(
        default_factory=lambda: np.array([0.0, 0.0, 0.0, 1.0]))
    timestamp: float = 0.0
    extrapolated: bool = False

    def __post_init__(self):
        t = check_vector(self.translation, 'translation', size=3).copy()
        q = check_vector(self.rotation, 'rotation', size=4).copy()
        norm = np.linalg.norm(q)
        if abs(norm - 1.0) > QUATERNION_TOL:
            raise PoseValidationError(
                f"rotation quaternion should have unit norm (tolerance "
                f"{QUATERNION_TOL}), got norm {norm:.9g}")
        if not np.isfinite(self.timestamp) or self.timestamp < 0:
            raise PoseValidationError(
                f"timestamp should be finite and non-negative, "
                f"got {self.timestamp}")
        object.__setattr__(self, 'translation', freeze(t))
        object.__setattr__(self, 'rotation', freeze(q))
        object.__setattr__(self, 'timestamp', float(self.timestamp))

    @classmethod
    def identity(cls, timestamp=0.0):
        return cls(np.zeros(3), timestamp=timestamp)

    @classmethod
    def from_rotation(cls, translation, rotation, timestamp=0.0,
                      extrapolated=False):
        """ Build a pose from a scipy Rotation (re-normalized quaternion). """
        q = rotation.as_quat()
        return cls(translation, q / np.linalg.norm(q), timestamp=timestamp,
                   extrapolated=extrapolated)

    @classmethod
    def from_euler(cls, translation, roll=0.0, pitch=0.0, yaw=0.0,
                   timestamp=0.0):
        """ Build a pose from extrinsic roll, pitch, yaw in degrees. """
        rot = Rotation.from_euler('xyz', [roll, pitch, yaw], degrees=True)
        return cls.from_rotation(translation, rot, timestamp=timestamp)

    @property
    def rot(self):
        return Rotation.from_quat(self.rotation)

    def inverse(self):
        """ Return the inverse transform sensor <- world. """
        inv = self.rot.inv()
        return Pose.from_rotation(-inv.apply(self.translation), inv,
                                  timestamp=self.timestamp)

    def compose(self, other):
        """ Return self o other, i.e. apply other first then self. """
        return Pose.from_rotation(
            self.rot.apply(other.translation) + self.translation,
            self.rot * other.rot, timestamp=other.timestamp)

    def relative_to(self, reference):
        """ Return reference^-1 o self, the transform self-frame ->
        reference-frame. """
        return reference.inverse().compose(self)

    def transform_points(self, xyz):
        """ Apply the transform to an (N, 3) array of coordinates. """
        xyz = np.asarray(xyz, dtype=np.float64)
        if xyz.size == 0:
            return xyz.reshape(-1, 3)
        return self.rot.apply(xyz) + self.translation

    def rotation_angle(self, other=None):
        """ Geodesic angle in degrees of the rotation between two poses.

        If other is None, the angle of this pose's own rotation is returned.
        """
        rot = self.rot if other is None else other.rot.inv() * self.rot
        return float(np.degrees(rot.magnitude()))

    def distance(self, other):
        """ Euclidean distance between the two translations. """
        return float(np.linalg.norm(self.translation - other.translation))

    def with_timestamp(self, timestamp, extrapolated=None):
        if extrapolated is None:
            extrapolated = self.extrapolated
        return Pose(self.translation, self.rotation, timestamp=timestamp,
                    extrapolated=extrapolated)


def interpolate_pose(pose0, pose1, t):
    """ Interpolate between two poses at time t.

    Translation is linearly interpolated and rotation is spherically
    interpolated (slerp) between the two bracketing poses.
    """
    t0, t1 = pose0.timestamp, pose1.timestamp
    if t1 <= t0:
        raise ValueError(f"poses should have increasing timestamps, "
                         f"got {t0} and {t1}")
    w = (t - t0) / (t1 - t0)
    translation = (1.0 - w) * pose0.translation + w * pose1.translation
    slerp = Slerp([t0, t1], Rotation.from_quat([pose0.rotation,
                                                pose1.rotation]))
    return Pose.from_rotation(translation, slerp([t])[0], timestamp=t)


def spherical_angles(xyz):
    """ Return (range, azimuth, elevation) of an (N, 3) array, angles in
    degrees, azimuth wrapped to [0, 360). """
    xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
    r = np.linalg.norm(xyz, axis=1)
    with np.errstate(invalid='ignore', divide='ignore'):
        elevation = np.degrees(np.arcsin(np.clip(xyz[:, 2] / r, -1, 1)))
    azimuth = np.degrees(np.arctan2(xyz[:, 1], xyz[:, 0])) % 360.0
    return r, azimuth, elevation


def direction_from_angles(azimuth, elevation):
    """ Unit vectors for azimuth/elevation given in degrees. """
    az = np.radians(np.asarray(azimuth, dtype=np.float64))
    el = np.radians(np.asarray(elevation, dtype=np.float64))
    return np.stack([np.cos(el) * np.cos(az),
                     np.cos(el) * np.sin(az),
                     np.sin(el)], axis=-1)


def angle_between(u, v):
    """ Angle in degrees between vectors u and v (broadcasting on the last
    axis). """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    cross = np.linalg.norm(np.cross(u, v), axis=-1)
    dot = np.sum(u * v, axis=-1)
    return np.degrees(np.arctan2(cross, dot))


def box_corners(aabb_min, aabb_max):
    """ Return the 8 corners of an axis-aligned box, shape (8, 3). """
    lo = np.asarray(aabb_min, dtype=np.float64)
    hi = np.asarray(aabb_max, dtype=np.float64)
    idx = np.array([[i, j, k] for i in (0, 1) for j in (0, 1)
                    for k in (0, 1)])
    return np.where(idx == 0, lo, hi)


def transform_aabb(pose, aabb_min, aabb_max):
    """ Axis-aligned bounds of a box after applying pose. """
    corners = pose.transform_points(box_corners(aabb_min, aabb_max))
    return corners.min(axis=0), corners.max(axis=0)
