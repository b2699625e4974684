""" Motion-gated sliding window of LiDAR scans.

Scans are admitted when the sensor moved enough since the last admitted
scan, and the window content is expressed in the frame of the newest scan
to build a dense cloud out of sparse sweeps.
"""
# License: BSD (3-clause)

import logging
from collections import deque
from dataclasses import dataclass

import numpy as np

from .checks import check_in_range, check_positive, freeze
from .exceptions import EmptyWindowError, OutOfOrderScanError
from .geometry import Pose


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AccumulatorConfig:
    """ Sliding window parameters.

    Parameters
    ----------
    window_size : int (default: 10), maximum number of scans kept.
    min_translation_m : float (default: 0.15), translation that admits a
        scan.
    min_rotation_deg : float (default: 30.0), rotation angle that admits a
        scan.
    query_rate_hz : float (default: 2.0), rate at which the driver queries
        the accumulated cloud, in Hz of data time.
    """
    window_size: int = 10
    min_translation_m: float = 0.15
    min_rotation_deg: float = 30.0
    query_rate_hz: float = 2.0

    def __post_init__(self):
        if int(self.window_size) != self.window_size or self.window_size < 1:
            raise ValueError(f"window_size should be an integer >= 1, "
                             f"got {self.window_size}")
        check_positive(self.min_translation_m, 'min_translation_m',
                       strict=False)
        check_in_range(self.min_rotation_deg, 'min_rotation_deg', 0, 180)
        check_positive(self.query_rate_hz, 'query_rate_hz')

    @property
    def query_period(self):
        return 1.0 / self.query_rate_hz


@dataclass(frozen=True, eq=False)
class AccumulatedCloud:
    """ Window content expressed in the newest sensor frame.

    Parameters
    ----------
    points : array, shape (n_points, 4), ``[x, y, z, intensity]``.
    reference_pose : Pose, pose of the newest admitted scan.
    source_count : int, number of scans in the window.
    timestamp : float, timestamp of the newest admitted scan.
    """
    points: np.ndarray
    reference_pose: Pose
    source_count: int
    timestamp: float = 0.0

    def __post_init__(self):
        freeze(self.points)

    def __len__(self):
        return self.points.shape[0]


class ScanAccumulator:
    """ Single-owner sliding window of admitted scans.

    Parameters
    ----------
    config : AccumulatorConfig or None, window parameters, defaults
        when None.
    """

    def __init__(self, config=None):
        self.config = AccumulatorConfig() if config is None else config
        self._window = deque(maxlen=self.config.window_size)
        self._latest_time = None
        self.n_offered = 0
        self.n_admitted = 0

    def __len__(self):
        return len(self._window)

    @property
    def scans(self):
        return tuple(self._window)

    def motion_from_last(self, pose):
        """ Return (translation m, rotation deg) from the last admitted scan.
        """
        if not self._window:
            return np.inf, np.inf
        last = self._window[-1].pose
        return pose.distance(last), pose.rotation_angle(last)

    def offer_scan(self, scan):
        """ Offer a pose-aligned scan, return whether it was admitted.

        A scan is admitted into an empty window, or when its translation
        from the last admitted scan reaches ``min_translation_m`` or its
        rotation reaches ``min_rotation_deg``. A full window evicts its
        oldest scan.
        """
        if scan.pose is None:
            raise ValueError("scan pose should be resolved before offering "
                             "it to the accumulator")
        if self._latest_time is not None and \
                scan.timestamp < self._latest_time:
            raise OutOfOrderScanError(
                f"scan at t={scan.timestamp} is older than the newest "
                f"admitted scan at t={self._latest_time}")
        self.n_offered += 1

        translation, rotation = self.motion_from_last(scan.pose)
        admitted = (not self._window
                    or translation >= self.config.min_translation_m
                    or rotation >= self.config.min_rotation_deg)
        if not admitted:
            return False

        if len(self._window) == self.config.window_size:
            logger.debug("evicting scan t=%.3f", self._window[0].timestamp)
        self._window.append(scan)
        self._latest_time = scan.timestamp
        self.n_admitted += 1
        return True

    def query_accumulated(self):
        """ Concatenate the window in the frame of the newest scan.

        Every scan is mapped by ``latest_pose^-1 o scan_pose``; intensities
        are passed through unchanged.
        """
        if not self._window:
            raise EmptyWindowError("no scan admitted yet")
        latest = self._window[-1]
        reference = latest.pose
        to_latest = reference.inverse()
        chunks = []
        for scan in self._window:
            if scan is latest:
                chunks.append(np.asarray(scan.points, dtype=np.float64))
                continue
            relative = to_latest.compose(scan.pose)
            chunk = np.empty((len(scan), 4))
            chunk[:, :3] = relative.transform_points(scan.xyz)
            chunk[:, 3] = scan.intensity
            chunks.append(chunk)
        points = np.concatenate(chunks, axis=0)
        return AccumulatedCloud(points, reference, len(self._window),
                                timestamp=latest.timestamp)

    def reset(self):
        self._window.clear()
        self._latest_time = None
