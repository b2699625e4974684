""" Readers and writers for point clouds, trajectories and proposals.

Point clouds are exchanged as PCD v0.7 files (ASCII or little-endian
binary) holding at least the FLOAT32 fields ``x y z intensity``;
trajectories follow the TUM convention, one ``t tx ty tz qx qy qz qw`` line
per pose. A dataset directory holds ``<timestamp_ns>.pcd`` files plus one
``trajectory.txt``.
"""
# License: BSD (3-clause)

import bisect
import io
import json
import logging
import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checks import check_points, freeze
from .exceptions import (AlignmentError, EmptyScanError, PCDParseError,
                         PoseValidationError, TrajectoryOrderError,
                         TruncatedDataError, UnsupportedSchemaError)
from .geometry import Pose, interpolate_pose


logger = logging.getLogger(__name__)

REQUIRED_FIELDS = ('x', 'y', 'z', 'intensity')
PCD_HEADER_KEYS = ('VERSION', 'FIELDS', 'SIZE', 'TYPE', 'COUNT', 'WIDTH',
                   'HEIGHT', 'VIEWPOINT', 'POINTS', 'DATA')
TRAJECTORY_NORM_TOL = 1e-3
MAX_EXTRAPOLATION = 0.5
TRAJECTORY_FILE = 'trajectory.txt'
PROPOSAL_KEYS = ('id', 'query_index', 't', 'centroid_world',
                 'centroid_sensor', 'pan_deg', 'tilt_deg', 'zoom', 'range_m',
                 'points', 'volume_m3', 'mean_intensity')
_PCD_NAME = re.compile(r'^(\d+)\.pcd$')


@dataclass(frozen=True, eq=False)
class LidarScan:
    """ One LiDAR sweep.

    Parameters
    ----------
    points : array, shape (n_points, 4), rows ``[x, y, z, intensity]`` in
        the sensor frame (meters, intensity in [0, 255]).
    timestamp : float, acquisition time in seconds, shared by all points.
    pose : Pose or None, world <- sensor pose once aligned.
    n_dropped : int, number of non-finite points dropped while parsing.
    """
    points: np.ndarray
    timestamp: float = 0.0
    pose: Pose = None
    n_dropped: int = 0

    def __post_init__(self):
        points = check_points(self.points)
        if points.shape[0] == 0:
            raise ValueError("a LidarScan should hold at least one point")
        if not np.all(np.isfinite(points[:, :3])):
            raise ValueError("scan coordinates should be finite")
        if points[:, 3].min() < 0 or points[:, 3].max() > 255:
            raise ValueError("scan intensities should lie in [0, 255]")
        object.__setattr__(self, 'points', freeze(points.copy()))
        object.__setattr__(self, 'timestamp', float(self.timestamp))

    def __len__(self):
        return self.points.shape[0]

    @property
    def xyz(self):
        return self.points[:, :3]

    @property
    def intensity(self):
        return self.points[:, 3]

    def with_pose(self, pose):
        return LidarScan(self.points, self.timestamp, pose, self.n_dropped)


###############################################################################
# PCD

def _parse_pcd_header(stream):
    """ Read header lines up to DATA, return (header dict, byte offset). """
    header = {}
    offset = 0
    line_no = 0
    while True:
        raw = stream.readline()
        line_no += 1
        if not raw:
            raise PCDParseError("unexpected end of stream in header",
                                line=line_no, offset=offset)
        offset += len(raw)
        try:
            line = raw.decode('ascii').strip()
        except UnicodeDecodeError:
            raise PCDParseError("non-ASCII byte in header", line=line_no,
                                offset=offset - len(raw)) from None
        if not line or line.startswith('#'):
            continue
        key, *values = line.split()
        key = key.upper()
        if key not in PCD_HEADER_KEYS:
            raise PCDParseError(f"unknown header entry {key!r}",
                                line=line_no, offset=offset - len(raw))
        if not values:
            raise PCDParseError(f"header entry {key} has no value",
                                line=line_no, offset=offset - len(raw))
        header[key] = (values, line_no)
        if key == 'DATA':
            return header, offset


def _header_int(header, key, default=None):
    if key not in header:
        if default is not None:
            return default
        raise PCDParseError(f"missing header entry {key}")
    values, line_no = header[key]
    try:
        return int(values[0])
    except ValueError:
        raise PCDParseError(f"{key} should be an integer, got {values[0]!r}",
                            line=line_no) from None


def _pcd_dtype(header):
    """ Build the structured dtype of one PCD point. """
    if 'FIELDS' not in header:
        raise PCDParseError("missing header entry FIELDS")
    fields, fields_line = header['FIELDS']
    n_fields = len(fields)
    sizes = header.get('SIZE', (['4'] * n_fields, fields_line))
    types = header.get('TYPE', (['F'] * n_fields, fields_line))
    counts = header.get('COUNT', (['1'] * n_fields, fields_line))
    for key, (values, line_no) in (('SIZE', sizes), ('TYPE', types),
                                   ('COUNT', counts)):
        if len(values) != n_fields:
            raise PCDParseError(f"{key} has {len(values)} entries for "
                                f"{n_fields} fields", line=line_no)

    missing = [f for f in REQUIRED_FIELDS if f not in fields]
    if missing:
        raise UnsupportedSchemaError(f"missing field(s) {missing}",
                                     line=fields_line)

    kinds = {'F': 'f', 'I': 'i', 'U': 'u'}
    dtype = []
    for name, size, kind, count in zip(fields, sizes[0], types[0],
                                       counts[0]):
        try:
            size, count = int(size), int(count)
        except ValueError:
            raise PCDParseError(f"invalid SIZE/COUNT for field {name}",
                                line=sizes[1]) from None
        if kind not in kinds or size not in (1, 2, 4, 8):
            raise UnsupportedSchemaError(
                f"unsupported type {kind}{size} for field {name}",
                line=types[1])
        if name in REQUIRED_FIELDS and (kind != 'F' or size != 4
                                        or count != 1):
            raise UnsupportedSchemaError(
                f"field {name} should be a single FLOAT32", line=types[1])
        base = f'<{kinds[kind]}{size}'
        dtype.append((name, base) if count == 1 else (name, base, (count,)))
    return np.dtype(dtype)


def parse_pcd(data, timestamp=0.0):
    """ Parse a PCD v0.7 byte stream into a LidarScan.

    Parameters
    ----------
    data : bytes or binary file object, the PCD content.
    timestamp : float (default: 0.0), scan timestamp in seconds.

    Return
    ------
    scan : LidarScan, with non-finite points dropped and counted in
        ``scan.n_dropped``.
    """
    stream = io.BytesIO(data) if isinstance(data, (bytes, bytearray)) \
        else data
    header, body_offset = _parse_pcd_header(stream)
    dtype = _pcd_dtype(header)

    width = _header_int(header, 'WIDTH')
    height = _header_int(header, 'HEIGHT', default=1)
    n_points = _header_int(header, 'POINTS', default=width * height)
    if n_points != width * height:
        raise PCDParseError(
            f"POINTS {n_points} does not match WIDTH x HEIGHT "
            f"{width}x{height}", line=header['POINTS'][1])

    (mode, *_), data_line = header['DATA']
    mode = mode.lower()
    if mode not in ('binary', 'ascii'):
        raise UnsupportedSchemaError(f"unsupported DATA mode {mode!r}",
                                     line=data_line)
    if n_points == 0:
        raise EmptyScanError("PCD declares no point")
    body = stream.read()
    if mode == 'binary':
        expected = n_points * dtype.itemsize
        if len(body) < expected:
            raise TruncatedDataError("truncated binary body", expected,
                                     len(body))
        cloud = np.frombuffer(body, dtype=dtype, count=n_points)
        columns = [cloud[name].astype(np.float32) for name in REQUIRED_FIELDS]
        points = np.stack(columns, axis=1)
    else:
        rows = [r for r in body.decode('ascii', errors='replace').splitlines()
                if r.strip()]
        if len(rows) < n_points:
            raise TruncatedDataError("truncated ascii body", n_points,
                                     len(rows), unit='rows')
        names = dtype.names
        width_cols = sum(int(np.prod(dtype[n].shape)) or 1 for n in names)
        try:
            table = np.array([r.split() for r in rows[:n_points]],
                             dtype=np.float64)
        except ValueError:
            raise PCDParseError("malformed ascii body row",
                                offset=body_offset) from None
        if table.ndim != 2 or table.shape[1] != width_cols:
            raise PCDParseError(f"ascii rows should have {width_cols} "
                                f"values", offset=body_offset)
        col = {}
        start = 0
        for name in names:
            n = int(np.prod(dtype[name].shape)) or 1
            col[name] = start
            start += n
        points = table[:, [col[f] for f in REQUIRED_FIELDS]].astype(
            np.float32)

    finite = np.all(np.isfinite(points), axis=1)
    n_dropped = int(n_points - finite.sum())
    points = points[finite]
    if not finite.any():
        raise EmptyScanError(f"all {n_points} points are non-finite",
                             n_dropped=n_dropped)
    if n_dropped:
        logger.debug("dropped %d non-finite points out of %d", n_dropped,
                     n_points)
    intensity = points[:, 3]
    if intensity.min() < 0 or intensity.max() > 255:
        logger.debug("clipping intensities to [0, 255]")
        points[:, 3] = np.clip(intensity, 0, 255)
    return LidarScan(points, timestamp=timestamp, n_dropped=n_dropped)


def write_pcd(scan, binary=True):
    """ Serialize a LidarScan (or an (N, 4) array) to PCD v0.7 bytes.

    ASCII bodies use 9 significant digits, enough to round-trip FLOAT32
    values exactly.
    """
    points = scan.points if isinstance(scan, LidarScan) else \
        check_points(scan)
    points = np.ascontiguousarray(points, dtype='<f4')
    n_points = points.shape[0]
    header = ('# .PCD v0.7 - Point Cloud Data file format\n'
              'VERSION 0.7\n'
              'FIELDS x y z intensity\n'
              'SIZE 4 4 4 4\n'
              'TYPE F F F F\n'
              'COUNT 1 1 1 1\n'
              f'WIDTH {n_points}\n'
              'HEIGHT 1\n'
              'VIEWPOINT 0 0 0 1 0 0 0\n'
              f'POINTS {n_points}\n'
              f"DATA {'binary' if binary else 'ascii'}\n").encode('ascii')
    if binary:
        return header + points.tobytes()
    body = ''.join(' '.join(f'{v:.9g}' for v in row) + '\n'
                   for row in points.tolist())
    return header + body.encode('ascii')


###############################################################################
# Trajectories

def parse_trajectory(data):
    """ Parse a TUM trajectory (``t tx ty tz qx qy qz qw`` per line).

    Quaternions within 1e-3 of unit norm are normalized, others rejected.
    Blank lines and ``#`` comments are ignored.
    """
    if isinstance(data, (bytes, bytearray)):
        data = data.decode('utf-8')
    poses = []
    for line_no, line in enumerate(data.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        try:
            values = [float(v) for v in line.split()]
        except ValueError:
            raise PoseValidationError(f"non numeric value on line "
                                      f"{line_no}") from None
        if len(values) != 8:
            raise PoseValidationError(f"line {line_no} should hold 8 values, "
                                      f"got {len(values)}")
        t, q = values[0], np.array(values[4:])
        if poses and t <= poses[-1].timestamp:
            raise TrajectoryOrderError(
                f"timestamp {t} is not after {poses[-1].timestamp}",
                line=line_no)
        norm = np.linalg.norm(q)
        if not np.isfinite(norm) or abs(norm - 1.0) > TRAJECTORY_NORM_TOL:
            raise PoseValidationError(f"quaternion norm {norm:.6g} on line "
                                      f"{line_no} is not within "
                                      f"{TRAJECTORY_NORM_TOL} of 1")
        poses.append(Pose(values[1:4], q / norm, timestamp=t))
    return poses


def write_trajectory(poses):
    """ Serialize poses to TUM text (17 significant digits). """
    lines = []
    for pose in poses:
        values = [pose.timestamp, *pose.translation, *pose.rotation]
        lines.append(' '.join(f'{v:.17g}' for v in values))
    return ('\n'.join(lines) + '\n').encode('utf-8')


def align_scan_pose(scan_time, trajectory,
                    max_extrapolation=MAX_EXTRAPOLATION):
    """ Pose of the sensor at scan_time.

    Linear interpolation of the translation and slerp of the rotation
    between the two bracketing poses. Times outside of the trajectory are
    clamped to the closest end, flagged as ``extrapolated``, and rejected
    beyond ``max_extrapolation`` seconds.
    """
    if len(trajectory) == 0:
        raise AlignmentError("cannot align on an empty trajectory")
    times = [p.timestamp for p in trajectory]
    first, last = trajectory[0], trajectory[-1]
    if scan_time < times[0] or scan_time > times[-1]:
        gap = times[0] - scan_time if scan_time < times[0] \
            else scan_time - times[-1]
        if gap > max_extrapolation:
            raise AlignmentError(
                f"scan time {scan_time} is {gap:.3f} s outside of the "
                f"trajectory [{times[0]}, {times[-1]}]")
        end = first if scan_time < times[0] else last
        logger.debug("clamping scan time %s to trajectory end %s",
                     scan_time, end.timestamp)
        return end.with_timestamp(scan_time, extrapolated=True)

    i = bisect.bisect_left(times, scan_time)
    if times[i] == scan_time:
        return trajectory[i]
    return interpolate_pose(trajectory[i - 1], trajectory[i], scan_time)


###############################################################################
# Dataset directories

def list_dataset(input_dir):
    """ Return (sorted [(timestamp_s, path)], trajectory) of a dataset.

    Raise FileNotFoundError when the directory, the trajectory or the PCD
    files are missing.
    """
    input_dir = Path(input_dir)
    if not input_dir.is_dir():
        raise FileNotFoundError(f"input directory {input_dir} not found")
    trajectory_path = input_dir / TRAJECTORY_FILE
    if not trajectory_path.is_file():
        raise FileNotFoundError(f"{trajectory_path} not found")
    entries = []
    for name in os.listdir(input_dir):
        match = _PCD_NAME.match(name)
        if match:
            entries.append((int(match.group(1)), input_dir / name))
    if not entries:
        raise FileNotFoundError(f"no <timestamp_ns>.pcd file in {input_dir}")
    entries.sort()
    trajectory = parse_trajectory(trajectory_path.read_bytes())
    return [(ns * 1e-9, path) for ns, path in entries], trajectory


def iter_dataset(input_dir):
    """ Yield the dataset scans in timestamp order with aligned poses.

    Scans without any finite point are skipped with a warning.
    """
    entries, trajectory = list_dataset(input_dir)
    for timestamp, path in entries:
        try:
            scan = parse_pcd(path.read_bytes(), timestamp=timestamp)
        except EmptyScanError as e:
            logger.warning("skipping %s: %s", path.name, e)
            continue
        yield scan.with_pose(align_scan_pose(timestamp, trajectory))


def write_dataset(scans, output_dir, binary=True):
    """ Write scans and their poses in the dataset directory layout. """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    poses = []
    for scan in scans:
        ns = int(round(scan.timestamp * 1e9))
        (output_dir / f'{ns}.pcd').write_bytes(write_pcd(scan, binary=binary))
        poses.append(scan.pose.with_timestamp(ns * 1e-9))
    (output_dir / TRAJECTORY_FILE).write_bytes(write_trajectory(poses))
    return output_dir


###############################################################################
# Proposals

def _vector(v):
    return [float(x) for x in v]


def proposal_to_record(proposal):
    """ JSON-ready dict of a Proposal with the fixed key order. """
    return {
        'id': int(proposal.id),
        'query_index': int(proposal.query_index),
        't': float(proposal.timestamp),
        'centroid_world': _vector(proposal.centroid_world),
        'centroid_sensor': _vector(proposal.centroid_sensor),
        'pan_deg': float(proposal.pan),
        'tilt_deg': float(proposal.tilt),
        'zoom': int(proposal.zoom),
        'range_m': float(proposal.range),
        'points': int(proposal.point_count),
        'volume_m3': float(proposal.volume),
        'mean_intensity': float(proposal.mean_intensity),
    }


def write_proposals(proposals, path):
    """ Write proposals as JSON lines (UTF-8, one record per line). """
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        for proposal in proposals:
            f.write(json.dumps(proposal_to_record(proposal)) + '\n')


def read_proposal_records(path):
    """ Read a proposals.jsonl file into a list of dicts. """
    records = []
    with open(path, 'r', encoding='utf-8') as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            record = json.loads(line)
            missing = [k for k in PROPOSAL_KEYS if k not in record]
            if missing:
                raise ValueError(f"{path}:{line_no} misses keys {missing}")
            records.append(record)
    return records
