import pytest
import numpy as np

from ptzprop.checks import check_random_state
from ptzprop.exceptions import (AlignmentError, EmptyScanError,
                                PCDParseError, PoseValidationError,
                                TrajectoryOrderError, TruncatedDataError,
                                UnsupportedSchemaError)
from ptzprop.geometry import Pose
from ptzprop.scan_io import (LidarScan, align_scan_pose, iter_dataset,
                             list_dataset, parse_pcd, parse_trajectory,
                             read_proposal_records, write_dataset,
                             write_pcd, write_trajectory)


def _ascii_pcd(rows, n_points=None, fields='x y z intensity'):
    n_fields = len(fields.split())
    n_points = len(rows) if n_points is None else n_points
    header = ['# .PCD v0.7', 'VERSION 0.7', f'FIELDS {fields}',
              'SIZE ' + ' '.join(['4'] * n_fields),
              'TYPE ' + ' '.join(['F'] * n_fields),
              'COUNT ' + ' '.join(['1'] * n_fields),
              f'WIDTH {n_points}', 'HEIGHT 1', 'VIEWPOINT 0 0 0 1 0 0 0',
              f'POINTS {n_points}', 'DATA ascii']
    return ('\n'.join(header + rows) + '\n').encode('ascii')


def test_parse_ascii_single_point():
    scan = parse_pcd(_ascii_pcd(['1.5 -2 0.25 100']), timestamp=3.0)
    assert len(scan) == 1
    np.testing.assert_array_equal(scan.points, [[1.5, -2, 0.25, 100]])
    assert scan.timestamp == 3.0
    assert scan.n_dropped == 0


def test_parse_extra_fields_and_nan():
    data = _ascii_pcd(['1 2 3 7 10', 'nan 0 0 5 20', '4 5 6 9 30'],
                      fields='x y z ring intensity')
    scan = parse_pcd(data)
    np.testing.assert_array_equal(scan.points, [[1, 2, 3, 10], [4, 5, 6, 30]])
    assert scan.n_dropped == 1


def test_intensity_clipped():
    scan = parse_pcd(_ascii_pcd(['1 0 0 300', '2 0 0 -4']))
    np.testing.assert_array_equal(scan.intensity, [255, 0])


@pytest.mark.parametrize('binary', [True, False])
def test_parse_all_non_finite(binary):
    points = np.full((3, 4), np.nan, dtype=np.float32)
    points[1, 3] = 10
    with pytest.raises(EmptyScanError, match='non-finite') as excinfo:
        parse_pcd(write_pcd(points, binary=binary))
    assert excinfo.value.n_dropped == 3


@pytest.mark.parametrize('binary', [True, False])
def test_parse_no_point(binary):
    data = write_pcd(np.empty((0, 4), dtype=np.float32), binary=binary)
    assert b'POINTS 0' in data
    with pytest.raises(EmptyScanError, match='no point') as excinfo:
        parse_pcd(data)
    assert excinfo.value.n_dropped == 0


def test_truncated_ascii():
    rows = [f'{i} 0 0 10' for i in range(1, 5)]
    with pytest.raises(TruncatedDataError) as excinfo:
        parse_pcd(_ascii_pcd(rows, n_points=5))
    assert excinfo.value.expected == 5
    assert excinfo.value.actual == 4


def test_truncated_binary():
    data = write_pcd(np.ones((10, 4), dtype=np.float32))
    with pytest.raises(TruncatedDataError) as excinfo:
        parse_pcd(data[:-3])
    assert excinfo.value.expected == 160
    assert excinfo.value.actual == 157


def test_missing_intensity_field():
    with pytest.raises(UnsupportedSchemaError, match='intensity'):
        parse_pcd(_ascii_pcd(['1 2 3'], fields='x y z'))


@pytest.mark.parametrize('header_line, error', [
    ('FOO 1', PCDParseError), ('TYPE F F F I', UnsupportedSchemaError),
    ('DATA binary_compressed', UnsupportedSchemaError)])
def test_bad_header(header_line, error):
    lines = _ascii_pcd(['1 2 3 4']).decode('ascii').splitlines()
    key = header_line.split()[0]
    lines = [header_line if line.startswith(key) else line
             for line in lines]
    if key == 'FOO':
        lines.insert(2, header_line)
    with pytest.raises(error):
        parse_pcd(('\n'.join(lines) + '\n').encode('ascii'))


def test_bad_header_reports_line():
    data = b'VERSION 0.7\nFIELDS x y z intensity\nWIDTH abc\nDATA ascii\n'
    with pytest.raises(PCDParseError) as excinfo:
        parse_pcd(data)
    assert excinfo.value.line == 3


@pytest.mark.parametrize('binary', [True, False])
def test_pcd_round_trip(binary):
    rng = check_random_state(42)
    n_points = 16384 if binary else 500
    points = np.c_[rng.randn(n_points, 3) * 20,
                   rng.uniform(0, 255, n_points)].astype(np.float32)
    scan = parse_pcd(write_pcd(points, binary=binary))
    assert scan.points.dtype == np.float32
    np.testing.assert_array_equal(scan.points.view(np.uint32),
                                  points.view(np.uint32))


def test_lidar_scan_validation():
    with pytest.raises(ValueError, match='at least one'):
        LidarScan(np.empty((0, 4)))
    with pytest.raises(ValueError, match='intensities'):
        LidarScan([[0, 0, 0, 256]])


def test_trajectory_identity():
    poses = parse_trajectory('# t tx ty tz qx qy qz qw\n'
                             '0.5 1 2 3 0 0 0 1\n\n')
    assert len(poses) == 1
    np.testing.assert_array_equal(poses[0].translation, [1, 2, 3])
    np.testing.assert_array_equal(poses[0].rotation, [0, 0, 0, 1])
    assert poses[0].timestamp == 0.5


def test_trajectory_order_error():
    with pytest.raises(TrajectoryOrderError) as excinfo:
        parse_trajectory('1.0 0 0 0 0 0 0 1\n0.5 0 0 0 0 0 0 1\n')
    assert excinfo.value.line == 2


def test_trajectory_quaternion_norm():
    poses = parse_trajectory('0 0 0 0 0 0 0 1.0005\n')
    np.testing.assert_allclose(np.linalg.norm(poses[0].rotation), 1)
    with pytest.raises(PoseValidationError, match='norm'):
        parse_trajectory('0 0 0 0 0 0 0 1.01\n')
    with pytest.raises(PoseValidationError, match='8 values'):
        parse_trajectory('0 0 0 0 0 0 1\n')


def test_trajectory_round_trip():
    rng = check_random_state(0)
    poses = [Pose.from_euler(rng.randn(3) * 10, *rng.uniform(-90, 90, 3),
                             timestamp=0.1 * i + rng.uniform(0, 0.05))
             for i in range(100)]
    parsed = parse_trajectory(write_trajectory(poses))
    for pose, other in zip(poses, parsed):
        np.testing.assert_array_equal(other.translation, pose.translation)
        np.testing.assert_allclose(other.rotation, pose.rotation,
                                   rtol=0, atol=1e-15)
        assert other.timestamp == pose.timestamp


@pytest.fixture
def trajectory():
    return [Pose.identity(timestamp=0.0),
            Pose.from_euler([2, 0, 0], yaw=90, timestamp=1.0)]


def test_align_exact_and_midpoint(trajectory):
    assert align_scan_pose(1.0, trajectory) is trajectory[1]
    pose = align_scan_pose(0.5, trajectory)
    np.testing.assert_allclose(pose.translation, [1, 0, 0])
    assert pose.rotation_angle() == pytest.approx(45)
    assert not pose.extrapolated


def test_align_extrapolation(trajectory):
    pose = align_scan_pose(1.3, trajectory)
    assert pose.extrapolated
    assert pose.timestamp == 1.3
    np.testing.assert_allclose(pose.translation, [2, 0, 0])
    with pytest.raises(AlignmentError, match='outside'):
        align_scan_pose(1.6, trajectory)
    with pytest.raises(AlignmentError, match='empty'):
        align_scan_pose(0.0, [])


@pytest.mark.parametrize('seed', [0, 1, 2])
def test_align_continuity(seed):
    rng = check_random_state(seed)
    amp = rng.uniform(0.5, 2.0, (3, 3))
    freq = rng.uniform(0.05, 0.5, (3, 3))
    phase = rng.uniform(0, 2 * np.pi, (3, 3))
    roll, pitch = rng.uniform(-10, 10, 2)
    yaw_phase = rng.uniform(0, 2 * np.pi)

    def position(t):
        return np.sum(amp * np.sin(2 * np.pi * freq * t + phase), axis=1)

    def yaw(t):
        return 40 * np.sin(2 * np.pi * 0.2 * t + yaw_phase)

    trajectory = [Pose.from_euler(position(t), roll, pitch, yaw(t),
                                  timestamp=t)
                  for t in np.arange(51) * 0.1]
    speed = np.linalg.norm(np.sum(amp * 2 * np.pi * freq, axis=1))
    turn_rate = 40 * 2 * np.pi * 0.2

    query = np.linspace(-0.4, 5.4, 2901)
    step = query[1] - query[0]
    poses = [align_scan_pose(t, trajectory) for t in query]
    for a, b in zip(poses[:-1], poses[1:]):
        assert np.linalg.norm(b.translation - a.translation) <= \
            speed * step + 1e-9
        assert b.rotation_angle(a) <= turn_rate * step + 1e-6
    assert poses[0].extrapolated and poses[-1].extrapolated


def test_dataset_directory(tmp_path, trajectory):
    rng = check_random_state(1)
    scans = []
    for i, t in enumerate([0.0, 0.25, 0.5]):
        points = np.c_[rng.randn(50, 3), rng.uniform(0, 255, 50)]
        scans.append(LidarScan(points, t, align_scan_pose(t, trajectory)))
    write_dataset(scans, tmp_path)

    entries, poses = list_dataset(tmp_path)
    assert [p.name for _, p in entries] == ['0.pcd', '250000000.pcd',
                                            '500000000.pcd']
    assert len(poses) == 3
    loaded = list(iter_dataset(tmp_path))
    for scan, other in zip(scans, loaded):
        assert other.timestamp == pytest.approx(scan.timestamp)
        np.testing.assert_allclose(other.points, scan.points, rtol=1e-6)
        np.testing.assert_allclose(other.pose.translation,
                                   scan.pose.translation, atol=1e-12)


def test_dataset_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        list_dataset(tmp_path / 'nope')
    with pytest.raises(FileNotFoundError, match='trajectory'):
        list_dataset(tmp_path)
    (tmp_path / 'trajectory.txt').write_text('0 0 0 0 0 0 0 1\n')
    with pytest.raises(FileNotFoundError, match='pcd'):
        list_dataset(tmp_path)


def test_read_proposal_records_missing_key(tmp_path):
    path = tmp_path / 'proposals.jsonl'
    path.write_text('{"id": 0}\n')
    with pytest.raises(ValueError, match='misses keys'):
        read_proposal_records(path)


def test_dataset_skips_empty_scan(tmp_path, trajectory, caplog):
    rng = check_random_state(2)
    scans = [LidarScan(np.c_[rng.randn(20, 3), rng.uniform(0, 255, 20)], t,
                       align_scan_pose(t, trajectory)) for t in (0.0, 0.5)]
    write_dataset(scans, tmp_path)
    nan_points = np.full((4, 4), np.nan, dtype=np.float32)
    (tmp_path / '250000000.pcd').write_bytes(write_pcd(nan_points))

    with caplog.at_level('WARNING', logger='ptzprop.scan_io'):
        loaded = list(iter_dataset(tmp_path))
    assert [scan.timestamp for scan in loaded] == pytest.approx([0.0, 0.5])
    assert '250000000.pcd' in caplog.text
