import json

import pytest
import numpy as np

from ptzprop.exceptions import SceneError
from ptzprop.geometry import Pose
from ptzprop.scan_io import list_dataset
from ptzprop.scenes import (PRESETS, BeamModel, SceneObject, SyntheticScene,
                            TrajectorySpec, Tunnel, cast_rays, cave_scene,
                            export_dataset, get_scene, intersect_box,
                            intersect_cylinder, load_scene, render_scan,
                            render_scans, save_scene)


def _empty_tunnel(**kwargs):
    return SyntheticScene('empty', Tunnel(roughness=0.0, **kwargs), (), (),
                          [Pose([5.0, 0.0, 1.0])])


def test_no_return_along_the_axis():
    scene = cave_scene(n_scans=1)
    t, _ = cast_rays(scene, [5.0, 0.0, 1.0], [[1.0, 0.0, 0.0],
                                               [-1.0, 0.0, 0.0]])
    assert np.all(np.isinf(t))


def test_analytic_wall_and_floor_range():
    scene = _empty_tunnel()
    t, intensity = cast_rays(scene, [5.0, 0.0, 1.0],
                             [[0, 1, 0], [0, -1, 0], [0, 0, -1], [0, 0, 1]])
    np.testing.assert_allclose(t, [3, 3, 1, 3])
    assert np.all((intensity >= 0) & (intensity <= 255))

    # 45 deg down to the side, the floor cuts the circle first
    direction = np.array([[0, 1, -1]]) / np.sqrt(2)
    t, _ = cast_rays(scene, [5.0, 0.0, 1.0], direction)
    assert t[0] == pytest.approx(np.sqrt(2))


def test_intersect_primitives():
    directions = np.array([[1.0, 0, 0], [0, 1.0, 0], [-1.0, 0, 0]])
    t = intersect_box(np.zeros(3), directions, np.array([2.0, 0, 0]),
                      (1.0, 1.0, 1.0))
    np.testing.assert_allclose(t, [1.5, np.inf, np.inf])
    t = intersect_box(np.zeros(3), directions[:1], np.array([2.0, 0, 0]),
                      (1.0, 1.0, 1.0), yaw_deg=45)
    assert t[0] == pytest.approx(2 - np.sqrt(0.5))

    t = intersect_cylinder(np.array([0.0, 0, 0.5]), directions, (2.0, 0.0),
                           0.5, 0.0, 1.0)
    np.testing.assert_allclose(t, [1.5, np.inf, np.inf])
    down = np.array([[0.0, 0, -1]])
    t = intersect_cylinder(np.array([2.0, 0, 3.0]), down, (2.0, 0.0), 0.5,
                           0.0, 1.0)
    np.testing.assert_allclose(t, [2.0])


def test_render_scan():
    scene = cave_scene(n_scans=1)
    pose = Pose([20.0, 0.0, 0.8], timestamp=1.0)
    scan = render_scan(scene, pose, seed=0)
    assert scan.pose is pose
    assert scan.timestamp == pose.timestamp
    assert len(scan) > 0.5 * len(scene.beam.directions())
    world = pose.transform_points(scan.xyz)
    radial = np.hypot(world[:, 1], world[:, 2] - scene.tunnel.center_height)
    assert np.all(radial <= scene.tunnel.radius + 0.2)
    assert np.all(world[:, 2] >= -0.1)
    assert np.all((scan.intensity >= 0) & (scan.intensity <= 255))


def test_render_determinism():
    scene = cave_scene(n_scans=4)
    pose = scene.trajectory[1]
    a = render_scan(scene, pose, seed=3)
    b = render_scan(scene, pose, seed=3)
    c = render_scan(scene, pose, seed=4)
    np.testing.assert_array_equal(a.points, b.points)
    assert not np.array_equal(a.points, c.points)

    scans = render_scans(scene, seed=1)
    again = render_scans(scene, seed=1, n_jobs=2)
    assert len(scans) == 4
    for s1, s2 in zip(scans, again):
        np.testing.assert_array_equal(s1.points, s2.points)


def test_render_without_return():
    scene = cave_scene(n_scans=1)
    with pytest.raises(SceneError, match='no return'):
        render_scan(scene, Pose([35.0, 0.0, -50.0]), seed=0)


def test_scene_validation():
    pose = [Pose([1.0, 0.0, 0.8])]
    rock = SceneObject('rock', 'box', (0.5, 0.5, 0.5), (10.0, 0.0, 0.0))
    other = SceneObject('rock', 'box', (0.5, 0.5, 0.5), (10.3, 0.2, 0.0))
    with pytest.raises(SceneError, match='overlap'):
        SyntheticScene('s', Tunnel(), [rock, other], (), pose)

    for size in [(1.0, 1.0, 1.0), (0.2, 0.2, 0.1)]:
        artifact = SceneObject('bag', 'box', size, (10.0, 0.0, 0.0),
                               is_artifact=True)
        with pytest.raises(SceneError, match='volume'):
            SyntheticScene('s', Tunnel(), [artifact], (), pose)

    with pytest.raises(SceneError, match='shape'):
        SceneObject('ball', 'sphere', (1, 1, 1), (0, 0, 0))
    with pytest.raises(SceneError, match='trajectory'):
        SyntheticScene('s', Tunnel(), (), (), ())
    with pytest.raises(SceneError, match='center_height'):
        Tunnel(radius=1.0, center_height=2.0)


def test_scene_object_geometry():
    obj = SceneObject('box', 'box', (1.0, 0.5, 0.4), (2.0, 0.0, 0.0),
                      yaw_deg=90)
    lo, hi = obj.aabb()
    np.testing.assert_allclose(lo, [1.75, -0.5, 0.0])
    np.testing.assert_allclose(hi, [2.25, 0.5, 0.4])
    assert obj.volume == pytest.approx(0.2)
    assert obj.distance_to([2.0, 0.0, 0.2]) == 0
    assert obj.distance_to([2.0, 1.5, 0.2]) == pytest.approx(1.0)
    np.testing.assert_allclose(obj.center, [2.0, 0.0, 0.2])


def test_scene_json_round_trip(tmp_path):
    for name, preset in PRESETS.items():
        scene = preset()
        path = tmp_path / f'{name}.json'
        save_scene(scene, path)
        loaded = load_scene(path)
        assert loaded.to_dict() == scene.to_dict()
        assert len(loaded.trajectory) == len(scene.trajectory)

    scene = SyntheticScene('poses', Tunnel(), (), (),
                           [Pose([1.0, 0, 1], timestamp=0.5)],
                           BeamModel(n_beams=4))
    save_scene(scene, tmp_path / 'poses.json')
    loaded = get_scene(str(tmp_path / 'poses.json'))
    assert loaded.trajectory[0].timestamp == 0.5
    assert loaded.beam.n_beams == 4


def test_load_scene_errors(tmp_path):
    path = tmp_path / 'bad.json'
    path.write_text('{not json')
    with pytest.raises(SceneError, match='JSON'):
        load_scene(path)
    path.write_text(json.dumps({'tunnel': {'radius': 3, 'colour': 1}}))
    with pytest.raises(SceneError, match='invalid scene'):
        load_scene(path)
    with pytest.raises(FileNotFoundError):
        get_scene(str(tmp_path / 'missing.json'))


def test_presets():
    cave = get_scene('cave')
    assert [o.name for o in cave.artifacts] == ['backpack', 'survivor',
                                                'extinguisher']
    assert len(cave.trajectory) == 200
    assert len(get_scene('clutter').protrusions) > 0
    assert get_scene('urban').tunnel.intensity_mixture


def test_trajectory_spec():
    poses = TrajectorySpec(n_scans=11, rate_hz=5, speed=1.0).poses()
    np.testing.assert_allclose(poses[-1].translation, [3.0, 0.0, 0.8])
    assert poses[-1].timestamp == pytest.approx(2.0)
    assert max(p.rotation_angle() for p in poses) < 3


def test_export_dataset(tmp_path):
    scene = cave_scene(n_scans=3)
    export_dataset(scene, tmp_path, seed=0)
    entries, trajectory = list_dataset(tmp_path)
    assert len(entries) == 3
    assert len(trajectory) == 3
    np.testing.assert_allclose(trajectory[1].translation,
                               scene.trajectory[1].translation)
