import json

import pytest
import numpy as np

from ptzprop.evaluator import (ARTIFACT, FALSE_POSITIVE, NON_ARTIFACT,
                               auto_verdict, detection_range,
                               detection_range_summary, evaluate,
                               match_object, precision, run_ablation,
                               static_camera_range)
from ptzprop.geometry import Pose
from ptzprop.scenes import SceneObject, SyntheticScene, Tunnel, cave_scene


def _record(centroid, t=0.0, range_m=5.0, id_=0):
    return {'id': id_, 't': t, 'centroid_world': list(centroid),
            'range_m': range_m}


@pytest.fixture
def scene():
    return cave_scene(n_scans=2)


def test_auto_verdict(scene):
    backpack, bin_ = scene.objects[0], scene.objects[1]
    assert auto_verdict(_record(backpack.center), scene) == ARTIFACT
    assert auto_verdict(_record(bin_.center), scene) == NON_ARTIFACT
    assert auto_verdict(_record([30.0, 0.0, 2.0]), scene) == FALSE_POSITIVE

    lo, hi = backpack.aabb()
    near = [hi[0] + 0.4, backpack.center[1], backpack.center[2]]
    far = [hi[0] + 0.6, backpack.center[1], backpack.center[2]]
    assert match_object(_record(near), scene) == 0
    assert match_object(_record(far), scene) is None
    assert match_object(_record(far), scene, radius=0.7) == 0


@pytest.mark.parametrize('verdicts, expected', [
    ([ARTIFACT, NON_ARTIFACT, FALSE_POSITIVE, FALSE_POSITIVE], 0.5),
    ([ARTIFACT] * 3, 1.0), ([FALSE_POSITIVE], 0.0), ([], None),
    ([ARTIFACT] * 17 + [NON_ARTIFACT] * 5 + [FALSE_POSITIVE] * 3, 22 / 25)])
def test_precision(verdicts, expected):
    assert precision(verdicts) == expected


def test_detection_range(scene):
    backpack, bin_ = scene.objects[0], scene.objects[1]
    # records out of time order, the earliest match wins
    proposals = [_record(backpack.center, t=3.0, range_m=4.0, id_=2),
                 _record(bin_.center, t=2.0, range_m=9.0, id_=1),
                 _record(backpack.center, t=1.0, range_m=11.0, id_=0),
                 _record([30.0, 0.0, 2.0], t=0.5, range_m=20.0, id_=3)]
    ranges = detection_range(proposals, scene)
    assert ranges[:2] == [11.0, 9.0]
    assert all(r is None for r in ranges[2:])

    summary = detection_range_summary(ranges, scene)
    assert summary['backpack'] == (11.0, 11.0)
    assert summary['survivor'] is None


def test_static_camera_range():
    obj = SceneObject('bag', 'box', (0.5, 0.5, 0.5), (10.0, 0.0, 0.0),
                      is_artifact=True)
    poses = [Pose([x, 0.0, 0.25], timestamp=x)
             for x in np.arange(0.0, 9.0, 0.1)]
    scene = SyntheticScene('approach', Tunnel(), [obj], (), poses)
    # 120 px of a 1280 px wide, 90 deg image
    resolved_at = 0.25 / np.tan(np.radians(120 * 90 / 1280 / 2))
    (r,) = static_camera_range(scene)
    assert resolved_at - 0.1 < r <= resolved_at

    behind = SceneObject('bag', 'box', (0.5, 0.5, 0.5), (-5.0, 3.0, 0.0))
    scene = SyntheticScene('behind', Tunnel(), [behind], (), poses)
    assert static_camera_range(scene) == [None]


def test_evaluate_report(scene):
    backpack = scene.objects[0]
    proposals = [_record(backpack.center, t=1.0, range_m=9.0),
                 _record([30.0, 0.0, 2.0], t=2.0, id_=1)]
    report = evaluate(proposals, scene)
    assert report.verdicts == [ARTIFACT, FALSE_POSITIVE]
    assert report.precision == 0.5
    assert report.counts == {ARTIFACT: 1, NON_ARTIFACT: 0,
                             FALSE_POSITIVE: 1}
    content = report.to_dict()
    assert content['n_proposals'] == 2
    assert content['objects'][0]['name'] == 'backpack'
    assert content['objects'][0]['detection_range_m'] == 9.0
    assert content['range_summary']['backpack'] == [9.0, 9.0]
    assert content['range_summary']['survivor'] is None
    assert set(content['range_summary']) == {o.name for o in scene.objects}
    json.dumps(content)
    table = report.format_table()
    assert 'precision: 0.500' in table
    assert 'backpack' in table and 'missed' in table
    assert 'first detection range (m)' in table
    assert '9.00 - 9.00' in table

    empty = evaluate([], scene)
    assert empty.precision is None
    assert 'precision: n/a' in empty.format_table()


def test_run_ablation_single_arm():
    small = cave_scene(n_scans=8)
    ablation = run_ablation(small, arms=['full'], seeds=(0,), n_queries=2)
    assert list(ablation) == ['full']
    stats = ablation['full']
    assert stats['per_seed'] == [stats['false_positives']]
    assert len(stats['proposals']) == 1

    with pytest.raises(ValueError, match='unknown ablation'):
        run_ablation(small, arms=['no-labels'])
