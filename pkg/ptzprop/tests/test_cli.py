""" Unittest module for the command line. """
import json
import shutil

import pytest
import numpy as np

from ptzprop.cli import (EXIT_DATA_ERROR, EXIT_INVALID, EXIT_MISSING,
                         EXIT_OK, main, run_dataset)
from ptzprop.scan_io import read_proposal_records, write_pcd
from ptzprop.scenes import cave_scene, save_scene


@pytest.fixture(scope='module')
def scene_file(tmp_path_factory):
    path = tmp_path_factory.mktemp('scene') / 'short_cave.json'
    save_scene(cave_scene(n_scans=12), path)
    return path


@pytest.fixture(scope='module')
def synth_output(scene_file, tmp_path_factory):
    root = tmp_path_factory.mktemp('synth')
    status = main(['synth', str(scene_file), '--output', str(root / 'out'),
                   '--export-dataset', str(root / 'dataset'),
                   '--set', 'run.dump_images=true'])
    assert status == EXIT_OK
    return root


def test_synth_outputs(synth_output):
    out = synth_output / 'out'
    for name in ('proposals.jsonl', 'summary.json', 'report.json',
                 'report.txt'):
        assert (out / name).is_file()
    summary = json.loads((out / 'summary.json').read_text())
    assert set(summary) == {'source', 'ablation', 'flags', 'counts',
                            'timings', 'config'}
    assert summary['ablation'] == 'full'
    assert summary['counts']['scans'] == 12
    assert summary['counts']['proposals'] == len(
        read_proposal_records(out / 'proposals.jsonl'))
    assert summary['config']['run.dump_images'] is True
    report = json.loads((out / 'report.json').read_text())
    assert report['scene'] == 'cave'
    assert (out / 'report.txt').read_text().startswith('scene: cave')
    assert (out / 'debug' / '0.npz').is_file()
    assert (synth_output / 'dataset' / 'trajectory.txt').is_file()


def test_run_dataset_is_byte_identical(synth_output):
    outputs = []
    for i in range(2):
        out = synth_output / f'replay-{i}'
        status = main(['run', str(synth_output / 'dataset'), '--output',
                       str(out)])
        assert status == EXIT_OK
        outputs.append((out / 'proposals.jsonl').read_bytes())
    assert outputs[0] == outputs[1]
    summary = json.loads((synth_output / 'replay-0' /
                          'summary.json').read_text())
    assert summary['counts']['scans'] == 12


def test_run_dataset_with_unreadable_scans(synth_output, tmp_path, capsys):
    dataset = tmp_path / 'dataset'
    shutil.copytree(synth_output / 'dataset', dataset)
    scan_file = sorted(dataset.glob('*.pcd'))[3]
    nan_points = np.full((5, 4), np.nan, dtype=np.float32)
    scan_file.write_bytes(write_pcd(nan_points))
    status = main(['run', str(dataset), '--output', str(tmp_path / 'out')])
    assert status == EXIT_OK
    summary = json.loads((tmp_path / 'out' / 'summary.json').read_text())
    assert summary['counts']['scans'] == 11

    scan_file.write_bytes(write_pcd(np.ones((5, 4), dtype=np.float32))[:-3])
    status = main(['run', str(dataset), '--output', str(tmp_path / 'bad')])
    assert status == EXIT_DATA_ERROR
    assert 'truncated' in capsys.readouterr().err


def test_ablation_flags(synth_output):
    out = synth_output / 'no-intensity'
    status = run_dataset(None, synth_output / 'dataset', out,
                         ablation='no-intensity-check')
    assert status == EXIT_OK
    summary = json.loads((out / 'summary.json').read_text())
    assert summary['ablation'] == 'no-intensity-check'
    assert summary['flags'] == {'intensity_check': False,
                                'cluster_filters': True,
                                'ground_removal': True}


def test_config_file(synth_output, tmp_path):
    config = tmp_path / 'ptzprop.cfg'
    config.write_text('# short window\naccumulator.window_size = 3\n')
    status = main(['run', str(synth_output / 'dataset'), '--output',
                   str(tmp_path / 'out'), '--config', str(config)])
    assert status == EXIT_OK
    summary = json.loads((tmp_path / 'out' / 'summary.json').read_text())
    assert summary['config']['accumulator.window_size'] == 3


def test_eval(synth_output, scene_file, tmp_path, capsys):
    proposals = synth_output / 'out' / 'proposals.jsonl'
    status = main(['eval', str(proposals), str(scene_file), '--output',
                   str(tmp_path / 'report.json')])
    assert status == EXIT_OK
    assert 'precision' in capsys.readouterr().out
    report = json.loads((tmp_path / 'report.json').read_text())
    expected = json.loads((synth_output / 'out' / 'report.json').read_text())
    assert report['verdicts'] == expected['verdicts']

    status = main(['eval', str(tmp_path / 'none.jsonl'), str(scene_file)])
    assert status == EXIT_MISSING


def test_viz(synth_output, tmp_path, capsys):
    archive = synth_output / 'out' / 'debug' / '0.npz'
    assert main(['viz', str(archive), '--output', str(tmp_path)]) == EXIT_OK
    assert (tmp_path / '0_range.png').is_file()
    assert (tmp_path / '0_labels.png').is_file()
    assert '0_intensity.png' in capsys.readouterr().out

    status = main(['viz', str(tmp_path / 'none.npz'), '--output',
                   str(tmp_path)])
    assert status == EXIT_MISSING


def test_arms(scene_file, tmp_path):
    status = main(['synth', str(scene_file), '--output', str(tmp_path),
                   '--arms', 'full,depth-only'])
    assert status == EXIT_OK
    report = json.loads((tmp_path / 'report.json').read_text())
    assert list(report['ablation']) == ['full', 'depth-only']
    assert 'ablation arm' in (tmp_path / 'report.txt').read_text()

    with pytest.raises(SystemExit):
        main(['synth', str(scene_file), '--output', str(tmp_path),
              '--arms', 'full,everything'])


def test_missing_inputs(tmp_path, capsys):
    empty = tmp_path / 'empty'
    empty.mkdir()
    assert main(['run', str(empty), '--output',
                 str(tmp_path / 'out')]) == EXIT_MISSING
    assert main(['synth', str(tmp_path / 'nope.json'), '--output',
                 str(tmp_path / 'out')]) == EXIT_MISSING
    assert 'error:' in capsys.readouterr().err


@pytest.mark.parametrize('args', [
    ['--set', 'accumulator.window_size=0'],
    ['--set', 'accumulator.window_size'],
    ['--set', 'camera.zoom=2'],
    ['--set', 'segmenter.beta_min_deg=steep'],
])
def test_invalid_configuration(scene_file, tmp_path, args):
    status = main(['synth', str(scene_file), '--output', str(tmp_path)] +
                  args)
    assert status == EXIT_INVALID


def test_invalid_scene(tmp_path):
    bad_json = tmp_path / 'bad.json'
    bad_json.write_text('{"name": "cave", ')
    assert main(['synth', str(bad_json), '--output',
                 str(tmp_path / 'out')]) == EXIT_INVALID

    overlapping = tmp_path / 'overlap.json'
    scene = cave_scene(n_scans=2).to_dict()
    scene['objects'].append(dict(scene['objects'][0], name='twin'))
    overlapping.write_text(json.dumps(scene))
    assert main(['synth', str(overlapping), '--output',
                 str(tmp_path / 'out')]) == EXIT_INVALID
