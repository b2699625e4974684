""" Command line interface.

Subcommands::

    ptzprop run INPUT_DIR --output OUT       replay a recorded dataset
    ptzprop synth SCENE --output OUT         render, replay and score a scene
    ptzprop eval PROPOSALS SCENE             re-score a proposals.jsonl
    ptzprop viz ARCHIVE --output OUT         PNGs from an ImageSet archive

Exit status is 0 on success, 2 on missing inputs, 3 on invalid
configuration or scene, 1 on any other data error.
"""
# License: BSD (3-clause)

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ABLATION_ARMS, load_config, parse_overrides
from .evaluator import evaluate, run_ablation
from .exceptions import ConfigError, PtzPropError, SceneError
from .pipeline import Pipeline
from .scan_io import iter_dataset, read_proposal_records, write_proposals
from .scenes import export_dataset, get_scene, render_scans
from .utils import profile_me
from .viz import load_imageset, save_debug_images


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DATA_ERROR = 1
EXIT_MISSING = 2
EXIT_INVALID = 3


def _write_json(path, content):
    Path(path).write_text(json.dumps(content, indent=2) + '\n',
                          encoding='utf-8')


def _make_config(config_path=None, overrides=None, ablation=None,
                 debug_images=False, seed=None):
    config = load_config(config_path, overrides)
    run = {}
    if debug_images:
        run['run.debug_images'] = True
    if seed is not None:
        run['run.seed'] = seed
    config = config.with_overrides(run)
    if ablation is not None:
        config = config.with_ablation(ablation)
    return config


def _summary(config, result, source):
    return dict(source=str(source), ablation=config.run.ablation,
                flags=config.flags, counts=result.counts(),
                timings=result.timings, config=config.to_flat())


def run_dataset(config_path, input_dir, output_dir, overrides=None,
                ablation=None, debug_images=False, verbose=0):
    """ Replay a dataset directory and write proposals.jsonl and
    summary.json. Return the exit status. """
    def command():
        config = _make_config(config_path, overrides, ablation, debug_images)
        output = Path(output_dir)
        output.mkdir(parents=True, exist_ok=True)
        pipeline = Pipeline(config, debug_dir=output / 'debug',
                            verbose=verbose)
        result = pipeline.run(iter_dataset(input_dir))
        write_proposals(result.proposals, output / 'proposals.jsonl')
        _write_json(output / 'summary.json',
                    _summary(config, result, input_dir))
    return _execute(command)


def run_synthetic(scene_path, config_path, output_dir, overrides=None,
                  ablation=None, seed=None, arms=None, debug_images=False,
                  export_dir=None, verbose=0):
    """ Render a scene, replay it, score the proposals and write
    proposals.jsonl, summary.json, report.json and report.txt. Return the
    exit status. """
    def command():
        config = _make_config(config_path, overrides, ablation, debug_images,
                              seed)
        scene = get_scene(scene_path)
        output = Path(output_dir)
        output.mkdir(parents=True, exist_ok=True)
        if export_dir is not None:
            export_dataset(scene, export_dir, seed=config.run.seed,
                           n_jobs=config.run.n_jobs)
        scans = render_scans(scene, seed=config.run.seed,
                             n_jobs=config.run.n_jobs)
        pipeline = Pipeline(config, debug_dir=output / 'debug',
                            verbose=verbose)
        result = pipeline.run(scans)
        write_proposals(result.proposals, output / 'proposals.jsonl')
        _write_json(output / 'summary.json',
                    _summary(config, result, scene_path))

        ablation_report = None
        if arms:
            ablation_report = run_ablation(
                scene, arms, seeds=(config.run.seed,),
                config=config, n_jobs=config.run.n_jobs, verbose=verbose)
        report = evaluate(result.proposals, scene, ablation=ablation_report)
        _write_json(output / 'report.json', report.to_dict())
        table = report.format_table()
        (output / 'report.txt').write_text(table, encoding='utf-8')
        print(table, end='')
    return _execute(command)


def run_eval(proposals_path, scene_path, output=None):
    """ Score an existing proposals.jsonl against a scene. """
    def command():
        path = Path(proposals_path)
        if not path.is_file():
            raise FileNotFoundError(f"{path} not found")
        scene = get_scene(scene_path)
        report = evaluate(read_proposal_records(path), scene)
        if output is not None:
            _write_json(output, report.to_dict())
        print(report.format_table(), end='')
    return _execute(command)


def run_viz(archive, output_dir):
    """ Write the debug PNGs of an ImageSet archive. """
    def command():
        path = Path(archive)
        if not path.is_file():
            raise FileNotFoundError(f"{path} not found")
        img, labels = load_imageset(path)
        for png in save_debug_images(img, labels, path.stem, output_dir):
            print(png)
    return _execute(command)


def _execute(command):
    try:
        command()
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISSING
    except (ConfigError, SceneError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except PtzPropError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA_ERROR
    return EXIT_OK


def _arms(text):
    arms = [a.strip() for a in text.split(',') if a.strip()]
    unknown = [a for a in arms if a not in ABLATION_ARMS]
    if unknown:
        raise argparse.ArgumentTypeError(
            f"unknown arm(s) {unknown}, expected names in "
            f"{list(ABLATION_ARMS)}")
    return arms


def build_parser():
    parser = argparse.ArgumentParser(
        prog='ptzprop', description="LiDAR object proposals for a "
        "pan-tilt-zoom camera.")
    parser.add_argument('--version', action='version',
                        version=f'%(prog)s {__version__}')
    sub = parser.add_subparsers(dest='command', required=True)

    def common(p):
        p.add_argument('--config', default=None,
                       help="dotted-key configuration file")
        p.add_argument('--set', dest='overrides', action='append',
                       default=[], metavar='KEY=VALUE',
                       help="override one configuration key")
        p.add_argument('--ablation', choices=list(ABLATION_ARMS),
                       default=None, help="segmentation ablation arm")
        p.add_argument('--debug-images', action='store_true',
                       help="write per-query PNGs under OUTPUT/debug")
        p.add_argument('-v', '--verbose', action='count', default=0)
        p.add_argument('--profile', action='store_true',
                       help="dump a cProfile report of the command")

    p = sub.add_parser('run', help="replay a dataset directory")
    p.add_argument('input_dir')
    p.add_argument('--output', required=True)
    common(p)

    p = sub.add_parser('synth', help="render and replay a synthetic scene")
    p.add_argument('scene', help="scene JSON file or preset name")
    p.add_argument('--output', required=True)
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--arms', type=_arms, default=None,
                   help="comma separated ablation arms to compare")
    p.add_argument('--export-dataset', default=None, metavar='DIR',
                   help="also write the rendered scans as a dataset")
    common(p)

    p = sub.add_parser('eval', help="score proposals against a scene")
    p.add_argument('proposals')
    p.add_argument('scene', help="scene JSON file or preset name")
    p.add_argument('--output', default=None, help="report JSON path")
    p.add_argument('-v', '--verbose', action='count', default=0)

    p = sub.add_parser('viz', help="PNGs from an ImageSet archive")
    p.add_argument('archive')
    p.add_argument('--output', required=True)
    p.add_argument('-v', '--verbose', action='count', default=0)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose,
                                                      logging.DEBUG)
    logging.basicConfig(level=level,
                        format='%(asctime)s %(name)s %(levelname)s '
                               '%(message)s')

    if args.command in ('run', 'synth'):
        try:
            overrides = parse_overrides(args.overrides)
        except ConfigError as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_INVALID

    if args.command == 'run':
        command, params = run_dataset, dict(
            config_path=args.config, input_dir=args.input_dir,
            output_dir=args.output, overrides=overrides,
            ablation=args.ablation, debug_images=args.debug_images,
            verbose=args.verbose)
    elif args.command == 'synth':
        command, params = run_synthetic, dict(
            scene_path=args.scene, config_path=args.config,
            output_dir=args.output, overrides=overrides,
            ablation=args.ablation, seed=args.seed, arms=args.arms,
            debug_images=args.debug_images,
            export_dir=args.export_dataset, verbose=args.verbose)
    elif args.command == 'eval':
        command, params = run_eval, dict(proposals_path=args.proposals,
                                         scene_path=args.scene,
                                         output=args.output)
    else:
        command, params = run_viz, dict(archive=args.archive,
                                        output_dir=args.output)

    if getattr(args, 'profile', False):
        command = profile_me(command)
    return command(**params)


if __name__ == '__main__':  # pragma: no cover
    sys.exit(main())
