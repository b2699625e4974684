""" Scoring of proposals against synthetic ground truth.

A proposal is true when its world centroid lies close to a placed object,
artifact or not; precision is the ratio of true proposals to all of them.
"""
# License: BSD (3-clause)

import logging
from dataclasses import dataclass, field

import numpy as np

from .config import ABLATION_ARMS, PipelineConfig
from .pipeline import Pipeline
from .scenes import render_scans


logger = logging.getLogger(__name__)

ARTIFACT = 'artifact'
NON_ARTIFACT = 'non-artifact'
FALSE_POSITIVE = 'false-positive'
VERDICTS = (ARTIFACT, NON_ARTIFACT, FALSE_POSITIVE)
MATCH_RADIUS = 0.5
DEFAULT_ARMS = ('full', 'no-intensity-check', 'no-cluster-filters',
                'depth-only')


def _field(proposal, attr, key):
    """ Read a Proposal attribute or the matching proposals.jsonl key. """
    if isinstance(proposal, dict):
        return proposal[key]
    return getattr(proposal, attr)


def match_object(proposal, scene, radius=MATCH_RADIUS):
    """ Index of the nearest scene object within radius of the proposal
    centroid, None if there is none. Protrusions never match. """
    centroid = np.asarray(_field(proposal, 'centroid_world',
                                 'centroid_world'), dtype=np.float64)
    best, best_dist = None, np.inf
    for i, obj in enumerate(scene.objects):
        dist = obj.distance_to(centroid)
        if dist <= radius and dist < best_dist:
            best, best_dist = i, dist
    return best


def auto_verdict(proposal, scene, radius=MATCH_RADIUS):
    """ 'artifact', 'non-artifact' or 'false-positive'. """
    i = match_object(proposal, scene, radius)
    if i is None:
        return FALSE_POSITIVE
    return ARTIFACT if scene.objects[i].is_artifact else NON_ARTIFACT


def precision(verdicts):
    """ True proposals over all proposals, None without proposals. """
    verdicts = list(verdicts)
    if not verdicts:
        return None
    n_true = sum(v in (ARTIFACT, NON_ARTIFACT) for v in verdicts)
    return n_true / len(verdicts)


def _in_order(proposals):
    return sorted(proposals, key=lambda p: (_field(p, 'timestamp', 't'),
                                            _field(p, 'id', 'id')))


def detection_range(proposals, scene, radius=MATCH_RADIUS):
    """ Range of the first proposal matched to each scene object.

    Return
    ------
    ranges : list, one entry per ``scene.objects``, None when missed.
    """
    ranges = [None] * len(scene.objects)
    for proposal in _in_order(proposals):
        i = match_object(proposal, scene, radius)
        if i is not None and ranges[i] is None:
            ranges[i] = float(_field(proposal, 'range', 'range_m'))
    return ranges


def detection_range_summary(ranges, scene):
    """ Group first-detection ranges by object name.

    Return
    ------
    summary : dict(name -> (min, max) or None when never detected).
    """
    grouped = {}
    for obj, r in zip(scene.objects, ranges):
        grouped.setdefault(obj.name, [])
        if r is not None:
            grouped[obj.name].append(r)
    return {name: (min(r), max(r)) if r else None
            for name, r in grouped.items()}


def static_camera_range(scene, fov_deg=90.0, image_width_px=1280,
                        min_pixels=120, poses=None):
    """ Range at which a fixed forward camera first resolves each object.

    An object is resolved when its centre lies in the horizontal field of
    view and its horizontal angular width covers at least ``min_pixels``.

    Return
    ------
    ranges : list, one entry per ``scene.objects``, None when never
        resolved.
    """
    poses = scene.trajectory if poses is None else poses
    px_per_deg = image_width_px / fov_deg
    ranges = [None] * len(scene.objects)
    for pose in poses:
        to_sensor = pose.inverse()
        for i, obj in enumerate(scene.objects):
            if ranges[i] is not None:
                continue
            center = to_sensor.transform_points(obj.center[None])[0]
            dist = float(np.linalg.norm(center))
            bearing = np.degrees(np.arctan2(center[1], center[0]))
            if center[0] <= 0 or abs(bearing) > fov_deg / 2:
                continue
            lo, hi = obj.aabb()
            width = float(np.max((hi - lo)[:2]))
            angular = np.degrees(2 * np.arctan2(width / 2, dist))
            if angular * px_per_deg >= min_pixels:
                ranges[i] = dist
    return ranges


@dataclass
class EvaluationReport:
    """ Verdicts, precision, detection ranges (per object and per object
    name) and ablation counts. """
    scene: str
    verdicts: list
    precision: float
    detection_ranges: list
    static_ranges: list = field(default_factory=list)
    ablation: dict = field(default_factory=dict)
    objects: list = field(default_factory=list)
    range_summary: dict = field(default_factory=dict)

    @property
    def counts(self):
        return {v: sum(x == v for x in self.verdicts) for v in VERDICTS}

    @property
    def n_proposals(self):
        return len(self.verdicts)

    def to_dict(self):
        objects = []
        for obj, r, s in zip(self.objects, self.detection_ranges,
                             self.static_ranges or [None] *
                             len(self.objects)):
            objects.append(dict(name=obj.name, is_artifact=obj.is_artifact,
                                detection_range_m=r, static_range_m=s))
        return dict(scene=self.scene, n_proposals=self.n_proposals,
                    counts=self.counts, precision=self.precision,
                    verdicts=list(self.verdicts), objects=objects,
                    range_summary={name: None if r is None else list(r)
                                   for name, r in
                                   self.range_summary.items()},
                    ablation=self.ablation)

    def format_table(self):
        """ Human readable summary. """
        p = 'n/a' if self.precision is None else f'{self.precision:.3f}'
        counts = self.counts
        lines = [f"scene: {self.scene}",
                 f"proposals: {self.n_proposals} ({counts[ARTIFACT]} "
                 f"artifact, {counts[NON_ARTIFACT]} non-artifact, "
                 f"{counts[FALSE_POSITIVE]} false positive)",
                 f"precision: {p}", "",
                 f"{'object':<16}{'artifact':>9}{'proposal (m)':>14}"
                 f"{'static (m)':>12}"]

        def fmt(r):
            return 'missed' if r is None else f'{r:.2f}'

        static = self.static_ranges or [None] * len(self.objects)
        for obj, r, s in zip(self.objects, self.detection_ranges, static):
            flag = 'yes' if obj.is_artifact else 'no'
            lines.append(f"{obj.name:<16}{flag:>9}{fmt(r):>14}{fmt(s):>12}")
        if self.range_summary:
            lines += ["", f"{'object':<16}{'first detection range (m)':>30}"]
            for name, r in self.range_summary.items():
                span = 'missed' if r is None else f'{r[0]:.2f} - {r[1]:.2f}'
                lines.append(f"{name:<16}{span:>30}")
        if self.ablation:
            lines += ["", f"{'ablation arm':<24}{'mean FP':>10}"]
            for arm, stats in self.ablation.items():
                lines.append(f"{arm:<24}{stats['false_positives']:>10.2f}")
        return '\n'.join(lines) + '\n'


def evaluate(proposals, scene, radius=MATCH_RADIUS, ablation=None):
    """ Build the EvaluationReport of a proposal log on a scene. """
    verdicts = [auto_verdict(p, scene, radius) for p in _in_order(proposals)]
    ranges = detection_range(proposals, scene, radius)
    return EvaluationReport(
        scene=scene.name, verdicts=verdicts, precision=precision(verdicts),
        detection_ranges=ranges,
        range_summary=detection_range_summary(ranges, scene),
        static_ranges=static_camera_range(scene),
        ablation={} if ablation is None else ablation,
        objects=list(scene.objects))


def run_ablation(scene, arms=DEFAULT_ARMS, seeds=(0,), n_queries=100,
                 config=None, n_jobs=1, verbose=0):
    """ False positive counts of each ablation arm on a scene.

    The scans of each seed are rendered once and replayed by every arm over
    the same horizon of queries.

    Parameters
    ----------
    scene : SyntheticScene.
    arms : sequence of str, names from ``ABLATION_ARMS``.
    seeds : sequence of int, one rendering per seed.
    n_queries : int (default: 100), query horizon.
    config : PipelineConfig or None, base configuration.
    n_jobs : int (default: 1), CPUs used for rendering.
    verbose : int (default: 0), verbosity level.

    Return
    ------
    ablation : dict(arm -> {false_positives, per_seed, proposals}), with
        ``false_positives`` the mean over seeds.
    """
    config = PipelineConfig() if config is None else config
    unknown = [arm for arm in arms if arm not in ABLATION_ARMS]
    if unknown:
        raise ValueError(f"unknown ablation arm(s) {unknown}, expected "
                         f"names in {list(ABLATION_ARMS)}")
    per_seed = {arm: [] for arm in arms}
    n_proposals = {arm: [] for arm in arms}
    for seed in seeds:
        scans = render_scans(scene, seed=seed, n_jobs=n_jobs)
        for arm in arms:
            pipeline = Pipeline(config.with_ablation(arm))
            result = pipeline.run(scans, max_queries=n_queries)
            verdicts = [auto_verdict(p, scene) for p in result.proposals]
            per_seed[arm].append(verdicts.count(FALSE_POSITIVE))
            n_proposals[arm].append(len(verdicts))
            if verbose > 0:
                logger.info("seed %s arm %s: %d proposals, %d false "
                            "positives", seed, arm, len(verdicts),
                            per_seed[arm][-1])
    return {arm: dict(false_positives=float(np.mean(per_seed[arm])),
                      per_seed=per_seed[arm], proposals=n_proposals[arm])
            for arm in arms}
