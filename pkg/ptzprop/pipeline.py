""" Proposal pipeline over a stream of pose-aligned scans.

Scans feed the motion-gated accumulator; every ``1 / query_rate_hz``
seconds of data time the accumulated cloud is projected, segmented and
turned into camera waypoints.
"""
# License: BSD (3-clause)

import logging
from dataclasses import dataclass, field
from pathlib import Path

from .accumulator import ScanAccumulator
from .config import PipelineConfig
from .projector import compute_normals, fill_gaps, project, smooth
from .proposer import ProposalGenerator
from .segmenter import (extract_clusters, filter_clusters, label_image,
                        merge_clusters, remove_ground)
from .utils import StageTimer
from .viz import save_debug_images, save_imageset


logger = logging.getLogger(__name__)

STAGES = ('accumulate', 'project', 'fill_gaps', 'smooth', 'normals',
          'ground', 'label', 'extract', 'filter', 'merge', 'propose')


@dataclass
class QueryResult:
    """ Outputs of one accumulation query. """
    query_index: int
    timestamp: float
    proposals: list
    image: object = None
    labels: object = None
    n_points: int = 0
    n_clusters: int = 0
    n_kept: int = 0
    n_merged: int = 0


@dataclass
class RunResult:
    """ Outputs of a whole replay. """
    proposals: list = field(default_factory=list)
    n_scans: int = 0
    n_admitted: int = 0
    n_queries: int = 0
    n_skipped_queries: int = 0
    n_clusters: int = 0
    n_kept: int = 0
    timings: dict = field(default_factory=dict)

    def counts(self):
        return dict(scans=self.n_scans, admitted=self.n_admitted,
                    queries=self.n_queries,
                    skipped_queries=self.n_skipped_queries,
                    clusters=self.n_clusters, kept_clusters=self.n_kept,
                    proposals=len(self.proposals))


class Pipeline:
    """ Accumulate, project, segment and propose.

    Parameters
    ----------
    config : PipelineConfig or None.
    debug_dir : str, Path or None, where per-query PNGs and archives go when
        enabled in ``config.run``.
    verbose : int (default: 0), log every query when > 0.
    """

    def __init__(self, config=None, debug_dir=None, verbose=0):
        self.config = PipelineConfig() if config is None else config
        self.debug_dir = None if debug_dir is None else Path(debug_dir)
        self.verbose = verbose
        self.accumulator = ScanAccumulator(self.config.accumulator)
        self.generator = ProposalGenerator(self.config.proposer)
        self.schedule = self.config.proposer.schedule
        self.timer = StageTimer()
        self.query_index = 0

    def segment(self, img):
        """ Return (image after ground removal, labels, clusters). """
        seg = self.config.segmenter
        timer = self.timer
        if seg.ground_removal:
            with timer('ground'):
                img = remove_ground(img, seg.ground_angle_deg,
                                    seg.ground_height_band_m,
                                    seg.ground_min_run_m)
        with timer('label'):
            labels = label_image(img, seg)
        with timer('extract'):
            # a cluster never has more points than pixels
            min_pixels = seg.points_min if seg.cluster_filters else 1
            clusters = extract_clusters(labels, img, min_pixels)
        return img, labels, clusters

    def query(self):
        """ Run one query on the current window. """
        proj = self.config.projector
        timer = self.timer
        with timer('accumulate'):
            cloud = self.accumulator.query_accumulated()
        with timer('project'):
            img = project(cloud, proj.geometry)
        with timer('fill_gaps'):
            img = fill_gaps(img, proj.max_gap_rows)
        with timer('smooth'):
            img = smooth(img, proj.kernel_size, proj.kernel_sigma)
        with timer('normals'):
            img = compute_normals(img)

        img, labels, clusters = self.segment(img)
        kept = clusters
        if self.config.segmenter.cluster_filters:
            with timer('filter'):
                kept = filter_clusters(clusters, self.config.segmenter)
        with timer('merge'):
            merged = merge_clusters(kept, self.schedule)
        with timer('propose'):
            proposals = self.generator.propose(
                merged, cloud.reference_pose, query_index=self.query_index,
                timestamp=cloud.timestamp)

        result = QueryResult(self.query_index, cloud.timestamp, proposals,
                             img, labels, len(cloud), labels.n_clusters,
                             len(kept), len(merged))
        self._dump(result)
        if self.verbose > 0:
            logger.info("query %d t=%.2f: %d points, %d clusters, %d kept, "
                        "%d proposals", result.query_index, result.timestamp,
                        result.n_points, result.n_clusters, result.n_kept,
                        len(proposals))
        self.query_index += 1
        return result

    def _dump(self, result):
        run = self.config.run
        if self.debug_dir is None:
            return
        if run.debug_images:
            save_debug_images(result.image, result.labels, result.query_index,
                              self.debug_dir)
        if run.dump_images:
            self.debug_dir.mkdir(parents=True, exist_ok=True)
            save_imageset(self.debug_dir / f'{result.query_index}.npz',
                          result.image, result.labels)

    def run(self, scans, max_queries=None, on_query=None):
        """ Replay pose-aligned scans in timestamp order.

        A query fires on the first scan at or after each query time; query
        times start one period after the first scan and missed slots are
        skipped.

        Parameters
        ----------
        scans : iterable of LidarScan with poses.
        max_queries : int or None, stop after this many queries,
            ``config.run.max_queries`` (0 for no limit) if None.
        on_query : callable or None, called with each QueryResult.
        """
        if max_queries is None:
            max_queries = self.config.run.max_queries or None
        period = self.config.accumulator.query_period
        result = RunResult()
        next_query = None
        for scan in scans:
            result.n_scans += 1
            if next_query is None:
                next_query = scan.timestamp + period
            if self.accumulator.offer_scan(scan):
                result.n_admitted += 1
            if scan.timestamp < next_query:
                continue
            skipped = int((scan.timestamp - next_query) // period)
            result.n_skipped_queries += skipped
            next_query += (skipped + 1) * period

            query = self.query()
            result.n_queries += 1
            result.n_clusters += query.n_clusters
            result.n_kept += query.n_kept
            result.proposals.extend(query.proposals)
            if on_query is not None:
                on_query(query)
            if max_queries is not None and result.n_queries >= max_queries:
                break
        result.timings = self.timer.summary()
        logger.info("%d scans, %d queries, %d proposals", result.n_scans,
                    result.n_queries, len(result.proposals))
        return result
