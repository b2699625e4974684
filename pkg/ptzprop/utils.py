""" Timing and profiling utilities. """
# License: BSD (3-clause)

import cProfile
import functools
import logging
import time
from collections import defaultdict
from contextlib import contextmanager


logger = logging.getLogger(__name__)


class StageTimer:
    """ Accumulate wall-clock durations per pipeline stage. """

    def __init__(self):
        self.durations = defaultdict(list)

    @contextmanager
    def __call__(self, stage):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.durations[stage].append(time.perf_counter() - t0)

    def last(self, stage):
        return self.durations[stage][-1] if self.durations[stage] else 0.0

    def summary(self):
        """ Return dict(stage -> {count, total_s, mean_s, max_s}). """
        return {stage: dict(count=len(d), total_s=sum(d),
                            mean_s=sum(d) / len(d), max_s=max(d))
                for stage, d in self.durations.items() if d}


def profile_me(func):  # pragma: no cover
    """ Wrap func so that every call dumps a cProfile report to
    ``<func-name>.profile``, to be opened with ``python -m snakeviz``.

    Parameters
    ----------
    func : func, function to profile
    """
    @functools.wraps(func)
    def profiled_func(*args, **kwargs):
        filename = f'{func.__name__}.profile'
        prof = cProfile.Profile()
        try:
            return prof.runcall(func, *args, **kwargs)
        finally:
            prof.dump_stats(filename)
            logger.info("profile written to %s", filename)
    return profiled_func
