""" ptzprop: LiDAR object proposals for a pan-tilt-zoom camera. """
# License: BSD (3-clause)

__version__ = '0.1.dev0'

from .accumulator import ScanAccumulator  # noqa: E402
from .config import PipelineConfig, load_config  # noqa: E402
from .pipeline import Pipeline  # noqa: E402
from .scan_io import LidarScan, parse_pcd, parse_trajectory  # noqa: E402
from .scenes import PRESETS, render_scan  # noqa: E402


__all__ = [
    'Pipeline',
    'PipelineConfig',
    'ScanAccumulator',
    'LidarScan',
    'PRESETS',
    'load_config',
    'parse_pcd',
    'parse_trajectory',
    'render_scan',
]
