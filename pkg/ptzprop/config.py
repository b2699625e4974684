""" Pipeline configuration.

Configuration files hold flat dotted keys, one per line::

    # defaults
    accumulator.window_size = 10
    segmenter.beta_min_deg = 14
    proposer.zoom_schedule = 4:1:60, 8:2:30, 15:3:15, 30:4:8

Unknown sections or keys are rejected, values are coerced to the type of
the matching dataclass field and validated by it.
"""
# License: BSD (3-clause)

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .accumulator import AccumulatorConfig
from .exceptions import ConfigError
from .parameters import (format_parameters, parse_parameters,
                         ravel_group_params, unravel_group_params)
from .projector import ProjectorConfig
from .proposer import ProposerConfig
from .segmenter import SegmenterConfig


ABLATION_ARMS = {
    'full': {},
    'no-intensity-check': {'segmenter.intensity_check': False},
    'no-cluster-filters': {'segmenter.cluster_filters': False},
    'no-ground-removal': {'segmenter.ground_removal': False},
    'depth-only': {'segmenter.intensity_check': False,
                   'segmenter.cluster_filters': False},
}
_TRUE = ('1', 'true', 'yes', 'on')
_FALSE = ('0', 'false', 'no', 'off')


@dataclass(frozen=True)
class RunConfig:
    """ Driver options.

    Parameters
    ----------
    debug_images : bool (default: False), write per-query PNGs.
    dump_images : bool (default: False), write per-query ImageSet archives.
    ablation : str (default: 'full'), name of the ablation arm.
    seed : int (default: 0), seed of the synthetic renderer.
    n_jobs : int (default: 1), CPUs used to render synthetic scans.
    max_queries : int (default: 0), stop after this many queries, 0 for no
        limit.
    """
    debug_images: bool = False
    dump_images: bool = False
    ablation: str = 'full'
    seed: int = 0
    n_jobs: int = 1
    max_queries: int = 0

    def __post_init__(self):
        if self.ablation not in ABLATION_ARMS:
            raise ValueError(f"ablation should be in "
                             f"{list(ABLATION_ARMS)}, got {self.ablation!r}")
        if self.max_queries < 0:
            raise ValueError("max_queries should be >= 0")


@dataclass(frozen=True)
class PipelineConfig:
    """ All the module configurations plus driver options. """
    accumulator: AccumulatorConfig = field(default_factory=AccumulatorConfig)
    projector: ProjectorConfig = field(default_factory=ProjectorConfig)
    segmenter: SegmenterConfig = field(default_factory=SegmenterConfig)
    proposer: ProposerConfig = field(default_factory=ProposerConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def to_flat(self):
        """ Dict of every 'section.key' -> value. """
        return ravel_group_params({f.name: asdict(getattr(self, f.name))
                                   for f in fields(self)})

    def to_text(self):
        return format_parameters(self.to_flat())

    def with_overrides(self, overrides):
        """ New config with the given 'section.key' -> value entries. """
        if not overrides:
            return self
        flat = self.to_flat()
        flat.update(_check_keys(overrides))
        return build_config(flat)

    def with_ablation(self, arm):
        """ New config running the given ablation arm. """
        if arm not in ABLATION_ARMS:
            raise ConfigError(f"unknown ablation arm {arm!r}, expected one "
                              f"of {list(ABLATION_ARMS)}", key='run.ablation')
        # every arm starts from all the stages enabled
        overrides = {'segmenter.intensity_check': True,
                     'segmenter.cluster_filters': True,
                     'segmenter.ground_removal': True,
                     'run.ablation': arm}
        overrides.update(ABLATION_ARMS[arm])
        return self.with_overrides(overrides)

    @property
    def flags(self):
        seg = self.segmenter
        return dict(intensity_check=seg.intensity_check,
                    cluster_filters=seg.cluster_filters,
                    ground_removal=seg.ground_removal)


_SECTIONS = {f.name: f.default_factory for f in fields(PipelineConfig)}


def _check_keys(flat):
    try:
        grouped = unravel_group_params(flat)
    except KeyError as e:
        raise ConfigError(str(e.args[0])) from None
    for section, params in grouped.items():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section {section!r}", key=section)
        known = {f.name for f in fields(_SECTIONS[section])}
        for k in params:
            if k not in known:
                raise ConfigError("unknown key", key=f'{section}.{k}')
    return flat


def _coerce(value, kind, key):
    """ Convert a value read from text to the type of a field. """
    if not isinstance(value, str):
        if kind is tuple:
            return tuple(value)
        if kind is float and isinstance(value, int) and \
                not isinstance(value, bool):
            return float(value)
        return value
    text = value.strip().strip('"\'')
    try:
        if kind is bool:
            if text.lower() in _TRUE:
                return True
            if text.lower() in _FALSE:
                return False
            raise ValueError(f"expected a boolean, got {text!r}")
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is tuple:
            return tuple(float(v) for v in text.replace(',', ' ').split())
    except ValueError as e:
        raise ConfigError(str(e), key=key) from None
    return text


def build_config(flat):
    """ PipelineConfig from a dict of 'section.key' -> value. """
    grouped = unravel_group_params(_check_keys(dict(flat)))
    sections = {}
    for section, factory in _SECTIONS.items():
        params = grouped.get(section, {})
        kinds = {f.name: f.type for f in fields(factory)}
        values = {k: _coerce(v, kinds[k], f'{section}.{k}')
                  for k, v in params.items()}
        try:
            sections[section] = factory(**values)
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e), key=section) from e
    return PipelineConfig(**sections)


def parse_config(text):
    """ PipelineConfig from the text of a configuration file. """
    try:
        flat = parse_parameters(text)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    return build_config(flat)


def load_config(path=None, overrides=None):
    """ Read a configuration file (defaults if path is None) then apply
    overrides. """
    if path is None:
        config = PipelineConfig()
    else:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"configuration file {path} not found")
        config = parse_config(path.read_text(encoding='utf-8'))
    return config.with_overrides(overrides)


def parse_overrides(items):
    """ Turn ``['section.key=value', ...]`` into a dict. """
    overrides = {}
    for item in items or ():
        if '=' not in item:
            raise ConfigError(f"override {item!r} should read key=value")
        k, v = item.split('=', 1)
        overrides[k.strip()] = v.strip()
    return overrides
