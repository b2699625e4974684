""" Debug images and ImageSet archives. """
# License: BSD (3-clause)

import logging
from pathlib import Path

import numpy as np
import matplotlib
from matplotlib import image as mpimg

from .projector import ImageGeometry, ImageSet
from .segmenter import LabelImage


logger = logging.getLogger(__name__)

N_COLORS = 64
_STRIDE = 23  # coprime with N_COLORS, spreads consecutive labels on the hue


def label_palette(n_colors=N_COLORS):
    """ Fixed RGB palette, shape (n_colors, 3), uint8. """
    hues = matplotlib.colormaps['hsv'](np.linspace(0, 1, n_colors,
                                                   endpoint=False))
    order = (np.arange(n_colors) * _STRIDE) % n_colors
    return (hues[order, :3] * 255).round().astype(np.uint8)


def range_to_gray(range_img, valid):
    """ Tone-map ranges with 255 / (1 + r), 0 where invalid. """
    gray = 255.0 / (1.0 + np.asarray(range_img, dtype=np.float64))
    return np.where(valid, gray, 0).round().astype(np.uint8)


def intensity_to_gray(intensity, valid):
    return np.where(valid, np.clip(intensity, 0, 255), 0).round().astype(
        np.uint8)


def labels_to_rgb(labels):
    """ Invalid pixels black, background gray, clusters from the palette.
    """
    labels = getattr(labels, 'labels', labels).astype(np.int64)
    palette = label_palette()
    rgb = np.zeros(labels.shape + (3,), dtype=np.uint8)
    rgb[labels == 1] = 96
    clusters = labels >= 2
    rgb[clusters] = palette[(labels[clusters] - 2) % N_COLORS]
    return rgb


def save_debug_images(img, labels, query_index, output_dir):
    """ Write ``<query>_range.png``, ``<query>_intensity.png`` and, when
    labels are given, ``<query>_labels.png``. """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for kind, gray in (('range', range_to_gray(img.range, img.valid)),
                       ('intensity', intensity_to_gray(img.intensity,
                                                       img.valid))):
        path = output_dir / f'{query_index}_{kind}.png'
        mpimg.imsave(path, gray, cmap='gray', vmin=0, vmax=255)
        paths.append(path)
    if labels is not None:
        path = output_dir / f'{query_index}_labels.png'
        mpimg.imsave(path, labels_to_rgb(labels))
        paths.append(path)
    logger.debug("wrote debug images of query %s", query_index)
    return paths


def save_imageset(path, img, labels=None):
    """ Archive an ImageSet (and labels) as a compressed npz file. """
    geom = img.geometry
    arrays = dict(range=img.range, intensity=img.intensity, valid=img.valid,
                  normal=img.normal, index=img.index, rays=img.rays,
                  interpolated=img.interpolated,
                  geometry=np.array([geom.rows, geom.cols, geom.fov_up_deg,
                                     geom.fov_down_deg]),
                  n_discarded=np.array(img.n_discarded))
    if labels is not None:
        arrays['labels'] = labels.labels
    np.savez_compressed(path, **arrays)


def load_imageset(path):
    """ Return (ImageSet, LabelImage or None) from a save_imageset archive.
    """
    with np.load(path) as data:
        rows, cols, fov_up, fov_down = data['geometry']
        geom = ImageGeometry(int(rows), int(cols), float(fov_up),
                             float(fov_down))
        img = ImageSet(geom, data['range'], data['intensity'],
                       data['valid'], data['normal'], data['index'],
                       data['rays'], data['interpolated'],
                       int(data['n_discarded']))
        labels = LabelImage(data['labels']) if 'labels' in data else None
    return img, labels
