""" Argument checking utilities. """
# License: BSD (3-clause)

import numbers
import numpy as np


def check_random_state(seed):
    """Turn seed into a np.random.RandomState instance.

    Parameters
    ----------
    seed : None, int, random-instance, (default=None), random-instance
        or random-seed used to initialize the random-instance

    Return
    ------
    random_instance : random-instance used to initialize the analysis
    """
    if seed is None or seed is np.random:
        return np.random.mtrand._rand
    if isinstance(seed, (int, np.integer)):
        return np.random.RandomState(seed)
    if isinstance(seed, np.random.RandomState):
        return seed
    raise ValueError(f'{seed} cannot be used to seed a '
                     f'numpy.random.RandomState instance')


def check_positive(value, name, strict=True):
    """ Return value as a float, raise a ValueError if it is not positive.

    Parameters
    ----------
    value : number, value to check.
    name : str, name used in the error message.
    strict : bool (default: True), whether 0 is rejected.
    """
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValueError(f"{name} should be a finite number, got {value!r}")
    if value < 0 or (strict and value == 0):
        bound = '> 0' if strict else '>= 0'
        raise ValueError(f"{name} should be {bound}, got {value}")
    return float(value)


def check_in_range(value, name, low, high, closed=(True, True)):
    """ Return value as a float, raise a ValueError if outside [low, high].

    Parameters
    ----------
    value : number, value to check.
    name : str, name used in the error message.
    low, high : float, bounds of the admissible interval.
    closed : tuple of bool, whether each bound is included.
    """
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValueError(f"{name} should be a finite number, got {value!r}")
    low_ok = value >= low if closed[0] else value > low
    high_ok = value <= high if closed[1] else value < high
    if not (low_ok and high_ok):
        lb = '[' if closed[0] else '('
        hb = ']' if closed[1] else ')'
        raise ValueError(f"{name} should be in {lb}{low}, {high}{hb}, "
                         f"got {value}")
    return float(value)


def check_finite(array, name):
    """ Return array as a float64 ndarray, raise if it holds NaN or inf. """
    array = np.asarray(array, dtype=np.float64)
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{name} should only contain finite values")
    return array


def check_vector(array, name, size=3):
    """ Return a finite float64 vector of the given size. """
    array = check_finite(array, name).reshape(-1)
    if array.shape[0] != size:
        raise ValueError(f"{name} should have {size} elements, "
                         f"got {array.shape[0]}")
    return array


def check_points(points, name='points'):
    """ Return an (N, 4) float array [x, y, z, intensity].

    Single points given as a 4-vector are promoted to shape (1, 4).
    """
    points = np.atleast_2d(np.asarray(points))
    if points.ndim != 2 or points.shape[1] != 4:
        raise ValueError(f"{name} should have shape (N, 4), "
                         f"got {points.shape}")
    if points.dtype.kind != 'f':
        points = points.astype(np.float64)
    return points


def freeze(*arrays):
    """ Flag the given ndarrays as read-only and return them. """
    for array in arrays:
        if isinstance(array, np.ndarray):
            array.setflags(write=False)
    return arrays if len(arrays) > 1 else arrays[0]
