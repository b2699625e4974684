""" Exceptions raised by the proposal pipeline. """
# License: BSD (3-clause)


class PtzPropError(Exception):
    """ Base class of all the errors raised by ptzprop. """


class PCDParseError(PtzPropError, ValueError):
    """ Malformed PCD header or body.

    Parameters
    ----------
    msg : str, description of the problem.
    line : int or None, 1-based header line where the problem was found.
    offset : int or None, byte offset in the stream.
    """

    def __init__(self, msg, line=None, offset=None):
        self.line = line
        self.offset = offset
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        if where:
            msg = f"{msg} ({', '.join(where)})"
        super().__init__(msg)


class UnsupportedSchemaError(PCDParseError):
    """ PCD fields do not provide x, y, z and intensity as FLOAT32. """


class TruncatedDataError(PCDParseError):
    """ PCD body shorter than declared in the header. """

    def __init__(self, msg, expected, actual, unit='bytes'):
        self.expected = expected
        self.actual = actual
        self.unit = unit
        super().__init__(f"{msg}: expected {expected} {unit}, "
                         f"got {actual} {unit}")


class EmptyScanError(PCDParseError):
    """ PCD holding no finite point.

    Parameters
    ----------
    msg : str, description of the problem.
    n_dropped : int, number of non-finite points dropped.
    """

    def __init__(self, msg, n_dropped=0):
        self.n_dropped = n_dropped
        super().__init__(msg)


class TrajectoryOrderError(PtzPropError, ValueError):
    """ Trajectory timestamps are not strictly increasing. """

    def __init__(self, msg, line):
        self.line = line
        super().__init__(f"{msg} (line {line})")


class PoseValidationError(PtzPropError, ValueError):
    """ Pose with a non unit quaternion or an invalid timestamp. """


class AlignmentError(PtzPropError, ValueError):
    """ Scan timestamp too far outside of the trajectory time span. """


class OutOfOrderScanError(PtzPropError, ValueError):
    """ Scan older than the newest scan admitted in the window. """


class EmptyWindowError(PtzPropError, RuntimeError):
    """ Accumulated cloud requested from an empty window. """


class ZoomRangeError(PtzPropError, ValueError):
    """ Cluster beyond the last entry of the zoom schedule. """


class ConfigError(PtzPropError, ValueError):
    """ Invalid configuration file or value.

    Parameters
    ----------
    msg : str, description of the problem.
    key : str or None, dotted configuration key at fault.
    """

    def __init__(self, msg, key=None):
        self.key = key
        if key is not None:
            msg = f"{key}: {msg}"
        super().__init__(msg)


class SceneError(PtzPropError, ValueError):
    """ Invalid synthetic scene description. """
