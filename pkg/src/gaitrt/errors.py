"""Exception hierarchy shared by all gaitrt modules."""


class GaitrtError(Exception):
    """Base class for all errors raised by this package."""

    code = "error"


class InsufficientData(GaitrtError):
    code = "insufficient_data"


class InsufficientDuration(GaitrtError):
    code = "insufficient_duration"


class InvalidCutoff(GaitrtError):
    code = "invalid_cutoff"


class InvalidOrder(GaitrtError):
    code = "invalid_order"


class ShapeError(GaitrtError):
    code = "shape_error"


class OutOfStride(GaitrtError):
    code = "out_of_stride"


class WarmupIncomplete(GaitrtError):
    code = "warmup_incomplete"


class EmptyTrial(GaitrtError):
    code = "empty_trial"


class EmptyInput(GaitrtError):
    code = "empty_input"


class DivergedError(GaitrtError):
    code = "diverged"


class MissingChannel(GaitrtError):
    code = "missing_channel"


class AlignmentError(GaitrtError):
    code = "alignment_error"


class RangeError(GaitrtError):
    """Normalized metric requested on a zero-range ground truth."""

    code = "zero_range"


class CorrelationUndefined(GaitrtError):
    code = "correlation_undefined"


class FormatError(GaitrtError):
    code = "format_error"


class DataError(GaitrtError):
    code = "data_error"


class SensorTimeout(GaitrtError):
    code = "sensor_timeout"
