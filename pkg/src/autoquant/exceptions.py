"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures onto its
documented classes: 1 configuration, 2 data, 3 runtime, 4 checkpoint.
"""


class AutoquantError(Exception):
    exit_code = 3


class ConfigError(AutoquantError, ValueError):
    exit_code = 1


class DataError(AutoquantError, ValueError):
    exit_code = 2


class CheckpointError(AutoquantError):
    exit_code = 4


# data ---------------------------------------------------------------------

class MissingColumn(DataError):
    def __init__(self, column):
        super().__init__(f"missing required column {column!r}")
        self.column = column


class NonMonotonicTimestamps(DataError):
    def __init__(self, row):
        super().__init__(f"timestamps not strictly increasing at row {row}")
        self.row = row


class UnparsableValue(DataError):
    def __init__(self, row, column, value=None):
        super().__init__(f"cannot parse value {value!r} at row {row}, column {column!r}")
        self.row = row
        self.column = column


class InvalidBounds(DataError):
    pass


class ZeroVariance(DataError):
    def __init__(self, column):
        super().__init__(f"column {column!r} has zero variance on the training split")
        self.column = column


class DatasetTooShort(DataError):
    pass


# models -------------------------------------------------------------------

class UnknownMethod(ConfigError):
    def __init__(self, method):
        super().__init__(f"unknown forecasting method {method!r}")
        self.method = method


class SingularSystem(AutoquantError, ArithmeticError):
    pass


class FeatureMismatch(DataError):
    pass


class InvalidDims(ConfigError):
    pass


class DimMismatch(DataError):
    pass


class NonFiniteLoss(AutoquantError, FloatingPointError):
    pass


class UntrainedModel(AutoquantError, RuntimeError):
    pass


# metrics / baselines ------------------------------------------------------

class TooFewSamples(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class BadLevel(DataError):
    pass


class LevelMissing(DataError):
    pass


class LengthMismatch(DataError):
    pass


class TooFewResiduals(DataError):
    pass


class CalibrationTooSmall(DataError):
    pass


# hpo / orchestration ------------------------------------------------------

class EmptyPopulation(AutoquantError, LookupError):
    pass


class BadBounds(ConfigError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


# resources ----------------------------------------------------------------

class NegativeDuration(AutoquantError, ValueError):
    pass


class MissingPowerModel(ConfigError):
    pass


class MissingPriceModel(ConfigError):
    pass


class UnknownGenerator(ConfigError):
    pass
