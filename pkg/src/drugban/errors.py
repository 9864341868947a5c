"""Exception types shared across the package."""


class DrugBanError(Exception):
    """Base class for all package errors."""


class DimensionError(DrugBanError, ValueError):
    pass


class NumericError(DrugBanError, ArithmeticError):
    pass


class ParseError(DrugBanError, ValueError):
    """SMILES parse failure. ``offset`` is the byte offset of the problem."""

    def __init__(self, message, offset=None, smiles=None):
        self.offset = offset
        self.smiles = smiles
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)


class TokenizationError(DrugBanError, ValueError):
    def __init__(self, message, position=None):
        self.position = position
        super().__init__(message)


class CapacityError(DrugBanError, ValueError):
    pass


class ConfigError(DrugBanError, ValueError):
    pass


class DataError(DrugBanError, ValueError):
    pass


class MetricError(DrugBanError, ValueError):
    pass


class TrainingDivergedError(NumericError):
    def __init__(self, message, epoch=None, batch=None):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"{message} (epoch={epoch}, batch={batch})")
