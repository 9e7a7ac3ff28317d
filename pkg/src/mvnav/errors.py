"""Exception types raised across the package."""


class MvnavError(Exception):
    """Base class for all package errors."""


class DimensionError(MvnavError, ValueError):
    pass


class NonFiniteError(MvnavError, FloatingPointError):
    """A computation produced NaN/inf; the message names where."""


class ScenarioGenerationError(MvnavError, RuntimeError):
    pass


class TrainingDivergedError(MvnavError, FloatingPointError):
    def __init__(self, epoch, loss):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss!r})")
        self.epoch = epoch
        self.loss = loss


class StorageError(MvnavError, IOError):
    pass


class FormatVersionError(StorageError):
    pass


class ChecksumError(StorageError):
    pass


class TruncatedFileError(StorageError):
    pass
