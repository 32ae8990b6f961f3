"""Exception types shared across the package."""


class SemjsonError(Exception):
    """Base class for all package errors."""


class JsonParseError(SemjsonError):
    """Malformed JSON input; carries the byte offset of the failure."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (byte offset {byte_offset})")
        self.byte_offset = byte_offset


class StructureError(SemjsonError):
    """Document shape violates an extraction precondition (e.g. non-object root)."""


class ContractError(SemjsonError):
    """An operation was called with arguments violating its contract."""


class ConfigError(SemjsonError):
    """Invalid or incomplete pipeline configuration."""


class LoadError(SemjsonError):
    """A persisted artifact (embedding table, checkpoint, dump) failed to load."""


class SplitError(SemjsonError):
    """Dataset cannot be split as requested."""


class TrainingAbort(SemjsonError):
    """Training stopped on a non-finite loss; records where it happened."""

    def __init__(self, epoch: int, batch: int, message: str = "non-finite loss"):
        super().__init__(f"{message} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


class BuildError(SemjsonError):
    """Graph construction failed; names the offending path."""
