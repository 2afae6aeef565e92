"""Exception hierarchy shared by every stage of the model-check compiler."""

from __future__ import annotations


class VmcError(Exception):
    """Base class for all errors raised by :mod:`vmcheck`."""


class DataError(VmcError):
    """Malformed or inconsistent input data (tables, draws, bundles)."""


class ModelError(DataError):
    """Invalid model bundle, out-of-domain parameter or failed fit."""


class SpecError(VmcError):
    """A problem with a model-check specification, located by ``path``."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")


class IncompatibleMarkError(SpecError):
    """A mark cannot be drawn under the requested policy or conditioning."""


class CompileError(VmcError):
    """An error raised inside one of the compiler stages.

    ``stage`` is one of ``sample``, ``transform``, ``translate``,
    ``construct``; ``cause`` keeps the original exception.
    """

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        self.path = getattr(cause, "path", stage)
        super().__init__(f"[{stage}] {cause}")

    @property
    def is_data_error(self) -> bool:
        return isinstance(self.cause, DataError)
