"""Exception hierarchy shared by every cablekin module."""

from __future__ import annotations


class CablekinError(Exception):
    """Base class for all errors raised by this package."""


class WorkspaceError(CablekinError, ValueError):
    """A point lies outside the reachable workspace box."""


class InfeasibleRotationError(CablekinError, ValueError):
    """A rotation would drive a cable to negative length."""


class InconsistentLengthsError(CablekinError, ValueError):
    """Four cable lengths do not describe a single point."""


class SingularGeometryError(CablekinError, ValueError):
    """The box robot spans the full breadth or depth of the rig."""


class EmptyDatasetError(CablekinError, ValueError):
    pass


class ParseError(CablekinError, ValueError):
    """Malformed dataset file or model blob.

    ``line`` is set for text files (1-based), ``offset`` for binary blobs.
    """

    def __init__(self, message: str, *, line: int | None = None, offset: int | None = None):
        where = ""
        if line is not None:
            where = f"line {line}: "
        elif offset is not None:
            where = f"byte offset {offset}: "
        super().__init__(where + message)
        self.line = line
        self.offset = offset


class SingularFitError(CablekinError, ValueError):
    pass


class DivergenceError(CablekinError, ArithmeticError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss


class UndefinedR2Error(CablekinError, ValueError):
    def __init__(self, output: int):
        super().__init__(f"R^2 undefined for output theta{output}: targets have zero variance")
        self.output = output


class CorruptModelError(CablekinError, ValueError):
    pass
