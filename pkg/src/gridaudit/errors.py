"""Exception taxonomy shared by every gridaudit module."""

from __future__ import annotations


class GridAuditError(Exception):
    """Base class for all gridaudit errors."""


class NotAWorkbook(GridAuditError):
    """The file is not a readable workbook; the message names the offending part."""


class UnsupportedFeature(GridAuditError):
    """The workbook uses a feature this reader does not handle (e.g. encryption)."""


class ParseError(GridAuditError):
    """A1 reference text could not be parsed."""

    def __init__(self, message: str, position: int | None = None) -> None:
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class DomainError(GridAuditError):
    """An argument is outside the operation's domain."""


class UnknownSheet(GridAuditError):
    """The referenced sheet does not exist in the workbook."""


class UnknownName(GridAuditError):
    """The defined name does not exist; the message lists the available names."""


class TypeMismatch(GridAuditError):
    """A cell holds a non-numeric value where a number was required."""


class LengthError(GridAuditError):
    """Fewer cells were found than the extraction needed."""

    def __init__(self, found: int, needed: int) -> None:
        super().__init__(f"found {found} cells, needed {needed}")
        self.found = found
        self.needed = needed


class LengthMismatch(GridAuditError):
    """Two series that must agree in length do not."""

    def __init__(self, n_a: int, n_b: int) -> None:
        super().__init__(f"series lengths differ: {n_a} vs {n_b}")
        self.n_a = n_a
        self.n_b = n_b


class DivisionByZero(GridAuditError):
    """Elementwise division hit a zero divisor."""

    def __init__(self, index: int | None = None) -> None:
        if index is None:
            super().__init__("division by zero (scalar divisor)")
        else:
            super().__init__(f"division by zero at index {index}")
        self.index = index


class InvalidInput(GridAuditError):
    """A model input violates its stated constraints."""


class NotAnInteger(GridAuditError):
    """A cell value had to be an exact integer but was not."""

    def __init__(self, value: float) -> None:
        super().__init__(f"value {value!r} is not an exact integer")
        self.value = value


class ModelError(GridAuditError):
    """A model node failed to compute; carries the node name."""

    def __init__(self, node: str, cause: Exception) -> None:
        super().__init__(f"computing node '{node}': {cause}")
        self.node = node


class SpecError(GridAuditError):
    """A binding spec or fault spec file is malformed."""


class BindingError(GridAuditError):
    """A binding cannot be used for the requested operation."""


class OverlapError(GridAuditError):
    """Two bound regions collide; the message lists the colliding ranges."""


class FaultError(GridAuditError):
    """A fault spec violates its invariants or cannot be applied."""
