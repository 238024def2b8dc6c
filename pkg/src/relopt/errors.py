"""Exception hierarchy shared by all engine modules."""


class EngineError(Exception):
    """Base class for all errors raised by this package."""


class StructureParseError(EngineError):
    """Malformed line in a structure file."""

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class SchemaError(EngineError):
    """Record incompatible with its relation declaration."""


class UnknownObjectError(EngineError, LookupError):
    """An object id or label that does not exist in the structure."""


class FormulaParseError(EngineError):
    """Syntax or binding error in a formula, with source position."""

    def __init__(self, message: str, pos: int):
        super().__init__(f"at position {pos}: {message}")
        self.pos = pos


class ContractError(EngineError):
    """Input violates the shape required by an operation."""


class UnsupportedShapeError(EngineError):
    """Formula shape outside the range a solver handles."""


class ResourceLimitError(EngineError):
    """A configured size or budget cap would be exceeded."""
