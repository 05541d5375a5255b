from __future__ import annotations


class MhtError(Exception):
    """Base class for every error raised by the package."""

    def details(self) -> dict:
        return {}


class InvalidArgumentError(MhtError, ValueError):
    pass


class SingularityError(MhtError, ArithmeticError):
    pass


class NumericalError(MhtError, ArithmeticError):
    def __init__(self, message: str, diagnostics: dict | None = None) -> None:
        self.diagnostics = diagnostics or {}
        super().__init__(message)

    def details(self) -> dict:
        return dict(self.diagnostics)


class DataError(MhtError):
    pass


class ParseError(DataError):
    def __init__(self, path: str, line: int, reason: str) -> None:
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {reason}")

    def details(self) -> dict:
        return {"path": self.path, "line": self.line}


class SchemaError(DataError):
    pass


class RowValidationError(DataError):
    def __init__(self, path: str, row: int, reason: str) -> None:
        self.path = path
        self.row = row
        super().__init__(f"{path}: row {row}: {reason}")

    def details(self) -> dict:
        return {"path": self.path, "row": self.row}
