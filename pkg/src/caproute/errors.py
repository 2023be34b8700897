"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: validation (including dimension
errors) -> 2, format -> 3. Plain ``OSError`` is left alone and maps to 4.
"""


class CapsRouteError(Exception):
    pass


class ValidationError(CapsRouteError, ValueError):
    pass


class DimensionError(ValidationError):
    pass


class MissingClassError(ValidationError):
    def __init__(self, label: int, message: str = ""):
        self.label = label
        super().__init__(message or f"class {label} has no examples")


class FormatError(CapsRouteError):
    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
