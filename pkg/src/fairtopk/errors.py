"""Exception hierarchy.

Input errors (bad files, schemas, configs) and domain errors (requests the
math cannot satisfy) are kept apart because the CLI maps them to different
exit codes.
"""


def _rebuild(cls, args, state):
    exc = Exception.__new__(cls)
    exc.args = args
    exc.__dict__.update(state)
    return exc


class FairTopKError(Exception):
    """Base class for all package errors."""

    def __reduce__(self):
        # subclasses take structured constructor arguments; rebuild from state
        # so errors survive pickling across worker processes
        return _rebuild, (type(self), self.args, self.__dict__)

    def add_context(self, context: str) -> "FairTopKError":
        """Prefix the message with where the error happened (e.g. a split id)."""
        self.context = context
        self.args = (f"{context}: {self.args[0] if self.args else ''}",) + self.args[1:]
        return self


class InputError(FairTopKError):
    """Malformed input file or configuration."""


class SchemaError(InputError):
    def __init__(self, column, path=None):
        self.column = column
        where = f" in {path}" if path else ""
        super().__init__(f"missing required column {column!r}{where}")


class RowValidationError(InputError):
    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")


class UniquenessError(InputError):
    pass


class ConfigError(InputError):
    pass


class BindingError(InputError):
    def __init__(self, missing):
        self.missing = list(missing)
        dates = ", ".join(str(d) for d in self.missing)
        super().__init__(f"missing cohort files for as-of dates: {dates}")


class DomainError(FairTopKError):
    """Request outside the domain of an operation (bad k, zero prevalence, ...)."""


class EmptyInputError(DomainError):
    pass


class UnknownKeyError(DomainError, LookupError):
    """Unknown model id or group."""


class ShortfallError(DomainError):
    def __init__(self, group, requested, available):
        self.group = group
        self.requested = requested
        self.available = available
        self.deficit = requested - available
        super().__init__(
            f"group {group!r}: allocation asks for {requested} but test cohort "
            f"has {available} (deficit {self.deficit})"
        )
