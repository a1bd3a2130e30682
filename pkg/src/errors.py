class CaseLabError(Exception):
    """Base class for every domain error raised by caselab."""


class ContractError(CaseLabError, ValueError):
    pass


class DimensionError(CaseLabError, ValueError):
    def __init__(self, message: str, *shapes):
        if shapes:
            message = f"{message}: " + " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(message)
        self.shapes = shapes


class NumericInputError(CaseLabError, ValueError):
    pass


class DegenerateVectorError(CaseLabError, ValueError):
    pass


class TokenIndexError(CaseLabError, IndexError):
    def __init__(self, token_id: int, size: int):
        super().__init__(f"id {token_id} out of range [0, {size})")
        self.token_id = token_id


class IngestionError(CaseLabError):
    def __init__(self, reason: str, line: int | None = None, field: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(f"field {field!r}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {reason}" if prefix else reason)
        self.line = line
        self.field = field
        self.reason = reason


class BuildError(CaseLabError):
    pass


class UnknownIdError(CaseLabError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown id"


class FormatError(CaseLabError):
    def __init__(self, reason: str, offset: int):
        super().__init__(f"{reason} at byte offset {offset}")
        self.offset = offset


class TrainingDivergenceError(CaseLabError):
    pass


class GenerationError(CaseLabError):
    pass


class CompletionClientError(CaseLabError):
    pass


class CompletionTransportError(CompletionClientError):
    """Transient failure talking to a completion backend; retried."""


class EmptyCompletionError(CompletionClientError):
    pass


class ConfigError(CaseLabError):
    pass
