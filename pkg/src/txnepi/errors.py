"""Exception types shared across the package."""


class TxnEpiError(Exception):
    """Base class for all txnepi errors."""


class SchemaError(TxnEpiError):
    """A required CSV column is missing."""

    def __init__(self, column: str, message: str | None = None):
        self.column = column
        super().__init__(message or f"missing required column: {column!r}")


class RowParseError(TxnEpiError):
    """A CSV row could not be parsed; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class NotFoundError(TxnEpiError):
    """A requested key (e.g. region) is absent; carries what is available."""

    def __init__(self, requested: str, available: list[str]):
        self.requested = requested
        self.available = sorted(available)
        super().__init__(
            f"{requested!r} not found; available: {', '.join(self.available)}"
        )


class ParameterError(TxnEpiError, ValueError):
    """An argument violates a precondition."""


class GenerationError(TxnEpiError):
    """Synthetic-data generation cannot proceed (e.g. missing epi coverage)."""


class BudgetExceededError(TxnEpiError):
    """A privacy charge would overdraw the ledger; carries the remaining budget."""

    def __init__(self, label: str, requested: float, remaining: float):
        self.label = label
        self.requested = requested
        self.remaining = remaining
        super().__init__(
            f"charge {label!r} of epsilon={requested:g} exceeds remaining "
            f"budget {remaining:g}"
        )


class DimensionError(TxnEpiError):
    """Array shapes do not agree."""


class DegenerateInputError(TxnEpiError):
    """Input is structurally empty (e.g. all-zero counts where mass is required)."""


class TrainingError(TxnEpiError):
    """Iterative refinement produced a non-finite loss or invalid state."""


class ConvergenceError(TxnEpiError):
    """An optimizer failed to converge; carries the last iterate."""

    def __init__(self, message: str, last_iterate=None):
        self.last_iterate = last_iterate
        super().__init__(message)


class UndefinedCorrelationError(TxnEpiError):
    """Correlation is undefined because a series has zero variance."""
