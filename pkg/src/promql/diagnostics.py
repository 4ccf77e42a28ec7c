from dataclasses import dataclass
from enum import Enum
from typing import List, Tuple


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    """A message about a byte range ``[start, end)`` of the query source."""
    span: Tuple[int, int]
    message: str
    severity: Severity = Severity.ERROR

    @classmethod
    def error(cls, span: Tuple[int, int], message: str) -> "Diagnostic":
        return cls(span, message, Severity.ERROR)

    @classmethod
    def warning(cls, span: Tuple[int, int], message: str) -> "Diagnostic":
        return cls(span, message, Severity.WARNING)

    def render(self) -> str:
        return f"{self.severity.value} at {self.span[0]}-{self.span[1]}: {self.message}"


def has_errors(diagnostics: List[Diagnostic]) -> bool:
    return any(d.severity == Severity.ERROR for d in diagnostics)
