"""Exception hierarchy shared by all platform modules.

Validation errors describe bad input (a query, a config file, a token that
does not verify) and map to CLI exit code 1. Runtime errors describe a
failure while doing work and map to exit code 2.
"""
from typing import List, Optional


class PlatformError(Exception):
    """Base class for every error raised by the platform."""


class PlatformValidationError(PlatformError, ValueError):
    """Input rejected before any work was done."""


class PlatformRuntimeError(PlatformError, RuntimeError):
    """Failure while executing an operation."""


# metrics

class EncodingError(PlatformValidationError):
    pass


class InvalidRange(PlatformValidationError):
    pass


class InvalidSeries(PlatformValidationError):
    pass


class TargetDisabled(PlatformValidationError):
    pass


class UnknownService(PlatformValidationError):
    pass


# promql

class ParseError(PlatformValidationError):
    """Query rejected by the parser or the static checker."""

    def __init__(self, diagnostics: list):
        self.diagnostics = diagnostics
        super().__init__("; ".join(d.render() for d in diagnostics))


class EvalError(PlatformRuntimeError):
    pass


# ledger

class NotLeader(PlatformRuntimeError):
    pass


class InvalidBlock(PlatformRuntimeError):
    def __init__(self, reasons: List[str]):
        self.reasons = reasons
        super().__init__("; ".join(reasons))


class ContractRejected(PlatformRuntimeError):
    """Raised by a contract handler; the transaction is applied with error."""


# fedlearn

class EmptyDataset(PlatformRuntimeError):
    pass


class NonFinite(PlatformRuntimeError):
    pass


class DimensionMismatch(PlatformValidationError):
    pass


class RoundStalled(PlatformRuntimeError):
    pass


class RoundNotOpen(PlatformRuntimeError):
    pass


# slogen

class GenerationFailed(PlatformRuntimeError):
    pass


class InvalidSlo(PlatformValidationError):
    pass


class LlmUnavailable(PlatformRuntimeError):
    """The completion endpoint could not be reached or answered with an HTTP error."""


# nft

class DuplicateToken(PlatformRuntimeError):
    pass


class UnknownIssuer(PlatformRuntimeError):
    pass


class TokenVerificationError(PlatformRuntimeError):
    """Raised by verify_or_raise; ``reason`` is NotFound, HashMismatch or ChainBroken."""

    def __init__(self, reason: str, message: str):
        self.reason = reason
        super().__init__(f"{reason}: {message}")


# monitor

class StaleStatus(PlatformRuntimeError):
    pass


class SloEvaluationError(PlatformRuntimeError):
    def __init__(self, slo_id: str, cause: Exception):
        self.slo_id = slo_id
        self.cause = cause
        super().__init__(f"SLO {slo_id}: {cause}")


# harness

class ConfigError(PlatformValidationError):
    pass


class PortUnavailable(PlatformRuntimeError):
    pass


class PipelineError(PlatformRuntimeError):
    def __init__(self, stage: str, cause: Exception, report: Optional[object] = None):
        self.stage = stage
        self.cause = cause
        self.report = report
        super().__init__(f"stage '{stage}' failed: {cause}")
