"""
Exception documentation. Note: all exceptions from the package inherit from the IdemException class.
"""

from typing import Optional


class IdemException(Exception):
    """Base exception for identity engine errors."""


class BeforeDeployment(IdemException):
    """Exception indicating a history was queried at a time before its deployment."""

    def __init__(self, system_id: str, t: int, t0: int):
        super().__init__(f"{system_id} queried at {t}, before its deployment at {t0}")
        self.system_id = system_id
        self.t = t
        self.t0 = t0


class NoData(IdemException):
    """Exception indicating no measurement of a capability exists at or before the queried time."""

    def __init__(self, system_id: str, capability: str, t: int, group: Optional[str] = None):
        scope = capability if group is None else f"{capability}[{group}]"
        super().__init__(f"{system_id} has no {scope} measurement at or before {t}")
        self.system_id = system_id
        self.capability = capability
        self.t = t
        self.group = group


class InvalidHistory(IdemException):
    """Exception indicating an artifact history violates its ordering or deployment invariants."""


class DuplicateContract(IdemException):
    """Exception indicating two contracts of one profile share a signature."""


class ParseError(IdemException):
    """Exception indicating a contract or ladder text deviates from the grammar."""

    def __init__(self, position: int, expected: str, found: str):
        super().__init__(f"at byte {position}: expected {expected}, found {found}")
        self.position = position
        self.expected = expected
        self.found = found


class MissingDefault(ParseError):
    """Exception indicating a ladder has no default line."""

    def __init__(self, position: int):
        super().__init__(position, "'default' line", "end of input")


class NotOfKind(IdemException):
    """Exception indicating a system does not belong to the kind it is queried in."""


class InvalidInterval(IdemException):
    """Exception indicating reversed or empty interval endpoints."""


class UnknownSystem(IdemException):
    """Exception indicating a system_id that is absent from the ledger."""


class InvalidModel(IdemException):
    """Exception indicating invalid trajectory generator parameters."""


class InvalidScenario(IdemException):
    """Exception indicating a scenario document referencing unknown systems or operations."""


class LedgerError(IdemException):
    """Base exception for ledger validation and serialization errors."""

    rule = "ledger"

    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class OutOfOrder(LedgerError):
    """Exception indicating an event older than the latest event recorded for its system."""

    rule = "out-of-order"


class DuplicateDeployment(LedgerError):
    """Exception indicating a second Deployment for one system."""

    rule = "duplicate-deployment"


class MissingDeployment(LedgerError):
    """Exception indicating an event for a system that was never deployed."""

    rule = "missing-deployment"


class MalformedRecord(LedgerError):
    """Exception indicating a ledger line that is not a valid document."""

    rule = "malformed-record"


class UnsupportedVersion(LedgerError):
    """Exception indicating a ledger header version this reader does not support."""

    rule = "unsupported-version"
