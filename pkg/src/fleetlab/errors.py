"""Error hierarchy shared across the platform.

Every error carries a stable ``code`` string.  The HTTP layer maps codes to
status codes and the CLI maps them to distinct exit codes, so the code is
part of the public contract; the message is not.
"""

from __future__ import annotations


class FleetError(Exception):
    """Base class for all platform errors."""

    code = "error"

    def __init__(self, message: str = "", **details):
        super().__init__(message or self.code)
        self.message = message or self.code
        self.details = details

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "details": self.details}


class MalformedId(FleetError):
    code = "malformed_id"


class UnknownEntity(FleetError):
    code = "unknown_entity"


class Unauthenticated(FleetError):
    code = "unauthenticated"


class Denied(FleetError):
    """Authorization failure: the caller lacks the required role or grant."""

    code = "denied"


class NotAdmin(Denied):
    code = "not_admin"


class NotOperator(Denied):
    code = "not_operator"


class NotVerified(Denied):
    code = "not_verified"


class Conflict(FleetError):
    """Reservation overlaps an existing one.  details['conflicts'] lists them."""

    code = "conflict"


class DurationExceeded(FleetError):
    code = "duration_exceeded"


class PastStart(FleetError):
    code = "past_start"


class InvalidState(FleetError):
    code = "invalid_state"


class InvalidConfig(FleetError):
    code = "invalid_config"


class NotGated(FleetError):
    code = "not_gated"


class NotValidated(FleetError):
    code = "not_validated"


class QueueOrder(FleetError):
    """Gated entries are released strictly in enqueue order."""

    code = "queue_order"


class TooLarge(FleetError):
    code = "too_large"


class ScannerUnavailable(FleetError):
    code = "scanner_unavailable"


class NotVulnerable(FleetError):
    code = "not_vulnerable"


class Busy(FleetError):
    code = "busy"


class UnknownDevice(FleetError):
    code = "unknown_device"


class TargetMismatch(FleetError):
    code = "target_mismatch"


class NotReserved(FleetError):
    code = "not_reserved"


class AgentUnreachable(FleetError):
    code = "agent_unreachable"


class StartFailure(FleetError):
    code = "start_failure"


class DeviceDenied(FleetError):
    code = "device_denied"


class AclDenied(FleetError):
    code = "acl_denied"


class RangeTooLarge(FleetError):
    code = "range_too_large"


class NotStarted(FleetError):
    code = "not_started"


class SourceMissing(FleetError):
    code = "source_missing"


class NoGatewayCoverage(FleetError):
    code = "no_gateway_coverage"
