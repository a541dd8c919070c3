"""Exception hierarchy shared across the package."""


class FsmragError(Exception):
    """Base class for all package errors."""


class KBError(FsmragError):
    """Knowledge-base ingestion or lookup failure."""


class ParseError(FsmragError):
    """Module output did not match the expected grammar."""


class ProtocolError(FsmragError):
    """State/branch pair is not wired in the transition table."""


class ContractError(FsmragError):
    """A caller violated an operation's precondition."""


class BackendError(FsmragError):
    """Transport-level failure talking to a model backend."""


class FixtureGapError(FsmragError):
    """A scripted backend was asked for a prompt it has no entry for."""


class StoreError(FsmragError):
    """Trajectory/feedback store failure."""
