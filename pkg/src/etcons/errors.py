"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: config problems exit 2,
violated standing assumptions (connectivity, stabilizability, ...) exit 3,
and runtime failures of a simulation exit 4.
"""


class EtconsError(Exception):
    """Base class for all package-specific errors."""

    exit_code = 1


class ConfigError(EtconsError, ValueError):
    """Invalid user input: malformed config, bad graph spec, bad dimensions."""

    exit_code = 2


class AssumptionError(EtconsError):
    """A standing assumption of the protocol design does not hold."""

    exit_code = 3


class DisconnectedGraphError(AssumptionError):
    """The communication graph is not connected."""


class NoSpanningTreeError(AssumptionError):
    """No directed spanning tree rooted at the leader reaches every follower."""


class NotStabilizableError(AssumptionError):
    """(A, B) is not stabilizable; no stabilizing Riccati solution exists."""


class NotDetectableError(AssumptionError):
    """(A, C) is not detectable; no stabilizing observer gain exists."""


class SimulationError(EtconsError):
    """A simulation failed at runtime."""

    exit_code = 4


class ZenoGuardError(SimulationError):
    """An agent exceeded the configured event-rate guard."""


class NonFiniteStateError(SimulationError):
    """The integrated state left the finite range."""
