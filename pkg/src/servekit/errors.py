"""Exception hierarchy shared across the toolkit.

Every error carries a stable CLI exit code so scripts driving the tool can
branch on failure class without parsing messages.
"""

from __future__ import annotations

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_SUBPROCESS = 4
EXIT_TIMEOUT = 5


class ServeKitError(Exception):
    """Base class for all toolkit errors."""

    exit_code = EXIT_VALIDATION


# -- configuration / validation (exit 2) -------------------------------------

class ParseError(ServeKitError):
    """A config file could not be read or parsed."""

    def __init__(self, path: str, message: str, line: int | None = None):
        self.path = path
        self.line = line
        where = f"{path}:{line}" if line is not None else path
        super().__init__(f"{where}: {message}")


class ValidationError(ServeKitError):
    """A value violates a documented invariant. Message names the field."""


class UnknownModel(ServeKitError):
    """A deployment spec references a model id not present in the catalog."""


class MissingCert(ServeKitError):
    """Site requires a CA certificate but the profile provides no path."""


class InvalidRange(ServeKitError):
    """Bad (lo, hi) bounds for a concurrency sweep."""


class UnparseableOutput(ServeKitError):
    """Benchmark output lacked a mandatory field. Message names the field."""


class EmptySeries(ServeKitError):
    """A report operation needs at least one benchmark point."""


class NoCommonPoints(ServeKitError):
    """Two series share no concurrency level; nothing to compare."""


# -- planning (exit 3) --------------------------------------------------------

class Infeasible(ServeKitError):
    """No GPU layout satisfies the memory constraints within the search cap."""

    exit_code = EXIT_INFEASIBLE


class ImageMissing(ServeKitError):
    """The spec has no container image for the platform's accelerator kind."""

    exit_code = EXIT_INFEASIBLE


class InfeasiblePlan(ServeKitError):
    """A renderer was handed a plan with feasible=False."""

    exit_code = EXIT_INFEASIBLE


class SingleNodePlan(ServeKitError):
    """Multi-node orchestration requested for a single-node plan."""

    exit_code = EXIT_INFEASIBLE


class MultiNodeUnsupported(ServeKitError):
    """The Kubernetes rendering path only supports single-node plans."""

    exit_code = EXIT_INFEASIBLE


class UnsupportedScheduler(ServeKitError):
    """Platform scheduler has no multi-node job template."""

    exit_code = EXIT_INFEASIBLE


# -- external processes (exit 4) ----------------------------------------------

class BinaryNotFound(ServeKitError):
    """The runtime binary for an artifact is not on PATH."""

    exit_code = EXIT_SUBPROCESS


class NonZeroExit(ServeKitError):
    """A child process exited with a non-zero status."""

    exit_code = EXIT_SUBPROCESS

    def __init__(self, command: str, returncode: int, output: str = ""):
        self.command = command
        self.returncode = returncode
        self.output = output
        super().__init__(f"command exited with status {returncode}: {command}")


# -- timeouts (exit 5) ---------------------------------------------------------

class Timeout(ServeKitError):
    """An operation exceeded its deadline. Carries the elapsed time."""

    exit_code = EXIT_TIMEOUT

    def __init__(self, message: str, elapsed_s: float, output: str = ""):
        self.elapsed_s = elapsed_s
        self.output = output
        super().__init__(f"{message} (elapsed {elapsed_s:.1f}s)")


class TargetUnavailable(ServeKitError):
    """Endpoint readiness probing failed before a sweep could start."""

    exit_code = EXIT_TIMEOUT
