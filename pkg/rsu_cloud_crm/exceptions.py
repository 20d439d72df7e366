"""
Exceptions raised by the planner.

Like mkdocs' own exceptions they are click exceptions carrying the exit code
the command line reports, so library callers and the CLI share one hierarchy.
"""
from typing import Iterable, List, Tuple

from click import ClickException, echo


class CrmException(ClickException):
    """Base class which all planner exceptions derive from."""

    exit_code = 3


class ScenarioError(CrmException):
    """
    A scenario file could not be parsed or violates an invariant.

    `errors` keeps every (key path, message) pair reported by the loader.
    """

    exit_code = 1

    def __init__(self, errors: Iterable[Tuple[str, str]]):
        self.errors: List[Tuple[str, str]] = list(errors)
        message = "; ".join(f"{key}: {msg}" for key, msg in self.errors)
        super().__init__(message or "invalid scenario")

    def show(self, file=None):
        echo("Aborted with scenario errors:", file=file, err=True)
        for key, msg in self.errors:
            echo(f"  {key}: {msg}", file=file, err=True)


class DelayError(CrmException, ValueError):
    """Invalid input to the delay model."""


class QueueDomainError(DelayError):
    pass


class QueueSaturationError(DelayError):
    """The arrival rate reached the service rate: the queue never drains."""


class EdgeOverloadError(DelayError):
    pass


class LoadGranularityError(DelayError):
    """A load is not a multiple of the LUT interval."""


class InfeasibleError(CrmException):
    """The demand cannot be carried under the requested constraints."""

    exit_code = 2


class InstanceTooLargeError(CrmException):
    exit_code = 1


class InputError(CrmException):
    """Invalid run parameters."""

    exit_code = 1
