"""Exception hierarchy shared by the whole package.

The CLI maps these onto process exit codes: usage problems exit 2 (argparse
handles most of those), file-format problems exit 3, invariant violations
exit 4, and resource limits (step caps, exhausted shrink margins) exit 5.
"""


class PerculabError(Exception):
    """Base class for every error raised by perculab."""


class UsageError(PerculabError):
    """Bad argument combination detected after argparse (CLI exit 2)."""


class FormatError(PerculabError):
    """Malformed snapshot/curves/results file (CLI exit 3).

    Carries the 1-based line number when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = "line %d: %s" % (line, message)
        super().__init__(message)
        self.line = line


class InvariantViolationError(PerculabError):
    """A checked structural invariant failed on real data (CLI exit 4)."""


class InternalConsistencyError(InvariantViolationError):
    """Two independent computations of the same quantity disagreed.

    Reserved for conditions that are impossible unless the code is wrong
    (test hook), e.g. an odd number of unsatisfied dual edges at a vertex.
    """


class ResourceLimitError(PerculabError):
    """A configured cap (max_steps, ...) was reached before finishing (CLI exit 5)."""


class MarginExhaustedError(ResourceLimitError):
    """Shrinking-window evolution ran out of margin rings."""


class WindowAccessError(PerculabError):
    """Read of a cell outside the valid region of a configuration."""
