class TrackerError(Exception):
    """
    Base class for every error raised by the tracking toolkit.

    The command line maps each subclass to a process exit code through the
    exit_code attribute.
    """

    exit_code = 3


class InvalidInputError(TrackerError, ValueError):
    """
    Raised when an argument violates a type invariant or a parameter domain.
    """

    exit_code = 2


class InputFileError(InvalidInputError):
    """
    Raised when a frame, truth or estimate file cannot be ingested.

    Args:
        message (str): What is wrong with the record.
        path (str, optional): The offending file.
        line_no (int, optional): 1-based line number within the file.
    """

    def __init__(self, message, path=None, line_no=None):
        self.path = path
        self.line_no = line_no
        prefix = ""
        if path is not None:
            prefix = f"{path}:"
            if line_no is not None:
                prefix = f"{prefix}{line_no}:"
            prefix = f"{prefix} "
        super().__init__(f"{prefix}{message}")


class NoIntersectionError(TrackerError):
    """
    Raised when a direction of arrival does not reach the ground plane.
    """


class DegenerateGeometryError(TrackerError):
    """
    Raised when a geometric construction is undefined for the given pose.
    """


class NoSolutionError(TrackerError):
    """
    Raised when an assignment problem has no feasible solution.
    """


class NumericalError(TrackerError):
    """
    Raised when a numerical routine breaks one of its guarantees.
    """
