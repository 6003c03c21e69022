"""Exception hierarchy.

Errors fall in two families that the CLI maps to exit codes: input/IO
problems (exit 2) and analyses that cannot be carried out on the given
data (exit 3).
"""


class SpendLensError(Exception):
    """Base class for all package errors."""


class InputError(SpendLensError):
    """Problem with an input file or its contents."""


class AnalysisError(SpendLensError):
    """The requested computation is infeasible for the data."""


# ingest
class FileError(InputError):
    pass


class NoHeaderFound(InputError):
    pass


class MalformedAmount(InputError, ValueError):
    pass


class MalformedDate(InputError, ValueError):
    pass


# ledger
class VersionError(InputError):
    pass


class MalformedRow(InputError):
    pass


# transparency
class EmptyTable(AnalysisError):
    pass


class NoData(AnalysisError):
    pass


# fitting
class TooFewPoints(AnalysisError):
    pass


class InfeasibleSegmentation(AnalysisError):
    pass


class AllNonPositive(AnalysisError):
    pass


class InvalidArgs(AnalysisError, ValueError):
    pass


class OutOfRange(AnalysisError, ValueError):
    pass


class InvalidSpec(AnalysisError, ValueError):
    pass
