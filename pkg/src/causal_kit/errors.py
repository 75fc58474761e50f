"""Exception hierarchy.

Every estimation failure carries a short machine-readable ``code`` that the
command line surfaces verbatim.
"""


class CausalKitError(Exception):
    code = "ERROR"


class DagError(CausalKitError, ValueError):
    code = "DAG"


class CycleError(DagError):
    code = "CYCLE"

    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("graph contains a directed cycle: " + " -> ".join(self.cycle))


class UnknownNodeError(DagError, KeyError):
    code = "UNKNOWN_NODE"

    def __init__(self, node):
        self.node = node
        super().__init__(f"unknown node {node!r}")

    def __str__(self):
        return self.args[0]


class DagParseError(DagError):
    code = "PARSE"

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class PathLimitError(DagError):
    code = "PATH_LIMIT"


class ModelError(CausalKitError, ValueError):
    code = "MODEL"


class DataError(CausalKitError, ValueError):
    code = "DATA"


class EstimationError(CausalKitError):
    code = "ESTIMATION"


class EmptyArmError(EstimationError):
    code = "EMPTY_ARM"

    def __init__(self, arm, message=None):
        self.arm = arm
        super().__init__(message or f"treatment arm D={arm} has too few rows")


class PositivityError(EstimationError):
    code = "POSITIVITY"

    def __init__(self, message, row=None, stratum=None):
        self.row = row
        self.stratum = stratum
        super().__init__(message)


class RankError(EstimationError):
    code = "RANK_DEFICIENT"


class NoIdentificationError(EstimationError):
    code = "NO_IDENTIFICATION"


class UndefinedRatioError(EstimationError):
    code = "UNDEFINED_RATIO"


class ConvergenceError(EstimationError):
    code = "NO_CONVERGENCE"
