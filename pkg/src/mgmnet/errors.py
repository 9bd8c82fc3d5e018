"""Exception hierarchy.

Every error raised by the library derives from :class:`MgmError`. The CLI maps
the four failure classes (config, data, estimation, bootstrap) to distinct exit
codes through ``exit_code``.
"""

from __future__ import annotations


class MgmError(Exception):
    exit_code = 1


class ConfigError(MgmError):
    exit_code = 3


class DataError(MgmError):
    exit_code = 4

    def __init__(self, message: str, column: str | None = None):
        super().__init__(message)
        self.column = column


class LayerError(DataError):
    pass


class EstimationError(MgmError):
    exit_code = 5


class ConvergenceError(EstimationError):
    def __init__(self, message: str, lam: float | None = None):
        super().__init__(message)
        self.lam = lam


class DegenerateResponseError(EstimationError):
    pass


class FoldError(EstimationError):
    pass


class NodeFitError(EstimationError):
    """Solver failure tagged with the node whose regression failed."""

    def __init__(self, node: str, cause: Exception):
        super().__init__(f"nodewise fit for {node!r} failed: {cause}")
        self.node = node
        self.cause = cause


class CommunityError(EstimationError):
    pass


class UnimplementedMethodError(CommunityError):
    pass


class BridgeUndefinedError(EstimationError):
    """Bridge indices need at least two communities."""


class ScoreError(EstimationError):
    pass


class BootstrapError(MgmError):
    exit_code = 6
