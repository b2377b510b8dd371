"""Exception types raised across the package."""


class HookeanMKVError(Exception):
    """Base class for all package errors."""


class PointNotOnBoundary(HookeanMKVError):
    pass


class BeadOutsideDomain(HookeanMKVError):
    pass


class OutsideDomain(HookeanMKVError):
    pass


class StepRejected(HookeanMKVError):
    """A chain needed more specular reflections than allowed in one step."""

    def __init__(self, message: str, chain: int = -1):
        super().__init__(message)
        self.chain = chain


class LinearSolveFailure(HookeanMKVError):
    pass


class StabilityViolation(HookeanMKVError):
    pass


class GridTooCoarse(HookeanMKVError):
    pass


class GridMismatch(HookeanMKVError):
    pass


class ConfigError(HookeanMKVError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
