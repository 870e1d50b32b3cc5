"""Exception hierarchy shared by the library and the command line."""


class PolypLabError(Exception):
    """Base class for all polyplab errors"""


class ParseError(PolypLabError):
    """A record in an input file could not be parsed"""

    def __init__(self, locus: str, reason: str):
        self.locus = locus
        self.reason = reason
        super().__init__(f"{locus}: {reason}")


class InvariantError(PolypLabError, ValueError):
    """A value violates a data-model invariant (e.g. x_min >= x_max)"""


class ConfigError(PolypLabError, ValueError):
    """Invalid configuration or run-file value"""


class ModeMixError(PolypLabError):
    """Match outcomes from different counting modes were aggregated together"""


class DomainError(PolypLabError, ValueError):
    """A numeric argument lies outside the function's domain"""


class ShapeError(PolypLabError, ValueError):
    """Model architecture does not match its input"""


class DivergenceError(PolypLabError, ArithmeticError):
    """Training produced a non-finite loss"""


class TooFewFrames(PolypLabError):
    """Not enough frames for the requested statistic"""


class MissingWeight(PolypLabError, KeyError):
    """A per-class loss has no matching class weight"""

    def __str__(self):
        return str(self.args[0]) if self.args else ''


class AlignmentError(PolypLabError, KeyError):
    """Frame ids of two datasets do not line up"""

    def __init__(self, frame_id: str, message: str):
        self.frame_id = frame_id
        super().__init__(message)

    def __str__(self):
        return str(self.args[0])


class EmptyDataset(PolypLabError):
    """An input dataset has no frames"""
