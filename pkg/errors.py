"""
Exception hierarchy for the ASGNet desk toolkit
Every error carries the structured fields the CLI and tests inspect
"""

from typing import Optional, Sequence


class AsgnetError(Exception):
    """Base class for every error raised by this package"""


class ShapeError(AsgnetError, ValueError):
    """
    A tensor dimension did not match what an operation requires.

    Args:
        op: Operation that rejected the input (e.g. "conv2d")
        dim: Name of the offending dimension (e.g. "channels")
        expected: What the operation wanted
        actual: What it received
        stage: Graph stage the failure happened in, filled by the forward pass
    """

    def __init__(self, op: str, dim: str, expected, actual, stage: Optional[str] = None):
        self.op = op
        self.dim = dim
        self.expected = expected
        self.actual = actual
        self.stage = stage
        where = f"[{stage}] " if stage else ""
        super().__init__(f"{where}{op}: {dim} expected {expected}, got {actual}")

    def with_stage(self, stage: str) -> "ShapeError":
        """Return a copy tagged with the stage name (outermost stage wins)"""
        if self.stage:
            return self
        return ShapeError(self.op, self.dim, self.expected, self.actual, stage=stage)


class DomainError(AsgnetError, ValueError):
    """Values outside an operation's domain (non-binary masks, pixels outside [0, 1])"""


class FormatError(AsgnetError):
    """A file did not follow its binary format"""

    def __init__(self, path, offset: int, message: str):
        self.path = str(path)
        self.offset = offset
        super().__init__(f"{self.path}: byte {offset}: {message}")


class WeightsError(AsgnetError):
    """Weights file and graph layout disagree about a named tensor"""

    def __init__(self, name: str, message: str):
        self.name = name
        super().__init__(message)


class ConfigError(AsgnetError):
    """Invalid run configuration value"""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"config '{key}': {message}")


class EvaluationError(AsgnetError):
    """Prediction and ground-truth directories cannot be paired"""

    def __init__(self, message: str, names: Sequence[str] = ()):
        self.names = list(names)
        if self.names:
            message = f"{message}: {', '.join(self.names)}"
        super().__init__(message)
