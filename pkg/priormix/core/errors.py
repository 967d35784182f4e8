from typing import Any, Dict, Optional


class PriormixError(Exception):
    """Base error. ``exit_code`` is what the CLI returns for it."""

    exit_code = 1

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error": type(self).__name__,
            "message": str(self),
            "exit_code": self.exit_code,
        }


# --- Configuration errors (exit code 2) ---


class ConfigError(PriormixError):
    exit_code = 2


class InvalidSimplex(ConfigError):
    pass


class InvalidPriors(ConfigError):
    pass


# --- Data errors (exit code 3) ---


class DataError(PriormixError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)

    def to_dict(self) -> Dict[str, Any]:
        payload = super().to_dict()
        payload["line"] = self.line
        return payload


class LabelRangeError(ParseError):
    pass


class MagicMismatch(ParseError):
    pass


class CountMismatch(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class EmptyTrajectory(DataError):
    pass


class InsufficientClassSamples(DataError):
    def __init__(self, bag: int, klass: int, needed: int, available: int):
        self.bag = bag
        self.klass = klass
        super().__init__(
            f"bag {bag} needs {needed} samples of class {klass}, source has {available}")

    def to_dict(self) -> Dict[str, Any]:
        payload = super().to_dict()
        payload.update({"bag": self.bag, "class": self.klass})
        return payload


# --- Numeric failures (exit code 4) ---


class NumericError(PriormixError):
    exit_code = 4


class RankDeficient(NumericError):
    pass


class GenerationFailed(NumericError):
    pass


class IllConditioned(NumericError):
    def __init__(self, residual: float, condition: float):
        self.residual = residual
        self.condition = condition
        super().__init__(
            f"rewriting identity residual {residual:.3e} exceeds tolerance "
            f"(condition number {condition:.3e})")

    def to_dict(self) -> Dict[str, Any]:
        payload = super().to_dict()
        payload.update({"residual": self.residual, "condition": self.condition})
        return payload


class NonFiniteLoss(NumericError):
    def __init__(self, epoch: int, objective: str):
        self.epoch = epoch
        super().__init__(
            f"objective {objective} produced a non-finite value at epoch {epoch}")

    def to_dict(self) -> Dict[str, Any]:
        payload = super().to_dict()
        payload["epoch"] = self.epoch
        return payload
