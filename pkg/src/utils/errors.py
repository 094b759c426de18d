"""
Exception hierarchy for the CosineGate engine
"""


class CosineGateError(Exception):
    """Base class for all engine errors"""


class ShapeError(CosineGateError, ValueError):
    """Raised when tensor shapes are incompatible for an operation"""


class DomainError(CosineGateError, ValueError):
    """Raised when an elementwise function is evaluated outside its domain"""


class GradientError(CosineGateError, RuntimeError):
    """Raised for misuse of the gradient tape (non-scalar loss, detached loss, missing grads)"""


class PrecisionError(CosineGateError, RuntimeError):
    """Raised when an operation requires 64-bit mode"""


class NonFiniteError(CosineGateError, FloatingPointError):
    """Raised by anomaly mode when an operation produces NaN or Inf"""


class ConfigurationError(CosineGateError, ValueError):
    """Raised for invalid hyperparameters, presets or layer geometry"""


class DataFormatError(CosineGateError, ValueError):
    """Raised when a dataset file is malformed"""


class TrainingDivergedError(CosineGateError, RuntimeError):
    """Raised when the training loss becomes non-finite"""

    def __init__(self, message, dump_path=None):
        super().__init__(message)
        self.dump_path = dump_path
