"""Exception types shared across the package."""


class Has8Error(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(Has8Error, ValueError):
    """Operands have incompatible shapes; message reports both."""


class GradError(Has8Error, RuntimeError):
    """Backward-pass misuse: non-scalar root, consumed tape, bad custom grad."""


class DataFormatError(Has8Error, ValueError):
    """A dataset file failed validation; message includes the byte offset."""


class ConfigError(Has8Error, ValueError):
    """Invalid configuration value or unknown key."""


class OptimError(Has8Error, RuntimeError):
    """Optimizer refused a step (non-finite gradient, bad state)."""
