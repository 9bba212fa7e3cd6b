"""Exception hierarchy shared across the package."""


class AgspError(Exception):
    """Base class for all errors raised by agsp."""


class ShapeError(AgspError, ValueError):
    pass


class ConfigError(AgspError, ValueError):
    pass


class ConvergenceError(AgspError, RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class UnknownHandleError(AgspError, KeyError):
    pass


class ModeError(AgspError, ValueError):
    pass


class DataError(AgspError, ValueError):
    pass


class LoadError(DataError):
    def __init__(self, message: str, line: int | None = None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line


class CheckpointError(AgspError, ValueError):
    pass


class TrainingError(AgspError, RuntimeError):
    pass


class PreconditionError(AgspError, ValueError):
    pass
