"""Exception hierarchy shared across the package."""


class CtrlError(Exception):
    """Base class for all errors raised by ctrl_hin."""


class DimensionError(CtrlError, ValueError):
    pass


class DomainError(CtrlError, ValueError):
    pass


class ContractError(CtrlError, ValueError):
    """A documented precondition of an operation was violated."""


class NonFiniteGradientError(CtrlError, FloatingPointError):
    pass


class NumericError(CtrlError, FloatingPointError):
    pass


class IngestionError(CtrlError, ValueError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class LookupFailure(CtrlError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "lookup failed"


class SplitError(ContractError):
    pass


class SamplingError(CtrlError, RuntimeError):
    pass


class CausalityError(CtrlError, ValueError):
    pass


class ConfigError(CtrlError, ValueError):
    pass


class CheckpointError(CtrlError, OSError):
    pass


class GenerationError(CtrlError, ValueError):
    pass


class MetricError(CtrlError, ValueError):
    pass
