"""Exception hierarchy. Each class carries the CLI exit code for its category."""


class JMTError(Exception):
    exit_code = 1


class ConfigError(JMTError, ValueError):
    exit_code = 2


class InputError(JMTError, ValueError):
    exit_code = 3


class ShapeError(JMTError, ValueError):
    exit_code = 3


class AlignmentError(ShapeError):
    """Two modality sequences disagree on clip count or feature size."""


class NumericError(JMTError, ArithmeticError):
    exit_code = 4


class CheckpointError(JMTError, IOError):
    exit_code = 5


class UsageError(JMTError, RuntimeError):
    exit_code = 2
