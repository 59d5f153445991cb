"""Exception hierarchy shared by every module.

Each class carries the process exit code the CLI maps it to.
"""


class AcrError(Exception):
    exit_code = 1


class InvalidInputError(AcrError, ValueError):
    exit_code = 5


class InsufficientDataError(InvalidInputError):
    exit_code = 5


class DegenerateGeometryError(InvalidInputError):
    exit_code = 5


class NumericalError(AcrError, ArithmeticError):
    exit_code = 4


class ParseError(AcrError, ValueError):
    exit_code = 3

    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}"
        if line is not None:
            where += f"{':' if where else ''}line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class ConfigError(AcrError, ValueError):
    exit_code = 2
