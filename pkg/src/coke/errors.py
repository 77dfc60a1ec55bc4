"""Exception hierarchy; each class maps to a CLI exit code."""


class CokeError(Exception):
    exit_code = 1


class ConfigError(CokeError, ValueError):
    exit_code = 2


class DataFormatError(CokeError, ValueError):
    exit_code = 3


class StructuralInconsistencyError(DataFormatError):
    """Rows sharing a recipe id disagree on which cells are missing."""


class NumericalError(CokeError, ArithmeticError):
    exit_code = 4
