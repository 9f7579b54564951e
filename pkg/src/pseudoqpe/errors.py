"""Exception types shared across the package.

The CLI maps these onto exit codes: input problems exit 2, infeasible
requests exit 3 and golden-table mismatches exit 4.
"""


class PseudoQPEError(Exception):
    exit_code = 1


class InputError(PseudoQPEError, ValueError):
    exit_code = 2


class ParseError(InputError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InfeasibleError(PseudoQPEError):
    exit_code = 3


class GoldenMismatch(PseudoQPEError):
    exit_code = 4
