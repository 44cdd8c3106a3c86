"""Exception hierarchy shared across the package."""


class HabitlensError(Exception):
    """Base class for all errors raised by habitlens."""


class InputError(HabitlensError):
    """Malformed or inconsistent input files."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


class EmptyHousehold(HabitlensError):
    pass


class InconsistentRecord(HabitlensError):
    pass


class MissingRate(HabitlensError):
    pass


class MissingActivePrice(HabitlensError):
    pass


class DegeneratePrices(HabitlensError):
    pass


class NoExactSolution(HabitlensError):
    pass


class TooFewPeriods(HabitlensError):
    pass


class GeneratorStuck(HabitlensError):
    pass


class CannotViolate(HabitlensError):
    pass


class NoData(HabitlensError):
    pass
