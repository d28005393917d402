"""Shared exception types."""


class BudgetError(RuntimeError):
    """A configured resource budget (memory, prime bound, node count) was exceeded."""


class DataError(ValueError):
    """Malformed or insufficient input data (zero lists, checkpoints, certificates)."""


class NumericError(RuntimeError):
    """An iterative numeric procedure failed to converge to its target."""


class SquareFactorFound(Exception):
    """Raised internally when a character value of 0 exposes a square divisor.

    `factor` is a prime r with r**2 dividing the number under test.
    """

    def __init__(self, factor: int):
        super().__init__(f"square factor {factor}^2 found")
        self.factor = factor
