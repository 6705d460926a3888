"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    pass


class NumericalError(ArithmeticError):
    pass


class NumericalBlowupError(NumericalError):
    """Non-finite values appeared while integrating; ``time`` is the failing step time."""

    def __init__(self, time: float, message: str | None = None):
        self.time = time
        super().__init__(message or f"non-finite vorticity at t={time:.6g}")


class FormatError(ValueError):
    """Malformed binary file; ``offset`` is the byte offset of the bad field."""

    def __init__(self, offset: int, message: str):
        self.offset = offset
        super().__init__(f"{message} (byte offset {offset})")


class PayloadLengthError(FormatError):
    pass
