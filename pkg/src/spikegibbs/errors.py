"""Exception types shared across the package."""


class ParameterError(ValueError):
    """An argument violates an operation's precondition."""


class ArithmeticRangeError(OverflowError):
    """A membrane potential left the signed 32-bit range."""


class ParseError(ValueError):
    """Malformed binary input. ``offset`` is the byte position of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset
