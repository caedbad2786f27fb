class InvalidArgumentError(ValueError):
    pass


class InvalidHintError(ValueError):
    pass


class ParseError(ValueError):
    """Malformed text document; ``lineno`` is 1-based when known."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class IncompatibleModelError(ValueError):
    pass
