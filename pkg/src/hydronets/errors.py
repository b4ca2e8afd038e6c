"""Shared error type carrying a stable machine-readable code."""


class HydroNetsError(Exception):
    """Raised by any module on a contract violation.

    ``code`` is a stable kebab-case identifier (e.g. ``duplicate-id``,
    ``shape-mismatch``) that callers and tests can match on without
    parsing the human-readable message.
    """

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
