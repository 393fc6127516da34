"""Error hierarchy shared by all subsystems.

Every error carries a stable machine-readable ``code`` that the HTTP layer
and the CLI surface verbatim, so callers can branch without parsing prose.
"""

from __future__ import annotations


class SfsError(Exception):
    """Base class for all application errors."""

    code = "ERROR"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)
        self.message = message or self.code
