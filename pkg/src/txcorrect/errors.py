"""Shared error base so every failure carries a stable machine-readable code."""


class TxcError(Exception):
    """Base class for all package errors.

    ``code`` is ``<module>.<ErrorName>`` and is the identifier surfaced by the
    CLI and the HTTP service; messages are free text.
    """

    module = "txcorrect"

    @property
    def code(self) -> str:
        return f"{self.module}.{type(self).__name__}"

    def __str__(self) -> str:
        msg = super().__str__()
        return msg if msg else self.code
