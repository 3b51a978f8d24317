class ParityAuditError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(ParityAuditError, ValueError):
    pass


class DataParseError(ParityAuditError, ValueError):
    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


class UsageError(ParityAuditError, ValueError):
    """An operation was called with arguments that violate its contract."""


class EmptyGroupError(ParityAuditError, ValueError):
    def __init__(self, feature: str, categories):
        self.feature = feature
        self.categories = list(categories)
        super().__init__(
            f"protected feature {feature!r} has empty group(s): {', '.join(self.categories)}"
        )


class SingleClassError(ParityAuditError, ValueError):
    pass
