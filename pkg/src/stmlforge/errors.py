"""Exception hierarchy shared across the toolkit."""


class StmlforgeError(Exception):
    """Base class for all toolkit errors."""


class ParseError(StmlforgeError):
    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        if line is not None:
            message = f"{line}:{col}: {message}"
        super().__init__(message)


class UnsupportedConstructError(ParseError):
    """Input uses a construct outside the supported C subset."""


class PragmaError(StmlforgeError):
    """A pragma line does not follow the polca/stml grammar or has no anchor."""


class UnknownPositionError(StmlforgeError):
    """A node id is not present in the program's node table."""


class CategoryMismatchError(StmlforgeError):
    """Replacement fragment is not legal at the target position."""


class RuleSyntaxError(StmlforgeError):
    """A rule file does not parse."""


class UnboundMetavarError(RuleSyntaxError):
    """A metavariable is used outside pattern without being bound."""


class KindConflictError(RuleSyntaxError):
    """A metavariable is reused with a different kind tag."""


class UnknownPredicateError(StmlforgeError):
    """A rule condition names a predicate the property engine does not know."""


class NotApplicableError(StmlforgeError):
    """A (rule, position) pair cannot be matched on the current program."""


class NoSuccessorError(StmlforgeError):
    """No candidate transformation exists for the requested rule set."""


class OracleProtocolError(StmlforgeError):
    """Base for wire-protocol failures with an external oracle."""


class OracleTimeoutError(OracleProtocolError):
    pass


class MalformedMessageError(OracleProtocolError):
    pass


class IllegalSelectionError(OracleProtocolError):
    """The peer selected a code id or rule that was never offered."""


class UnknownTargetError(StmlforgeError):
    """Translation target is not one of the supported platforms."""


class ReadinessError(StmlforgeError):
    """Translation requested for code that fails the readiness check."""


class InterpError(StmlforgeError):
    """Runtime failure in the reference interpreter."""

    def __init__(self, kind, message):
        self.kind = kind
        super().__init__(message)
