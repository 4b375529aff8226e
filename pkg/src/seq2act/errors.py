"""Exception hierarchy shared by every module of the toolkit."""


class Seq2ActError(Exception):
    """Base class. ``code`` is the stable identifier printed by the CLI."""

    code: str = ""

    def __init__(self, message: str = ""):
        super().__init__(message)
        if not self.code:
            self.code = type(self).__name__


# graph_core
class GraphError(Seq2ActError):
    pass


class UnknownEntity(GraphError):
    pass


class UnknownType(GraphError):
    pass


class DanglingEndpoint(GraphError):
    pass


class SelfLoop(GraphError):
    pass


class DuplicateType(GraphError):
    pass


# action_system
class ActionError(Seq2ActError):
    pass


class OrphanArgument(ActionError):
    pass


class ArityViolation(ActionError):
    pass


class UnbalancedOperation(ActionError):
    pass


class UnknownLabel(ActionError):
    pass


class NonCanonicalVariable(ActionError):
    pass


class DuplicateNode(ActionError):
    pass


class IllFormedResult(ActionError):
    pass


class ParseError(Seq2ActError):
    pass


# logical_form
class LFSyntaxError(ParseError):
    code = "SyntaxError"

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnknownSymbol(ParseError):
    pass


class UnboundVariable(Seq2ActError):
    pass


class NotConvertible(Seq2ActError):
    """A graph or logical form outside the convertible fragment."""


# kb_schema
class SchemaError(Seq2ActError):
    pass


class SchemaParseError(SchemaError, ParseError):
    code = "ParseError"


class UndeclaredType(SchemaError):
    pass


class DuplicateDeclaration(SchemaError):
    pass


# neural_kernel / model
class ShapeMismatch(Seq2ActError):
    pass


class EmptyInput(Seq2ActError):
    pass


class NonFiniteLoss(Seq2ActError):
    pass


class EmptySentence(Seq2ActError):
    pass


class UnknownActionPart(Seq2ActError):
    pass


# trainer
class UnresolvableEntity(Seq2ActError):
    pass


class DivergenceDetected(Seq2ActError):
    pass


class VersionMismatch(Seq2ActError):
    pass


class CorruptCheckpoint(Seq2ActError):
    pass


# decoder / evaluator
class NoCompleteParse(Seq2ActError):
    pass


class LineCountMismatch(Seq2ActError):
    pass
