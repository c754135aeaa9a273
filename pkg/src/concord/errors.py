"""Exception hierarchy shared across the engine."""


class EngineError(Exception):
    """Base class for all errors raised by this package."""


class KeyVariantError(EngineError):
    """Comparison or arithmetic between key values of different variants."""


class QueryTypeError(EngineError):
    """A query violates a well-formedness rule.

    ``rule`` names the violated rule, ``path`` locates the offending node in
    the query tree (root-to-node operator names).
    """

    def __init__(self, rule: str, path: tuple, message: str):
        self.rule = rule
        self.path = path
        self.message = message
        super().__init__(f"{rule} at {'/'.join(path) or '<root>'}: {message}")


class DivisorError(EngineError):
    """Division by an expression that is zero or contains variables."""


class NonlinearError(EngineError):
    """A product of two expressions that both contain variables."""


class GroundnessError(EngineError):
    """A ground-only operation received symbolic input."""


class SignatureMismatchError(EngineError):
    """Tables with incompatible signatures were combined."""


class SingularSystemError(EngineError):
    """The solver could not factor the optimality system."""


class ParseError(EngineError):
    """Syntax error in a spec document, with position and expectation set."""

    def __init__(self, line: int, col: int, expected: str, found: str = ""):
        self.line = line
        self.col = col
        self.expected = expected
        self.found = found
        detail = f", found {found}" if found else ""
        super().__init__(f"line {line}, col {col}: expected {expected}{detail}")


class SpecValidationError(EngineError):
    """A parsed spec document references unknown tables or attributes."""


class SchemaMismatchError(EngineError):
    """CSV header does not match the declared table schema."""


class NullKeyError(EngineError):
    """A key cell is empty; keys must be present in every row."""


class NumberParseError(EngineError):
    """A cell could not be parsed as a number, with row/column context."""

    def __init__(self, row: int, column: str, text: str):
        self.row = row
        self.column = column
        self.text = text
        super().__init__(f"row {row}, column {column!r}: not a number: {text!r}")


class EmptyCellError(EngineError):
    """An empty value cell in a column whose policy requires a value."""
