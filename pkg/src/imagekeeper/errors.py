"""Exception hierarchy shared by every stage of the compiler."""

from __future__ import annotations


class KeeperError(Exception):
    """Base class for errors caused by the specification or its inputs.

    ``path`` locates the offending node (``images[0].build.tags``) when known.
    """

    def __init__(self, message: str, path: str = "") -> None:
        super().__init__(message)
        self.message = message
        self.path = path


class SpecSyntaxError(KeeperError):
    """The document is not well-formed YAML."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None) -> None:
        where = f" at line {line}, column {column}" if line is not None else ""
        super().__init__(f"{message}{where}")
        self.line = line
        self.column = column


class SpecShapeError(KeeperError):
    """A node has the wrong YAML type (e.g. a mapping where a list is expected)."""


class SpecValidationError(KeeperError):
    """One or more mandatory fields are missing; carries every diagnostic."""

    def __init__(self, diagnostics) -> None:
        self.diagnostics = list(diagnostics)
        first = self.diagnostics[0]
        super().__init__(first.message, first.path)


class TemplateSyntaxError(KeeperError):
    def __init__(self, message: str, text: str, offset: int) -> None:
        super().__init__(f"{message} at offset {offset} in {text!r}")
        self.text = text
        self.offset = offset


class InterpolationError(KeeperError):
    """A field could not be resolved against its context."""


class FormatTypeError(InterpolationError):
    """A format operation or rendering was applied to an unsupported value."""


class TagError(KeeperError):
    """A rendered tag is malformed or repeated within one build."""


class InjectivityError(KeeperError):
    def __init__(self, tag: str, first_id: str, second_id: str) -> None:
        super().__init__(
            f"tag {tag!r} is produced by both {first_id} and {second_id}", "images"
        )
        self.tag = tag
        self.build_ids = (first_id, second_id)


class DirectiveError(KeeperError):
    """Unrecognized ``docker-keeper:`` directive in a commit message."""


class EmitError(KeeperError):
    pass


class TransportError(Exception):
    """Network failure talking to a registry or CI instance."""


class ProtocolError(Exception):
    """The remote answered with a payload we cannot interpret."""
