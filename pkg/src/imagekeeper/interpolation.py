"""Bash-like template language for string fields of ``images.yml``.

A template mixes literal text and fields::

    '{matrix[mathcomp]}-coq-{matrix[coq]}'
    '{matrix[coq][//pl/.][%.*]}'
    '{keywords[/#/,][#,]}'

A field names a context variable, then any number of ``[key]`` lookups,
then any number of ``[op]`` format operations. A bracket is an operation
iff it starts with ``/``, ``#`` or ``%``:

=============  ====================================================
``[/p/r]``     replace the first (leftmost, longest) match of ``p``
``[//p/r]``    replace every match of ``p``, scanning left to right
``[/#p/r]``    replace the longest prefix matching ``p``
``[/%p/r]``    replace the longest suffix matching ``p``
``[#p]``       drop the shortest prefix matching ``p``
``[##p]``      drop the longest prefix matching ``p``
``[%p]``       drop the shortest suffix matching ``p``
``[%%p]``      drop the longest suffix matching ``p``
=============  ====================================================

Patterns are globs with ``*`` and ``?``; ``\\`` escapes the next
character, so ``\\/``, ``\\]`` and ``\\*`` are literals. Character classes
are not supported. ``{{`` and ``}}`` render literal braces.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence, Union

from .errors import FormatTypeError, InterpolationError, TemplateSyntaxError

Value = Union[str, Sequence[str], Mapping[str, "Value"]]

OP_STARTS = "/#%"


class Anchor(enum.Enum):
    PREFIX = "prefix"
    SUFFIX = "suffix"


class Extent(enum.Enum):
    SHORTEST = "shortest"
    LONGEST = "longest"


# Pattern tokens: a 1-char string is a literal, the sentinels below are wildcards.
ANY_CHAR = object()
ANY_SEQ = object()


@dataclass(frozen=True)
class GlobPattern:
    tokens: tuple
    source: str = ""

    @classmethod
    def parse(cls, text: str) -> "GlobPattern":
        """Parse glob text that has already been unescaped except for wildcards."""
        tokens = []
        i = 0
        while i < len(text):
            c = text[i]
            if c == "\\" and i + 1 < len(text):
                tokens.append(text[i + 1])
                i += 2
                continue
            if c == "*":
                # consecutive stars are equivalent to one
                if not tokens or tokens[-1] is not ANY_SEQ:
                    tokens.append(ANY_SEQ)
            elif c == "?":
                tokens.append(ANY_CHAR)
            else:
                tokens.append(c)
            i += 1
        return cls(tuple(tokens), text)

    def __repr__(self) -> str:
        return f"GlobPattern({self.source!r})"


def _prefix_matches(tokens: Sequence, s: str) -> list[bool]:
    """``result[i]`` tells whether the whole pattern matches ``s[:i]``."""
    n = len(s)
    row = [True] + [False] * n  # empty pattern matches only the empty prefix
    for tok in tokens:
        new = [False] * (n + 1)
        if tok is ANY_SEQ:
            seen = False
            for i in range(n + 1):
                seen = seen or row[i]
                new[i] = seen
        elif tok is ANY_CHAR:
            for i in range(1, n + 1):
                new[i] = row[i - 1]
        else:
            for i in range(1, n + 1):
                new[i] = row[i - 1] and s[i - 1] == tok
        row = new
    return row


def glob_fullmatch(pattern: GlobPattern, s: str) -> bool:
    return _prefix_matches(pattern.tokens, s)[len(s)]


def glob_match_anchored(pattern: GlobPattern, s: str, anchor: Anchor, extent: Extent) -> int | None:
    """Return the split index of the shortest/longest anchored match of ``pattern``.

    For a prefix match the index is the prefix length; for a suffix match it
    is the start of the suffix. ``None`` when nothing matches.
    """
    n = len(s)
    if anchor is Anchor.PREFIX:
        ends = _prefix_matches(pattern.tokens, s)
        hits = [i for i in range(n + 1) if ends[i]]
        if not hits:
            return None
        return hits[0] if extent is Extent.SHORTEST else hits[-1]
    # a suffix of s matching the pattern is a prefix of reversed s matching the reversed pattern
    ends = _prefix_matches(pattern.tokens[::-1], s[::-1])
    lengths = [k for k in range(n + 1) if ends[k]]
    if not lengths:
        return None
    k = lengths[0] if extent is Extent.SHORTEST else lengths[-1]
    return n - k


class OpKind(enum.Enum):
    REPLACE_FIRST = "/"
    REPLACE_ALL = "//"
    REPLACE_PREFIX = "/#"
    REPLACE_SUFFIX = "/%"
    STRIP_PREFIX_SHORTEST = "#"
    STRIP_PREFIX_LONGEST = "##"
    STRIP_SUFFIX_SHORTEST = "%"
    STRIP_SUFFIX_LONGEST = "%%"

    @property
    def is_replace(self) -> bool:
        return self.value.startswith("/")


@dataclass(frozen=True)
class FormatOp:
    kind: OpKind
    pattern: GlobPattern
    replacement: str | None = None

    def __post_init__(self) -> None:
        if self.kind.is_replace != (self.replacement is not None):
            raise ValueError(f"replacement must be given iff {self.kind.name} is a replace op")


@dataclass(frozen=True)
class Literal:
    text: str
    source: str


@dataclass(frozen=True)
class FieldExpr:
    root: str
    path: tuple[str, ...]
    ops: tuple[FormatOp, ...]
    source: str

    def display(self) -> str:
        return self.root + "".join(f"[{k}]" for k in self.path)


@dataclass(frozen=True)
class Template:
    segments: tuple[Literal | FieldExpr, ...]

    @property
    def source(self) -> str:
        return "".join(seg.source for seg in self.segments)

    @property
    def fields(self) -> list[FieldExpr]:
        return [seg for seg in self.segments if isinstance(seg, FieldExpr)]


class _Parser:
    def __init__(self, text: str) -> None:
        self.text = text
        self.pos = 0
        self.bracket = 0

    def error(self, message: str, offset: int | None = None) -> TemplateSyntaxError:
        return TemplateSyntaxError(message, self.text, self.pos if offset is None else offset)

    def parse(self) -> Template:
        text = self.text
        segments: list[Literal | FieldExpr] = []
        lit: list[str] = []
        lit_start = 0

        def flush(end: int) -> None:
            if end > lit_start:
                segments.append(Literal("".join(lit), text[lit_start:end]))
            lit.clear()

        while self.pos < len(text):
            c = text[self.pos]
            if c == "{" and text.startswith("{{", self.pos):
                lit.append("{")
                self.pos += 2
            elif c == "}" and text.startswith("}}", self.pos):
                lit.append("}")
                self.pos += 2
            elif c == "{":
                flush(self.pos)
                segments.append(self.field())
                lit_start = self.pos
            elif c == "}":
                raise self.error("unbalanced '}'")
            else:
                lit.append(c)
                self.pos += 1
        flush(self.pos)
        return Template(tuple(segments))

    def field(self) -> FieldExpr:
        start = self.pos
        self.pos += 1
        text = self.text
        j = self.pos
        while j < len(text) and text[j] not in "[]{}":
            j += 1
        root = text[self.pos:j]
        if j >= len(text):
            raise self.error("unterminated field", start)
        if not root:
            raise self.error("empty field", start)
        self.pos = j
        path: list[str] = []
        ops: list[FormatOp] = []
        while self.pos < len(text) and text[self.pos] == "[":
            self.bracket = self.pos
            self.pos += 1
            if self.pos < len(text) and text[self.pos] in OP_STARTS:
                ops.append(self.op())
            else:
                if ops:
                    raise self.error("key lookup after a format operation")
                path.append(self.key())
        if self.pos >= len(text):
            raise self.error("unterminated field", start)
        if text[self.pos] != "}":
            raise self.error(f"unexpected {text[self.pos]!r} in field")
        self.pos += 1
        return FieldExpr(root, tuple(path), tuple(ops), text[start:self.pos])

    def key(self) -> str:
        end = self.text.find("]", self.pos)
        if end < 0:
            raise self.error("bracket segment has no closing ']'", self.bracket)
        key = self.text[self.pos:end]
        if not key:
            raise self.error("empty key")
        if any(c in key for c in "[{}"):
            raise self.error("invalid character in key")
        self.pos = end + 1
        return key

    def chunk(self, stops: str) -> tuple[str, str]:
        """Read up to an unescaped stop char; return (raw glob text, stop)."""
        text = self.text
        out: list[str] = []
        while self.pos < len(text):
            c = text[self.pos]
            if c == "\\" and self.pos + 1 < len(text):
                nxt = text[self.pos + 1]
                # keep escapes of glob wildcards so GlobPattern sees them as literals
                out.append("\\" + nxt if nxt in "*?\\" else nxt)
                self.pos += 2
                continue
            if c in stops:
                self.pos += 1
                return "".join(out), c
            out.append(c)
            self.pos += 1
        raise self.error("bracket segment has no closing ']'", self.bracket)

    def op(self) -> FormatOp:
        text = self.text
        if text[self.pos] == "/":
            for kind in (OpKind.REPLACE_ALL, OpKind.REPLACE_PREFIX, OpKind.REPLACE_SUFFIX, OpKind.REPLACE_FIRST):
                if text.startswith(kind.value, self.pos):
                    break
            self.pos += len(kind.value)
            pattern, stop = self.chunk("/]")
            replacement = ""
            if stop == "/":
                raw, _ = self.chunk("]")
                replacement = _unescape_glob(raw)
            return FormatOp(kind, GlobPattern.parse(pattern), replacement)
        doubled = text.startswith(text[self.pos] * 2, self.pos)
        kind = {
            ("#", False): OpKind.STRIP_PREFIX_SHORTEST,
            ("#", True): OpKind.STRIP_PREFIX_LONGEST,
            ("%", False): OpKind.STRIP_SUFFIX_SHORTEST,
            ("%", True): OpKind.STRIP_SUFFIX_LONGEST,
        }[text[self.pos], doubled]
        self.pos += len(kind.value)
        pattern, stop = self.chunk("]")
        return FormatOp(kind, GlobPattern.parse(pattern))


def _unescape_glob(raw: str) -> str:
    out = []
    i = 0
    while i < len(raw):
        if raw[i] == "\\" and i + 1 < len(raw):
            out.append(raw[i + 1])
            i += 2
        else:
            out.append(raw[i])
            i += 1
    return "".join(out)


@lru_cache(maxsize=4096)
def parse_template(text: str) -> Template:
    return _Parser(text).parse()


def _replace_scan(pattern: GlobPattern, s: str, first_only: bool, replacement: str) -> str:
    # Empty matches are never replaced here: the anchored variants cover that case.
    out: list[str] = []
    i = 0
    n = len(s)
    while i < n:
        ends = _prefix_matches(pattern.tokens, s[i:])
        k = max((k for k in range(1, n - i + 1) if ends[k]), default=0)
        if k:
            out.append(replacement)
            i += k
            if first_only:
                break
        else:
            out.append(s[i])
            i += 1
    out.append(s[i:])
    return "".join(out)


def _apply_to_str(op: FormatOp, s: str) -> str:
    kind, pattern = op.kind, op.pattern
    if kind is OpKind.REPLACE_ALL:
        return _replace_scan(pattern, s, False, op.replacement)
    if kind is OpKind.REPLACE_FIRST:
        return _replace_scan(pattern, s, True, op.replacement)
    if kind is OpKind.REPLACE_PREFIX:
        cut = glob_match_anchored(pattern, s, Anchor.PREFIX, Extent.LONGEST)
        return s if cut is None else op.replacement + s[cut:]
    if kind is OpKind.REPLACE_SUFFIX:
        cut = glob_match_anchored(pattern, s, Anchor.SUFFIX, Extent.LONGEST)
        return s if cut is None else s[:cut] + op.replacement
    anchor = Anchor.PREFIX if kind.value[0] == "#" else Anchor.SUFFIX
    extent = Extent.LONGEST if len(kind.value) == 2 else Extent.SHORTEST
    cut = glob_match_anchored(pattern, s, anchor, extent)
    if cut is None:
        return s
    return s[cut:] if anchor is Anchor.PREFIX else s[:cut]


def apply_op(op: FormatOp, value: Value) -> Value:
    """Apply one format operation.

    Replace operations map over list elements; strip operations first join
    a list into one string (no separator), which is what makes the
    ``[/#/,][#,]`` idiom turn a list into a comma-separated string.
    """
    if isinstance(value, Mapping):
        raise FormatTypeError("cannot format a map")
    if isinstance(value, str):
        return _apply_to_str(op, value)
    if op.kind.is_replace:
        return [_apply_to_str(op, item) for item in value]
    return _apply_to_str(op, "".join(value))


def _render(value: Value, where: str) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, Mapping):
        raise FormatTypeError(f"{where} is a map and cannot be rendered", )
    return "".join(value)


def eval_field(field: FieldExpr, ctx: Mapping[str, Value]) -> str:
    if field.root not in ctx:
        raise InterpolationError(f"undefined variable {field.root!r} in {field.source}")
    value = ctx[field.root]
    walked = field.root
    for key in field.path:
        walked += f"[{key}]"
        if not isinstance(value, Mapping):
            raise InterpolationError(f"cannot look up {walked}: not a map")
        if key not in value:
            raise InterpolationError(f"undefined key {walked}")
        value = value[key]
    for op in field.ops:
        try:
            value = apply_op(op, value)
        except FormatTypeError as exc:
            raise FormatTypeError(f"{field.source}: {exc}") from None
    return _render(value, field.display())


def eval_template(template: Template | str, ctx: Mapping[str, Value]) -> str:
    if isinstance(template, str):
        template = parse_template(template)
    parts = []
    for seg in template.segments:
        parts.append(seg.text if isinstance(seg, Literal) else eval_field(seg, ctx))
    return "".join(parts)


def interpolate(text: str, ctx: Mapping[str, Value]) -> str:
    """Parse and evaluate ``text`` in one go."""
    return eval_template(parse_template(text), ctx)
