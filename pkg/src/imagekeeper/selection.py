"""Which builds a pipeline run rebuilds: modes, keywords and commit directives."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Iterable, Mapping

from .errors import DirectiveError
from .expansion import CompiledPlan, ConcreteBuild

log = logging.getLogger(__name__)

MODES = ("rebuild-all", "rebuild-keyword", "nightly", "minimal")
DEFAULT_MODE = "minimal"
DIRECTIVE_PREFIX = "docker-keeper:"

# Trigger variables set by a parent repository's propagate request.
MODE_VARIABLE = "CRON_MODE"
ITEM_VARIABLE = "ITEM"

_DIRECTIVE_LINE = re.compile(r"^\s*" + re.escape(DIRECTIVE_PREFIX) + r"\s*(?P<body>.*?)\s*$")
_KEYWORD_BODY = re.compile(r"^rebuild-keyword\s*:\s*(?P<items>.*)$")

# Precedence used to collapse several directives into one input mode.
_MODE_PRECEDENCE = ("rebuild-all", "nightly", "rebuild-keyword", "minimal")


@dataclass(frozen=True)
class RebuildDirective:
    mode: str
    items: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise DirectiveError(f"unknown rebuild mode {self.mode!r}")
        if bool(self.items) != (self.mode == "rebuild-keyword"):
            raise DirectiveError("keyword items are required with rebuild-keyword and only there")


@dataclass(frozen=True)
class PipelineInput:
    directives: tuple[RebuildDirective, ...]
    source: str = "default"  # commit-message, trigger-variables, cli or default

    @property
    def mode(self) -> str:
        """The single input mode seen by propagate conditions."""
        modes = {d.mode for d in self.directives}
        return next(m for m in _MODE_PRECEDENCE if m in modes)


def split_items(text: str) -> tuple[str, ...]:
    return tuple(item.strip() for item in text.split(",") if item.strip())


def parse_directive(body: str) -> RebuildDirective:
    if body in ("rebuild-all", "minimal", "nightly"):
        return RebuildDirective(body)
    m = _KEYWORD_BODY.match(body)
    if m:
        items = split_items(m["items"])
        if not items:
            raise DirectiveError("rebuild-keyword needs at least one keyword")
        return RebuildDirective("rebuild-keyword", items)
    raise DirectiveError(f"unrecognized directive {body!r}")


def parse_commit_directives(message: str) -> list[RebuildDirective]:
    """Collect every ``docker-keeper: <directive>`` line, in order.

    >>> parse_commit_directives("docker-keeper: rebuild-keyword: 8.18, 8.19")
    [RebuildDirective(mode='rebuild-keyword', items=('8.18', '8.19'))]
    """
    out = []
    for lineno, line in enumerate(message.splitlines(), 1):
        m = _DIRECTIVE_LINE.match(line)
        if not m:
            continue
        try:
            out.append(parse_directive(m["body"]))
        except DirectiveError as exc:
            raise DirectiveError(f"commit message line {lineno}: {exc.message}") from None
    return out


def directives_from_variables(variables: Mapping[str, str]) -> list[RebuildDirective]:
    mode = variables.get(MODE_VARIABLE, "").strip()
    if not mode:
        return []
    items = split_items(variables.get(ITEM_VARIABLE, "")) if mode == "rebuild-keyword" else ()
    return [RebuildDirective(mode, items)]


def make_input(mode: str | None = None, items: Iterable[str] = (), commit_message: str | None = None,
               variables: Mapping[str, str] | None = None, default_mode: str = DEFAULT_MODE) -> PipelineInput:
    """Union of the explicit mode with either trigger variables or commit directives.

    Trigger variables win over the commit message: a triggered pipeline runs
    on whatever commit is current, whose message may hold a stale directive.
    """
    directives: list[RebuildDirective] = []
    sources = []
    if mode:
        directives.append(RebuildDirective(mode, tuple(items) if mode == "rebuild-keyword" else ()))
        sources.append("cli")
    triggered = directives_from_variables(variables or {})
    if triggered:
        directives += triggered
        sources.append("trigger-variables")
    elif commit_message:
        found = parse_commit_directives(commit_message)
        if found:
            directives += found
            sources.append("commit-message")
    if not directives:
        return PipelineInput((RebuildDirective(default_mode),), "default")
    return PipelineInput(tuple(directives), sources[0])


def _matches(build: ConcreteBuild, directive: RebuildDirective) -> bool:
    if directive.mode == "rebuild-all":
        return True
    if directive.mode == "nightly":
        return build.nightly
    if directive.mode == "minimal":
        return build.minimal
    return not set(build.keywords).isdisjoint(directive.items)


def unmatched_items(plan: CompiledPlan, pipeline_input: PipelineInput) -> list[str]:
    known = {k for b in plan.builds for k in b.keywords}
    return [
        item for d in pipeline_input.directives for item in d.items if item not in known
    ]


def select_builds(plan: CompiledPlan, pipeline_input: PipelineInput) -> list[ConcreteBuild]:
    """Builds matched by any directive, in plan order."""
    for item in unmatched_items(plan, pipeline_input):
        log.warning("keyword %r matches no build", item)
    return [
        b for b in plan.builds
        if any(_matches(b, d) for d in pipeline_input.directives)
    ]
