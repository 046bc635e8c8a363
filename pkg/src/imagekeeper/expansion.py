"""Matrix expansion, field resolution and the injective tag index."""

from __future__ import annotations

import itertools
import posixpath
import re
from dataclasses import dataclass, field

from .errors import EmitError, InjectivityError, InterpolationError, TagError
from .interpolation import interpolate
from .model import BuildEntry, KeeperSpec, PropagateTarget

TAG_RE = re.compile(r"[A-Za-z0-9_][A-Za-z0-9_.-]{0,127}")


@dataclass(frozen=True)
class MatrixAssignment:
    values: dict[str, str]

    def render(self) -> str:
        return ",".join(f"{k}={v}" for k, v in self.values.items())


@dataclass(frozen=True)
class ConcreteBuild:
    id: str
    assignment: MatrixAssignment
    context: str
    dockerfile: str
    args: dict[str, str]
    tags: tuple[str, ...]
    keywords: tuple[str, ...]
    runner_tags: tuple[str, ...] = ()
    nightly: bool = False
    minimal: bool = False

    @property
    def name(self) -> str:
        """Canonical name: the first tag."""
        return self.tags[0]

    @property
    def dockerfile_path(self) -> str:
        return normalize_path(self.context, self.dockerfile)

    @property
    def context_path(self) -> str:
        return normalize_path(self.context)


@dataclass(frozen=True)
class CompiledPlan:
    builds: tuple[ConcreteBuild, ...] = ()
    tag_index: dict[str, str] = field(default_factory=dict)
    dockerfiles: tuple[tuple[str, str], ...] = ()
    propagate: dict[str, PropagateTarget] = field(default_factory=dict)
    docker_repo: str = ""
    base_url: str = ""

    def build(self, build_id: str) -> ConcreteBuild:
        for b in self.builds:
            if b.id == build_id:
                return b
        raise KeyError(build_id)


def normalize_path(*parts: str) -> str:
    """Join and normalize repository-relative path parts; reject escapes."""
    path = posixpath.normpath(posixpath.join(*parts)) if parts else "."
    if path.startswith("/") or path == ".." or path.startswith("../"):
        raise EmitError(f"path {posixpath.join(*parts)!r} leaves the repository")
    return path


def expand_matrix(entry: BuildEntry) -> list[MatrixAssignment]:
    """Cartesian product of the axes, rightmost axis varying fastest."""
    axes = list(entry.matrix)
    return [
        MatrixAssignment(dict(zip(axes, combo)))
        for combo in itertools.product(*(entry.matrix[a] for a in axes))
    ]


def _resolve(text: str, ctx: dict, path: str) -> str:
    try:
        return interpolate(text, ctx)
    except InterpolationError as exc:
        raise type(exc)(exc.message, path) from None


def resolve_build(entry: BuildEntry, assignment: MatrixAssignment, spec: KeeperSpec,
                  index: int = 0) -> ConcreteBuild:
    path = f"images[{index}].build"
    ctx = {"matrix": dict(assignment.values)}
    build = entry.build
    build_id = f"images[{index}]{{{assignment.render()}}}"
    tags = []
    for i, rule in enumerate(build.tags):
        tag = _resolve(rule.tag, ctx, f"{path}.tags[{i}].tag")
        if not TAG_RE.fullmatch(tag):
            raise TagError(f"rendered tag {tag!r} of {build_id} is not a valid registry tag", f"{path}.tags[{i}].tag")
        if tag in tags:
            raise TagError(f"tag {tag!r} is listed twice for {build_id}", f"{path}.tags[{i}].tag")
        tags.append(tag)
    args = {}
    for key, value in spec.args.items():
        if key not in build.args:
            args[key] = _resolve(value, ctx, f"args.{key}")
    for key, value in build.args.items():
        args[key] = _resolve(value, ctx, f"{path}.args.{key}")
    # keep global declaration order, overridden keys included
    ordered = {k: args[k] for k in list(spec.args) + [k for k in build.args if k not in spec.args]}
    return ConcreteBuild(
        id=build_id,
        assignment=assignment,
        context=_resolve(build.context, ctx, f"{path}.context"),
        dockerfile=_resolve(build.dockerfile, ctx, f"{path}.dockerfile"),
        args=ordered,
        tags=tuple(tags),
        keywords=tuple(_resolve(k, ctx, f"{path}.keywords[{i}]") for i, k in enumerate(build.keywords)),
        runner_tags=tuple(spec.gitlab_ci_tags),
        nightly=build.nightly,
        minimal=build.minimal,
    )


def compile_spec(spec: KeeperSpec) -> CompiledPlan:
    """Expand every entry and check that no tag names two different builds."""
    if not spec.active:
        return CompiledPlan(docker_repo=spec.docker_repo, base_url=spec.base_url)
    builds = []
    tag_index: dict[str, str] = {}
    dockerfiles: dict[tuple[str, str], None] = {}
    for index, entry in enumerate(spec.images):
        for assignment in expand_matrix(entry):
            build = resolve_build(entry, assignment, spec, index)
            for tag in build.tags:
                if tag in tag_index:
                    raise InjectivityError(tag, tag_index[tag], build.id)
                tag_index[tag] = build.id
            dockerfiles.setdefault((build.context, build.dockerfile), None)
            builds.append(build)
    return CompiledPlan(
        builds=tuple(builds),
        tag_index=tag_index,
        dockerfiles=tuple(dockerfiles),
        propagate=dict(spec.propagate),
        docker_repo=spec.docker_repo,
        base_url=spec.base_url,
    )
