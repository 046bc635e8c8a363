"""Typed model of ``images.yml`` plus structural validation."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any

import yaml

from .errors import (
    SpecShapeError,
    SpecSyntaxError,
    SpecValidationError,
    TemplateSyntaxError,
)
from .interpolation import parse_template

WHEN_KINDS = ("rebuild-all", "nightly", "forall", "exists")
OUTPUT_MODES = ("rebuild-all", "rebuild-keyword", "nightly", "minimal", "nil")
QUANTIFIERS = ("forall", "exists")

TOP_LEVEL_KEYS = ("active", "base_url", "docker_repo", "gitlab_ci_tags", "args", "images", "propagate")
ENTRY_KEYS = ("matrix", "build")
BUILD_KEYS = ("context", "dockerfile", "tags", "keywords", "args", "nightly", "minimal")
TARGET_KEYS = ("api_token_env_var", "gitlab_domain", "gitlab_project", "strategy", "ref", "mode_var", "item_var")
RULE_KEYS = ("when", "expr", "subset", "mode", "item")

DEFAULT_REF = "master"
DEFAULT_MODE_VAR = "CRON_MODE"
DEFAULT_ITEM_VAR = "ITEM"


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" or "warning"
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.severity}: {self.path}: {self.message}"


@dataclass(frozen=True)
class TagRule:
    tag: str


@dataclass(frozen=True)
class BuildSpec:
    context: str
    dockerfile: str
    tags: tuple[TagRule, ...]
    keywords: tuple[str, ...] = ()
    args: dict[str, str] = field(default_factory=dict)
    nightly: bool = False
    minimal: bool = False


@dataclass(frozen=True)
class BuildEntry:
    matrix: dict[str, tuple[str, ...]]
    build: BuildSpec


@dataclass(frozen=True)
class StrategyRule:
    mode: str
    when: str | None = None
    expr: str | None = None
    subset: str | None = None
    item: str | None = None


@dataclass(frozen=True)
class PropagateTarget:
    api_token_env_var: str
    gitlab_domain: str
    gitlab_project: str
    strategy: tuple[StrategyRule, ...]
    ref: str = DEFAULT_REF
    mode_var: str = DEFAULT_MODE_VAR
    item_var: str = DEFAULT_ITEM_VAR


@dataclass(frozen=True)
class KeeperSpec:
    active: bool
    base_url: str = ""
    docker_repo: str = ""
    gitlab_ci_tags: tuple[str, ...] = ()
    args: dict[str, str] = field(default_factory=dict)
    images: tuple[BuildEntry, ...] = ()
    propagate: dict[str, PropagateTarget] = field(default_factory=dict)
    warnings: tuple[Diagnostic, ...] = field(default=(), compare=False, repr=False)


# --- YAML layer -------------------------------------------------------------


class _Loader(yaml.SafeLoader):
    """Safe loader that keeps numbers and dates as their source text.

    Versions such as ``8.10`` must not collapse to the float ``8.1``.
    """

    def construct_mapping(self, node, deep=False):
        seen = {}
        for key_node, _ in node.value:
            if key_node.tag == "tag:yaml.org,2002:merge":
                continue
            key = self.construct_object(key_node, deep=True)
            if key in seen:
                raise yaml.constructor.ConstructorError(
                    "while constructing a mapping", node.start_mark,
                    f"found duplicate key {key!r}", key_node.start_mark,
                )
            seen[key] = True
        return super().construct_mapping(node, deep=deep)


_Loader.yaml_implicit_resolvers = {
    first: [(tag, rx) for tag, rx in resolvers if tag not in (
        "tag:yaml.org,2002:int", "tag:yaml.org,2002:float", "tag:yaml.org,2002:timestamp",
    )]
    for first, resolvers in yaml.SafeLoader.yaml_implicit_resolvers.items()
}


def load_yaml(text: str) -> Any:
    try:
        return yaml.load(text, Loader=_Loader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark else None
        column = mark.column + 1 if mark else None
        raise SpecSyntaxError(exc.problem or str(exc), line, column) from None
    except yaml.YAMLError as exc:
        raise SpecSyntaxError(str(exc)) from None


# --- typing ------------------------------------------------------------------


class _Builder:
    def __init__(self) -> None:
        self.warnings: list[Diagnostic] = []
        self.missing: list[Diagnostic] = []

    def mapping(self, node: Any, path: str) -> dict:
        if node is None:
            return {}
        if not isinstance(node, dict):
            raise SpecShapeError(f"expected a mapping, got {_kind(node)}", path)
        return node

    def sequence(self, node: Any, path: str) -> list:
        if node is None:
            return []
        if not isinstance(node, list):
            raise SpecShapeError(f"expected a list, got {_kind(node)}", path)
        return node

    def string(self, node: Any, path: str) -> str:
        if not isinstance(node, str):
            raise SpecShapeError(f"expected a string, got {_kind(node)}", path)
        return node

    def boolean(self, node: Any, path: str) -> bool:
        if not isinstance(node, bool):
            raise SpecShapeError(f"expected a boolean, got {_kind(node)}", path)
        return node

    def unknown_keys(self, data: dict, known: tuple[str, ...], path: str) -> None:
        for key in data:
            if key not in known:
                self.warnings.append(Diagnostic("warning", _join(path, str(key)), "unknown key ignored"))

    def require(self, data: dict, key: str, path: str) -> bool:
        if key in data:
            return True
        self.missing.append(Diagnostic("error", _join(path, key), f"missing mandatory field {key}"))
        return False

    def string_map(self, node: Any, path: str) -> dict[str, str]:
        data = self.mapping(node, path)
        return {str(k): self.string(v, _join(path, str(k))) for k, v in data.items()}

    def spec(self, doc: Any) -> KeeperSpec:
        data = self.mapping(doc, "")
        self.unknown_keys(data, TOP_LEVEL_KEYS, "")
        if "active" not in data:
            self.require(data, "active", "")
            raise SpecValidationError(self.missing)
        active = self.boolean(data["active"], "active")
        if active:
            for key in ("base_url", "docker_repo", "images"):
                self.require(data, key, "")
        images = tuple(
            self.entry(e, f"images[{i}]")
            for i, e in enumerate(self.sequence(data.get("images"), "images"))
        )
        propagate = {
            str(name): self.target(t, _join("propagate", str(name)))
            for name, t in self.mapping(data.get("propagate"), "propagate").items()
        }
        if self.missing:
            raise SpecValidationError(self.missing)
        return KeeperSpec(
            active=active,
            base_url=self.string(data.get("base_url", ""), "base_url"),
            docker_repo=self.string(data.get("docker_repo", ""), "docker_repo"),
            gitlab_ci_tags=tuple(
                self.string(t, f"gitlab_ci_tags[{i}]")
                for i, t in enumerate(self.sequence(data.get("gitlab_ci_tags"), "gitlab_ci_tags"))
            ),
            args=self.string_map(data.get("args"), "args"),
            images=images,
            propagate=propagate,
            warnings=tuple(self.warnings),
        )

    def entry(self, node: Any, path: str) -> BuildEntry:
        data = self.mapping(node, path)
        self.unknown_keys(data, ENTRY_KEYS, path)
        self.require(data, "build", path)
        matrix = {}
        for axis, values in self.mapping(data.get("matrix"), _join(path, "matrix")).items():
            axis_path = _join(path, "matrix", str(axis))
            matrix[str(axis)] = tuple(
                self.string(v, f"{axis_path}[{i}]")
                for i, v in enumerate(self.sequence(values, axis_path))
            )
        return BuildEntry(matrix=matrix, build=self.build(data.get("build", {}), _join(path, "build")))

    def build(self, node: Any, path: str) -> BuildSpec:
        data = self.mapping(node, path)
        self.unknown_keys(data, BUILD_KEYS, path)
        for key in ("context", "dockerfile", "tags"):
            self.require(data, key, path)
        tags = []
        for i, rule in enumerate(self.sequence(data.get("tags"), _join(path, "tags"))):
            rule_path = f"{_join(path, 'tags')}[{i}]"
            rule = self.mapping(rule, rule_path)
            self.unknown_keys(rule, ("tag",), rule_path)
            if self.require(rule, "tag", rule_path):
                tags.append(TagRule(self.string(rule["tag"], _join(rule_path, "tag"))))
        return BuildSpec(
            context=self.string(data.get("context", ""), _join(path, "context")),
            dockerfile=self.string(data.get("dockerfile", ""), _join(path, "dockerfile")),
            tags=tuple(tags),
            keywords=tuple(
                self.string(k, f"{_join(path, 'keywords')}[{i}]")
                for i, k in enumerate(self.sequence(data.get("keywords"), _join(path, "keywords")))
            ),
            args=self.string_map(data.get("args"), _join(path, "args")),
            nightly=self.boolean(data.get("nightly", False), _join(path, "nightly")),
            minimal=self.boolean(data.get("minimal", False), _join(path, "minimal")),
        )

    def target(self, node: Any, path: str) -> PropagateTarget:
        data = self.mapping(node, path)
        self.unknown_keys(data, TARGET_KEYS, path)
        for key in ("api_token_env_var", "gitlab_domain", "gitlab_project", "strategy"):
            self.require(data, key, path)
        rules = []
        for i, rule in enumerate(self.sequence(data.get("strategy"), _join(path, "strategy"))):
            rule_path = f"{_join(path, 'strategy')}[{i}]"
            rule = self.mapping(rule, rule_path)
            self.unknown_keys(rule, RULE_KEYS, rule_path)
            self.require(rule, "mode", rule_path)
            opt = {
                k: self.string(rule[k], _join(rule_path, k)) if rule.get(k) is not None else None
                for k in ("when", "expr", "subset", "item")
            }
            rules.append(StrategyRule(mode=self.string(rule.get("mode", "nil"), _join(rule_path, "mode")), **opt))
        optional = {
            k: self.string(data[k], _join(path, k)) for k in ("ref", "mode_var", "item_var") if k in data
        }
        return PropagateTarget(
            api_token_env_var=self.string(data.get("api_token_env_var", ""), _join(path, "api_token_env_var")),
            gitlab_domain=self.string(data.get("gitlab_domain", ""), _join(path, "gitlab_domain")),
            gitlab_project=self.string(data.get("gitlab_project", ""), _join(path, "gitlab_project")),
            strategy=tuple(rules),
            **optional,
        )


def _kind(node: Any) -> str:
    if node is None:
        return "null"
    return {dict: "a mapping", list: "a list", str: "a string", bool: "a boolean"}.get(type(node), type(node).__name__)


def _join(*parts: str) -> str:
    return ".".join(p for p in parts if p)


def parse_spec(text: str) -> KeeperSpec:
    """Parse an ``images.yml`` document into a :class:`KeeperSpec`.

    Raises :class:`SpecSyntaxError` for malformed YAML, :class:`SpecShapeError`
    for nodes of the wrong type and :class:`SpecValidationError` (one
    diagnostic per field) when mandatory fields are missing. Unknown keys
    only produce warnings, available as ``spec.warnings``.
    """
    return _Builder().spec(load_yaml(text))


def serialize_spec(spec: KeeperSpec) -> dict:
    """Plain-data form of ``spec``; ``parse_spec(yaml.safe_dump(...))`` restores it."""
    out: dict[str, Any] = {
        "active": spec.active,
        "base_url": spec.base_url,
        "docker_repo": spec.docker_repo,
        "gitlab_ci_tags": list(spec.gitlab_ci_tags),
        "args": dict(spec.args),
        "images": [
            {
                "matrix": {axis: list(values) for axis, values in entry.matrix.items()},
                "build": {
                    "context": entry.build.context,
                    "dockerfile": entry.build.dockerfile,
                    "tags": [{"tag": t.tag} for t in entry.build.tags],
                    "keywords": list(entry.build.keywords),
                    "args": dict(entry.build.args),
                    "nightly": entry.build.nightly,
                    "minimal": entry.build.minimal,
                },
            }
            for entry in spec.images
        ],
        "propagate": {},
    }
    for name, target in spec.propagate.items():
        out["propagate"][name] = {
            "api_token_env_var": target.api_token_env_var,
            "gitlab_domain": target.gitlab_domain,
            "gitlab_project": target.gitlab_project,
            "ref": target.ref,
            "mode_var": target.mode_var,
            "item_var": target.item_var,
            "strategy": [
                {k: v for k, v in (("when", r.when), ("expr", r.expr), ("subset", r.subset),
                                   ("mode", r.mode), ("item", r.item)) if v is not None}
                for r in target.strategy
            ],
        }
    return out


def dump_spec(spec: KeeperSpec) -> str:
    return yaml.safe_dump(serialize_spec(spec), sort_keys=False, allow_unicode=True)


# --- validation --------------------------------------------------------------

_SEVERITY_RANK = {"error": 0, "warning": 1}
_SECTION_RANK = {k: i for i, k in enumerate(TOP_LEVEL_KEYS)}
_PATH_PART = re.compile(r"([^.\[\]]+)|\[(\d+)\]")


def _document_key(diag: Diagnostic) -> tuple:
    """Order diagnostics by where their node sits in the model."""
    parts = []
    for i, m in enumerate(_PATH_PART.finditer(diag.path)):
        name, index = m.groups()
        if index is not None:
            parts.append((int(index), ""))
        elif i == 0:
            parts.append((_SECTION_RANK.get(name, len(_SECTION_RANK)), name))
        else:
            parts.append((0, name))
    return (tuple(parts), _SEVERITY_RANK.get(diag.severity, 2))


def _check_template(text: str, path: str, roots: dict[str, set[str] | None], out: list[Diagnostic]) -> None:
    """Append diagnostics when ``text`` does not parse or uses unavailable variables.

    ``roots`` maps each allowed variable to its allowed first keys (``None``
    when the variable is a list and must not be indexed).
    """
    try:
        template = parse_template(text)
    except TemplateSyntaxError as exc:
        out.append(Diagnostic("error", path, exc.message))
        return
    for f in template.fields:
        if f.root not in roots:
            allowed = ", ".join(sorted(roots)) or "none"
            out.append(Diagnostic("error", path, f"variable {f.root!r} is not available here (allowed: {allowed})"))
            continue
        keys = roots[f.root]
        if keys is None:
            if f.path:
                out.append(Diagnostic("error", path, f"{f.root} is a list and cannot be indexed"))
        elif not f.path:
            out.append(Diagnostic("error", path, f"{f.root} must be indexed by an axis name"))
        elif f.path[0] not in keys or len(f.path) > 1:
            out.append(Diagnostic("error", path, f"unknown key {f.display()}"))


def validate_spec(spec: KeeperSpec) -> list[Diagnostic]:
    """Return every diagnostic for ``spec``, parse warnings included.

    The spec compiles iff no diagnostic has severity ``error``.
    """
    out: list[Diagnostic] = list(spec.warnings)
    if not spec.active:
        return sorted(out, key=_document_key)
    if not spec.base_url:
        out.append(Diagnostic("error", "base_url", "must not be empty"))
    if spec.docker_repo.count("/") != 1 or not all(spec.docker_repo.split("/")):
        out.append(Diagnostic("error", "docker_repo", f"expected the form user/name, got {spec.docker_repo!r}"))
    if not spec.images:
        out.append(Diagnostic("error", "images", "must not be empty"))
    all_axes: set[str] = set()
    for entry in spec.images:
        all_axes.update(entry.matrix)
    for key, value in spec.args.items():
        # global args are shared by every entry, so any declared axis may appear
        _check_template(value, f"args.{key}", {"matrix": all_axes}, out)
    for i, entry in enumerate(spec.images):
        _validate_entry(entry, f"images[{i}]", spec, out)
    for name, target in spec.propagate.items():
        _validate_target(target, f"propagate.{name}", all_axes, out)
    return sorted(out, key=_document_key)


def _validate_entry(entry: BuildEntry, path: str, spec: KeeperSpec, out: list[Diagnostic]) -> None:
    for axis, values in entry.matrix.items():
        axis_path = f"{path}.matrix.{axis}"
        if not values:
            out.append(Diagnostic("error", axis_path, "axis must list at least one value"))
        dupes = sorted({v for v in values if values.count(v) > 1})
        if dupes:
            out.append(Diagnostic("error", axis_path, f"duplicate values: {', '.join(dupes)}"))
    build = entry.build
    bpath = f"{path}.build"
    roots = {"matrix": set(entry.matrix)}
    for key in ("context", "dockerfile"):
        value = getattr(build, key)
        if not value:
            out.append(Diagnostic("error", f"{bpath}.{key}", "must not be empty"))
        else:
            _check_template(value, f"{bpath}.{key}", roots, out)
    if not build.tags:
        out.append(Diagnostic("error", f"{bpath}.tags", "at least one tag is required"))
    for i, rule in enumerate(build.tags):
        _check_template(rule.tag, f"{bpath}.tags[{i}].tag", roots, out)
    for i, kw in enumerate(build.keywords):
        _check_template(kw, f"{bpath}.keywords[{i}]", roots, out)
    for key, value in build.args.items():
        _check_template(value, f"{bpath}.args.{key}", roots, out)
    # global args must resolve against this entry's axes too
    for key, value in spec.args.items():
        if key in build.args:
            continue
        try:
            fields = parse_template(value).fields
        except TemplateSyntaxError:
            continue
        for f in fields:
            if f.root == "matrix" and f.path and f.path[0] not in entry.matrix:
                out.append(Diagnostic("error", f"{bpath}", f"global arg {key} uses {f.display()}, not an axis of this entry"))


def _validate_target(target: PropagateTarget, path: str, axes: set[str], out: list[Diagnostic]) -> None:
    for key in ("api_token_env_var", "gitlab_domain", "gitlab_project"):
        if not getattr(target, key):
            out.append(Diagnostic("error", f"{path}.{key}", "must not be empty"))
    if not target.strategy:
        out.append(Diagnostic("error", f"{path}.strategy", "must list at least one rule"))
    last = len(target.strategy) - 1
    for i, rule in enumerate(target.strategy):
        rpath = f"{path}.strategy[{i}]"
        if rule.when is None and i != last:
            out.append(Diagnostic("error", rpath, "only the last rule may omit 'when'"))
        if rule.when is not None and rule.when not in WHEN_KINDS:
            out.append(Diagnostic("error", f"{rpath}.when", f"unknown condition {rule.when!r} (expected one of {', '.join(WHEN_KINDS)})"))
        if rule.mode not in OUTPUT_MODES:
            out.append(Diagnostic("error", f"{rpath}.mode", f"unknown mode {rule.mode!r} (expected one of {', '.join(OUTPUT_MODES)})"))
        quantified = rule.when in QUANTIFIERS
        has_operands = rule.expr is not None and rule.subset is not None
        if quantified and not has_operands:
            out.append(Diagnostic("error", rpath, f"'{rule.when}' requires both 'expr' and 'subset'"))
        if not quantified and (rule.expr is not None or rule.subset is not None):
            out.append(Diagnostic("error", rpath, "'expr' and 'subset' are only allowed with forall/exists"))
        if rule.expr is not None:
            _check_template(rule.expr, f"{rpath}.expr", {"matrix": axes, "keywords": None}, out)
        if rule.item is not None:
            if rule.mode == "nil":
                out.append(Diagnostic("warning", f"{rpath}.item", "ignored because mode is nil"))
            _check_template(rule.item, f"{rpath}.item", {"keywords": None}, out)


def has_errors(diagnostics) -> bool:
    return any(d.severity == "error" for d in diagnostics)
