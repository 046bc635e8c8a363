"""Propagate strategies: decide whether and how to trigger child repositories."""

from __future__ import annotations

import logging
import shlex
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import InterpolationError, TransportError
from .expansion import ConcreteBuild
from .interpolation import interpolate
from .model import PropagateTarget, StrategyRule
from .selection import split_items

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TriggerRequest:
    target_name: str
    domain: str
    project_id: str
    ref: str
    token_env_var: str
    variables: dict[str, str]


@dataclass(frozen=True)
class HttpRequest:
    """A rendered request; the token field holds a ``$VAR`` reference, never the secret."""

    method: str
    url: str
    fields: tuple[tuple[str, str], ...]
    token_env_var: str

    def resolved_fields(self, environ: Mapping[str, str]) -> list[tuple[str, str]]:
        if self.token_env_var not in environ:
            raise KeyError(self.token_env_var)
        return [(k, environ[self.token_env_var] if k == "token" else v) for k, v in self.fields]

    def curl(self) -> str:
        """Equivalent shell command; the token stays an environment reference."""
        parts = ["curl", "--fail", "-X", self.method]
        for key, value in self.fields:
            if key == "token":
                parts += ["-F", f'token="${self.token_env_var}"']
            else:
                parts += ["-F", shlex.quote(f"{key}={value}")]
        parts.append(shlex.quote(self.url))
        return " ".join(parts)


def build_context(build: ConcreteBuild) -> dict:
    return {"matrix": dict(build.assignment.values), "keywords": list(build.keywords)}


def keyword_union(selected: Sequence[ConcreteBuild]) -> list[str]:
    return list(dict.fromkeys(k for b in selected for k in b.keywords))


def eval_condition(rule: StrategyRule, selected: Sequence[ConcreteBuild], input_mode: str,
                   rule_index: int = 0) -> bool:
    when = rule.when
    if when is None:
        return True
    if when in ("rebuild-all", "nightly"):
        return input_mode == when
    allowed = set(split_items(rule.subset or ""))

    def included(build: ConcreteBuild) -> bool:
        try:
            produced = interpolate(rule.expr, build_context(build))
        except InterpolationError as exc:
            raise type(exc)(f"strategy rule {rule_index}: {exc.message}", exc.path) from None
        return set(split_items(produced)) <= allowed

    if when == "forall":
        if not selected:
            log.warning("forall rule %d holds vacuously on an empty selection", rule_index)
        return all(included(b) for b in selected)
    if when == "exists":
        return any(included(b) for b in selected)
    raise ValueError(f"unknown condition {when!r}")


def first_matching_rule(target: PropagateTarget, selected: Sequence[ConcreteBuild],
                        input_mode: str) -> int | None:
    for i, rule in enumerate(target.strategy):
        if eval_condition(rule, selected, input_mode, i):
            return i
    return None


def eval_strategy(name: str, target: PropagateTarget, selected: Sequence[ConcreteBuild],
                  input_mode: str, ref: str | None = None) -> TriggerRequest | None:
    """First rule whose condition holds decides; ``nil`` or no match means no trigger."""
    index = first_matching_rule(target, selected, input_mode)
    if index is None:
        return None
    rule = target.strategy[index]
    if rule.mode == "nil":
        return None
    variables = {target.mode_var: rule.mode}
    if rule.item is not None:
        try:
            variables[target.item_var] = interpolate(rule.item, {"keywords": keyword_union(selected)})
        except InterpolationError as exc:
            raise type(exc)(f"propagate.{name}.strategy[{index}].item: {exc.message}", exc.path) from None
    return TriggerRequest(
        target_name=name,
        domain=target.gitlab_domain,
        project_id=target.gitlab_project,
        ref=ref or target.ref,
        token_env_var=target.api_token_env_var,
        variables=variables,
    )


def render_trigger(req: TriggerRequest) -> HttpRequest:
    url = f"https://{req.domain}/api/v4/projects/{urllib.parse.quote(req.project_id, safe='')}/trigger/pipeline"
    fields = [("token", f"${req.token_env_var}"), ("ref", req.ref)]
    fields += [(f"variables[{k}]", v) for k, v in req.variables.items()]
    return HttpRequest("POST", url, tuple(fields), req.token_env_var)


def send_trigger(request: HttpRequest, environ: Mapping[str, str], timeout: float = 30.0,
                 opener=urllib.request.urlopen) -> int:
    """POST once and return the HTTP status; raises :class:`TransportError` on failure."""
    body = urllib.parse.urlencode(request.resolved_fields(environ)).encode()
    http_req = urllib.request.Request(request.url, data=body, method=request.method)
    try:
        with opener(http_req, timeout=timeout) as resp:
            return resp.status
    except urllib.error.HTTPError as exc:
        raise TransportError(f"{request.url}: HTTP {exc.code}") from None
    except (urllib.error.URLError, OSError) as exc:
        raise TransportError(f"{request.url}: {exc}") from None
