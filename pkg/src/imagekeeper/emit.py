"""Artifacts of the compile and prepare-ci stages: build.yml, README, listings."""

from __future__ import annotations

import logging
import posixpath
import re
import shlex
from dataclasses import dataclass, field
from typing import Sequence

import yaml

from .errors import EmitError
from .expansion import CompiledPlan, ConcreteBuild
from .propagation import eval_strategy, render_trigger

log = logging.getLogger(__name__)

TAGS_MARKER = "<!-- tags -->"
BUILD_STAGE = "build"
PROPAGATE_STAGE = "propagate"
NOOP_JOB = "no-op"
GENERATED_DIR = "generated"
DEFAULT_README_TEMPLATE = "# {repo}\n\n## Supported tags\n\n" + TAGS_MARKER + "\n"

_JOB_UNSAFE = re.compile(r"[^A-Za-z0-9_.-]")


@dataclass
class ArtifactBundle:
    files: dict[str, bytes] = field(default_factory=dict)

    def add(self, path: str, text: str) -> None:
        norm = posixpath.normpath(path)
        if norm.startswith(("/", "..")) or norm != path:
            raise EmitError(f"artifact path {path!r} is not a normalized relative path")
        self.files[path] = text.encode("utf-8")


def job_name(build: ConcreteBuild) -> str:
    return "build-" + _JOB_UNSAFE.sub("-", build.name)


def build_script(build: ConcreteBuild, docker_repo: str) -> list[str]:
    cmd = ["docker", "build"]
    for key, value in build.args.items():
        cmd += ["--build-arg", shlex.quote(f"{key}={value}")]
    cmd += ["-f", shlex.quote(build.dockerfile_path)]
    for tag in build.tags:
        cmd += ["-t", shlex.quote(f"{docker_repo}:{tag}")]
    cmd.append(shlex.quote(build.context_path))
    lines = [" ".join(cmd)]
    lines += [f"docker push {shlex.quote(f'{docker_repo}:{tag}')}" for tag in build.tags]
    return lines


def _propagate_job(name: str, plan: CompiledPlan, selected, input_mode: str, ref: str | None) -> dict:
    request = eval_strategy(name, plan.propagate[name], selected, input_mode, ref)
    if request is None:
        script = [f"echo {shlex.quote(f'no trigger for {name}')}"]
    else:
        script = [render_trigger(request).curl()]
    return {"stage": PROPAGATE_STAGE, "script": script}


def generate_build_config(plan: CompiledPlan, selected: Sequence[ConcreteBuild],
                          input_mode: str = "minimal", ref: str | None = None) -> str:
    """Child pipeline: one job per selected build, one job per propagate target.

    ``input_mode`` is the mode the propagate rules see; it does not affect
    the build jobs.
    """
    ids = {b.id for b in plan.builds}
    stray = [b.id for b in selected if b.id not in ids]
    if stray:
        raise EmitError(f"selected builds not in plan: {', '.join(stray)}")
    doc: dict = {"stages": [BUILD_STAGE, PROPAGATE_STAGE]}
    for build in selected:
        job: dict = {"stage": BUILD_STAGE}
        if build.runner_tags:
            job["tags"] = list(build.runner_tags)
        job["script"] = build_script(build, plan.docker_repo)
        doc[job_name(build)] = job
    if not selected:
        doc[NOOP_JOB] = {"stage": BUILD_STAGE, "script": ["echo 'nothing to build'"]}
    for name in plan.propagate:
        doc[f"propagate-{_JOB_UNSAFE.sub('-', name)}"] = _propagate_job(name, plan, selected, input_mode, ref)
    body = yaml.safe_dump(doc, sort_keys=False, default_flow_style=False, width=1 << 16)
    return "# Generated file; edit images.yml instead.\n" + body


def doc_link(plan: CompiledPlan, build: ConcreteBuild, branch: str = "master") -> str:
    return f"{plan.base_url.rstrip('/')}/blob/{branch}/{build.dockerfile_path}"


def tag_bullets(plan: CompiledPlan, branch: str = "master") -> list[str]:
    return [
        "- [" + ", ".join(f"`{t}`" for t in b.tags) + f"]({doc_link(plan, b, branch)})"
        for b in plan.builds
    ]


def generate_readme(template: str, plan: CompiledPlan, branch: str = "master") -> str:
    count = template.count(TAGS_MARKER)
    if count == 0:
        log.warning("README template has no %s marker; left unchanged", TAGS_MARKER)
        return template
    if count > 1:
        raise EmitError(f"README template contains {TAGS_MARKER} {count} times")
    return template.replace(TAGS_MARKER, "\n".join(tag_bullets(plan, branch)))


def _text_file(lines: Sequence[str]) -> str:
    return "".join(line + "\n" for line in lines)


def _ensure_newline(text: str) -> str:
    text = text.rstrip("\n")
    return text + "\n" if text else ""


def write_artifacts(plan: CompiledPlan, selected: Sequence[ConcreteBuild], readme_template: str | None = None,
                    input_mode: str = "minimal", ref: str | None = None, branch: str = "master") -> ArtifactBundle:
    """Render the four ``generated/`` files. Empty listings are empty files."""
    if readme_template is None:
        readme_template = DEFAULT_README_TEMPLATE.replace("{repo}", plan.docker_repo or "images")
    bundle = ArtifactBundle()
    bundle.add(f"{GENERATED_DIR}/build.yml", generate_build_config(plan, selected, input_mode, ref))
    bundle.add(f"{GENERATED_DIR}/README.md", _ensure_newline(generate_readme(readme_template, plan, branch)))
    bundle.add(f"{GENERATED_DIR}/images.txt", _text_file(
        f"{b.name}\t{','.join(b.tags[1:])}" for b in plan.builds
    ))
    paths = dict.fromkeys(b.dockerfile_path for b in plan.builds)
    bundle.add(f"{GENERATED_DIR}/dockerfiles.txt", _text_file(list(paths)))
    return bundle
