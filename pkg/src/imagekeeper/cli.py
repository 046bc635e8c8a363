"""Command-line entry point.

Exit status: 0 success, 1 specification or semantic error, 2 I/O or
network failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .emit import write_artifacts, generate_build_config
from .errors import KeeperError, ProtocolError, TransportError
from .expansion import CompiledPlan, compile_spec
from .model import has_errors, parse_spec, validate_spec
from .propagation import eval_strategy, first_matching_rule, render_trigger, send_trigger
from .registry import FileTagSource, HubTagSource, HUB_URL, compute_obsolete_tags, fetch_remote_tags
from .selection import DEFAULT_MODE, MODES, PipelineInput, make_input, select_builds, unmatched_items

EXIT_OK = 0
EXIT_SPEC = 1
EXIT_ENV = 2


class _Exit(Exception):
    def __init__(self, code: int) -> None:
        self.code = code


def _err(message: str) -> None:
    print(message, file=sys.stderr)


def _load_plan(args) -> CompiledPlan:
    try:
        text = Path(args.spec).read_text(encoding="utf-8")
    except OSError as exc:
        _err(f"error: {args.spec}: cannot read: {exc.strerror or exc}")
        raise _Exit(EXIT_ENV)
    try:
        spec = parse_spec(text)
    except KeeperError as exc:
        for diag in getattr(exc, "diagnostics", None) or [None]:
            _err(str(diag) if diag else f"error: {exc.path or args.spec}: {exc.message}")
        raise _Exit(EXIT_SPEC)
    diagnostics = validate_spec(spec)
    for diag in diagnostics:
        _err(str(diag))
    if has_errors(diagnostics):
        raise _Exit(EXIT_SPEC)
    try:
        return compile_spec(spec)
    except KeeperError as exc:
        _err(f"error: {exc.path or 'images'}: {exc.message}")
        raise _Exit(EXIT_SPEC)


def _pipeline_input(args) -> PipelineInput:
    message = None
    if getattr(args, "commit_msg_file", None):
        try:
            message = Path(args.commit_msg_file).read_text(encoding="utf-8")
        except OSError as exc:
            _err(f"error: {args.commit_msg_file}: cannot read: {exc.strerror or exc}")
            raise _Exit(EXIT_ENV)
    mode = args.mode or ("rebuild-keyword" if args.item else None)
    try:
        return make_input(mode, args.item, message, os.environ, args.default_mode)
    except KeeperError as exc:
        _err(f"error: input: {exc.message}")
        raise _Exit(EXIT_SPEC)


def _select(args, plan):
    pipeline_input = _pipeline_input(args)
    for item in unmatched_items(plan, pipeline_input):
        _err(f"warning: input: keyword {item!r} matches no build")
    return pipeline_input, select_builds(plan, pipeline_input)


def cmd_check(args) -> int:
    plan = _load_plan(args)
    print(f"ok: {len(plan.builds)} builds, {len(plan.tag_index)} tags")
    return EXIT_OK


def cmd_write_artifacts(args) -> int:
    plan = _load_plan(args)
    pipeline_input, selected = _select(args, plan)
    template = None
    readme = Path(args.readme) if args.readme else Path(args.spec).with_name("README.md")
    if readme.is_file():
        template = readme.read_text(encoding="utf-8")
    elif args.readme:
        _err(f"error: {readme}: no such file")
        return EXIT_ENV
    try:
        bundle = write_artifacts(plan, selected, template, pipeline_input.mode, args.ref)
    except KeeperError as exc:
        _err(f"error: {exc.path or 'artifacts'}: {exc.message}")
        return EXIT_SPEC
    out = Path(args.output_dir)
    try:
        for rel, data in bundle.files.items():
            # bundle paths all start with generated/; the output dir replaces that prefix
            target = out / Path(rel).relative_to("generated")
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(data)
            print(target)
    except OSError as exc:
        _err(f"error: {out}: cannot write: {exc.strerror or exc}")
        return EXIT_ENV
    return EXIT_OK


def cmd_generate_config(args) -> int:
    plan = _load_plan(args)
    pipeline_input, selected = _select(args, plan)
    text = generate_build_config(plan, selected, pipeline_input.mode, args.ref)
    if args.output:
        try:
            Path(args.output).write_text(text, encoding="utf-8")
        except OSError as exc:
            _err(f"error: {args.output}: cannot write: {exc.strerror or exc}")
            return EXIT_ENV
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_diff_remote(args) -> int:
    plan = _load_plan(args)
    source = FileTagSource(args.remote_tags_file) if args.remote_tags_file else HubTagSource(args.hub_url)
    try:
        remote = fetch_remote_tags(plan.docker_repo, source)
    except (TransportError, ProtocolError) as exc:
        _err(f"error: {plan.docker_repo}: {exc}")
        return EXIT_ENV
    for tag in compute_obsolete_tags(plan.tag_index, remote, args.protect_tag):
        print(tag)
    return EXIT_OK


def cmd_propagate(args) -> int:
    plan = _load_plan(args)
    pipeline_input, selected = _select(args, plan)
    requests = []
    for name, target in plan.propagate.items():
        try:
            req = eval_strategy(name, target, selected, pipeline_input.mode, args.ref)
        except KeeperError as exc:
            _err(f"error: propagate.{name}: {exc.message}")
            return EXIT_SPEC
        if req is None:
            index = first_matching_rule(target, selected, pipeline_input.mode)
            why = "no rule matched" if index is None else f"rule {index} has mode nil"
            print(f"{name}: no trigger ({why})")
            continue
        requests.append((name, render_trigger(req)))
    if not args.execute:
        for name, http in requests:
            print(f"{name}: {http.method} {http.url}")
            for key, value in http.fields:
                print(f"  {key}={value}")
        return EXIT_OK
    missing = sorted({http.token_env_var for _, http in requests if http.token_env_var not in os.environ})
    if missing:
        _err(f"error: token environment variable not set: {', '.join(missing)}")
        return EXIT_SPEC
    status = EXIT_OK
    for name, http in requests:
        try:
            print(f"{name}: HTTP {send_trigger(http, os.environ)}")
        except TransportError as exc:
            _err(f"error: {name}: {exc}")
            status = EXIT_ENV
    return status


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", default="images.yml", help="path to images.yml (default: %(default)s)")
    common.add_argument("-v", "--verbose", action="store_true")

    selecting = argparse.ArgumentParser(add_help=False)
    selecting.add_argument("--mode", choices=MODES, help="rebuild mode for this run")
    selecting.add_argument("--item", action="append", default=[],
                           help="keyword to rebuild (repeatable; implies --mode rebuild-keyword)")
    selecting.add_argument("--commit-msg-file", help="read docker-keeper: directives from this file")
    selecting.add_argument("--default-mode", choices=MODES, default=DEFAULT_MODE,
                           help="mode used when no directive is given (default: %(default)s)")
    selecting.add_argument("--ref", help="branch to trigger in child repositories (default: per target)")

    parser = argparse.ArgumentParser(prog="imagekeeper", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", parents=[common], help="parse, validate and compile the specification")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("write-artifacts", parents=[common, selecting], help="write generated/ artifacts")
    p.add_argument("--output-dir", default="generated")
    p.add_argument("--readme", help="README template (default: README.md next to the spec)")
    p.set_defaults(func=cmd_write_artifacts)

    p = sub.add_parser("generate-config", parents=[common, selecting], help="print the child pipeline config")
    p.add_argument("-o", "--output", help="write to this file instead of standard output")
    p.set_defaults(func=cmd_generate_config)

    p = sub.add_parser("diff-remote", parents=[common], help="list registry tags absent from the plan")
    p.add_argument("--remote-tags-file", help="read remote tags from a file instead of Docker Hub")
    p.add_argument("--protect-tag", action="append", default=[], help="never report this tag (repeatable)")
    p.add_argument("--hub-url", default=HUB_URL, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_diff_remote)

    p = sub.add_parser("propagate", parents=[common, selecting], help="evaluate propagate strategies")
    p.add_argument("--execute", action="store_true", help="send the trigger requests (default: dry run)")
    p.set_defaults(func=cmd_propagate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s: %(name)s: %(message)s")
    try:
        return args.func(args)
    except _Exit as exc:
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
