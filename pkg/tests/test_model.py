from __future__ import annotations

import re

import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

from imagekeeper.errors import SpecShapeError, SpecSyntaxError, SpecValidationError
from imagekeeper.model import (
    BuildEntry,
    BuildSpec,
    KeeperSpec,
    PropagateTarget,
    StrategyRule,
    TagRule,
    dump_spec,
    has_errors,
    parse_spec,
    validate_spec,
)
from tests.conftest import fixture_text

MANDATORY = ("active", "base_url", "docker_repo", "images")


def test_parse_mathcomp(mathcomp_spec):
    spec = mathcomp_spec
    assert spec.active is True
    assert spec.docker_repo == "mathcomp/mathcomp"
    assert spec.gitlab_ci_tags == ("large",)
    assert len(spec.images) == 2
    first = spec.images[0]
    assert first.matrix == {"mathcomp": ("2.2.0",), "coq": ("dev", "8.19", "8.18", "8.17", "8.16")}
    assert list(first.matrix) == ["mathcomp", "coq"]
    assert first.build.tags == (TagRule("{matrix[mathcomp]}-coq-{matrix[coq]}"), TagRule("latest-coq-{matrix[coq]}"))
    assert first.build.nightly is False and first.build.minimal is False
    assert spec.propagate == {}
    assert spec.warnings == ()


def test_inactive_spec_defaults():
    spec = parse_spec("active: false\n")
    assert spec == KeeperSpec(active=False)
    assert validate_spec(spec) == []


def test_missing_active_is_an_error():
    with pytest.raises(SpecValidationError, match="missing mandatory field active"):
        parse_spec("docker_repo: a/b\n")


@pytest.mark.parametrize("field", MANDATORY)
def test_deleting_a_mandatory_field_names_it(mathcomp_text, field):
    doc = yaml.safe_load(mathcomp_text)
    del doc[field]
    with pytest.raises(SpecValidationError) as info:
        parse_spec(yaml.safe_dump(doc))
    assert len(info.value.diagnostics) == 1
    assert f"missing mandatory field {field}" in info.value.diagnostics[0].message


def test_missing_nested_fields_are_all_reported():
    text = """
active: true
base_url: https://x
docker_repo: a/b
images:
  - matrix: {v: ['1']}
    build:
      tags: [{tag: x}]
"""
    with pytest.raises(SpecValidationError) as info:
        parse_spec(text)
    assert [d.path for d in info.value.diagnostics] == ["images[0].build.context", "images[0].build.dockerfile"]


def test_malformed_yaml_reports_position():
    with pytest.raises(SpecSyntaxError) as info:
        parse_spec("active: true\nimages: [\n  - a\n")
    assert info.value.line is not None and info.value.column is not None
    assert "line" in str(info.value)


def test_duplicate_keys_rejected():
    with pytest.raises(SpecSyntaxError, match="duplicate key 'active'"):
        parse_spec("active: true\nactive: false\n")


@pytest.mark.parametrize("mutation, path", [
    (lambda d: d["images"][0].__setitem__("matrix", {"coq": "8.19"}), "images[0].matrix.coq"),
    (lambda d: d.__setitem__("images", {"x": 1}), "images"),
    (lambda d: d["images"][0]["build"].__setitem__("tags", "x"), "images[0].build.tags"),
    (lambda d: d.__setitem__("active", "yes please"), "active"),
    (lambda d: d["images"][0]["build"].__setitem__("nightly", "sometimes"), "images[0].build.nightly"),
])
def test_shape_errors(mathcomp_text, mutation, path):
    doc = yaml.safe_load(mathcomp_text)
    mutation(doc)
    with pytest.raises(SpecShapeError) as info:
        parse_spec(yaml.safe_dump(doc))
    assert info.value.path == path


def test_unknown_keys_warn(mathcomp_text):
    spec = parse_spec(mathcomp_text + "extra_top: 1\n")
    assert [(d.severity, d.path) for d in spec.warnings] == [("warning", "extra_top")]
    diags = validate_spec(spec)
    assert [d.severity for d in diags] == ["warning"]
    assert not has_errors(diags)


def test_numbers_stay_strings():
    spec = parse_spec("""
active: true
base_url: https://x
docker_repo: a/b
images:
  - matrix: {coq: [8.10, 8.9, 2020-01-01]}
    build: {context: ., dockerfile: Dockerfile, tags: [{tag: '{matrix[coq]}'}]}
""")
    assert spec.images[0].matrix["coq"] == ("8.10", "8.9", "2020-01-01")


def test_anchors_and_merge_keys_are_resolved():
    spec = parse_spec("""
active: true
base_url: https://x
docker_repo: a/b
images:
  - matrix: {coq: ['8.19']}
    build: &common
      context: ./coq
      dockerfile: Dockerfile
      keywords: ['{matrix[coq]}']
      tags: [{tag: 'a-{matrix[coq]}'}]
  - matrix: {coq: ['8.18']}
    build:
      <<: *common
      tags: [{tag: 'b-{matrix[coq]}'}]
""")
    second = spec.images[1].build
    assert second.context == "./coq"
    assert second.keywords == ("{matrix[coq]}",)
    assert second.tags == (TagRule("b-{matrix[coq]}"),)


def test_round_trip(mathcomp_spec, coq_spec):
    for spec in (mathcomp_spec, coq_spec, KeeperSpec(active=False)):
        assert parse_spec(dump_spec(spec)) == spec


_names = st.from_regex(r"[a-z][a-z0-9_]{0,6}", fullmatch=True)
_values = st.from_regex(r"[a-z0-9][a-z0-9.]{0,5}", fullmatch=True)


@st.composite
def specs(draw):
    entries = []
    for _ in range(draw(st.integers(1, 3))):
        axes = draw(st.lists(_names, min_size=1, max_size=3, unique=True))
        matrix = {a: tuple(draw(st.lists(_values, min_size=1, max_size=3, unique=True))) for a in axes}
        build = BuildSpec(
            context=draw(st.sampled_from([".", "./x", "sub/dir"])),
            dockerfile="Dockerfile",
            tags=tuple(TagRule(t) for t in draw(st.lists(st.sampled_from(["t", "{matrix[%s]}" % axes[0]]), min_size=1, max_size=2))),
            keywords=tuple(draw(st.lists(_values, max_size=2))),
            args=draw(st.dictionaries(_names.map(str.upper), _values, max_size=2)),
            nightly=draw(st.booleans()),
            minimal=draw(st.booleans()),
        )
        entries.append(BuildEntry(matrix, build))
    targets = {}
    for name in draw(st.lists(_names, max_size=2, unique=True)):
        targets[name] = PropagateTarget(
            "TOKEN", "gitlab.example.org", draw(st.from_regex(r"[0-9]{1,6}", fullmatch=True)),
            (StrategyRule(mode="rebuild-all", when="rebuild-all"),
             StrategyRule(mode="nil", when="forall", expr="{matrix[x]}", subset="1,2"),
             StrategyRule(mode="rebuild-keyword", item="{keywords[/#/,][#,]}")),
            ref=draw(st.sampled_from(["master", "main"])),
        )
    return KeeperSpec(
        active=True,
        base_url="https://gitlab.example.org/a/b",
        docker_repo="a/b",
        gitlab_ci_tags=tuple(draw(st.lists(_names, max_size=2))),
        args=draw(st.dictionaries(_names.map(str.upper), _values, max_size=2)),
        images=tuple(entries),
        propagate=targets,
    )


@given(specs())
def test_round_trip_property(spec):
    assert parse_spec(dump_spec(spec)) == spec


# --- validation --------------------------------------------------------------


def test_valid_specs_have_no_diagnostics(mathcomp_spec, coq_spec):
    assert validate_spec(mathcomp_spec) == []
    assert validate_spec(coq_spec) == []


def test_duplicate_axis_value(mathcomp_text):
    text = mathcomp_text.replace("coq: ['dev', '8.19'", "coq: ['dev', 'dev'")
    diags = validate_spec(parse_spec(text))
    assert [(d.severity, d.path) for d in diags] == [("error", "images[0].matrix.coq")]


def test_empty_axis(mathcomp_text):
    text = mathcomp_text.replace("mathcomp: ['2.1.0']", "mathcomp: []")
    diags = validate_spec(parse_spec(text))
    assert [d.path for d in diags] == ["images[1].matrix.mathcomp"]


@pytest.mark.parametrize("repo", ["mathcomp", "a/b/c", "/b", "a/"])
def test_docker_repo_needs_one_slash(mathcomp_spec, repo):
    from dataclasses import replace
    diags = validate_spec(replace(mathcomp_spec, docker_repo=repo))
    assert [d.path for d in diags] == ["docker_repo"]


def _strategy_spec(rules: list[dict]) -> str:
    return fixture_text("mathcomp.yml") + yaml.safe_dump({"propagate": {"child": {
        "api_token_env_var": "T", "gitlab_domain": "g.example", "gitlab_project": "1", "strategy": rules,
    }}})


@pytest.mark.parametrize("missing_at", range(3))
def test_when_omission_only_allowed_last(missing_at):
    rules = [{"when": "rebuild-all", "mode": "rebuild-all"} for _ in range(3)]
    del rules[missing_at]["when"]
    diags = validate_spec(parse_spec(_strategy_spec(rules)))
    if missing_at == 2:
        assert diags == []
    else:
        assert [(d.severity, d.path) for d in diags] == [("error", f"propagate.child.strategy[{missing_at}]")]
        assert "only the last rule" in diags[0].message


@pytest.mark.parametrize("rule, fragment", [
    ({"when": "forall", "mode": "nil"}, "requires both"),
    ({"when": "exists", "expr": "{matrix[coq]}", "mode": "nil"}, "requires both"),
    ({"when": "rebuild-all", "expr": "{matrix[coq]}", "subset": "a", "mode": "nil"}, "only allowed with"),
    ({"when": "minimal", "mode": "nil"}, "unknown condition"),
    ({"when": "rebuild-all", "mode": "sometimes"}, "unknown mode"),
    ({"mode": "rebuild-keyword", "item": "{matrix[coq]}"}, "not available here"),
    ({"when": "forall", "expr": "{matrix[ocaml]}", "subset": "a", "mode": "nil"}, "unknown key"),
])
def test_rule_errors(rule, fragment):
    diags = validate_spec(parse_spec(_strategy_spec([rule])))
    assert has_errors(diags)
    assert any(fragment in d.message for d in diags), diags


def test_empty_strategy():
    diags = validate_spec(parse_spec(_strategy_spec([])))
    assert [d.path for d in diags] == ["propagate.child.strategy"]


@pytest.mark.parametrize("template, fragment", [
    ("{keywords}", "not available here"),
    ("{matrix[ocaml]}", "unknown key"),
    ("{matrix}", "must be indexed"),
    ("{matrix[coq]", "unterminated"),
])
def test_tag_template_checks(mathcomp_text, template, fragment):
    text = mathcomp_text.replace("'latest-coq-{matrix[coq]}'", repr(template))
    diags = validate_spec(parse_spec(text))
    assert [d.path for d in diags] == ["images[0].build.tags[1].tag"]
    assert fragment in diags[0].message


def test_global_arg_must_exist_in_every_entry(mathcomp_text):
    text = mathcomp_text.replace("MATHCOMP_VERSION: '{matrix[mathcomp]}'", "MATHCOMP_VERSION: '{matrix[mathcomp]}'\n  OCAML: '{matrix[ocaml]}'")
    text = text.replace("mathcomp: ['2.1.0']", "mathcomp: ['2.1.0']\n      ocaml: ['4.14']")
    diags = validate_spec(parse_spec(text))
    assert [d.path for d in diags] == ["images[0].build"]
    assert "OCAML" in diags[0].message


def test_diagnostics_sorted_by_document_order(mathcomp_text):
    text = (mathcomp_text
            .replace("docker_repo: 'mathcomp/mathcomp'", "docker_repo: 'nope'")
            .replace("coq: ['8.18', '8.17', '8.16']", "coq: ['8.18', '8.18']")
            .replace("coq: ['dev', '8.19'", "coq: ['dev', 'dev'")
            + "zzz: 1\n")
    diags = validate_spec(parse_spec(text))
    assert [d.path for d in diags] == ["docker_repo", "images[0].matrix.coq", "images[1].matrix.coq", "zzz"]
    assert validate_spec(parse_spec(text)) == diags


def test_diagnostic_format():
    diags = validate_spec(parse_spec(fixture_text("mathcomp.yml").replace("'mathcomp/mathcomp'", "'x'")))
    assert re.fullmatch(r"error: docker_repo: .+", str(diags[0]))
