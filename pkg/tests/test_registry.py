from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from imagekeeper.errors import ProtocolError, TransportError
from imagekeeper.registry import (
    FileTagSource,
    HubTagSource,
    RemoteTagList,
    compute_obsolete_tags,
    fetch_remote_tags,
    tags_url,
)
from tests.stubs import HubStub

TAGS_137 = [f"t{i:03d}" for i in range(137)]


def test_tags_url():
    assert tags_url("mathcomp/mathcomp") == "https://hub.docker.com/v2/repositories/mathcomp/mathcomp/tags?page_size=100"


def test_file_source(tmp_path):
    f = tmp_path / "tags.txt"
    f.write_text("dev\n8.19\n", encoding="utf-8")
    assert fetch_remote_tags("a/b", FileTagSource(f)).tags == ("dev", "8.19")


def test_file_source_skips_comments_and_duplicates(tmp_path):
    f = tmp_path / "tags.txt"
    f.write_text("# header\ndev\n\n  8.19  \ndev\n", encoding="utf-8")
    assert fetch_remote_tags("a/b", FileTagSource(f)).tags == ("dev", "8.19")


def test_file_source_missing(tmp_path):
    with pytest.raises(TransportError):
        fetch_remote_tags("a/b", FileTagSource(tmp_path / "absent"))


def test_pagination_two_pages():
    with HubStub(TAGS_137) as stub:
        remote = fetch_remote_tags("mathcomp/mathcomp", HubTagSource(stub.url))
    assert len(remote.tags) == 137
    assert stub.hits == 2
    assert remote.tags == tuple(TAGS_137)


@pytest.mark.parametrize("page_size", [1, 10, 50, 137, 500])
def test_pagination_independent_of_page_size(page_size):
    with HubStub(TAGS_137) as stub:
        remote = fetch_remote_tags("a/b", HubTagSource(stub.url, page_size=page_size))
    assert remote.tags == tuple(TAGS_137)


def test_retries_transient_errors():
    delays = []
    with HubStub(["a"], fail_first=2) as stub:
        remote = fetch_remote_tags("a/b", HubTagSource(stub.url, sleep=delays.append))
    assert remote.tags == ("a",)
    assert delays == [2.0, 2.0]


def test_gives_up_after_three_attempts():
    delays = []
    with HubStub(["a"], fail_first=10) as stub:
        with pytest.raises(TransportError, match="3 attempts"):
            fetch_remote_tags("a/b", HubTagSource(stub.url, sleep=delays.append))
    assert stub.hits == 3
    assert delays == [2.0, 2.0]


def test_client_error_not_retried():
    with HubStub(["a"], fail_first=10, status=404) as stub:
        with pytest.raises(TransportError, match="404"):
            fetch_remote_tags("a/b", HubTagSource(stub.url, sleep=lambda _: None))
    assert stub.hits == 1


@pytest.mark.parametrize("payload", ["not json", '{"next": null}', '{"results": [{"nom": "x"}]}', '[]'])
def test_malformed_payload(payload):
    with HubStub([], payload=payload) as stub:
        with pytest.raises(ProtocolError):
            fetch_remote_tags("a/b", HubTagSource(stub.url))


def test_obsolete_examples():
    assert compute_obsolete_tags({"a", "b"}, RemoteTagList("r", ("a", "b", "c"))) == ["c"]
    assert compute_obsolete_tags({"a", "b", "c"}, RemoteTagList("r", ("a", "b"))) == []
    assert compute_obsolete_tags({"a"}, RemoteTagList("r", ("a", "z", "b")), protect=["z"]) == ["b"]


def test_obsolete_against_fig7(mathcomp_plan):
    remote = RemoteTagList("mathcomp/mathcomp", tuple(mathcomp_plan.tag_index) + ("latest-coq-8.15",))
    assert compute_obsolete_tags(set(mathcomp_plan.tag_index), remote) == ["latest-coq-8.15"]


@given(st.sets(st.sampled_from("abcdefg")), st.lists(st.sampled_from("abcdefgh")), st.sets(st.sampled_from("abc")))
def test_obsolete_properties(expected, remote_tags, protect):
    remote = RemoteTagList("r", tuple(dict.fromkeys(remote_tags)))
    got = compute_obsolete_tags(expected, remote, protect)
    assert not set(got) & expected
    assert set(got) <= set(remote.tags)
    assert not set(got) & protect
    assert got == sorted(set(got))
