"""Remote tag listing and the obsolete-tag report."""

from __future__ import annotations

import json
import logging
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable

from .errors import ProtocolError, TransportError

log = logging.getLogger(__name__)

HUB_URL = "https://hub.docker.com"
PAGE_SIZE = 100
ATTEMPTS = 3
RETRY_DELAY = 2.0


@dataclass(frozen=True)
class RemoteTagList:
    repo: str
    tags: tuple[str, ...]
    fetched_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc), compare=False)


def tags_url(repo: str, base_url: str = HUB_URL, page_size: int = PAGE_SIZE) -> str:
    return f"{base_url.rstrip('/')}/v2/repositories/{repo}/tags?page_size={page_size}"


class FileTagSource:
    """Reads one tag per line; blank lines and ``#`` comments are skipped."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)

    def list_tags(self, repo: str) -> list[str]:
        try:
            text = self.path.read_text(encoding="utf-8")
        except OSError as exc:
            raise TransportError(f"cannot read {self.path}: {exc}") from None
        lines = (line.strip() for line in text.splitlines())
        return [line for line in lines if line and not line.startswith("#")]


class HubTagSource:
    """Docker Hub v2 tag listing, following ``next`` links page by page."""

    def __init__(self, base_url: str = HUB_URL, page_size: int = PAGE_SIZE, attempts: int = ATTEMPTS,
                 retry_delay: float = RETRY_DELAY, timeout: float = 30.0,
                 sleep: Callable[[float], None] = time.sleep, opener=urllib.request.urlopen) -> None:
        self.base_url = base_url
        self.page_size = page_size
        self.attempts = attempts
        self.retry_delay = retry_delay
        self.timeout = timeout
        self.sleep = sleep
        self.opener = opener

    def _get(self, url: str) -> bytes:
        last = None
        for attempt in range(1, self.attempts + 1):
            try:
                with self.opener(url, timeout=self.timeout) as resp:
                    return resp.read()
            except urllib.error.HTTPError as exc:
                # client errors other than rate limiting will not go away on retry
                if exc.code < 500 and exc.code != 429:
                    raise TransportError(f"GET {url}: HTTP {exc.code}") from None
                last = f"HTTP {exc.code}"
            except (urllib.error.URLError, OSError) as exc:
                last = str(exc)
            log.warning("GET %s failed (attempt %d/%d): %s", url, attempt, self.attempts, last)
            if attempt < self.attempts:
                self.sleep(self.retry_delay)
        raise TransportError(f"GET {url}: {last} after {self.attempts} attempts")

    def list_tags(self, repo: str) -> list[str]:
        url = tags_url(repo, self.base_url, self.page_size)
        tags: list[str] = []
        seen_urls = set()
        while url:
            if url in seen_urls:
                raise ProtocolError(f"pagination loops back to {url}")
            seen_urls.add(url)
            try:
                page = json.loads(self._get(url))
                results = page["results"]
                tags += [r["name"] for r in results]
                url = page.get("next")
            except (ValueError, KeyError, TypeError) as exc:
                raise ProtocolError(f"malformed tag page from {url}: {exc!r}") from None
            if url is not None and not isinstance(url, str):
                raise ProtocolError(f"'next' must be a URL, got {url!r}")
        return tags


def fetch_remote_tags(repo: str, transport) -> RemoteTagList:
    tags = transport.list_tags(repo)
    return RemoteTagList(repo, tuple(dict.fromkeys(tags)))


def compute_obsolete_tags(expected: Iterable[str], remote: RemoteTagList,
                          protect: Iterable[str] = ()) -> list[str]:
    """Tags live on the registry but absent from the plan, sorted; report only."""
    keep = set(expected) | set(protect)
    return sorted(set(remote.tags) - keep)
