"""Model backends: fixture-driven for tests and replay, HTTP for live models.

Scripted fixtures are line-delimited JSON:
``{"module": str, "match": "exact"|"hash", "input": str, "output": str}``.
With ``match: "hash"`` the input field holds the sha256 hex digest of the
prompt instead of its full text.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol

import requests

from .errors import BackendError, ContractError, FixtureGapError


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class LLMBackend(Protocol):
    def complete(self, module: str, prompt: str) -> str: ...


class ScriptedBackend:
    """Exhaustive (module, prompt) -> output map; misses raise, never fabricate."""

    def __init__(self, entries: Iterable[dict] | None = None) -> None:
        self._exact: dict[tuple[str, str], str] = {}
        self._hashed: dict[tuple[str, str], str] = {}
        for e in entries or []:
            self.add(e)

    def add(self, entry: dict) -> None:
        module = entry["module"]
        match = entry.get("match", "exact")
        if match == "exact":
            self._exact[(module, entry["input"])] = entry["output"]
        elif match == "hash":
            self._hashed[(module, entry["input"])] = entry["output"]
        else:
            raise ContractError(f"unknown fixture match mode: {match!r}")

    def add_exact(self, module: str, prompt: str, output: str) -> None:
        self._exact[(module, prompt)] = output

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        backend = cls()
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    backend.add(json.loads(line))
        return backend

    def complete(self, module: str, prompt: str) -> str:
        hit = self._exact.get((module, prompt))
        if hit is not None:
            return hit
        digest = prompt_hash(prompt)
        hit = self._hashed.get((module, digest))
        if hit is not None:
            return hit
        raise FixtureGapError(
            f"no scripted output for module {module!r}, prompt sha256 {digest[:12]}"
        )


class SequenceBackend:
    """Per-module FIFO of canned outputs; the ordered fixture variant."""

    def __init__(self, outputs: dict[str, list[str]]) -> None:
        self._queues = {m: list(outs) for m, outs in outputs.items()}

    def complete(self, module: str, prompt: str) -> str:
        queue = self._queues.get(module)
        if not queue:
            raise FixtureGapError(f"no scripted output left for module {module!r}")
        return queue.pop(0)


@dataclass
class HttpBackendConfig:
    """Binding for any JSON completion endpoint via configured field paths.

    ``prompt_path`` locates where the prompt string is inserted in the
    request body; ``output_path`` locates the completion text in the
    response. Paths are dot-separated with integer segments for lists,
    e.g. ``choices.0.message.content``.
    """

    endpoint: str
    prompt_path: str = "prompt"
    output_path: str = "text"
    request_body: dict = field(default_factory=lambda: {"prompt": "", "temperature": 0})
    headers: dict = field(default_factory=dict)
    timeout: float = 60.0
    module_path: str | None = None  # optional: where to put the module name

    @classmethod
    def from_file(cls, path: str | Path) -> "HttpBackendConfig":
        with open(path, encoding="utf-8") as f:
            return cls(**json.load(f))


def _set_path(obj: dict, path: str, value) -> None:
    parts = path.split(".")
    cur = obj
    for part in parts[:-1]:
        cur = cur[int(part)] if part.isdigit() else cur.setdefault(part, {})
    last = parts[-1]
    if last.isdigit():
        cur[int(last)] = value
    else:
        cur[last] = value


def _get_path(obj, path: str):
    cur = obj
    for part in path.split("."):
        cur = cur[int(part)] if part.isdigit() else cur[part]
    return cur


class HttpBackend:
    """Greedy-decoding HTTP completion client; retries once on timeout/5xx.

    Header values may reference environment variables ($VAR or ${VAR}), so
    credentials stay out of config files.
    """

    def __init__(self, config: HttpBackendConfig, session: requests.Session | None = None) -> None:
        self.config = config
        self.config.headers = {
            k: os.path.expandvars(v) for k, v in config.headers.items()
        }
        self._session = session or requests.Session()

    def complete(self, module: str, prompt: str) -> str:
        body = copy.deepcopy(self.config.request_body)
        _set_path(body, self.config.prompt_path, prompt)
        if self.config.module_path:
            _set_path(body, self.config.module_path, module)
        last_exc: Exception | None = None
        for attempt in range(2):
            try:
                resp = self._session.post(
                    self.config.endpoint,
                    json=body,
                    headers=self.config.headers,
                    timeout=self.config.timeout,
                )
            except requests.RequestException as e:
                last_exc = e
                continue
            if resp.status_code >= 500:
                last_exc = BackendError(f"server error {resp.status_code}")
                continue
            if resp.status_code >= 300:
                raise BackendError(f"backend returned status {resp.status_code}")
            try:
                return str(_get_path(resp.json(), self.config.output_path))
            except (KeyError, IndexError, TypeError, ValueError) as e:
                raise BackendError(f"cannot extract completion from response: {e}") from e
        raise BackendError(f"backend unreachable after retry: {last_exc}")


def build_backend(spec: str) -> LLMBackend:
    """Parse a CLI backend spec: 'scripted:<fixtures.jsonl>' or 'http:<config.json>'."""
    kind, _, arg = spec.partition(":")
    if kind == "scripted" and arg:
        return ScriptedBackend.from_file(arg)
    if kind == "http" and arg:
        return HttpBackend(HttpBackendConfig.from_file(arg))
    raise ContractError(f"unknown backend spec: {spec!r}")
