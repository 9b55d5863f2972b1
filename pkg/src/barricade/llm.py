"""Chat-completion client with record/replay cassettes, plus reply parsing.

Three modes:

    live    one HTTPS chat call per prompt
    record  live call, appended to a cassette file
    replay  cassette lookup by prompt hash; no network at all

A cassette is a UTF-8 JSON-lines file, one record per call:

    {"prompt_sha256": ..., "prompt": ..., "response": ..., "model": ..., "timestamp": ...}

Replay keys on the SHA-256 of the exact prompt text, so any drift in the
templates or their inputs is a hard, named error rather than a silently
different conversation.  Repeated identical prompts replay in recorded
order.

Configuration for live/record mode comes from explicit arguments or the
environment: BARRICADE_LLM_ENDPOINT, BARRICADE_LLM_API_KEY,
BARRICADE_LLM_MODEL.  The endpoint is expected to speak the common
chat-completions JSON dialect (messages list in, choices[0].message.content out).
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .conditions import BarrierCandidate, CandidateOrigin
from .expr import Expression, parse_expression, UnknownVariableError, ParseError
from .prompts import PromptInstance

__all__ = [
    "LLMError",
    "CassetteMissError",
    "ResponseParseError",
    "LLMConfig",
    "TranscriptEntry",
    "Transcript",
    "HttpChatClient",
    "LLMSession",
    "parse_candidate",
    "parse_scalar_reply",
    "prompt_sha256",
]


class LLMError(Exception):
    """Configuration or transport failure."""


class CassetteMissError(LLMError):
    """Replay requested for a prompt the cassette has never seen."""

    def __init__(self, digest: str):
        super().__init__(
            f"cassette has no recorded response for prompt sha256={digest}"
        )
        self.digest = digest


class ResponseParseError(Exception):
    """Model reply does not follow the requested format."""


def prompt_sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class LLMConfig:
    endpoint: str | None = None
    api_key: str | None = None
    model: str = "unspecified"
    temperature: float = 0.0
    request_timeout: float = 120.0

    @classmethod
    def from_env(cls) -> "LLMConfig":
        return cls(
            endpoint=os.environ.get("BARRICADE_LLM_ENDPOINT"),
            api_key=os.environ.get("BARRICADE_LLM_API_KEY"),
            model=os.environ.get("BARRICADE_LLM_MODEL", "unspecified"),
        )


@dataclass(frozen=True)
class TranscriptEntry:
    prompt_sha256: str
    prompt: str
    response: str
    model: str
    wall_time: float


class Transcript:
    """Append-only log of every prompt/response pair in a run."""

    def __init__(self):
        self._entries: list[TranscriptEntry] = []
        self._lock = threading.Lock()

    def append(self, entry: TranscriptEntry) -> None:
        with self._lock:
            self._entries.append(entry)

    @property
    def entries(self) -> tuple[TranscriptEntry, ...]:
        with self._lock:
            return tuple(self._entries)

    def __len__(self) -> int:
        return len(self._entries)


class HttpChatClient:
    """Minimal chat-completions client over HTTPS."""

    def __init__(self, config: LLMConfig):
        if not config.endpoint:
            raise LLMError(
                "no LLM endpoint configured (set BARRICADE_LLM_ENDPOINT or pass one)"
            )
        self.config = config

    def complete(self, prompt: str) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        payload = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
        }
        try:
            resp = requests.post(
                self.config.endpoint,
                json=payload,
                headers=headers,
                timeout=self.config.request_timeout,
            )
        except requests.RequestException as exc:
            raise LLMError(f"chat request failed: {exc}") from exc
        if resp.status_code != 200:
            raise LLMError(
                f"chat endpoint returned HTTP {resp.status_code}: {resp.text[:300]}"
            )
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise LLMError(f"unexpected chat response shape: {exc}") from exc

    @property
    def model_id(self) -> str:
        return self.config.model


class LLMSession:
    """Mode-dispatching completion front end used by the agents.

    `client` is anything with a `complete(str) -> str` method (the HTTP
    client, or a scripted stand-in in tests).  In replay mode no client is
    needed; responses come from the cassette alone.
    """

    def __init__(
        self,
        mode: str,
        client=None,
        cassette_path: str | Path | None = None,
        transcript: Transcript | None = None,
    ):
        if mode not in ("live", "record", "replay"):
            raise ValueError(f"unknown mode {mode!r}")
        if mode in ("live", "record") and client is None:
            raise LLMError(f"mode '{mode}' needs a client")
        if mode in ("record", "replay") and cassette_path is None:
            raise LLMError(f"mode '{mode}' needs a cassette path")
        self.mode = mode
        self.client = client
        self.cassette_path = Path(cassette_path) if cassette_path else None
        self.transcript = transcript if transcript is not None else Transcript()
        self._write_lock = threading.Lock()
        self._replay_cursor: dict[str, int] = {}
        self._cassette: dict[str, list[dict]] = {}
        if mode == "replay":
            self._load_cassette()

    def _load_cassette(self) -> None:
        assert self.cassette_path is not None
        if not self.cassette_path.exists():
            raise LLMError(f"cassette file not found: {self.cassette_path}")
        for line in self.cassette_path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            record = json.loads(line)
            self._cassette.setdefault(record["prompt_sha256"], []).append(record)

    @property
    def model_id(self) -> str:
        if self.mode == "replay":
            return "replay"
        return getattr(self.client, "model_id", "scripted")

    def complete(self, prompt: PromptInstance | str) -> str:
        text = prompt.text if isinstance(prompt, PromptInstance) else prompt
        digest = prompt_sha256(text)
        start = time.monotonic()
        if self.mode == "replay":
            entries = self._cassette.get(digest)
            if not entries:
                raise CassetteMissError(digest)
            cursor = self._replay_cursor.get(digest, 0)
            record = entries[min(cursor, len(entries) - 1)]
            self._replay_cursor[digest] = cursor + 1
            response = record["response"]
            model = record.get("model", "replay")
        else:
            response = self.client.complete(text)
            model = self.model_id
            if self.mode == "record":
                record = {
                    "prompt_sha256": digest,
                    "prompt": text,
                    "response": response,
                    "model": model,
                    "timestamp": time.time(),
                }
                with self._write_lock:
                    assert self.cassette_path is not None
                    with self.cassette_path.open("a", encoding="utf-8") as fh:
                        fh.write(json.dumps(record) + "\n")
        self.transcript.append(
            TranscriptEntry(
                prompt_sha256=digest,
                prompt=text,
                response=response,
                model=model,
                wall_time=time.monotonic() - start,
            )
        )
        return response


# ---------------------------------------------------------------------------
# Reply parsing
# ---------------------------------------------------------------------------

_FENCE_RE = re.compile(r"```[a-zA-Z0-9]*|```")


def _clean(response: str) -> str:
    text = _FENCE_RE.sub("", response)
    return text.replace("**", "").replace("__", "")


def _tagged_line(text: str, tag: str) -> str | None:
    pattern = re.compile(rf"^\s*{tag}\s*:\s*(.+)$", re.MULTILINE)
    m = pattern.search(text)
    return m.group(1).strip() if m else None


def split_top_level(text: str) -> list[str]:
    """Split on commas that are not nested inside parentheses."""
    parts = []
    depth = 0
    current = []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth = max(0, depth - 1)
        if ch == "," and depth == 0:
            parts.append("".join(current).strip())
            current = []
        else:
            current.append(ch)
    parts.append("".join(current).strip())
    return [p for p in parts if p]


def parse_candidate(
    response: str,
    state_vars: Sequence[str],
    control_vars: Sequence[str] = (),
    refined: bool = False,
    origin: CandidateOrigin | None = None,
) -> BarrierCandidate:
    """Extract a candidate from a BARRIER:/CONTROLLER: formatted reply.

    Markdown emphasis and code fences are stripped first.  Controllers are
    split on top-level commas and mapped to `control_vars` in order.  Any
    free symbolic constant in an expression (the model was told numbers
    only) surfaces as a :class:`ResponseParseError` naming the symbol.
    """
    text = _clean(response)
    barrier_tag = "REFINED_BARRIER" if refined else "BARRIER"
    controller_tag = "REFINED_CONTROLLER" if refined else "CONTROLLER"

    barrier_text = _tagged_line(text, barrier_tag)
    if barrier_text is None and refined:
        barrier_text = _tagged_line(text, "BARRIER")
    if barrier_text is None:
        raise ResponseParseError(f"no {barrier_tag}: line in response")

    def parse_one(src: str, what: str) -> Expression:
        try:
            return parse_expression(src, state_vars)
        except UnknownVariableError as exc:
            raise ResponseParseError(
                f"{what} uses symbolic constant '{exc.name}'; numeric "
                "coefficients are required"
            ) from None
        except ParseError as exc:
            raise ResponseParseError(f"{what} does not parse: {exc}") from None

    barrier = parse_one(barrier_text, "barrier expression")

    controllers: dict[str, Expression] | None = None
    if control_vars:
        controller_text = _tagged_line(text, controller_tag)
        if controller_text is None and refined:
            controller_text = _tagged_line(text, "CONTROLLER")
        if controller_text is None:
            raise ResponseParseError(f"no {controller_tag}: line in response")
        pieces = split_top_level(controller_text)
        if len(pieces) != len(control_vars):
            raise ResponseParseError(
                f"expected {len(control_vars)} controller expression(s), got {len(pieces)}"
            )
        controllers = {
            u: parse_one(src, f"controller for {u}")
            for u, src in zip(control_vars, pieces)
        }

    return BarrierCandidate(
        barrier=barrier,
        controllers=controllers,
        origin=origin or CandidateOrigin(1, 0),
    )


_NUMBER_IN_TEXT = re.compile(r"\d+")
_FLOAT_IN_TEXT = re.compile(r"\d+(\.\d+)?")


def parse_scalar_reply(response: str, kind: str, solver_names: Sequence[str] = ()):
    """Parse the small fixed-format replies.

    kind "candidate_number" -> positive int; "solver_name" -> a member of
    `solver_names`; "retry_decision" -> (bool, multiplier >= 1).
    """
    text = _clean(response)
    if kind == "candidate_number":
        m = _NUMBER_IN_TEXT.search(text)
        if not m or int(m.group()) < 1:
            raise ResponseParseError(f"no candidate number in reply: {response!r}")
        return int(m.group())
    if kind == "solver_name":
        tagged = _tagged_line(text, "NEXT_SOLVER") or _tagged_line(text, "SOLVER")
        haystack = (tagged or text).lower()
        for name in solver_names:
            if re.search(rf"\b{re.escape(name)}\b", haystack):
                return name
        raise ResponseParseError(f"no known solver named in reply: {response!r}")
    if kind == "retry_decision":
        tagged = _tagged_line(text, "RETRY")
        if tagged is None:
            raise ResponseParseError(f"no RETRY: line in reply: {response!r}")
        decision = tagged.strip().lower()
        if decision.startswith("yes"):
            multiplier = 2.0
            m_line = _tagged_line(text, "TIMEOUT_MULTIPLIER")
            if m_line:
                m = _FLOAT_IN_TEXT.search(m_line)
                if m:
                    multiplier = max(1.0, float(m.group()))
            return (True, multiplier)
        if decision.startswith("no"):
            return (False, 1.0)
        raise ResponseParseError(f"RETRY must be yes or no, got {tagged!r}")
    raise ValueError(f"unknown scalar reply kind {kind!r}")
