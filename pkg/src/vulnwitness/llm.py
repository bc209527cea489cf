"""Chat-completion client with record/replay transcripts.

A conversation is an alternating sent/received message list. In ``record``
mode every exchange is persisted (write-temp-then-rename, one JSONL file
per conversation) before the response is returned; in ``replay`` mode the
response comes from the store and no network IO ever happens, which makes
whole pipeline runs reproducible byte-for-byte.
"""

from __future__ import annotations

import json
import os
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

from .prompts import PromptMessage

API_KEY_ENV = "VULNWITNESS_API_KEY"
DEFAULT_API_BASE = "https://api.openai.com/v1"
DEFAULT_MODEL = "gpt-4-turbo"

MODES = ("live", "record", "replay")


class ProviderError(RuntimeError):
    """The chat provider failed after retries."""


class ReplayMissError(KeyError):
    """Replay mode found no recorded exchange for a conversation position."""


@dataclass
class Conversation:
    """Ordered exchange with one model; directions strictly alternate."""

    id: str
    model_name: str = DEFAULT_MODEL
    sampling_params: dict = field(default_factory=dict)
    messages: list[dict] = field(default_factory=list)  # direction/text/timestamp

    def append(self, direction: str, text: str, timestamp: float) -> None:
        expected = "sent" if len(self.messages) % 2 == 0 else "received"
        if direction != expected:
            raise ValueError(
                f"conversation {self.id}: expected {expected!r} message "
                f"at position {len(self.messages)}, got {direction!r}"
            )
        self.messages.append(
            {"direction": direction, "text": text, "timestamp": timestamp}
        )

    @property
    def next_ordinal(self) -> int:
        """1-based ordinal of the next request/response exchange."""
        return len(self.messages) // 2 + 1

    def chat_payload(self) -> list[dict]:
        """Messages in provider wire shape (user/assistant alternation)."""
        out = []
        for msg in self.messages:
            role = "user" if msg["direction"] == "sent" else "assistant"
            out.append({"role": role, "content": msg["text"]})
        return out


def _conversation_filename(conversation_id: str) -> str:
    safe = re.sub(r"[^A-Za-z0-9._-]", "_", conversation_id)
    return f"{safe}.jsonl"


class TranscriptStore:
    """Per-conversation JSONL persistence for exchanges.

    Each line: {"ordinal", "sent", "received", "model", "params"} and a
    "timestamp" recorded at response time so replays can reuse it.

    Replays match by (conversation id, ordinal) so prompt-template tweaks
    don't invalidate a transcript; ``strict=True`` additionally requires
    the outgoing prompt to equal the recorded one, for regression pinning.
    """

    def __init__(self, mode: str, location: str | os.PathLike,
                 strict: bool = False):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        self.mode = mode
        self.strict = strict
        self.location = Path(location)
        if mode == "record":
            self.location.mkdir(parents=True, exist_ok=True)
        self._cache: dict[str, list[dict]] = {}

    def path_for(self, conversation_id: str) -> Path:
        return self.location / _conversation_filename(conversation_id)

    def _load(self, conversation_id: str) -> list[dict]:
        if conversation_id not in self._cache:
            path = self.path_for(conversation_id)
            records = []
            if path.exists():
                with path.open(encoding="utf-8") as fh:
                    records = [json.loads(line) for line in fh if line.strip()]
            self._cache[conversation_id] = records
        return self._cache[conversation_id]

    def lookup(self, conversation_id: str, ordinal: int) -> dict:
        records = self._load(conversation_id)
        for rec in records:
            if rec["ordinal"] == ordinal:
                return rec
        raise ReplayMissError(
            f"no recorded exchange for conversation {conversation_id!r} "
            f"ordinal {ordinal} (have {len(records)})"
        )

    def record(self, conversation_id: str, entry: dict) -> None:
        """Append one exchange atomically (write whole file to temp, rename)."""
        records = self._load(conversation_id)
        records.append(entry)
        path = self.path_for(conversation_id)
        tmp = path.with_suffix(".jsonl.tmp")
        with tmp.open("w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        os.replace(tmp, path)


@dataclass
class ProviderSettings:
    api_base: str = DEFAULT_API_BASE
    model: str = DEFAULT_MODEL
    timeout: float = 120.0
    max_retries: int = 3
    backoff_base: float = 1.0


def _call_provider(conv: Conversation, settings: ProviderSettings) -> str:
    """POST the conversation to an OpenAI-style chat completions endpoint.

    Sampling parameters stay at provider defaults unless the conversation
    carries overrides. The API key is read from the environment and never
    logged.
    """
    import requests

    api_key = os.environ.get(API_KEY_ENV) or os.environ.get("OPENAI_API_KEY")
    if not api_key:
        raise ProviderError(
            f"no API key: set {API_KEY_ENV} (or OPENAI_API_KEY) for live mode"
        )
    payload = {"model": conv.model_name or settings.model,
               "messages": conv.chat_payload()}
    payload.update(conv.sampling_params)

    last_error: Exception | None = None
    for attempt in range(settings.max_retries + 1):
        try:
            resp = requests.post(
                f"{settings.api_base.rstrip('/')}/chat/completions",
                json=payload,
                headers={"Authorization": f"Bearer {api_key}"},
                timeout=settings.timeout,
            )
            if resp.status_code >= 500 or resp.status_code == 429:
                raise ProviderError(f"provider returned {resp.status_code}")
            resp.raise_for_status()
            return resp.json()["choices"][0]["message"]["content"]
        except Exception as exc:  # noqa: BLE001 - retried, then surfaced
            last_error = exc
            if attempt < settings.max_retries:
                time.sleep(settings.backoff_base * (2 ** attempt))
    raise ProviderError(f"chat request failed after retries: {last_error}")


def send(conv: Conversation, msg: PromptMessage, store: TranscriptStore,
         settings: ProviderSettings | None = None,
         transport=None) -> str:
    """Send one message on a conversation and return the response text.

    ``transport`` overrides the HTTP call (callable conv -> text); used by
    tests and any embedding application that brings its own client.
    """
    settings = settings or ProviderSettings()
    ordinal = conv.next_ordinal

    if store.mode == "replay":
        rec = store.lookup(conv.id, ordinal)
        if store.strict and rec["sent"] != msg.text:
            raise ReplayMissError(
                f"conversation {conv.id!r} ordinal {ordinal}: outgoing "
                "prompt differs from the recorded one (strict replay)")
        conv.append("sent", msg.text, rec.get("timestamp", 0.0))
        conv.append("received", rec["received"], rec.get("timestamp", 0.0))
        return rec["received"]

    conv.append("sent", msg.text, time.time())
    caller = transport or (lambda c: _call_provider(c, settings))
    try:
        response = caller(conv)
    except Exception:
        conv.messages.pop()  # keep alternation intact for a retry by caller
        raise
    now = time.time()

    if store.mode == "record":
        store.record(conv.id, {
            "ordinal": ordinal,
            "sent": msg.text,
            "received": response,
            "model": conv.model_name,
            "params": conv.sampling_params,
            "timestamp": now,
        })
    conv.append("received", response, now)
    return response


_FENCE_RE = re.compile(
    r"^\s*```([^\n`]*)\n(.*?)^\s*```\s*$",
    re.MULTILINE | re.DOTALL,
)
_CODE_START_RE = re.compile(
    r"^\s*(package\s+[\w.$]+\s*;|import\s+[\w.$*\s]+;|"
    r"(?:public\s+|final\s+|abstract\s+)*class\s+\w+)",
    re.MULTILINE,
)


def extract_code(response: str) -> str | None:
    """Pull the Java source out of a model response.

    Takes the first fenced block whose info-string is java (or empty); when
    no fence exists, falls back to the longest region that starts at a
    package/import/class line and runs to balanced braces. None when
    neither heuristic matches; absence is a value, not an error.
    """
    for match in _FENCE_RE.finditer(response):
        info = match.group(1).strip().lower()
        if info in ("", "java"):
            return match.group(2).rstrip("\n")

    best: str | None = None
    for m in _CODE_START_RE.finditer(response):
        region = _balanced_region(response, m.start())
        if region and (best is None or len(region) > len(best)):
            best = region
    return best


def _balanced_region(text: str, start: int) -> str | None:
    """Text from start through the brace that balances the first '{'."""
    depth = 0
    seen_open = False
    for i in range(start, len(text)):
        ch = text[i]
        if ch == "{":
            depth += 1
            seen_open = True
        elif ch == "}":
            depth -= 1
            if seen_open and depth == 0:
                return text[start : i + 1]
    return None
