"""Completion-endpoint client with paper-style batching, plus a mock server.

The wire protocol is the OpenAI-compatible completions shape:
POST {endpoint}/v1/completions with {"model", "prompt" (array), "temperature",
"top_p", "max_tokens", "stop"} returning {"choices": [{"index", "text"}]}.
The bundled mock server speaks the same protocol (and the embeddings shape)
fully deterministically for offline end-to-end runs.
"""

from __future__ import annotations

import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Sequence

import requests

from . import embedding as embedding_mod
from .errors import ArgumentError, ContractViolationError, StateError, TransportError
from .prompting import RenderedPrompt

API_KEY_ENV = "FUZZYMT_API_KEY"

MODE_GREEDY = "greedy"
MODE_SAMPLED = "sampled"

DEFAULT_BATCH_SIZE = 20
DEFAULT_TOKEN_MULTIPLIER = 4
DEFAULT_TIMEOUT_SECONDS = 120.0

_trace_lock = threading.Lock()


@dataclass
class DecodingParams:
    mode: str = MODE_GREEDY
    temperature: float = 0.3
    top_p: float = 1.0
    stop_sequences: list[str] = field(default_factory=lambda: ["\n"])
    max_tokens: int | None = None

    def __post_init__(self):
        if self.mode not in (MODE_GREEDY, MODE_SAMPLED):
            raise ArgumentError(f"mode must be greedy|sampled, got {self.mode!r}")
        if self.temperature < 0:
            raise ArgumentError(f"temperature must be >= 0, got {self.temperature}")
        if not (0.0 < self.top_p <= 1.0):
            raise ArgumentError(f"top_p must be in (0,1], got {self.top_p}")
        if not self.stop_sequences:
            raise ArgumentError("stop_sequences must be non-empty")

    @property
    def wire_temperature(self) -> float:
        """Greedy decoding maps to temperature 0 on the wire (argmax)."""
        return 0.0 if self.mode == MODE_GREEDY else self.temperature


@dataclass
class TranslationRequestBatch:
    prompts: list[RenderedPrompt]
    params: DecodingParams
    ids: list[int]


@dataclass(frozen=True)
class TranslationResult:
    id: int
    text: str
    latency_ms: int


def max_source_words(sources: Sequence[str]) -> int:
    return max((len(s.split()) for s in sources), default=0)


def make_batches(
    prompts: Sequence[RenderedPrompt],
    sources: Sequence[str],
    batch_size: int = DEFAULT_BATCH_SIZE,
    token_multiplier: int = DEFAULT_TOKEN_MULTIPLIER,
    params: DecodingParams | None = None,
    ids: Sequence[int] | None = None,
) -> list[TranslationRequestBatch]:
    """Chunk prompts in order; each batch's max_tokens comes from its own sources.

    max_tokens = (largest source word count in the batch) * token_multiplier.
    """
    if len(prompts) != len(sources):
        raise ArgumentError(f"{len(prompts)} prompts vs {len(sources)} sources")
    if batch_size <= 0:
        raise ArgumentError(f"batch_size must be positive, got {batch_size}")
    if token_multiplier <= 0:
        raise ArgumentError(f"token_multiplier must be positive, got {token_multiplier}")
    if ids is None:
        ids = list(range(len(prompts)))
    elif len(ids) != len(prompts):
        raise ArgumentError(f"{len(prompts)} prompts vs {len(ids)} ids")
    template = params if params is not None else DecodingParams()
    batches = []
    for start in range(0, len(prompts), batch_size):
        chunk_prompts = list(prompts[start : start + batch_size])
        chunk_sources = sources[start : start + batch_size]
        chunk_ids = list(ids[start : start + batch_size])
        tokens = max_source_words(chunk_sources) * token_multiplier
        batches.append(
            TranslationRequestBatch(
                prompts=chunk_prompts,
                params=replace(template, max_tokens=tokens),
                ids=chunk_ids,
            )
        )
    return batches


def truncate_at_stop(text: str, stop_sequences: Sequence[str]) -> str:
    cut = len(text)
    for stop in stop_sequences:
        pos = text.find(stop)
        if pos != -1:
            cut = min(cut, pos)
    return text[:cut].strip()


def _write_trace(trace_path: str | Path, record: dict) -> None:
    with _trace_lock:
        with open(trace_path, "a", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def translate_batch(
    batch: TranslationRequestBatch,
    endpoint: str,
    model: str = "default",
    timeout: float = DEFAULT_TIMEOUT_SECONDS,
    max_retries: int = 3,
    backoff_seconds: float = 1.0,
    trace_path: str | Path | None = None,
) -> list[TranslationResult]:
    """Send one batch; returns one result per prompt in prompt order."""
    payload = {
        "model": model,
        "prompt": [p.text for p in batch.prompts],
        "temperature": batch.params.wire_temperature,
        "top_p": batch.params.top_p,
        "max_tokens": batch.params.max_tokens,
        "stop": list(batch.params.stop_sequences),
    }
    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get(API_KEY_ENV)
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    url = endpoint.rstrip("/") + "/v1/completions"

    start = time.monotonic()
    body = None
    last_detail = "no attempt made"
    for attempt in range(1 + max_retries):
        if attempt > 0:
            time.sleep(backoff_seconds * (2 ** (attempt - 1)))
        try:
            resp = requests.post(url, json=payload, headers=headers, timeout=timeout)
        except requests.RequestException as exc:
            last_detail = repr(exc)
            continue
        if resp.status_code != 200:
            last_detail = f"HTTP {resp.status_code}: {resp.text[:200]}"
            continue
        body = resp.json()
        break
    latency_ms = int((time.monotonic() - start) * 1000)
    if trace_path is not None:
        _write_trace(
            trace_path,
            {"url": url, "request": payload, "response": body, "error": None if body else last_detail},
        )
    if body is None:
        raise TransportError(
            f"{url} failed for prompt ids {batch.ids} ({last_detail})", prompt_ids=batch.ids
        )

    choices = body.get("choices")
    if not isinstance(choices, list) or len(choices) != len(batch.prompts):
        raise ContractViolationError(
            f"expected {len(batch.prompts)} choices, got {choices if choices is None else len(choices)}"
        )
    texts = [None] * len(batch.prompts)
    for choice in choices:
        try:
            texts[int(choice["index"])] = str(choice["text"])
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ContractViolationError(f"malformed choice {choice!r}") from exc
    if any(t is None for t in texts):
        raise ContractViolationError("response choices do not cover all prompt indexes")
    return [
        TranslationResult(
            id=pid,
            text=truncate_at_stop(text, batch.params.stop_sequences),
            latency_ms=latency_ms,
        )
        for pid, text in zip(batch.ids, texts)
    ]


def translate_all(
    batches: Sequence[TranslationRequestBatch],
    endpoint: str,
    model: str = "default",
    max_concurrent_batches: int = 2,
    timeout: float = DEFAULT_TIMEOUT_SECONDS,
    max_retries: int = 3,
    backoff_seconds: float = 1.0,
    trace_path: str | Path | None = None,
) -> list[TranslationResult]:
    """Run batches (up to max_concurrent_batches in flight), results in input order."""
    if not batches:
        return []
    run = lambda b: translate_batch(
        b,
        endpoint,
        model=model,
        timeout=timeout,
        max_retries=max_retries,
        backoff_seconds=backoff_seconds,
        trace_path=trace_path,
    )
    if max_concurrent_batches <= 1 or len(batches) == 1:
        parts = [run(b) for b in batches]
    else:
        with ThreadPoolExecutor(max_workers=max_concurrent_batches) as pool:
            parts = list(pool.map(run, batches))
    return [result for part in parts for result in part]


# -- mock server ---------------------------------------------------------------

MOCK_MODES = ("echo-fuzzy", "dictionary", "canned")


def _echo_fuzzy_completion(prompt_text: str) -> str:
    """The last completed target-label line of the prompt, or empty."""
    lines = prompt_text.split("\n")
    stub = lines[-1]
    if not stub.endswith(":"):
        return ""
    prefix = stub + " "
    for line in reversed(lines[:-1]):
        if line.startswith(prefix) and line[len(prefix):].strip():
            return line[len(prefix):]
    return ""


def _dictionary_completion(prompt_text: str, lexicon: dict) -> str:
    lines = prompt_text.split("\n")
    if len(lines) < 2:
        return ""
    query_line = lines[-2]
    source = query_line.split(": ", 1)[1] if ": " in query_line else query_line
    return lexicon.get(source, "")


class _MockState:
    def __init__(self, mode: str, fixtures, embed_dim: int, embed_seed: int):
        self.mode = mode
        self.fixtures = fixtures
        self.embed_dim = embed_dim
        self.embed_seed = embed_seed
        self.cursor = 0
        self.lock = threading.Lock()
        self.request_log: list[dict] = []


class _MockHandler(BaseHTTPRequestHandler):
    state: _MockState

    def log_message(self, fmt, *args):
        pass

    def _reply(self, code: int, payload: dict) -> None:
        raw = json.dumps(payload, ensure_ascii=False).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(raw)))
        self.end_headers()
        self.wfile.write(raw)

    def do_POST(self):
        length = int(self.headers.get("Content-Length", "0"))
        try:
            payload = json.loads(self.rfile.read(length).decode("utf-8"))
        except (ValueError, UnicodeDecodeError):
            self._reply(400, {"error": "invalid JSON"})
            return
        state = self.state
        with state.lock:
            state.request_log.append({"path": self.path, "payload": payload})
        if self.path == "/v1/completions":
            self._completions(payload)
        elif self.path == "/v1/embeddings":
            self._embeddings(payload)
        else:
            self._reply(404, {"error": f"unknown path {self.path}"})

    def _completions(self, payload: dict) -> None:
        prompts = payload.get("prompt", [])
        if isinstance(prompts, str):
            prompts = [prompts]
        state = self.state
        if state.mode == "echo-fuzzy":
            texts = [_echo_fuzzy_completion(p) for p in prompts]
        elif state.mode == "dictionary":
            texts = [_dictionary_completion(p, state.fixtures or {}) for p in prompts]
        else:  # canned
            with state.lock:
                fixtures = state.fixtures or []
                if state.cursor + len(prompts) > len(fixtures):
                    self._reply(400, {"error": "canned fixtures exhausted"})
                    return
                texts = list(fixtures[state.cursor : state.cursor + len(prompts)])
                state.cursor += len(prompts)
        choices = [{"index": i, "text": t} for i, t in enumerate(texts)]
        self._reply(200, {"choices": choices})

    def _embeddings(self, payload: dict) -> None:
        inputs = payload.get("input", [])
        if isinstance(inputs, str):
            inputs = [inputs]
        state = self.state
        data = [
            {
                "index": i,
                "embedding": [
                    float(x)
                    for x in embedding_mod.deterministic_embed(
                        text, state.embed_dim, state.embed_seed
                    )
                ],
            }
            for i, text in enumerate(inputs)
        ]
        self._reply(200, {"data": data})


class MockServerHandle:
    """Running mock endpoint; close() (or the context manager) shuts it down."""

    def __init__(self, server: ThreadingHTTPServer, state: _MockState):
        self._server = server
        self.state = state
        self._thread = threading.Thread(target=server.serve_forever, daemon=True)
        self._thread.start()

    @property
    def endpoint(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def close(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(timeout=5)

    def __enter__(self) -> "MockServerHandle":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def run_mock_server(
    mode: str,
    fixtures=None,
    embed_dim: int = 384,
    embed_seed: int = 0,
    host: str = "127.0.0.1",
    port: int = 0,
) -> MockServerHandle:
    """Start a deterministic completion+embedding endpoint on a local port.

    Modes: echo-fuzzy returns the prompt's last completed target line;
    dictionary maps the query source line through a fixture lexicon; canned
    replays fixture outputs in request order and answers 400 once exhausted.
    """
    if mode not in MOCK_MODES:
        raise ArgumentError(f"mode must be one of {MOCK_MODES}, got {mode!r}")
    state = _MockState(mode, fixtures, embed_dim, embed_seed)
    handler = type("BoundMockHandler", (_MockHandler,), {"state": state})
    try:
        server = ThreadingHTTPServer((host, port), handler)
    except OSError as exc:
        raise StateError(f"cannot bind mock server on {host}:{port}: {exc}") from exc
    return MockServerHandle(server, state)
