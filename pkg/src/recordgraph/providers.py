"""Retriever embeddings, token embeddings and LLM generation.

Every provider has a ``live`` mode speaking OpenAI-style JSON over HTTP and
an offline mode (``deterministic`` for embedders, ``canned`` for the LLM)
that is a pure function of its inputs.

Offline embeddings are sparse sign projections: each lower-cased token is
hashed to a 64-bit seed that picks 16 coordinates with random signs of
magnitude 1/4, so every token vector has unit norm exactly and texts that
share tokens get correlated vectors. A text vector is the count-weighted sum
of its token vectors, L2-normalized.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from functools import lru_cache
from pathlib import Path

import httpx
import numpy as np

from recordgraph.corpus import Chunk, tokenize

log = logging.getLogger(__name__)

DEFAULT_DIM = 768
_NNZ = 16
_MAGNITUDE = 0.25  # 16 * 0.25**2 == 1

SIMULATION_PROMPT = (
    "You are a great questioner of any text, and are adept at asking valuable and "
    "insightful questions. Your goal is to generate 1 summary question for the text "
    "provided below. The generated summary question should try to simulate the tone of "
    "human questions as much as possible, and make sure that the generated question must "
    "be interrogative sentences and a summary question. Important! Please make sure this "
    "text must be a complete and non-redundant answer to the generated summary question. "
    "Please directly output the generated summary question, do not output irrelevant text."
    "\n\nDOCUMENT:\n{document}"
)

RAG_PROMPT = (
    "Refer to the following supporting materials and answer the question with brief but "
    "complete explanations.\n\nSUPPORTING MATERIALS:\n{materials}\n\nQUESTION:\n{question}"
)

_SIM_HEAD = SIMULATION_PROMPT.split("{document}")[0]
_RAG_HEAD = RAG_PROMPT.split("{materials}")[0]
_RAG_SPLIT = "\n\nQUESTION:\n"


class ProviderError(RuntimeError):
    """Base class for provider failures."""


class TransportError(ProviderError):
    """HTTP-level failure. ``status`` is None for connection errors and timeouts."""

    def __init__(self, message: str, status: int | None = None, retriable: bool = True):
        super().__init__(message)
        self.status = status
        self.retriable = retriable


class EmptyResponseError(ProviderError):
    """The model answered, but with no text."""


def stable_hash64(text: str) -> int:
    return int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "little")


@lru_cache(maxsize=1 << 16)
def _token_code(token: str, dim: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(stable_hash64(token))
    idx = rng.choice(dim, size=_NNZ, replace=False)
    signs = np.where(rng.integers(0, 2, size=_NNZ) == 1, _MAGNITUDE, -_MAGNITUDE)
    return idx, signs


def token_vector(token: str, dim: int) -> np.ndarray:
    idx, signs = _token_code(token.lower(), dim)
    v = np.zeros(dim)
    v[idx] = signs
    return v


def hashed_text_vector(text: str, dim: int) -> np.ndarray:
    tokens = tokenize(text).tokens
    if not tokens:
        raise ValueError("cannot embed text without tokens")
    v = np.zeros(dim)
    for tok in tokens:
        idx, signs = _token_code(tok.lower(), dim)
        v[idx] += signs
    norm = np.linalg.norm(v)
    if norm == 0.0:
        # token codes cancelled exactly; fall back to the first token alone
        return token_vector(tokens[0], dim)
    return v / norm


class _HttpEndpoint:
    """POST JSON with bounded retries on retriable failures."""

    def __init__(
        self,
        base_url: str | None,
        api_key: str | None,
        timeout: float = 60.0,
        retries: int = 3,
        backoff: float = 1.0,
        transport: httpx.BaseTransport | None = None,
    ):
        if not base_url:
            raise ValueError("live mode requires a base URL")
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.requests = 0
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def post(self, path: str, payload: dict) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last: TransportError | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            self.requests += 1
            try:
                resp = self._client.post(self.base_url + path, json=payload, headers=headers)
            except httpx.TimeoutException as exc:
                last = TransportError(f"timeout calling {path}: {exc}")
                continue
            except httpx.TransportError as exc:
                last = TransportError(f"cannot reach {self.base_url}{path}: {exc}")
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = TransportError(f"{path} returned HTTP {resp.status_code}", resp.status_code)
                continue
            if resp.status_code >= 400:
                raise TransportError(
                    f"{path} returned HTTP {resp.status_code}: {resp.text[:200]}",
                    resp.status_code,
                    retriable=False,
                )
            try:
                return resp.json()
            except ValueError as exc:
                raise TransportError(f"{path} returned invalid JSON", resp.status_code, False) from exc
        assert last is not None
        log.warning("giving up on %s after %d attempts", path, self.retries + 1)
        raise last


class EmbeddingProvider:
    """Dual-encoder retriever: ``embed_query`` and ``embed_context``.

    In deterministic mode both encoders are the same hashed bag-of-tokens
    map. Vectors are returned raw in live mode (no normalization).
    """

    def __init__(
        self,
        dimension: int = DEFAULT_DIM,
        mode: str = "deterministic",
        *,
        base_url: str | None = None,
        api_key: str | None = None,
        query_model: str = "facebook/contriever",
        context_model: str = "facebook/contriever",
        timeout: float = 60.0,
        retries: int = 3,
        backoff: float = 1.0,
        transport: httpx.BaseTransport | None = None,
    ):
        if mode not in ("deterministic", "live"):
            raise ValueError(f"unknown embedding mode {mode!r}")
        if dimension < _NNZ:
            raise ValueError(f"dimension must be >= {_NNZ}")
        self.dimension = dimension
        self.mode = mode
        self.query_model = query_model
        self.context_model = context_model
        self.calls = 0
        self._http = None
        if mode == "live":
            self._http = _HttpEndpoint(
                base_url or os.environ.get("GOR_EMBED_BASE_URL"),
                api_key or os.environ.get("GOR_EMBED_API_KEY"),
                timeout, retries, backoff, transport,
            )

    def _embed(self, text: str, model: str) -> np.ndarray:
        if not text or not text.strip():
            raise ValueError("cannot embed empty text")
        self.calls += 1
        if self.mode == "deterministic":
            return hashed_text_vector(text, self.dimension)
        data = self._http.post("/embeddings", {"model": model, "input": [text]})
        try:
            vec = np.asarray(data["data"][0]["embedding"], dtype=np.float64)
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError("malformed embeddings response", retriable=False) from exc
        if vec.shape != (self.dimension,) or not np.all(np.isfinite(vec)):
            raise TransportError(
                f"expected {self.dimension} finite values, got shape {vec.shape}", retriable=False
            )
        return vec

    def embed_query(self, q: str) -> np.ndarray:
        return self._embed(q, self.query_model)

    def embed_context(self, c: str) -> np.ndarray:
        return self._embed(c, self.context_model)


class TokenEmbedder:
    """One unit-norm vector per token of ``tokenize(text)``."""

    def __init__(
        self,
        token_dim: int = DEFAULT_DIM,
        mode: str = "deterministic",
        *,
        base_url: str | None = None,
        api_key: str | None = None,
        model: str = "bert-base-uncased",
        timeout: float = 60.0,
        retries: int = 3,
        backoff: float = 1.0,
        transport: httpx.BaseTransport | None = None,
    ):
        if mode not in ("deterministic", "live"):
            raise ValueError(f"unknown embedding mode {mode!r}")
        if token_dim < _NNZ:
            raise ValueError(f"token_dim must be >= {_NNZ}")
        self.token_dim = token_dim
        self.mode = mode
        self.model = model
        self._http = None
        if mode == "live":
            self._http = _HttpEndpoint(
                base_url or os.environ.get("GOR_EMBED_BASE_URL"),
                api_key or os.environ.get("GOR_EMBED_API_KEY"),
                timeout, retries, backoff, transport,
            )

    def embed_tokens(self, text: str) -> np.ndarray:
        tokens = tokenize(text).tokens
        if not tokens:
            return np.zeros((0, self.token_dim))
        if self.mode == "deterministic":
            out = np.zeros((len(tokens), self.token_dim))
            for i, tok in enumerate(tokens):
                idx, signs = _token_code(tok.lower(), self.token_dim)
                out[i, idx] = signs
            return out
        data = self._http.post("/embeddings", {"model": self.model, "input": tokens})
        try:
            rows = np.asarray([d["embedding"] for d in data["data"]], dtype=np.float64)
        except (KeyError, TypeError) as exc:
            raise TransportError("malformed embeddings response", retriable=False) from exc
        if rows.shape != (len(tokens), self.token_dim):
            raise TransportError(f"expected {len(tokens)} token vectors", retriable=False)
        norms = np.linalg.norm(rows, axis=1, keepdims=True)
        if np.any(norms == 0) or not np.all(np.isfinite(rows)):
            raise TransportError("degenerate token vector in response", retriable=False)
        return rows / norms


def _cache_key(prompt: str, temperature: float, salt: int) -> str:
    blob = json.dumps([prompt, float(temperature), int(salt)], ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _canned_response(prompt: str, salt: int) -> str:
    if prompt.startswith(_SIM_HEAD):
        tokens = tokenize(prompt[len(_SIM_HEAD):]).tokens
        span = max(len(tokens) - 8 + 1, 1)
        window = tokens[salt % span : salt % span + 8]
        return f"What does the passage about {' '.join(window)} summarize?"
    if prompt.startswith(_RAG_HEAD) and _RAG_SPLIT in prompt:
        materials = prompt[len(_RAG_HEAD):].rsplit(_RAG_SPLIT, 1)[0]
        return f"SUMMARY[{' '.join(tokenize(materials).tokens[:40])}]"
    return f"RESPONSE[{' '.join(tokenize(prompt).tokens[:40])}]"


class LlmClient:
    """Generative model with a request cache keyed by (prompt, temperature, salt).

    ``salt`` distinguishes repeated samples of the same prompt, so that a
    resampled query-simulation request is a new request rather than a cache
    hit. In canned mode it selects which 8-token window the question is
    built from.
    """

    def __init__(
        self,
        mode: str = "canned",
        *,
        base_url: str | None = None,
        api_key: str | None = None,
        model: str = "meta-llama/Llama-2-7b-chat-hf",
        max_tokens: int = 512,
        cache_path: str | Path | None = None,
        timeout: float = 120.0,
        retries: int = 3,
        backoff: float = 1.0,
        transport: httpx.BaseTransport | None = None,
    ):
        if mode not in ("canned", "live"):
            raise ValueError(f"unknown LLM mode {mode!r}")
        self.mode = mode
        self.model = model
        self.max_tokens = max_tokens
        self.calls = 0
        self.cache: dict[str, str] = {}
        self._lock = threading.Lock()
        self._http = None
        self.cache_path = Path(cache_path) if cache_path else None
        if self.cache_path and self.cache_path.exists():
            self._load_cache()
        if mode == "live":
            self._http = _HttpEndpoint(
                base_url or os.environ.get("GOR_LLM_BASE_URL"),
                api_key or os.environ.get("GOR_LLM_API_KEY"),
                timeout, retries, backoff, transport,
            )

    def _load_cache(self) -> None:
        with open(self.cache_path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    self.cache[rec["key_hash"]] = rec["response"]
                except (ValueError, KeyError):
                    log.warning("skipping unreadable cache line in %s", self.cache_path)

    def _store(self, key: str, prompt: str, temperature: float, response: str) -> None:
        with self._lock:
            self.cache[key] = response
            if self.cache_path is None:
                return
            rec = {
                "key_hash": key,
                "prompt_sha256": hashlib.sha256(prompt.encode("utf-8")).hexdigest(),
                "temperature": float(temperature),
                "response": response,
            }
            self.cache_path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.cache_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")

    def llm_generate(self, prompt: str, temperature: float = 0.0, salt: int = 0) -> str:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        if temperature < 0:
            raise ValueError("temperature must be >= 0")
        key = _cache_key(prompt, temperature, salt)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        self.calls += 1
        if self.mode == "canned":
            text = _canned_response(prompt, salt)
        else:
            text = self._live_generate(prompt, temperature, salt)
        if not text.strip():
            raise EmptyResponseError("model returned an empty response")
        self._store(key, prompt, temperature, text)
        return text

    def _live_generate(self, prompt: str, temperature: float, salt: int) -> str:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": float(temperature),
            "max_tokens": self.max_tokens,
        }
        if salt:
            payload["seed"] = int(salt)
        data = self._http.post("/chat/completions", payload)
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError("malformed chat completion response", retriable=False) from exc
        if not content or not content.strip():
            raise EmptyResponseError("model returned an empty response")
        return content

    def simulate_query(self, chunk: Chunk | str, temperature: float = 0.5, salt: int = 0) -> str:
        """Ask the model for one summary question about ``chunk``."""
        text = chunk.text if isinstance(chunk, Chunk) else chunk
        if not text.strip():
            raise ValueError("chunk text must be non-empty")
        out = self.llm_generate(SIMULATION_PROMPT.format(document=text), temperature, salt)
        out = out.strip().strip("\"'“”").strip()
        if not out:
            raise EmptyResponseError("simulated query is empty after normalization")
        return out


def rag_prompt(materials: list[str], question: str) -> str:
    return RAG_PROMPT.format(materials="\n\n".join(materials), question=question)
