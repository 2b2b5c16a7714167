"""OpenAI-compatible chat-completions client with retry, bounded parallelism,
and a persistent on-disk response cache.

The cache is content-addressed: one JSON file per (model, prompt, run_index,
temperature) tuple, named by the hex SHA-256 of the tuple. With a warm cache
every pipeline run is fully offline and deterministic.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import requests

API_KEY_ENV = "CITEFRAME_API_KEY"


class BackendError(Exception):
    """Transport failure that survived all retries, or an unusable response."""


@dataclass(frozen=True)
class BackendConfig:
    endpoint_url: str
    model_name: str
    cache_dir: str
    temperature: float = 0.7
    max_tokens: int = 1024
    request_timeout: float = 120.0
    max_retries: int = 3
    max_parallel: int = 4

    def __post_init__(self):
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


def load_backend_config(path) -> BackendConfig:
    """Read a ``key = value`` config file into a BackendConfig."""
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    try:
        return BackendConfig(
            endpoint_url=values["endpoint_url"],
            model_name=values["model_name"],
            cache_dir=values["cache_dir"],
            temperature=float(values.get("temperature", 0.7)),
            max_tokens=int(values.get("max_tokens", 1024)),
            request_timeout=float(values.get("request_timeout", 120.0)),
            max_retries=int(values.get("max_retries", 3)),
            max_parallel=int(values.get("max_parallel", 4)),
        )
    except KeyError as exc:
        raise ValueError(f"{path}: missing required setting {exc}") from None


def prompt_hash(model_name: str, prompt: str, run_index: int,
                temperature: float) -> str:
    """Deterministic hex cache key for one completion request."""
    payload = json.dumps(
        [model_name, prompt, run_index, repr(float(temperature))],
        ensure_ascii=False, separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _http_transport(config: BackendConfig, prompt: str) -> str:
    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get(API_KEY_ENV)
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    body = {
        "model": config.model_name,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
    }
    resp = requests.post(config.endpoint_url, json=body, headers=headers,
                         timeout=config.request_timeout)
    if resp.status_code != 200:
        raise BackendError(
            f"endpoint returned HTTP {resp.status_code}: {resp.text[:200]}"
        )
    try:
        text = resp.json()["choices"][0]["message"]["content"]
    except (KeyError, IndexError, ValueError) as exc:
        raise BackendError(f"unparseable completion response: {exc}") from exc
    return text


class CompletionClient:
    """Cached, retrying completion client.

    ``transport`` may be swapped for a callable ``(config, prompt) -> text``
    in tests; the cache and retry logic are unaffected.
    """

    def __init__(self, config: BackendConfig, transport=None,
                 backoff_base: float = 1.0):
        self.config = config
        self._transport = transport or _http_transport
        self._backoff_base = backoff_base
        Path(config.cache_dir).mkdir(parents=True, exist_ok=True)

    def _cache_path(self, key: str) -> Path:
        return Path(self.config.cache_dir) / f"{key}.json"

    def complete(self, prompt: str, run_index: int = 0) -> str:
        """Return the raw completion for ``prompt``; cached per
        (model, prompt, run_index, temperature)."""
        if not prompt:
            raise ValueError("prompt must be non-empty")
        key = prompt_hash(self.config.model_name, prompt, run_index,
                          self.config.temperature)
        path = self._cache_path(key)
        if path.exists():
            return json.loads(path.read_text(encoding="utf-8"))["raw_text"]

        last_err = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                time.sleep(self._backoff_base * 2 ** (attempt - 1))
            try:
                text = self._transport(self.config, prompt)
                break
            except (BackendError, requests.RequestException) as exc:
                last_err = exc
        else:
            raise BackendError(
                f"request failed after {self.config.max_retries + 1} attempts: "
                f"{last_err}"
            )
        if not text:
            raise BackendError("endpoint returned an empty completion body")

        record = {
            "prompt_hash": key,
            "raw_text": text,
            "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        }
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(record, ensure_ascii=False), encoding="utf-8")
        tmp.replace(path)
        return text

    def complete_many(self, jobs) -> list[str]:
        """Run many (prompt, run_index) jobs with at most ``max_parallel``
        requests in flight; results come back in job order."""
        jobs = list(jobs)
        if not jobs:
            return []
        with ThreadPoolExecutor(max_workers=self.config.max_parallel) as pool:
            futures = [pool.submit(self.complete, p, r) for p, r in jobs]
            return [f.result() for f in futures]
