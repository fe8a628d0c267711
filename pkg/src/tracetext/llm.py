"""Remote completion backend speaking the common chat-completions protocol.

Base URL, model id, and API key come from config or the environment. The
client allows a configurable number of concurrent in-flight requests; the
chain for a single document is sequential, but several documents may be
generated at once.
"""

from __future__ import annotations

import os
import threading

import httpx


class GeneratorUnconfigured(Exception):
    """No API key available for the remote backend."""


class RemoteGenerator:
    deterministic = False

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str,
        timeout: float = 30.0,
        max_concurrency: int = 4,
        client: httpx.Client | None = None,
    ):
        self.name = "llm"
        self.model_id = model
        self._semaphore = threading.BoundedSemaphore(max_concurrency)
        self._client = client or httpx.Client(
            base_url=base_url,
            timeout=timeout,
            headers={"Authorization": f"Bearer {api_key}"},
        )

    @classmethod
    def from_config(cls, cfg) -> "RemoteGenerator":
        """Build from an LlmConfig; the key comes from config or its env var."""
        api_key = cfg.api_key or os.environ.get(cfg.api_key_env, "")
        if not api_key:
            raise GeneratorUnconfigured(
                f"no API key: set {cfg.api_key_env} or the llm.api_key config field"
            )
        return cls(
            base_url=cfg.base_url,
            model=cfg.model,
            api_key=api_key,
            timeout=cfg.timeout,
            max_concurrency=cfg.max_concurrency,
        )

    def complete(self, prompt: str) -> str:
        with self._semaphore:
            response = self._client.post(
                "/chat/completions",
                json={
                    "model": self.model_id,
                    "messages": [{"role": "user", "content": prompt}],
                    "temperature": 0.0,
                },
            )
        response.raise_for_status()
        data = response.json()
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise RuntimeError(f"unexpected completion response shape: {exc}") from exc

    def close(self) -> None:
        self._client.close()
