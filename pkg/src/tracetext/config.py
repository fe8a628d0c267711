"""Application configuration: one JSON file shared by the service and CLI.

Every key is optional and merges over the defaults below. The config path
comes from the ``--config`` flag or the ``TRACE_CONFIG`` environment
variable.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .chain import ChainConfig, ChainTemplates
from .offline import AlignConfig
from .resolve import MatchPolicy, load_abbreviations

CONFIG_ENV_VAR = "TRACE_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LlmConfig:
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-4"
    api_key: str | None = None
    api_key_env: str = "TRACE_LLM_API_KEY"
    timeout: float = 30.0
    max_concurrency: int = 4


@dataclass(frozen=True)
class AppConfig:
    host: str = "127.0.0.1"
    port: int = 8787
    store_path: str = "trace_store.jsonl"
    cors_origins: tuple[str, ...] = ("*",)
    max_source_chars: int = 100_000
    align: AlignConfig = field(default_factory=AlignConfig)
    max_retries: int = 2
    min_claim_chars: int = 8
    max_edit_ratio: float = 0.2
    summary_sentences: int | None = None  # None: scale with source length
    template_paths: dict | None = None  # {"summarize": path, "segment": ..., "map": ...}
    abbreviations_path: str | None = None
    llm: LlmConfig = field(default_factory=LlmConfig)

    def match_policy(self) -> MatchPolicy:
        return MatchPolicy(max_edit_ratio=self.max_edit_ratio)

    def chain_config(self, timestamp: str | None = None) -> ChainConfig:
        templates = None
        if self.template_paths:
            try:
                templates = ChainTemplates(
                    summarize=_read(self.template_paths["summarize"]),
                    segment=_read(self.template_paths["segment"]),
                    map=_read(self.template_paths["map"]),
                )
            except (OSError, KeyError, ValueError) as exc:
                raise ConfigError(f"bad chain templates: {exc}") from exc
        return ChainConfig(
            max_retries=self.max_retries,
            min_claim_chars=self.min_claim_chars,
            match_policy=self.match_policy(),
            templates=templates,
            timestamp=timestamp,
        )

    def abbreviations(self):
        if self.abbreviations_path is None:
            return None  # resolver falls back to the packaged list
        try:
            return load_abbreviations(self.abbreviations_path)
        except OSError as exc:
            raise ConfigError(f"cannot read abbreviations file: {exc}") from exc


def _read(path: str) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _take(obj: dict, allowed: set[str], ctx: str) -> None:
    extra = obj.keys() - allowed
    if extra:
        raise ConfigError(f"{ctx}: unknown keys {sorted(extra)}")


def load_config(path: str | None = None) -> AppConfig:
    """Load config from ``path``, the TRACE_CONFIG env var, or defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR) or None
    if path is None:
        return AppConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")

    _take(
        raw,
        {
            "host",
            "port",
            "store_path",
            "cors_origins",
            "max_source_chars",
            "align",
            "chain",
            "abbreviations",
            "llm",
        },
        "config",
    )
    try:
        align_raw = raw.get("align", {})
        _take(align_raw, {"min_score", "max_spans_per_claim", "idf_floor"}, "config.align")
        align = AlignConfig(
            min_score=align_raw.get("min_score", 0.35),
            max_spans_per_claim=align_raw.get("max_spans_per_claim", 2),
            idf_floor=align_raw.get("idf_floor", 0.1),
        )
        chain_raw = raw.get("chain", {})
        _take(
            chain_raw,
            {"max_retries", "min_claim_chars", "max_edit_ratio", "summary_sentences", "templates"},
            "config.chain",
        )
        templates = chain_raw.get("templates")
        if templates is not None:
            _take(templates, {"summarize", "segment", "map"}, "config.chain.templates")
        llm_raw = raw.get("llm", {})
        _take(
            llm_raw,
            {"base_url", "model", "api_key", "api_key_env", "timeout", "max_concurrency"},
            "config.llm",
        )
        llm = LlmConfig(
            base_url=llm_raw.get("base_url", LlmConfig.base_url),
            model=llm_raw.get("model", LlmConfig.model),
            api_key=llm_raw.get("api_key"),
            api_key_env=llm_raw.get("api_key_env", LlmConfig.api_key_env),
            timeout=llm_raw.get("timeout", LlmConfig.timeout),
            max_concurrency=llm_raw.get("max_concurrency", LlmConfig.max_concurrency),
        )
        return AppConfig(
            host=raw.get("host", AppConfig.host),
            port=raw.get("port", AppConfig.port),
            store_path=raw.get("store_path", AppConfig.store_path),
            cors_origins=tuple(raw.get("cors_origins", ("*",))),
            max_source_chars=raw.get("max_source_chars", AppConfig.max_source_chars),
            align=align,
            max_retries=chain_raw.get("max_retries", 2),
            min_claim_chars=chain_raw.get("min_claim_chars", 8),
            max_edit_ratio=chain_raw.get("max_edit_ratio", 0.2),
            summary_sentences=chain_raw.get("summary_sentences"),
            template_paths=templates,
            abbreviations_path=raw.get("abbreviations"),
            llm=llm,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config value: {exc}") from exc
