"""Runtime configuration from a JSON file plus environment variables.

Secrets never live in the file: only the names of environment variables do.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

from .errors import InvalidParameter


@dataclass(frozen=True)
class AppConfig:
    index_dir: str = "index"
    # chat model endpoint (OpenAI-compatible)
    llm_base_url: str | None = None
    llm_model: str | None = None
    llm_api_key_env: str = "RAGLOOP_API_KEY"
    temperature: float | None = None
    top_p: float | None = None
    # embedding endpoint; unset means the built-in deterministic embedder
    embed_base_url: str | None = None
    embed_model: str | None = None
    embed_dimension: int = 64
    embed_api_key_env: str = "RAGLOOP_EMBED_API_KEY"
    # session defaults
    w_s: float = 0.7
    w_e: float = 0.3
    scale_n: int = 3
    # loop caps
    max_turns: int = 7
    max_iterations: int = 12
    max_workers: int = 1

    def llm_api_key(self) -> str | None:
        return os.environ.get(self.llm_api_key_env)

    def embed_api_key(self) -> str | None:
        return os.environ.get(self.embed_api_key_env)


def load_config(path: str | None) -> AppConfig:
    if path is None:
        return AppConfig()
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidParameter(f"config file is not valid JSON: {exc.msg}")
    if not isinstance(data, dict):
        raise InvalidParameter("config file must hold a JSON object")
    known = {f.name for f in dataclasses.fields(AppConfig)}
    unknown = set(data) - known
    if unknown:
        raise InvalidParameter(f"unknown config keys: {', '.join(sorted(unknown))}")
    return AppConfig(**data)
