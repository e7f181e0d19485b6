"""Versioned prompt assets shipped with the package."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=None)
def load_prompt(name: str) -> str:
    return resources.files("ragloop").joinpath(f"assets/prompts/{name}.txt").read_text("utf-8")
