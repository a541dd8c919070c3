"""Agent configuration with layered precedence: flags > config file > defaults.

The checked-in defaults file carries the operating caps: per-style sub-query
caps, 10 document snippets per search, top-3 passages, greedy decoding, and
unit loss weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

from .errors import ContractError


def load_defaults() -> dict[str, Any]:
    with resources.files("fsmrag").joinpath("defaults.json").open(encoding="utf-8") as f:
        return json.load(f)


@dataclass
class AgentConfig:
    style: str = "hotpotqa"
    subquery_cap: int = 2
    max_docs: int = 10
    top_psg: int = 3
    prompt_mode: str = "zero_shot"
    parse_retries: int = 1

    def __post_init__(self) -> None:
        if self.subquery_cap < 1:
            raise ContractError("subquery_cap must be >= 1")
        if self.max_docs < 1:
            raise ContractError("max_docs must be >= 1")
        if self.top_psg < 1:
            raise ContractError("top_psg must be >= 1")
        if self.prompt_mode not in ("zero_shot", "few_shot"):
            raise ContractError(f"unknown prompt_mode: {self.prompt_mode!r}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "style": self.style,
            "subquery_cap": self.subquery_cap,
            "max_docs": self.max_docs,
            "top_psg": self.top_psg,
            "prompt_mode": self.prompt_mode,
            "parse_retries": self.parse_retries,
        }


def resolve_config(
    style: str | None = None,
    subquery_cap: int | None = None,
    max_docs: int | None = None,
    top_psg: int | None = None,
    prompt_mode: str | None = None,
    config_file: str | Path | None = None,
) -> AgentConfig:
    """Merge explicit values over a config file over the shipped defaults."""
    layers: dict[str, Any] = load_defaults()
    if config_file is not None:
        with open(config_file, encoding="utf-8") as f:
            layers.update(json.load(f))
    chosen_style = style or layers.get("default_style", "hotpotqa")
    caps = layers.get("subquery_caps", {})
    cap = subquery_cap if subquery_cap is not None else layers.get(
        "subquery_cap", caps.get(chosen_style, 2)
    )
    return AgentConfig(
        style=chosen_style,
        subquery_cap=cap,
        max_docs=max_docs if max_docs is not None else layers.get("max_docs", 10),
        top_psg=top_psg if top_psg is not None else layers.get("top_psg", 3),
        prompt_mode=prompt_mode or layers.get("prompt_mode", "zero_shot"),
        parse_retries=layers.get("parse_retries", 1),
    )
