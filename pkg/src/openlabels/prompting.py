"""Prompt templates live in editable text files.

A template file has two blocks separated by a line containing only ``---``:
the system prompt, then the user prompt with ``str.format`` placeholders
(``{objective}``, ``{document}``, ``{chunk}``, ``{labels}``, ...). A config
may point at a directory of overrides; files found there shadow the stock
templates shipped with the package.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from openlabels.errors import ConfigError

TEMPLATE_NAMES = (
    "keyphrase_extraction",
    "label_synthesis",
    "dominance_probe",
    "pair_judge",
)


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    system: str
    user: str

    def render(self, **values: str) -> str:
        try:
            return self.user.format(**values)
        except (KeyError, IndexError) as exc:
            raise ConfigError(f"template {self.name!r} missing placeholder value: {exc}") from exc


def _parse(name: str, raw: str) -> PromptTemplate:
    lines = raw.split("\n")
    try:
        sep = lines.index("---")
    except ValueError:
        raise ConfigError(f"template {name!r} lacks a '---' system/user separator")
    system = "\n".join(lines[:sep]).strip()
    user = "\n".join(lines[sep + 1 :]).strip()
    if not user:
        raise ConfigError(f"template {name!r} has an empty user block")
    return PromptTemplate(name=name, system=system, user=user)


def load_template(name: str, overrides_dir: str | Path | None = None) -> PromptTemplate:
    if name not in TEMPLATE_NAMES:
        raise ConfigError(f"unknown template {name!r}; valid: {TEMPLATE_NAMES}")
    if overrides_dir is not None:
        candidate = Path(overrides_dir) / f"{name}.txt"
        if candidate.exists():
            return _parse(name, candidate.read_text(encoding="utf-8"))
    raw = (
        resources.files("openlabels")
        .joinpath("prompts", f"{name}.txt")
        .read_text(encoding="utf-8")
    )
    return _parse(name, raw)
