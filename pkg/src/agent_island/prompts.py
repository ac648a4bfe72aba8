"""Prompt text assets.

Templates live as ``templates/<name>.txt`` and use ``string.Template``
placeholders (``$round``, ``$candidates`` ...). A custom directory can
override any subset of them.
"""

from __future__ import annotations

import os
from importlib import resources
from pathlib import Path
from string import Template

TEMPLATE_NAMES = (
    "rules", "memory_header", "news_header", "sidebar_select", "sidebar_message",
    "pitch", "elimination_vote", "memory", "final_pitch", "winner_vote", "retry",
    "notice_sidebar", "notice_pitch", "notice_final_pitch", "notice_own_vote",
    "notice_elimination",
)


class Templates:
    def __init__(self, override_dir: str | os.PathLike | None = None):
        base = resources.files(__package__) / "templates"
        self._templates: dict[str, Template] = {}
        for name in TEMPLATE_NAMES:
            text = (base / f"{name}.txt").read_text(encoding="utf-8")
            if override_dir is not None:
                custom = Path(override_dir) / f"{name}.txt"
                if custom.exists():
                    text = custom.read_text(encoding="utf-8")
            self._templates[name] = Template(text.rstrip("\n"))

    def render(self, name: str, **values: object) -> str:
        return self._templates[name].substitute(values)


_default: Templates | None = None


def default_templates() -> Templates:
    global _default
    if _default is None:
        _default = Templates()
    return _default
