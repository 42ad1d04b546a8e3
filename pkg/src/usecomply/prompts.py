"""Prompt templates and rendering.

Templates are plain UTF-8 files under ``templates/`` (or any directory passed
to :func:`load_template`), one per name. Placeholders are ``{name}``; other
braces, such as the JSON answer formats, are left alone.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .usecase import AppDescription, LegalProvision, UseCase, UserStory, serialize_use_case

__all__ = [
    "GENERATION_TEMPLATES",
    "PromptTemplate",
    "SELECTION_TEMPLATES",
    "TemplateError",
    "TEMPLATE_FIELDS",
    "fill",
    "load_template",
    "render",
    "render_use_case_prompt",
    "render_user_stories_prompt",
]

_CHECK_FIELDS = ("legal_text", "app_summary", "use_case")

TEMPLATE_FIELDS: dict[str, tuple[str, ...]] = {
    "yes_no": _CHECK_FIELDS,
    "cot": _CHECK_FIELDS,
    "modification_editscript": _CHECK_FIELDS,
    "modification_direct": _CHECK_FIELDS,
    "user_stories": ("app_description",),
    "use_case": ("app_summary", "user_story"),
}
SELECTION_TEMPLATES = ("yes_no", "cot")
GENERATION_TEMPLATES = ("user_stories", "use_case")

PLACEHOLDER_RE = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str

    @property
    def fields(self) -> tuple[str, ...]:
        return TEMPLATE_FIELDS.get(self.name, _CHECK_FIELDS)

    def placeholders(self) -> list[str]:
        return PLACEHOLDER_RE.findall(self.body)

    def check(self) -> None:
        found = self.placeholders()
        for name in found:
            if name not in self.fields:
                raise TemplateError(f"template {self.name!r}: unknown placeholder {{{name}}}")
        for name in self.fields:
            count = found.count(name)
            if count != 1:
                raise TemplateError(
                    f"template {self.name!r}: placeholder {{{name}}} appears {count} times"
                )


def load_template(name: str, directory: str | Path | None = None) -> PromptTemplate:
    if directory is None:
        body = resources.files("usecomply").joinpath("templates", f"{name}.txt").read_text("utf-8")
    else:
        body = Path(directory, f"{name}.txt").read_text("utf-8")
    if body.endswith("\n"):
        body = body[:-1]
    template = PromptTemplate(name, body)
    template.check()
    return template


def fill(template: PromptTemplate, **values: str) -> str:
    """Substitute placeholders in one pass; injected text is never rescanned."""
    template.check()
    missing = [f for f in template.fields if f not in values]
    if missing:
        raise TemplateError(f"template {template.name!r}: no value for {', '.join(missing)}")
    return PLACEHOLDER_RE.sub(lambda m: values[m.group(1)], template.body)


def render(t: PromptTemplate, p: LegalProvision, a: AppDescription, uc: UseCase) -> str:
    if not p.text.strip():
        raise TemplateError(f"provision {p.provision_id!r} has empty text")
    return fill(
        t,
        legal_text=p.text,
        app_summary=a.summary,
        use_case=serialize_use_case(uc, metadata=False),
    )


def render_user_stories_prompt(t: PromptTemplate, a: AppDescription) -> str:
    return fill(t, app_description=a.full_text)


def render_use_case_prompt(t: PromptTemplate, story: UserStory, a: AppDescription) -> str:
    return fill(t, app_summary=a.summary, user_story=story.raw_text)
