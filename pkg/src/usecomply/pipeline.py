"""Generation, selection and modification of use cases against a provision.

Per-item failures (gateway errors, unparseable output, change lists that do
not apply) are recorded on the item rather than aborting a run; only
configuration problems are fatal.
"""

from __future__ import annotations

import json
import logging
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Protocol

from .editscript import (
    ChangeList,
    ChangeListFormatError,
    EditScriptError,
    apply,
    change_list_from_dict,
    change_list_to_dict,
    diff,
)
from .gateway import GatewayError
from .parsing import OutputParseError, extract_json_object, parse_selection, split_story_lines
from .prompts import (
    PromptTemplate,
    load_template,
    render,
    render_use_case_prompt,
    render_user_stories_prompt,
)
from .usecase import (
    AppDescription,
    LegalProvision,
    UseCase,
    UseCaseError,
    UserStory,
    use_case_from_dict,
    use_case_to_dict,
)

__all__ = [
    "CorpusItem",
    "ItemResult",
    "ModificationResult",
    "PipelineConfig",
    "PipelineError",
    "PipelineRun",
    "SelectionResult",
    "generate_use_case",
    "generate_user_stories",
    "modify",
    "run_pipeline",
    "select",
]

log = logging.getLogger(__name__)

SELECTION_MODES = ("yes_no", "cot")
MODIFICATION_MODES = ("editscript", "direct")


class PipelineError(ValueError):
    """A stage could not produce a usable result."""


class ModificationApplyError(PipelineError):
    def __init__(self, cause: EditScriptError) -> None:
        super().__init__(f"change list does not apply: {cause}")
        self.op = cause.op
        self.cause = cause


class Completer(Protocol):
    def complete(self, req: Any, mode: str | None = None) -> str: ...


@dataclass(frozen=True)
class CorpusItem:
    use_case: UseCase
    app: AppDescription


@dataclass(frozen=True)
class SelectionResult:
    use_case_id: str
    mode: str
    answer: str
    raw_text: str
    rationale: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "use_case_id": self.use_case_id,
            "mode": self.mode,
            "answer": self.answer,
            "rationale": self.rationale,
            "raw_text": self.raw_text,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SelectionResult:
        return cls(
            data["use_case_id"], data["mode"], data["answer"], data["raw_text"], data.get("rationale")
        )


@dataclass(frozen=True)
class ModificationResult:
    use_case_id: str
    mode: str
    original: UseCase
    change_list: ChangeList
    modified: UseCase
    raw_text: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "use_case_id": self.use_case_id,
            "mode": self.mode,
            "change_list": change_list_to_dict(self.change_list),
            "original": use_case_to_dict(self.original),
            "modified": use_case_to_dict(self.modified),
            "raw_text": self.raw_text,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ModificationResult:
        return cls(
            data["use_case_id"],
            data["mode"],
            use_case_from_dict(data["original"]),
            change_list_from_dict(data["change_list"]),
            use_case_from_dict(data["modified"]),
            data["raw_text"],
        )


@dataclass
class PipelineConfig:
    provision_id: str = ""
    selection_mode: str = "cot"
    modification_mode: str = "editscript"
    forced_ids: tuple[str, ...] = ()
    template_dir: str | None = None

    def __post_init__(self) -> None:
        if self.selection_mode not in SELECTION_MODES:
            raise ValueError(f"selection_mode must be one of {SELECTION_MODES}")
        if self.modification_mode not in MODIFICATION_MODES:
            raise ValueError(f"modification_mode must be one of {MODIFICATION_MODES}")
        self.forced_ids = tuple(self.forced_ids)


@dataclass
class ItemResult:
    use_case_id: str
    selection: SelectionResult | None = None
    modification: ModificationResult | None = None
    forced: bool = False
    errors: list[dict[str, str]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "use_case_id": self.use_case_id,
            "selection": self.selection.to_dict() if self.selection else None,
            "forced": self.forced,
            "modification": self.modification.to_dict() if self.modification else None,
            "errors": self.errors,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ItemResult:
        sel = data.get("selection")
        mod = data.get("modification")
        return cls(
            data["use_case_id"],
            SelectionResult.from_dict(sel) if sel else None,
            ModificationResult.from_dict(mod) if mod else None,
            data.get("forced", False),
            list(data.get("errors", [])),
        )


@dataclass
class PipelineRun:
    run_id: str
    created_at: str
    provision_id: str
    model: dict[str, Any]
    gateway_mode: str
    selection_mode: str
    modification_mode: str
    forced_ids: tuple[str, ...]
    items: list[ItemResult]

    @property
    def flagged_ids(self) -> list[str]:
        return [i.use_case_id for i in self.items if i.selection and i.selection.answer == "yes"]

    @property
    def modifications(self) -> list[ModificationResult]:
        return [i.modification for i in self.items if i.modification is not None]

    @property
    def error_count(self) -> int:
        return sum(len(i.errors) for i in self.items)

    def to_dict(self, *, volatile: bool = True) -> dict[str, Any]:
        """JSON form; ``volatile=False`` drops run_id and created_at."""
        out: dict[str, Any] = {}
        if volatile:
            out["run_id"] = self.run_id
            out["created_at"] = self.created_at
        out.update(
            {
                "provision_id": self.provision_id,
                "model": self.model,
                "gateway_mode": self.gateway_mode,
                "selection_mode": self.selection_mode,
                "modification_mode": self.modification_mode,
                "forced_ids": list(self.forced_ids),
                "summary": {
                    "use_cases": len(self.items),
                    "flagged": len(self.flagged_ids),
                    "modified": len(self.modifications),
                    "errors": self.error_count,
                },
                "items": [i.to_dict() for i in self.items],
            }
        )
        return out

    def to_json(self, *, volatile: bool = True) -> str:
        return json.dumps(self.to_dict(volatile=volatile), ensure_ascii=False, indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> PipelineRun:
        return cls(
            data.get("run_id", ""),
            data.get("created_at", ""),
            data["provision_id"],
            data["model"],
            data["gateway_mode"],
            data["selection_mode"],
            data["modification_mode"],
            tuple(data.get("forced_ids", ())),
            [ItemResult.from_dict(i) for i in data["items"]],
        )


class _Templates:
    def __init__(self, directory: str | None) -> None:
        self._dir = directory
        self._cache: dict[str, PromptTemplate] = {}

    def __getitem__(self, name: str) -> PromptTemplate:
        if name not in self._cache:
            self._cache[name] = load_template(name, self._dir)
        return self._cache[name]


_default_templates = _Templates(None)


def _templates(template_dir: str | None) -> _Templates:
    return _default_templates if template_dir is None else _Templates(template_dir)


def generate_user_stories(
    app: AppDescription, gateway: Completer, *, template_dir: str | None = None
) -> list[UserStory]:
    if not app.full_text.strip():
        raise ValueError("app description is empty")
    prompt = render_user_stories_prompt(_templates(template_dir)["user_stories"], app)
    raw = gateway.complete(prompt)
    stories = [UserStory.from_text(line) for line in split_story_lines(raw)]
    if not any(s.parsed for s in stories):
        raise PipelineError("no user stories found in model output")
    return stories


def generate_use_case(
    story: UserStory,
    app: AppDescription,
    gateway: Completer,
    *,
    use_case_id: str = "",
    template_dir: str | None = None,
) -> UseCase:
    if not story.raw_text.strip():
        raise ValueError("user story is empty")
    prompt = render_use_case_prompt(_templates(template_dir)["use_case"], story, app)
    raw = gateway.complete(prompt)
    data = extract_json_object(raw)
    return use_case_from_dict(data, use_case_id)


def select(
    uc: UseCase,
    p: LegalProvision,
    a: AppDescription,
    mode: str,
    gateway: Completer,
    *,
    template_dir: str | None = None,
) -> SelectionResult:
    if mode not in SELECTION_MODES:
        raise ValueError(f"unknown selection mode {mode!r}")
    prompt = render(_templates(template_dir)[mode], p, a, uc)
    raw = gateway.complete(prompt)
    answer, rationale = parse_selection(raw, mode)
    return SelectionResult(uc.id, mode, answer, raw, rationale)


def modify(
    uc: UseCase,
    p: LegalProvision,
    a: AppDescription,
    mode: str,
    gateway: Completer,
    *,
    selection: SelectionResult | None = None,
    force: bool = False,
    template_dir: str | None = None,
) -> ModificationResult:
    """Ask for a compliant version of ``uc``.

    Needs a yes selection for ``uc`` unless ``force`` is set. Both the change
    list and the modified use case are filled in whichever form the model
    was asked for.
    """
    if mode not in MODIFICATION_MODES:
        raise ValueError(f"unknown modification mode {mode!r}")
    if not force and (selection is None or selection.answer != "yes"):
        raise PipelineError(f"use case {uc.id!r} was not selected for modification")

    prompt = render(_templates(template_dir)[f"modification_{mode}"], p, a, uc)
    raw = gateway.complete(prompt)
    data = extract_json_object(raw)
    if mode == "editscript":
        change_list = change_list_from_dict(data)
        try:
            modified = apply(change_list, uc)
        except EditScriptError as exc:
            raise ModificationApplyError(exc) from exc
    else:
        modified = use_case_from_dict(data, uc.id).replace(title=uc.title)
        change_list = diff(uc, modified)
    return ModificationResult(uc.id, mode, uc, change_list, modified, raw)


ITEM_ERRORS = (
    GatewayError,
    OutputParseError,
    UseCaseError,
    ChangeListFormatError,
    PipelineError,
)


def _error(stage: str, exc: Exception) -> dict[str, str]:
    return {"stage": stage, "kind": type(exc).__name__, "message": str(exc)}


def run_pipeline(
    corpus: list[CorpusItem],
    p: LegalProvision,
    config: PipelineConfig,
    gateway: Any,
    *,
    run_id: str | None = None,
) -> PipelineRun:
    if config.provision_id and config.provision_id != p.provision_id:
        raise ValueError(
            f"config names provision {config.provision_id!r} but got {p.provision_id!r}"
        )
    ids = [item.use_case.id for item in corpus]
    if len(set(ids)) != len(ids):
        raise ValueError("corpus contains duplicate use case ids")
    unknown = set(config.forced_ids) - set(ids)
    if unknown:
        raise ValueError(f"forced ids not in corpus: {', '.join(sorted(unknown))}")

    gw_config = getattr(gateway, "config", None)
    permits = getattr(gw_config, "permits", 1)
    tdir = config.template_dir
    forced = set(config.forced_ids)

    def process(item: CorpusItem) -> ItemResult:
        uc = item.use_case
        result = ItemResult(uc.id, forced=uc.id in forced)
        try:
            result.selection = select(uc, p, item.app, config.selection_mode, gateway, template_dir=tdir)
        except ITEM_ERRORS as exc:
            result.errors.append(_error("select", exc))
        wanted = result.forced or (result.selection is not None and result.selection.answer == "yes")
        if wanted:
            try:
                result.modification = modify(
                    uc,
                    p,
                    item.app,
                    config.modification_mode,
                    gateway,
                    selection=result.selection,
                    force=result.forced,
                    template_dir=tdir,
                )
            except ITEM_ERRORS as exc:
                result.errors.append(_error("modify", exc))
        return result

    with ThreadPoolExecutor(max_workers=permits) as pool:
        items = list(pool.map(process, corpus))

    for item in items:
        for err in item.errors:
            log.warning("%s: %s failed: %s", item.use_case_id, err["stage"], err["message"])

    return PipelineRun(
        run_id=run_id or uuid.uuid4().hex,
        created_at=datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
        provision_id=p.provision_id,
        model=gw_config.snapshot() if gw_config is not None else {},
        gateway_mode=getattr(gw_config, "mode", "custom"),
        selection_mode=config.selection_mode,
        modification_mode=config.modification_mode,
        forced_ids=config.forced_ids,
        items=items,
    )
