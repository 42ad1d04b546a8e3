"""Loading corpora from disk.

A manifest is a JSON document::

    {
      "apps": {"<app_id>": "apps/<app_id>.json", ...},
      "use_cases": [{"id": "uc01", "path": "use_cases/uc01.json", "app_id": "..."}, ...]
    }

Relative paths resolve against the manifest's directory. Use case files are
either one JSON object or JSONL with one object per line (each carrying its
own ``id``).
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from .pipeline import CorpusItem
from .usecase import (
    AppDescription,
    LegalProvision,
    MalformedJSONError,
    MissingKeyError,
    UseCase,
    parse_use_case,
)

__all__ = [
    "CorpusError",
    "load_app",
    "load_corpus",
    "load_json",
    "load_provision",
    "load_use_cases",
]


class CorpusError(ValueError):
    pass


def load_json(path: str | Path) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedJSONError(f"{path}: {exc}") from None


def load_provision(path: str | Path) -> LegalProvision:
    return LegalProvision.from_dict(load_json(path))


def load_app(path: str | Path) -> AppDescription:
    data = load_json(path)
    try:
        return AppDescription(data["app_id"], data["full_text"], data["summary"])
    except KeyError as exc:
        raise MissingKeyError(exc.args[0]) from None


def load_use_cases(path: str | Path, use_case_id: str | None = None) -> list[UseCase]:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".jsonl":
        return [parse_use_case(line) for line in text.splitlines() if line.strip()]
    return [parse_use_case(text, use_case_id)]


def load_corpus(manifest_path: str | Path) -> list[CorpusItem]:
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    manifest = load_json(manifest_path)
    apps = {app_id: load_app(root / rel) for app_id, rel in manifest.get("apps", {}).items()}

    items: list[CorpusItem] = []
    for entry in manifest.get("use_cases", []):
        app_id = entry.get("app_id")
        if app_id not in apps:
            raise CorpusError(f"use case {entry.get('id')!r} names unknown app {app_id!r}")
        for uc in load_use_cases(root / entry["path"], entry.get("id")):
            items.append(CorpusItem(uc, apps[app_id]))

    ids = [item.use_case.id for item in items]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise CorpusError(f"duplicate use case ids in corpus: {', '.join(dupes)}")
    return items
