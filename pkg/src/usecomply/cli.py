"""Command-line entry point: ``usecomply <subcommand> ...``.

Exit codes: 0 success, 1 fatal error, 2 configuration or usage error,
3 finished but some items failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from . import __version__
from .corpus import load_app, load_corpus, load_json, load_provision, load_use_cases
from .editscript import apply, change_list_from_dict, change_list_to_dict, diff
from .evalharness import build_report, load_annotations, render_tables
from .gateway import MODES, Gateway, GatewayConfig, GatewayError
from .pipeline import (
    MODIFICATION_MODES,
    SELECTION_MODES,
    PipelineConfig,
    PipelineRun,
    SelectionResult,
    ITEM_ERRORS,
    generate_use_case,
    generate_user_stories,
    modify,
    run_pipeline,
    select,
)
from .usecase import UseCaseError, use_case_to_dict

log = logging.getLogger("usecomply")

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_CONFIG = 2
EXIT_ITEM_FAILURES = 3


class ConfigError(Exception):
    pass


_PATH_KEYS = ("cache_path", "manifest", "provision")


@dataclass
class CliConfig:
    base_url: str = GatewayConfig.base_url
    model_name: str = GatewayConfig.model_name
    temperature: float = 0.0
    mode: str = "replay"
    cache_path: str | None = None
    permits: int = 4
    max_retries: int = 3
    timeout: float = 60.0
    api_key_env: str = GatewayConfig.api_key_env
    manifest: str | None = None
    provision: str | None = None
    selection_mode: str = "cot"
    modification_mode: str = "editscript"
    forced_ids: list[str] = field(default_factory=list)

    @classmethod
    def load(cls, path: str | None) -> CliConfig:
        if path is None:
            return cls()
        try:
            data = load_json(path)
        except (OSError, UseCaseError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"{path}: unknown config keys {', '.join(sorted(unknown))}")
        base = Path(path).parent
        for key in _PATH_KEYS:
            if data.get(key) is not None:
                data[key] = str(base / data[key])
        return cls(**data)

    def override(self, args: argparse.Namespace) -> None:
        mapping = {
            "mode": "mode",
            "cache": "cache_path",
            "base_url": "base_url",
            "model": "model_name",
            "temperature": "temperature",
            "permits": "permits",
            "manifest": "manifest",
            "provision": "provision",
            "selection_mode": "selection_mode",
            "modification_mode": "modification_mode",
        }
        for arg, key in mapping.items():
            value = getattr(args, arg, None)
            if value is not None:
                setattr(self, key, value)
        if getattr(args, "force", None):
            self.forced_ids = list(dict.fromkeys([*self.forced_ids, *args.force]))

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}")
        if self.mode == "replay":
            if not self.cache_path:
                raise ConfigError("replay mode requires a cache path")
            if not Path(self.cache_path).is_file():
                raise ConfigError(f"replay cache not found: {self.cache_path}")
        elif not os.environ.get(self.api_key_env):
            raise ConfigError(f"{self.mode} mode requires ${self.api_key_env}")
        if self.selection_mode not in SELECTION_MODES:
            raise ConfigError(f"selection mode must be one of {', '.join(SELECTION_MODES)}")
        if self.modification_mode not in MODIFICATION_MODES:
            raise ConfigError(f"modification mode must be one of {', '.join(MODIFICATION_MODES)}")
        if self.permits < 1:
            raise ConfigError("permits must be >= 1")

    def gateway(self) -> Gateway:
        self.validate()
        return Gateway(
            GatewayConfig(
                mode=self.mode,
                base_url=self.base_url,
                model_name=self.model_name,
                temperature=self.temperature,
                cache_path=self.cache_path,
                permits=self.permits,
                max_retries=self.max_retries,
                timeout=self.timeout,
                api_key_env=self.api_key_env,
            )
        )

    def require(self, *keys: str) -> None:
        for key in keys:
            if not getattr(self, key):
                raise ConfigError(f"missing --{key} (or '{key}' in the config file)")


def _write(payload: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(payload)
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(payload, encoding="utf-8")


def _dump(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, indent=2) + "\n"


def _config(args: argparse.Namespace) -> CliConfig:
    cfg = CliConfig.load(args.config)
    cfg.override(args)
    return cfg


def cmd_generate(args: argparse.Namespace) -> int:
    cfg = _config(args)
    gateway = cfg.gateway()
    app = load_app(args.app)
    stories = generate_user_stories(app, gateway)
    use_cases, errors = [], []
    for k, story in enumerate(stories, 1):
        uid = f"{app.app_id}-{k:02d}"
        try:
            uc = generate_use_case(story, app, gateway, use_case_id=uid)
        except ITEM_ERRORS as exc:
            errors.append({"user_story": story.raw_text, "kind": type(exc).__name__, "message": str(exc)})
            continue
        use_cases.append({"user_story": story.raw_text, "use_case": use_case_to_dict(uc)})
    payload = {
        "app_id": app.app_id,
        "user_stories": [
            {"raw_text": s.raw_text, "actor": s.actor, "action": s.action, "goal": s.goal} for s in stories
        ],
        "use_cases": use_cases,
        "errors": errors,
    }
    _write(_dump(payload), args.out)
    return EXIT_ITEM_FAILURES if errors else EXIT_OK


def cmd_select(args: argparse.Namespace) -> int:
    cfg = _config(args)
    cfg.require("manifest", "provision")
    gateway = cfg.gateway()
    corpus = load_corpus(cfg.manifest)
    provision = load_provision(cfg.provision)
    results, errors = [], []
    for item in corpus:
        try:
            res = select(item.use_case, provision, item.app, cfg.selection_mode, gateway)
        except ITEM_ERRORS as exc:
            errors.append({"use_case_id": item.use_case.id, "kind": type(exc).__name__, "message": str(exc)})
            continue
        results.append(res.to_dict())
    payload = {
        "provision_id": provision.provision_id,
        "mode": cfg.selection_mode,
        "results": results,
        "errors": errors,
    }
    _write(_dump(payload), args.out)
    return EXIT_ITEM_FAILURES if errors else EXIT_OK


def cmd_modify(args: argparse.Namespace) -> int:
    cfg = _config(args)
    cfg.require("manifest", "provision")
    gateway = cfg.gateway()
    corpus = load_corpus(cfg.manifest)
    provision = load_provision(cfg.provision)
    selections = {
        r["use_case_id"]: SelectionResult.from_dict(r) for r in load_json(args.selections)["results"]
    }
    forced = set(cfg.forced_ids)
    results, errors = [], []
    for item in corpus:
        uid = item.use_case.id
        sel = selections.get(uid)
        if uid not in forced and (sel is None or sel.answer != "yes"):
            continue
        try:
            res = modify(
                item.use_case, provision, item.app, cfg.modification_mode, gateway,
                selection=sel, force=uid in forced,
            )
        except ITEM_ERRORS as exc:
            errors.append({"use_case_id": uid, "kind": type(exc).__name__, "message": str(exc)})
            continue
        results.append(res.to_dict())
    payload = {
        "provision_id": provision.provision_id,
        "mode": cfg.modification_mode,
        "results": results,
        "errors": errors,
    }
    _write(_dump(payload), args.out)
    return EXIT_ITEM_FAILURES if errors else EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _config(args)
    cfg.require("manifest", "provision")
    gateway = cfg.gateway()
    corpus = load_corpus(cfg.manifest)
    provision = load_provision(cfg.provision)
    try:
        pconfig = PipelineConfig(
            provision_id=provision.provision_id,
            selection_mode=cfg.selection_mode,
            modification_mode=cfg.modification_mode,
            forced_ids=tuple(cfg.forced_ids),
        )
        run = run_pipeline(corpus, provision, pconfig, gateway, run_id=args.run_id)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _write(run.to_json(), args.out)
    log.info(
        "%d use cases, %d flagged, %d modified, %d errors",
        len(run.items), len(run.flagged_ids), len(run.modifications), run.error_count,
    )
    return EXIT_ITEM_FAILURES if run.error_count else EXIT_OK


def cmd_diff(args: argparse.Namespace) -> int:
    original = load_use_cases(args.from_path)[0]
    modified = load_use_cases(args.to_path)[0]
    _write(_dump(change_list_to_dict(diff(original, modified.replace(id=original.id, title=original.title)))), args.out)
    return EXIT_OK


def cmd_apply(args: argparse.Namespace) -> int:
    uc = load_use_cases(args.use_case)[0]
    changes = change_list_from_dict(load_json(args.changes))
    _write(_dump(use_case_to_dict(apply(changes, uc))), args.out)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    runs = [PipelineRun.from_dict(load_json(p)) for p in args.run]
    annotations = load_annotations(args.annotations)
    report = build_report(runs, annotations, strict=args.strict)
    _write(report.to_json(), args.out)
    if args.table:
        _write(render_tables(report.to_dict()), args.table)
    return EXIT_ITEM_FAILURES if report.exclusions else EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    _write(render_tables(load_json(args.report)), args.out)
    return EXIT_OK


def _gateway_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("gateway")
    g.add_argument("--config", help="JSON config file")
    g.add_argument("--mode", choices=MODES, help="gateway mode (default: replay)")
    g.add_argument("--cache", help="exchange cache (JSONL)")
    g.add_argument("--base-url")
    g.add_argument("--model")
    g.add_argument("--temperature", type=float)
    g.add_argument("--permits", type=int, help="concurrent requests")


def _corpus_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", help="corpus manifest")
    p.add_argument("--provision", help="legal provision JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="usecomply",
        description="Screen and modify use cases for compliance with a legal provision.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("generate", help="app description -> user stories -> use cases")
    p.add_argument("--app", required=True)
    p.add_argument("--out")
    _gateway_options(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("select", help="classify use cases against a provision")
    _corpus_options(p)
    p.add_argument("--selection-mode", choices=SELECTION_MODES)
    p.add_argument("--out")
    _gateway_options(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("modify", help="modify flagged use cases")
    _corpus_options(p)
    p.add_argument("--selections", required=True, help="output of 'select'")
    p.add_argument("--modification-mode", choices=MODIFICATION_MODES)
    p.add_argument("--force", action="append", metavar="ID", help="modify regardless of selection")
    p.add_argument("--out")
    _gateway_options(p)
    p.set_defaults(func=cmd_modify)

    p = sub.add_parser("run", help="selection then modification over a corpus")
    _corpus_options(p)
    p.add_argument("--selection-mode", choices=SELECTION_MODES)
    p.add_argument("--modification-mode", choices=MODIFICATION_MODES)
    p.add_argument("--force", action="append", metavar="ID")
    p.add_argument("--run-id")
    p.add_argument("--out")
    _gateway_options(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("diff", help="change list between two use case files")
    p.add_argument("--from", dest="from_path", required=True)
    p.add_argument("--to", dest="to_path", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("apply", help="apply a change list to a use case file")
    p.add_argument("--use-case", required=True)
    p.add_argument("--changes", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_apply)

    p = sub.add_parser("eval", help="score runs against annotations")
    p.add_argument("--run", action="append", required=True, help="pipeline run JSON (repeatable)")
    p.add_argument("--annotations", required=True)
    p.add_argument("--strict", action="store_true", help="fail on annotation problems")
    p.add_argument("--out")
    p.add_argument("--table", help="also write the plain-text tables here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="render tables from an eval report")
    p.add_argument("--report", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def execute(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, GatewayError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


def main() -> None:
    sys.exit(execute())
