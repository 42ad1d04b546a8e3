"""Rebuild the replay cache for a fixture corpus from its transcripts.

The transcripts file holds the raw model responses keyed by use case id (for
selection and modification) or by story text (for generation). This script
renders the exact prompts the pipeline would send, pairs them with those
responses and writes one ExchangeRecord per line.

    python tools/build_replay_cache.py fixtures/ccpa_optin

Run it again whenever a template, a use case or a transcript changes.
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from usecomply.corpus import load_corpus, load_json, load_provision
from usecomply.gateway import DEFAULT_MODEL, ExchangeRecord, LlmRequest, request_hash
from usecomply.prompts import load_template, render, render_use_case_prompt, render_user_stories_prompt
from usecomply.usecase import UserStory

# fixed so rebuilding yields identical bytes
RECORDED_AT = "2024-06-01T00:00:00Z"


def build_records(root: Path, model: str = DEFAULT_MODEL, temperature: float = 0.0) -> list[ExchangeRecord]:
    corpus = {item.use_case.id: item for item in load_corpus(root / "manifest.json")}
    provision = load_provision(root / "provisions" / "ccpa-7028a.json")
    transcripts = load_json(root / "transcripts.json")
    prompts: list[tuple[str, str]] = []

    for stage in ("selection", "modification"):
        for mode, responses in transcripts[stage].items():
            name = mode if stage == "selection" else f"modification_{mode}"
            template = load_template(name)
            for uid, raw in responses.items():
                item = corpus[uid]
                prompts.append((render(template, provision, item.app, item.use_case), raw))

    gen = transcripts.get("generation")
    if gen:
        app = next(i.app for i in corpus.values() if i.app.app_id == gen["app_id"])
        prompts.append((render_user_stories_prompt(load_template("user_stories"), app), gen["user_stories"]))
        uc_template = load_template("use_case")
        for story, raw in gen["use_cases"].items():
            prompt = render_use_case_prompt(uc_template, UserStory.from_text(story), app)
            prompts.append((prompt, raw))

    records: dict[str, ExchangeRecord] = {}
    for prompt, raw in prompts:
        req = LlmRequest(prompt, model, temperature)
        digest = request_hash(req)
        if digest in records and records[digest].response_text != raw:
            raise SystemExit(f"conflicting transcripts for one prompt ({digest[:12]})")
        records[digest] = ExchangeRecord(digest, req, raw, RECORDED_AT)
    return sorted(records.values(), key=lambda r: r.request_hash)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("fixture_dir", type=Path)
    parser.add_argument("--out", type=Path, help="defaults to <fixture_dir>/cache.jsonl")
    args = parser.parse_args(argv)
    out = args.out or args.fixture_dir / "cache.jsonl"
    records = build_records(args.fixture_dir)
    out.write_text("".join(r.to_json() + "\n" for r in records), encoding="utf-8")
    print(f"wrote {len(records)} records to {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
