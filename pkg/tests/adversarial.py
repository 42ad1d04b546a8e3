"""Run the adversarial model-output fixtures through the parsers."""

import json
from pathlib import Path

from usecomply import editscript, parsing, usecase

PATH = Path(__file__).resolve().parent.parent / "fixtures" / "adversarial" / "outputs.json"

TYPED_ERRORS = (parsing.OutputParseError, editscript.ChangeListFormatError, usecase.UseCaseError)
ERROR_CLASSES = {
    cls.__name__: cls
    for module in (parsing, editscript, usecase)
    for cls in vars(module).values()
    if isinstance(cls, type) and issubclass(cls, TYPED_ERRORS)
}


def load_cases() -> list[dict]:
    return json.loads(PATH.read_text(encoding="utf-8"))


def interpret(kind: str, raw: str) -> dict:
    if kind in ("yes_no", "cot"):
        answer, rationale = parsing.parse_selection(raw, kind)
        out = {"answer": answer}
        if rationale is not None:
            out["rationale"] = rationale
        return out
    if kind == "change_list":
        return {"ops": len(editscript.change_list_from_dict(parsing.extract_json_object(raw)))}
    if kind == "use_case":
        return {"flow": len(usecase.use_case_from_dict(parsing.extract_json_object(raw)).flow)}
    raise ValueError(f"unknown fixture kind {kind!r}")


def check(case: dict) -> tuple[bool, str]:
    """True when the parse matches or the expected typed error is raised."""
    expect = case["expect"]
    try:
        got = interpret(case["kind"], case["raw"])
    except TYPED_ERRORS as exc:
        wanted = ERROR_CLASSES.get(expect.get("error", ""))
        if wanted is not None and isinstance(exc, wanted):
            return True, type(exc).__name__
        return False, f"unexpected {type(exc).__name__}: {exc}"
    except Exception as exc:  # a crash, which the criterion forbids
        return False, f"crash {type(exc).__name__}: {exc}"
    if "error" in expect:
        return False, f"expected {expect['error']}, parsed {got}"
    return got == expect, str(got)
