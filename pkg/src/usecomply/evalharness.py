"""Scoring pipeline runs against expert annotations.

Selection is scored as plain accuracy (correct answers over all answers).
Modifications are scored by BLEU, ROUGE-1 and ROUGE-L between the
serialized predicted and ground-truth change lists, averaged within groups
keyed by the annotators' (non_violative, self_consistent) labels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from statistics import fmean
from typing import Any

from .editscript import (
    ChangeList,
    ChangeListFormatError,
    EditScriptError,
    apply,
    canonicalize,
    change_list_from_dict,
    change_list_to_dict,
    serialize_change_list,
)
from .pipeline import PipelineRun, SelectionResult
from .textmetrics import bleu, rouge1, rougeL, tokenize

__all__ = [
    "AnnotationError",
    "AnnotationRecord",
    "EvalReport",
    "build_report",
    "load_annotations",
    "render_tables",
    "selection_accuracy",
    "similarity_report",
]

MODE_LABELS = {"yes_no": "Yes/No Prompting", "cot": "CoT Prompting"}


class AnnotationError(ValueError):
    pass


@dataclass(frozen=True)
class AnnotationRecord:
    use_case_id: str
    relevant: str
    ground_truth_change_list: ChangeList | None = None
    non_violative: bool | None = None
    self_consistent: bool | None = None

    def __post_init__(self) -> None:
        if self.relevant not in ("yes", "no"):
            raise AnnotationError(f"{self.use_case_id}: relevant must be 'yes' or 'no'")
        if self.relevant == "yes" and self.ground_truth_change_list is None:
            raise AnnotationError(f"{self.use_case_id}: relevant use case needs a ground truth change list")
        for name in ("non_violative", "self_consistent"):
            value = getattr(self, name)
            if value is not None and not isinstance(value, bool):
                raise AnnotationError(f"{self.use_case_id}: {name} must be a boolean")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> AnnotationRecord:
        try:
            uid = data["use_case_id"]
            relevant = str(data["relevant"]).strip().casefold()
        except KeyError as exc:
            raise AnnotationError(f"annotation missing {exc.args[0]!r}") from None
        gt = data.get("ground_truth_change_list")
        try:
            gt_list = change_list_from_dict(gt) if gt is not None else None
        except ChangeListFormatError as exc:
            raise AnnotationError(f"{uid}: {exc}") from None
        return cls(uid, relevant, gt_list, data.get("non_violative"), data.get("self_consistent"))

    def to_dict(self) -> dict[str, Any]:
        gt = self.ground_truth_change_list
        return {
            "use_case_id": self.use_case_id,
            "relevant": self.relevant,
            "ground_truth_change_list": change_list_to_dict(gt) if gt is not None else None,
            "non_violative": self.non_violative,
            "self_consistent": self.self_consistent,
        }


def load_annotations(path: str | Path) -> list[AnnotationRecord]:
    records = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(AnnotationRecord.from_dict(json.loads(line)))
            except json.JSONDecodeError as exc:
                raise AnnotationError(f"{path}:{lineno}: {exc}") from None
            except AnnotationError as exc:
                raise AnnotationError(f"{path}:{lineno}: {exc}") from None
    return records


def _index(annotations: list[AnnotationRecord]) -> dict[str, AnnotationRecord]:
    out: dict[str, AnnotationRecord] = {}
    for a in annotations:
        if a.use_case_id in out:
            raise AnnotationError(f"duplicate annotation for {a.use_case_id!r}")
        out[a.use_case_id] = a
    return out


def _selection_counts(
    predictions: list[SelectionResult], annotations: list[AnnotationRecord]
) -> dict[str, int]:
    index = _index(annotations)
    seen: set[str] = set()
    counts = {"total": 0, "correct": 0, "flagged": 0, "flagged_correct": 0}
    for pred in predictions:
        if pred.use_case_id in seen:
            raise AnnotationError(f"duplicate prediction for {pred.use_case_id!r}")
        seen.add(pred.use_case_id)
        truth = index.get(pred.use_case_id)
        if truth is None:
            raise AnnotationError(f"no annotation for {pred.use_case_id!r}")
        hit = pred.answer == truth.relevant
        counts["total"] += 1
        counts["correct"] += hit
        if pred.answer == "yes":
            counts["flagged"] += 1
            counts["flagged_correct"] += hit
    return counts


def selection_accuracy(
    predictions: list[SelectionResult], annotations: list[AnnotationRecord]
) -> float:
    counts = _selection_counts(predictions, annotations)
    if counts["total"] == 0:
        raise AnnotationError("no predictions to score")
    return counts["correct"] / counts["total"]


@dataclass(frozen=True)
class InstanceScore:
    use_case_id: str
    non_violative: bool
    self_consistent: bool
    bleu: float
    rouge1: dict[str, float]
    rougeL: dict[str, float]


def _r4(x: float) -> float:
    return round(x, 4)


@dataclass
class EvalReport:
    selection: dict[str, dict[str, Any]]
    instances: list[InstanceScore]
    exclusions: list[dict[str, str]]

    @property
    def groups(self) -> list[dict[str, Any]]:
        keyed: dict[tuple[bool, bool], list[InstanceScore]] = {}
        for inst in self.instances:
            keyed.setdefault((inst.non_violative, inst.self_consistent), []).append(inst)
        out = []
        # Table layout: (yes, yes) first, then (yes, no), (no, yes), (no, no)
        for key in sorted(keyed, reverse=True):
            members = keyed[key]
            out.append(
                {
                    "non_violative": key[0],
                    "self_consistent": key[1],
                    "count": len(members),
                    "bleu": fmean(m.bleu for m in members),
                    "rouge1": {
                        k: fmean(m.rouge1[k] for m in members) for k in ("precision", "recall", "f1")
                    },
                    "rougeL": {
                        k: fmean(m.rougeL[k] for m in members) for k in ("precision", "recall", "f1")
                    },
                }
            )
        return out

    def to_dict(self) -> dict[str, Any]:
        def rounded(obj: Any) -> Any:
            if isinstance(obj, float):
                return _r4(obj)
            if isinstance(obj, dict):
                return {k: rounded(v) for k, v in obj.items()}
            if isinstance(obj, list):
                return [rounded(v) for v in obj]
            return obj

        return rounded(
            {
                "selection": self.selection,
                "similarity": {
                    "groups": self.groups,
                    "instances": [
                        {
                            "use_case_id": i.use_case_id,
                            "non_violative": i.non_violative,
                            "self_consistent": i.self_consistent,
                            "bleu": i.bleu,
                            "rouge1": i.rouge1,
                            "rougeL": i.rougeL,
                        }
                        for i in self.instances
                    ],
                },
                "exclusions": self.exclusions,
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2) + "\n"


def _score(use_case_id: str, predicted: ChangeList, truth: ChangeList, nv: bool, sc: bool) -> InstanceScore:
    cand = tokenize(serialize_change_list(canonicalize(predicted)))
    ref = tokenize(serialize_change_list(canonicalize(truth)))
    return InstanceScore(
        use_case_id, nv, sc, bleu(cand, ref), rouge1(cand, ref).as_dict(), rougeL(cand, ref).as_dict()
    )


def similarity_report(
    run: PipelineRun, annotations: list[AnnotationRecord], *, strict: bool = False
) -> EvalReport:
    """Score every modification in ``run``.

    Modifications whose annotation is missing, incomplete or whose ground
    truth does not apply to the original use case go to ``exclusions``; with
    ``strict`` they raise :class:`AnnotationError` instead.
    """
    index = _index(annotations)
    instances: list[InstanceScore] = []
    exclusions: list[dict[str, str]] = []

    def exclude(uid: str, reason: str) -> None:
        if strict:
            raise AnnotationError(f"{uid}: {reason}")
        exclusions.append({"use_case_id": uid, "reason": reason})

    run_ids = {item.use_case_id for item in run.items}
    for item in run.items:
        for err in item.errors:
            exclusions.append(
                {"use_case_id": item.use_case_id, "reason": f"{err['stage']} failed: {err['kind']}"}
            )

    for mod in run.modifications:
        truth = index.get(mod.use_case_id)
        if truth is None:
            exclude(mod.use_case_id, "no annotation")
            continue
        if truth.ground_truth_change_list is None:
            exclude(mod.use_case_id, "annotation has no ground truth change list")
            continue
        if truth.non_violative is None or truth.self_consistent is None:
            exclude(mod.use_case_id, "annotation lacks non_violative/self_consistent labels")
            continue
        try:
            apply(truth.ground_truth_change_list, mod.original)
        except EditScriptError as exc:
            exclude(mod.use_case_id, f"ground truth does not apply: {exc}")
            continue
        instances.append(
            _score(
                mod.use_case_id,
                mod.change_list,
                truth.ground_truth_change_list,
                truth.non_violative,
                truth.self_consistent,
            )
        )

    for uid in sorted(index):
        if uid not in run_ids:
            continue
        a = index[uid]
        has_mod = any(m.use_case_id == uid for m in run.modifications)
        if not has_mod and (a.non_violative is not None or a.self_consistent is not None):
            exclude(uid, "labels given but run has no modification")

    return EvalReport({}, instances, exclusions)


def build_report(
    runs: list[PipelineRun], annotations: list[AnnotationRecord], *, strict: bool = False
) -> EvalReport:
    """Selection accuracy for every run, similarity for the first run."""
    if not runs:
        raise ValueError("need at least one run")
    report = similarity_report(runs[0], annotations, strict=strict)
    for run in runs:
        preds = [i.selection for i in run.items if i.selection is not None]
        counts = _selection_counts(preds, annotations)
        missing = len(run.items) - len(preds)
        report.selection[run.selection_mode] = {
            "accuracy": counts["correct"] / counts["total"] if counts["total"] else None,
            **counts,
            "unanswered": missing,
        }
    return report


def _fmt(x: float | None) -> str:
    return "-" if x is None else f"{x:.2f}"


def render_tables(report: dict[str, Any]) -> str:
    """Plain-text selection and similarity tables from a report dict."""
    lines = ["Selection accuracy", f"{'Technique':<20}{'Accuracy':>10}"]
    for mode in ("yes_no", "cot"):
        if mode in report["selection"]:
            acc = report["selection"][mode]["accuracy"]
            cell = "-" if acc is None else f"{acc * 100:.1f}%"
            lines.append(f"{MODE_LABELS[mode]:<20}{cell:>10}")
    lines += [
        "",
        "Change-list similarity by annotation group",
        f"{'Non-violative':<15}{'Self-Consistent':<17}{'N':>3}{'BLEU':>8}{'ROUGE-1':>9}{'ROUGE-L':>9}",
    ]
    for g in report["similarity"]["groups"]:
        mark = lambda b: "yes" if b else "no"  # noqa: E731
        lines.append(
            f"{mark(g['non_violative']):<15}{mark(g['self_consistent']):<17}{g['count']:>3}"
            f"{_fmt(g['bleu']):>8}{_fmt(g['rouge1']['f1']):>9}{_fmt(g['rougeL']['f1']):>9}"
        )
    if report.get("exclusions"):
        lines += ["", "Exclusions"]
        lines += [f"  {e['use_case_id']}: {e['reason']}" for e in report["exclusions"]]
    return "\n".join(lines) + "\n"
