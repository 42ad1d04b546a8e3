"""Change lists over use cases: the six edit operations, apply, diff.

Flow indices are always relative to the flow as it stands when the
operation runs, so a change list is applied strictly left to right with no
shadow copy of the original.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Iterator
from dataclasses import dataclass
from typing import Any

from .lcs import lcs_pairs
from .usecase import UseCase, validate

__all__ = [
    "OP_NAMES",
    "ChangeList",
    "ChangeListFormatError",
    "DuplicateConditionError",
    "EditOp",
    "EditScriptError",
    "IndexOutOfRangeError",
    "InvalidResultError",
    "MissingConditionError",
    "apply",
    "canonicalize",
    "change_list_from_dict",
    "change_list_to_dict",
    "diff",
    "insert_flow",
    "insert_post",
    "insert_pre",
    "parse_change_list",
    "remove_flow",
    "remove_post",
    "remove_pre",
    "serialize_change_list",
]

CONDITION_OPS = ("insert_pre", "remove_pre", "insert_post", "remove_post")
FLOW_OPS = ("insert_flow", "remove_flow")
OP_NAMES = ("insert_pre", "remove_pre", "insert_flow", "remove_flow", "insert_post", "remove_post")

# canonical class order
_RANK = {
    "remove_pre": 0,
    "insert_pre": 1,
    "remove_flow": 2,
    "insert_flow": 3,
    "remove_post": 4,
    "insert_post": 5,
}


class EditScriptError(ValueError):
    """Raised when a change list cannot be applied."""

    def __init__(self, message: str, op: EditOp | None = None, position: int | None = None) -> None:
        if op is not None:
            where = f"op {position}" if position is not None else "op"
            message = f"{where} {op}: {message}"
        super().__init__(message)
        self.op = op
        self.position = position


class IndexOutOfRangeError(EditScriptError):
    pass


class MissingConditionError(EditScriptError):
    pass


class DuplicateConditionError(EditScriptError):
    pass


class InvalidResultError(EditScriptError):
    def __init__(self, violations) -> None:
        super().__init__("result is not a valid use case: " + "; ".join(map(str, violations)))
        self.violations = violations


class ChangeListFormatError(ValueError):
    """The JSON form of a change list is malformed."""


@dataclass(frozen=True)
class EditOp:
    op: str
    text: str | None = None
    at_index: int | None = None

    def __post_init__(self) -> None:
        if self.op not in _RANK:
            raise ValueError(f"unknown edit operation {self.op!r}")
        if self.op == "remove_flow":
            if self.text is not None:
                raise ValueError("remove_flow takes no text")
        elif not isinstance(self.text, str) or not self.text.strip():
            raise ValueError(f"{self.op} needs a non-empty text")
        if self.op in FLOW_OPS:
            if isinstance(self.at_index, bool) or not isinstance(self.at_index, int):
                raise ValueError(f"{self.op} needs an integer at_index")
            if self.at_index < 0:
                raise ValueError(f"{self.op} at_index must be >= 0, got {self.at_index}")
        elif self.at_index is not None:
            raise ValueError(f"{self.op} takes no at_index")

    def __str__(self) -> str:
        args = []
        if self.at_index is not None:
            args.append(str(self.at_index))
        if self.text is not None:
            args.append(repr(self.text))
        return f"{self.op}({', '.join(args)})"

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"op": self.op}
        if self.at_index is not None:
            out["at_index"] = self.at_index
        if self.text is not None:
            out["text"] = self.text
        return out


def insert_pre(condition: str) -> EditOp:
    return EditOp("insert_pre", condition)


def remove_pre(condition: str) -> EditOp:
    return EditOp("remove_pre", condition)


def insert_flow(at_index: int, step: str) -> EditOp:
    return EditOp("insert_flow", step, at_index)


def remove_flow(at_index: int) -> EditOp:
    return EditOp("remove_flow", None, at_index)


def insert_post(condition: str) -> EditOp:
    return EditOp("insert_post", condition)


def remove_post(condition: str) -> EditOp:
    return EditOp("remove_post", condition)


@dataclass(frozen=True)
class ChangeList:
    ops: tuple[EditOp, ...] = ()

    def __init__(self, ops: Iterable[EditOp] = ()) -> None:
        object.__setattr__(self, "ops", tuple(ops))

    def __iter__(self) -> Iterator[EditOp]:
        return iter(self.ops)

    def __len__(self) -> int:
        return len(self.ops)

    def __bool__(self) -> bool:
        return bool(self.ops)


def apply(cl: ChangeList | Iterable[EditOp], uc: UseCase) -> UseCase:
    pre = list(uc.preconditions)
    flow = list(uc.flow)
    post = list(uc.postconditions)

    for pos, op in enumerate(cl):
        if op.op in FLOW_OPS:
            i = op.at_index
            if op.op == "insert_flow":
                if i > len(flow):
                    raise IndexOutOfRangeError(
                        f"insert index {i} beyond flow of length {len(flow)}", op, pos
                    )
                flow.insert(i, op.text)
            else:
                if i >= len(flow):
                    raise IndexOutOfRangeError(
                        f"remove index {i} beyond flow of length {len(flow)}", op, pos
                    )
                del flow[i]
            continue

        target = pre if op.op.endswith("_pre") else post
        if op.op.startswith("insert"):
            if op.text in target:
                raise DuplicateConditionError("condition already present", op, pos)
            target.append(op.text)
        else:
            try:
                target.remove(op.text)
            except ValueError:
                raise MissingConditionError("condition not present", op, pos) from None

    result = uc.replace(preconditions=pre, flow=flow, postconditions=post)
    violations = validate(result)
    if violations:
        raise InvalidResultError(violations)
    return result


def _diff_conditions(old: tuple[str, ...], new: tuple[str, ...], suffix: str) -> list[EditOp]:
    new_set, old_set = set(new), set(old)
    ops = [EditOp("remove_" + suffix, c) for c in old if c not in new_set]
    ops += [EditOp("insert_" + suffix, c) for c in new if c not in old_set]
    return ops


def diff(original: UseCase, modified: UseCase) -> ChangeList:
    """Recover a change list turning ``original`` into ``modified``.

    Conditions are compared as sets. The flow is aligned with one maximal
    common subsequence: unmatched original steps are removed from the
    highest index down, then unmatched target steps are inserted in
    ascending target position.
    """
    ops = _diff_conditions(original.preconditions, modified.preconditions, "pre")

    pairs = lcs_pairs(original.flow, modified.flow)
    kept_src = {i for i, _ in pairs}
    kept_dst = {j for _, j in pairs}
    ops += [remove_flow(i) for i in reversed(range(len(original.flow))) if i not in kept_src]
    ops += [
        insert_flow(j, step) for j, step in enumerate(modified.flow) if j not in kept_dst
    ]

    ops += _diff_conditions(original.postconditions, modified.postconditions, "post")
    return ChangeList(ops)


def _canonical_key(op: EditOp) -> tuple:
    rank = _RANK[op.op]
    if op.op == "remove_flow":
        return (rank, -op.at_index)
    if op.op == "insert_flow":
        return (rank, op.at_index)
    return (rank, op.text)


def canonicalize(cl: ChangeList | Iterable[EditOp]) -> ChangeList:
    """Reorder ops into class order with a stable per-class sort.

    Conditions sort lexicographically, flow removals by descending index and
    flow insertions by ascending index. Flow ops sharing an index keep their
    relative order.
    """
    return ChangeList(sorted(cl, key=_canonical_key))


def serialize_change_list(cl: ChangeList | Iterable[EditOp]) -> str:
    lines = []
    for op in canonicalize(cl):
        parts = [op.op]
        if op.at_index is not None:
            parts.append(str(op.at_index))
        if op.text is not None:
            parts.append(op.text)
        lines.append(" ".join(parts))
    return "\n".join(lines)


def change_list_to_dict(cl: ChangeList | Iterable[EditOp]) -> dict[str, Any]:
    return {"ops": [op.to_dict() for op in cl]}


def _op_from_dict(item: Any, pos: int) -> EditOp:
    if not isinstance(item, dict):
        raise ChangeListFormatError(f"ops[{pos}] must be an object")
    name = item.get("op")
    if name not in _RANK:
        raise ChangeListFormatError(f"ops[{pos}]: unknown op {name!r}")
    text = item.get("text")
    if text is None:
        # tolerate the argument names used in the operation signatures
        text = item.get("step", item.get("condition"))
    if isinstance(text, str):
        text = text.strip()
    if name == "remove_flow":
        # step text on a removal is informational only
        text = None
    at_index = item.get("at_index")
    try:
        return EditOp(name, text, at_index)
    except ValueError as exc:
        raise ChangeListFormatError(f"ops[{pos}]: {exc}") from None


def change_list_from_dict(data: Any) -> ChangeList:
    if isinstance(data, list):
        raw_ops = data
    elif isinstance(data, dict) and "ops" in data:
        raw_ops = data["ops"]
    else:
        raise ChangeListFormatError("change list must be an object with an 'ops' list")
    if not isinstance(raw_ops, list):
        raise ChangeListFormatError("'ops' must be a list")
    return ChangeList(_op_from_dict(item, i) for i, item in enumerate(raw_ops))


def parse_change_list(json_text: str) -> ChangeList:
    try:
        data = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise ChangeListFormatError(f"malformed JSON: {exc}") from None
    return change_list_from_dict(data)
