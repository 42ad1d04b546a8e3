"""Screen software use cases against privacy provisions and propose edits."""

from .editscript import ChangeList, EditOp, apply, canonicalize, diff, serialize_change_list
from .usecase import (
    AppDescription,
    LegalProvision,
    UseCase,
    UserStory,
    parse_use_case,
    serialize_use_case,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "AppDescription",
    "ChangeList",
    "EditOp",
    "LegalProvision",
    "UseCase",
    "UserStory",
    "apply",
    "canonicalize",
    "diff",
    "parse_use_case",
    "serialize_change_list",
    "serialize_use_case",
    "validate",
]
