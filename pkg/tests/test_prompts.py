import json
from types import SimpleNamespace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from usecomply.prompts import (
    TEMPLATE_FIELDS,
    PromptTemplate,
    TemplateError,
    fill,
    load_template,
    render,
    render_use_case_prompt,
    render_user_stories_prompt,
)
from usecomply.usecase import AppDescription, LegalProvision, UseCase, UserStory, serialize_use_case
import worked_examples as wx


@pytest.fixture
def app(corpus):
    return corpus["uc01"].app


def test_all_templates_load_and_check():
    for name in TEMPLATE_FIELDS:
        t = load_template(name)
        t.check()
        assert not t.body.endswith("\n")


def test_yes_no_prompt_beginning(opt_in, app):
    out = render(load_template("yes_no"), opt_in, app, wx.discover_use_case())
    assert out.startswith("Task: Read the following legal text and mobile app description")
    assert "Respond with Yes if the use case should be modified" in out
    assert out.endswith("Answer:")


def test_injected_values_verbatim(opt_in, app):
    uc = wx.discover_use_case()
    out = render(load_template("cot"), opt_in, app, uc)
    assert f"Legal Text: {opt_in.text}\n" in out
    assert f"App Description Summary: {app.summary}\n" in out
    assert f"Use Case: {serialize_use_case(uc, metadata=False)}\n" in out
    assert "{legal_text}" not in out and "{use_case}" not in out
    # the JSON answer format in the body is not a placeholder
    assert "{'Rationale':" in out


def test_provision_phrase_appears_once(opt_in, app):
    for name in ("yes_no", "cot", "modification_editscript", "modification_direct"):
        out = render(load_template(name), opt_in, app, wx.discover_use_case())
        assert out.count("two-step opt-in process") == 1


def test_unknown_placeholder():
    t = PromptTemplate("yes_no", "{legal_text} {app_summary} {use_case} {bogus}")
    with pytest.raises(TemplateError, match="bogus"):
        t.check()


def test_repeated_placeholder():
    with pytest.raises(TemplateError):
        PromptTemplate("yes_no", "{legal_text} {legal_text} {app_summary} {use_case}").check()


def test_template_from_directory(tmp_path, opt_in, app):
    (tmp_path / "yes_no.txt").write_text("L={legal_text}|S={app_summary}|U={use_case}\n", encoding="utf-8")
    out = render(load_template("yes_no", tmp_path), opt_in, app, UseCase(flow=["s"]))
    assert out == f"L={opt_in.text}|S={app.summary}|U=" + '{"preconditions": [], "flow": ["s"], "postconditions": []}'


def test_bad_template_file_rejected(tmp_path):
    (tmp_path / "cot.txt").write_text("{legal_text} {use_case} {extra}", encoding="utf-8")
    with pytest.raises(TemplateError):
        load_template("cot", tmp_path)


def test_empty_provision_text(app):
    # LegalProvision refuses empty text itself, so use a stand-in
    p = SimpleNamespace(provision_id="x", citation="", text=" ")
    with pytest.raises(TemplateError):
        render(load_template("yes_no"), p, app, wx.discover_use_case())


def test_injected_braces_are_not_reexpanded(app):
    p = LegalProvision("p", "c", "literal {use_case} braces")
    out = render(load_template("yes_no"), p, app, UseCase(flow=["s"]))
    assert "Legal Text: literal {use_case} braces\n" in out


def test_generation_prompts(app):
    stories = render_user_stories_prompt(load_template("user_stories"), app)
    assert stories.endswith(f"App Description: {app.full_text}\nUser Stories:")
    story = UserStory.from_text(wx.DISCOVER_STORY)
    out = render_use_case_prompt(load_template("use_case"), story, app)
    assert f"User Story: {wx.DISCOVER_STORY}\n" in out


def test_fill_requires_all_fields():
    with pytest.raises(TemplateError):
        fill(load_template("use_case"), app_summary="x")


safe_text = st.text(alphabet=st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=40).filter(
    lambda s: s.strip() == s and s
)


@given(safe_text, safe_text, st.lists(safe_text, min_size=1, max_size=4))
def test_no_truncation(legal, summary, flow):
    t = load_template("cot")
    p = LegalProvision("p", "c", legal)
    a = AppDescription("a", "full text", summary.replace("\n", " ").replace("\r", " ") or "s")
    uc = UseCase(flow=flow)
    out = render(t, p, a, uc)
    injected = len(p.text) + len(a.summary) + len(serialize_use_case(uc, metadata=False))
    placeholders = sum(len(name) + 2 for name in t.placeholders())
    assert len(out) == len(t.body) - placeholders + injected
    assert render(t, p, a, uc) == out
    assert json.loads(out.split("Use Case: ", 1)[1].rsplit("\nAnswer:", 1)[0])["flow"] == flow
