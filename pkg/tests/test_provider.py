from __future__ import annotations

import pytest

from housekeeper.provider import (
    KEYWORD_RULE_PROMPT,
    Message,
    CompletionRequest,
    MockProvider,
    MockRuleMissing,
    ProviderError,
    PURPOSES,
    ROLE_PROMPTS,
    ROLE_SYSTEM,
    ROLE_USER,
    last_user_text,
    normalize,
    parse_rules,
    render_prompt_stack,
    truncate_messages,
)


def req(purpose: str, text: str) -> CompletionRequest:
    return CompletionRequest(purpose, (Message(ROLE_USER, text),))


def provider(*tables) -> MockProvider:
    return MockProvider([parse_rules(t) for t in tables])


class TestNormalize:
    def test_lowercase_trim_collapse(self):
        assert normalize("  Hello   THERE \n") == "hello there"

    def test_idempotent(self):
        assert normalize(normalize("A  B")) == normalize("A  B")


class TestRuleParsing:
    def test_unknown_purpose_rejected(self):
        with pytest.raises(ValueError, match="unknown purpose"):
            parse_rules({"divination": []})

    def test_match_needs_one_key(self):
        with pytest.raises(ValueError):
            parse_rules({"chat": [{"match": {"exact": "a", "regex": "b"},
                                   "response": "x"}]})

    def test_bad_regex_rejected(self):
        with pytest.raises(ValueError, match="bad regex"):
            parse_rules({"chat": [{"match": {"regex": "("}, "response": "x"}]})

    def test_all_purposes_allowed(self):
        parse_rules({p: [] for p in PURPOSES})


class TestMatching:
    def test_exact_matches_normalized(self):
        p = provider({"chat": [{"match": {"exact": "Hello  There"},
                                "response": "hi"}]})
        assert p.complete(req("chat", "  hello there ")) == "hi"

    def test_exact_beats_regex_regardless_of_order(self):
        p = provider({"chat": [
            {"match": {"regex": ".*"}, "response": "regex"},
            {"match": {"exact": "ping"}, "response": "exact"},
        ]})
        assert p.complete(req("chat", "ping")) == "exact"
        assert p.complete(req("chat", "anything else")) == "regex"

    def test_regexes_apply_in_file_order(self):
        p = provider({"chat": [
            {"match": {"regex": "count"}, "response": "first"},
            {"match": {"regex": "count people"}, "response": "second"},
        ]})
        assert p.complete(req("chat", "count people now")) == "first"

    def test_first_layer_with_match_wins(self):
        overlay = {"chat": [{"match": {"regex": "task"}, "response": "shadowed"}]}
        base = {"chat": [{"match": {"regex": ".*"}, "response": "base"}]}
        p = provider(overlay, base)
        assert p.complete(req("chat", "do the task")) == "shadowed"
        assert p.complete(req("chat", "hello")) == "base"

    def test_purposes_are_separate_tables(self):
        p = provider({
            "chat": [{"match": {"exact": "x"}, "response": "chatting"}],
            "summarize": [{"match": {"exact": "x"}, "response": "summing"}],
        })
        assert p.complete(req("chat", "x")) == "chatting"
        assert p.complete(req("summarize", "x")) == "summing"

    def test_missing_rule_raises_non_retryable(self):
        p = provider({})
        with pytest.raises(MockRuleMissing) as err:
            p.complete(req("chat", "novel input"))
        assert isinstance(err.value, ProviderError)
        assert err.value.retryable is False

    def test_keys_on_last_user_message(self):
        p = provider({"chat": [{"match": {"exact": "second"}, "response": "ok"}]})
        request = CompletionRequest("chat", (
            Message(ROLE_USER, "first"),
            Message("housekeeper", "reply"),
            Message(ROLE_USER, "second"),
            Message(ROLE_SYSTEM, "system text is not a key"),
        ))
        assert p.complete(request) == "ok"

    def test_no_user_message_raises(self):
        p = provider({"chat": [{"match": {"regex": ".*"}, "response": "x"}]})
        with pytest.raises(MockRuleMissing):
            p.complete(CompletionRequest("chat", (Message(ROLE_SYSTEM, "only system"),)))


class TestPromptStack:
    def test_order_is_rules_then_user_info_then_history(self):
        history = [Message(ROLE_USER, "hi"), Message("housekeeper", "hello")]
        stack = render_prompt_stack("Eason", history)
        assert [m.role for m in stack[:8]] == [ROLE_SYSTEM] * 8
        assert [m.text for m in stack[:6]] == list(ROLE_PROMPTS)
        assert "Eason" in stack[7].text
        assert [m.text for m in stack[8:]] == ["hi", "hello"]

    def test_persona_mentions_housekeeper_duties(self):
        joined = " ".join(ROLE_PROMPTS).lower()
        for cue in ("housekeeper", "assistants", "employer"):
            assert cue in joined

    def test_keyword_rule_prompt_names_both_keywords(self):
        assert "Yes" in KEYWORD_RULE_PROMPT and "No" in KEYWORD_RULE_PROMPT


class TestHelpers:
    def test_last_user_text(self):
        messages = [Message(ROLE_SYSTEM, "s"), Message(ROLE_USER, "a"),
                    Message("housekeeper", "h"), Message(ROLE_USER, "b")]
        assert last_user_text(messages) == "b"
        assert last_user_text([Message(ROLE_SYSTEM, "s")]) is None

    def test_truncate_keeps_system_and_recent_history(self):
        messages = [Message(ROLE_SYSTEM, "rules")] + [
            Message(ROLE_USER, f"msg {i} " + "x" * 40) for i in range(20)]
        kept = truncate_messages(messages, char_budget=300)
        assert kept[0].text == "rules"
        assert kept[-1].text == messages[-1].text
        assert sum(len(m.text) for m in kept) <= 300 + len("rules")

    def test_completion_request_requires_known_purpose(self):
        with pytest.raises(ValueError):
            CompletionRequest("haruspicy", (Message(ROLE_USER, "x"),))
