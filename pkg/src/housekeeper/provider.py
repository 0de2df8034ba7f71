"""Language-model provider interface, role-play prompt stack, and providers.

The default provider is a deterministic mock: a pure function of
(purpose, normalized last user message) backed by fixture rule tables, so the
whole pipeline runs offline and bit-reproducibly.  A thin HTTP provider for a
chat-completions endpoint is included for live use.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
from dataclasses import dataclass
from typing import Optional

import httpx

log = logging.getLogger(__name__)

# Completion purposes; each selects its own mock fixture table.
PURPOSE_CHAT = "chat"
PURPOSE_ASSIST_PROBE = "assist_probe"
PURPOSE_SUMMARIZE = "summarize"
PURPOSE_FSM_DERIVE = "fsm_derive"
PURPOSE_STAGE_OPS = "stage_ops"
PURPOSE_TRANSITIONS = "transitions"
PURPOSE_ASSEMBLE = "assemble"
PURPOSE_REPORT = "report"
PURPOSES = (
    PURPOSE_CHAT, PURPOSE_ASSIST_PROBE, PURPOSE_SUMMARIZE, PURPOSE_FSM_DERIVE,
    PURPOSE_STAGE_OPS, PURPOSE_TRANSITIONS, PURPOSE_ASSEMBLE, PURPOSE_REPORT,
)

# Message roles. "housekeeper" marks the model's own earlier replies;
# "assistant" is the coordinator (the Assistant of the dialog protocol).
ROLE_SYSTEM = "system"
ROLE_USER = "user"
ROLE_HOUSEKEEPER = "housekeeper"
ROLE_ASSISTANT = "assistant"

# Role-playing system prompts, exactly as configured for the housekeeper
# persona.  Order matters and is covered by tests.
ROLE_PROMPTS = (
    "You are a serious housekeeper managing the employer's daily life.",
    "You are working remotely and unable to perform tasks personally. However, "
    "fortunately, you have numerous assistants available at your employer's house "
    "to provide support.",
    "You are not required to answer a question when you lack the necessary "
    "information, but assure your employer that you will make an effort to figure "
    "it out.",
    "You must not ask your assistants to perform tasks that are not your "
    "employer’s instructions.",
    "Your reply should be simple and concise.",
    "You should use the same language as your employer.",
)

USER_INFO_TEMPLATES = (
    "Your employer is male.",
    "The name of your employer is {name}.",
)

# Keyword contract injected into assistance probes; see Coordinator.
KEYWORD_RULE_PROMPT = (
    'If you need assistance, your reply must include the keyword "Yes". '
    'If you do not need assistance, your reply must include the keyword "No".'
)


@dataclass(frozen=True)
class Message:
    role: str
    text: str


@dataclass(frozen=True)
class CompletionRequest:
    purpose: str
    messages: tuple

    def __post_init__(self):
        if self.purpose not in PURPOSES:
            raise ValueError(f"unknown purpose {self.purpose!r}")
        if not self.messages:
            raise ValueError("completion request needs at least one message")


class ProviderError(Exception):
    def __init__(self, message: str, retryable: bool = False):
        super().__init__(message)
        self.retryable = retryable


class MockRuleMissing(ProviderError):
    def __init__(self, purpose: str, key: str):
        super().__init__(f"no mock rule for purpose {purpose!r} and message {key!r}",
                         retryable=False)
        self.purpose = purpose
        self.key = key


def render_prompt_stack(user_name: str, history=()) -> list:
    """System rules, then user info, then dialog history, in that order."""
    messages = [Message(ROLE_SYSTEM, text) for text in ROLE_PROMPTS]
    messages.append(Message(ROLE_SYSTEM, USER_INFO_TEMPLATES[0]))
    messages.append(Message(ROLE_SYSTEM, USER_INFO_TEMPLATES[1].format(name=user_name)))
    for item in history:
        messages.append(Message(item.role, item.text))
    return messages


def normalize(text: str) -> str:
    """Mock matching key: lowercase, trim, collapse runs of whitespace."""
    return re.sub(r"\s+", " ", text.strip().lower())


def last_user_text(messages) -> Optional[str]:
    for message in reversed(list(messages)):
        if message.role == ROLE_USER:
            return message.text
    return None


def load_rules(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return parse_rules(doc, source=str(path))


def parse_rules(doc: dict, source: str = "<inline>") -> dict:
    """Shape-check a rule table: {purpose: [{match: {exact|regex}, response}]}"""
    if not isinstance(doc, dict):
        raise ValueError(f"{source}: rule table must be an object")
    tables: dict = {}
    for purpose, rules in doc.items():
        if purpose not in PURPOSES:
            raise ValueError(f"{source}: unknown purpose {purpose!r}")
        if not isinstance(rules, list):
            raise ValueError(f"{source}: rules for {purpose!r} must be a list")
        parsed = []
        for i, rule in enumerate(rules):
            where = f"{source}: {purpose}[{i}]"
            if not isinstance(rule, dict) or "match" not in rule or "response" not in rule:
                raise ValueError(f"{where}: rule needs 'match' and 'response'")
            match = rule["match"]
            if not isinstance(match, dict) or len(match) != 1:
                raise ValueError(f"{where}: match must have exactly one of exact/regex")
            if "exact" in match:
                parsed.append(("exact", normalize(match["exact"]), rule["response"]))
            elif "regex" in match:
                try:
                    parsed.append(("regex", re.compile(match["regex"]), rule["response"]))
                except re.error as exc:
                    raise ValueError(f"{where}: bad regex: {exc}") from exc
            else:
                raise ValueError(f"{where}: match must be 'exact' or 'regex'")
        tables[purpose] = parsed
    return tables


class MockProvider:
    """Deterministic provider: fixture rules, no randomness, no clock.

    Rule sets layer: the first set (in order) containing a match wins, so
    tests can shadow a handful of rules while falling through to the base
    table for everything else.  Within a set, exact rules win over regex
    rules; regex rules apply in file order.
    """

    def __init__(self, rule_sets):
        self.rule_sets = [dict(rs) for rs in rule_sets]

    @classmethod
    def from_paths(cls, paths) -> "MockProvider":
        return cls([load_rules(path) for path in paths])

    def complete(self, request: CompletionRequest) -> str:
        text = last_user_text(request.messages)
        if text is None:
            raise MockRuleMissing(request.purpose, "<no user message>")
        key = normalize(text)
        for rules in self.rule_sets:
            table = rules.get(request.purpose, [])
            for kind, matcher, response in table:
                if kind == "exact" and matcher == key:
                    return response
            for kind, matcher, response in table:
                if kind == "regex" and matcher.search(key):
                    return response
        raise MockRuleMissing(request.purpose, key)


class LiveProvider:
    """Chat-completions HTTP provider (optional; nothing in the test suite
    needs a network).  Deterministic settings: temperature 0.

    The wire protocol knows only system/user/assistant, so housekeeper
    messages map to "assistant" (the model's own turns) and coordinator
    messages map to "user" (they are inputs the model must answer).
    """

    WIRE_ROLES = {
        ROLE_SYSTEM: "system",
        ROLE_USER: "user",
        ROLE_HOUSEKEEPER: "assistant",
        ROLE_ASSISTANT: "user",
    }

    def __init__(self, base_url: Optional[str] = None, api_key: Optional[str] = None,
                 model: Optional[str] = None, timeout: float = 60.0,
                 max_in_flight: int = 4, char_budget: int = 24000,
                 transport: Optional[httpx.BaseTransport] = None):
        self.base_url = base_url or os.environ.get("HOUSEKEEPER_LLM_URL", "")
        self.api_key = api_key if api_key is not None else os.environ.get(
            "HOUSEKEEPER_LLM_KEY", "")
        self.model = model or os.environ.get("HOUSEKEEPER_LLM_MODEL", "gpt-3.5-turbo")
        if not self.base_url:
            raise ProviderError("live provider needs a base URL "
                                "(HOUSEKEEPER_LLM_URL)", retryable=False)
        self.char_budget = char_budget
        self._semaphore = threading.Semaphore(max_in_flight)
        self._client = httpx.Client(base_url=self.base_url, timeout=timeout,
                                    transport=transport)

    def complete(self, request: CompletionRequest) -> str:
        messages = truncate_messages(list(request.messages), self.char_budget)
        payload = {
            "model": self.model,
            "temperature": 0,
            "messages": [
                {"role": self.WIRE_ROLES[m.role], "content": m.text} for m in messages
            ],
        }
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        with self._semaphore:
            try:
                response = self._client.post("/chat/completions", json=payload,
                                             headers=headers)
            except httpx.HTTPError as exc:
                raise ProviderError(f"transport failure: {exc}", retryable=True) from exc
        if response.status_code >= 500:
            raise ProviderError(f"server error {response.status_code}", retryable=True)
        if response.status_code != 200:
            raise ProviderError(f"request rejected: {response.status_code} "
                                f"{response.text[:200]}", retryable=False)
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise ProviderError(f"malformed completion response: {exc}",
                                retryable=False) from exc

    def close(self) -> None:
        self._client.close()


def truncate_messages(messages: list, char_budget: int) -> list:
    """Drop oldest non-system messages until the total fits the budget.

    System messages and the final message always survive; if those alone
    break the budget, they are sent anyway rather than mangled.
    """
    def total(msgs):
        return sum(len(m.text) for m in msgs)

    if total(messages) <= char_budget:
        return messages
    kept = list(messages)
    # middle = everything droppable, oldest first
    for i, message in enumerate(list(kept)):
        if total(kept) <= char_budget:
            break
        if message.role == ROLE_SYSTEM or message is messages[-1]:
            continue
        kept.remove(message)
    return kept
