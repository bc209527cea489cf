"""Prompt construction for the generation loop.

The initial prompt is a fixed template with two substitution slots (the
focal context and the patched method); the ablation variants toggle the
role sentence, the closing emotional appeal, and an optional CWE line.
The three feedback prompts are constants except for the ERROR log slot.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

ROLE_SENTENCE = "You are a senior software tester and a cyber security specialist."

TASK_LINES = (
    "You will be given the source code of a Java class where you will find "
    "the context of a vulnerable method before and after the patch.\n"
    "Your task is to create a unit test that triggers the vulnerability and "
    "fails before the patch and passes after it. The class' name should be "
    "the name of the class appended with the string \"Test\".\n"
    "Use simple Java language features in the generated test!"
)

PATCHED_HEADER = "The method after patching the vulnerability:"

EMOTION_SENTENCE = (
    "It is very important for me, please create the unittest based on your "
    "best knowledge in the given context."
)

BEFORE_PASS_PROMPT = (
    "The test you've provided should have failed for the original version "
    "of the vulnerability before the patch, but it passes. Please fix it "
    "and return the whole code."
)

AFTER_FAIL_PROMPT = (
    "The test you've provided should have passed for the patched version "
    "of the vulnerability, but it fails. Please fix it and return the "
    "whole code."
)

ERROR_PROMPT_TEMPLATE = (
    "The code you provided has errors in it: {log}. Fix the error indicated "
    "by the compiler message, and answer with the WHOLE fixed code only."
)

# compiler messages cluster at the end of a failing log
ERROR_LOG_TAIL_CHARS = 4000

# chat context budget of the reference provider
DEFAULT_TOKEN_LIMIT = 128_000


class FeedbackKind(enum.Enum):
    BEFORE_PASS = "BEFORE_PASS"
    AFTER_FAIL = "AFTER_FAIL"
    ERROR = "ERROR"


VARIANTS = ("baseline", "no_emotion", "no_role", "with_cwe")


@dataclass(frozen=True)
class PromptConfig:
    variant: str
    include_role: bool
    include_emotion: bool
    include_cwe: bool

    _FLAGS = {
        "baseline": (True, True, False),
        "no_emotion": (True, False, False),
        "no_role": (False, False, False),
        "with_cwe": (True, True, True),
    }

    def __post_init__(self):
        expected = self._FLAGS.get(self.variant)
        if expected is None:
            raise ValueError(f"unknown prompt variant {self.variant!r}")
        if (self.include_role, self.include_emotion, self.include_cwe) != expected:
            raise ValueError(f"flags inconsistent with variant {self.variant!r}")

    @classmethod
    def from_variant(cls, variant: str) -> "PromptConfig":
        if variant not in cls._FLAGS:
            raise ValueError(f"unknown prompt variant {variant!r}")
        role, emotion, cwe = cls._FLAGS[variant]
        return cls(variant, include_role=role, include_emotion=emotion,
                   include_cwe=cwe)


@dataclass(frozen=True)
class PromptMessage:
    text: str
    # chat role on the wire; the whole initial prompt goes out as one user
    # message and feedback continues the same conversation
    role: str = "user"
    # set when include_cwe was requested but the entry carries no CWE id
    missing_cwe: bool = False

    def __post_init__(self):
        if not self.text:
            raise ValueError("prompt text must be non-empty")


def cwe_line(cwe_id: str) -> str:
    return f"The vulnerability is categorized as {cwe_id}."


def build_initial_prompt(focal_snippet: str, patched_method: str,
                         config: PromptConfig,
                         cwe_id: str | None = None) -> PromptMessage:
    """Render the initial prompt for one run.

    ``cwe_id`` is only consulted for the with_cwe variant; when that variant
    is requested but no id is known, the line is skipped and the message is
    flagged instead of failing the run.
    """
    if not focal_snippet or not patched_method:
        raise ValueError("focal snippet and patched method must be non-empty")

    parts = []
    if config.include_role:
        parts.append(ROLE_SENTENCE + "\n" + TASK_LINES)
    else:
        parts.append(TASK_LINES)

    missing_cwe = False
    if config.include_cwe:
        usable = cwe_id and cwe_id != "Not Mapping"
        if usable:
            parts.append(cwe_line(cwe_id))
        else:
            missing_cwe = True

    parts.append(focal_snippet.rstrip("\n"))
    parts.append(PATCHED_HEADER)
    parts.append(patched_method.rstrip("\n"))
    if config.include_emotion:
        parts.append(EMOTION_SENTENCE)

    return PromptMessage(text="\n\n".join(parts), missing_cwe=missing_cwe)


def build_feedback_prompt(kind: FeedbackKind,
                          log_excerpt: str | None = None) -> PromptMessage:
    """One of the three fixed reprompt messages."""
    if kind is FeedbackKind.BEFORE_PASS:
        return PromptMessage(BEFORE_PASS_PROMPT)
    if kind is FeedbackKind.AFTER_FAIL:
        return PromptMessage(AFTER_FAIL_PROMPT)
    if kind is FeedbackKind.ERROR:
        if log_excerpt is None:
            raise ValueError("ERROR feedback requires a log excerpt")
        tail = log_excerpt[-ERROR_LOG_TAIL_CHARS:]
        return PromptMessage(ERROR_PROMPT_TEMPLATE.format(log=tail))
    raise ValueError(f"unknown feedback kind {kind!r}")


@dataclass(frozen=True)
class BudgetCheck:
    ok: bool
    estimated_tokens: int
    limit: int


def check_budget(message: PromptMessage,
                 limit: int = DEFAULT_TOKEN_LIMIT) -> BudgetCheck:
    """Conservative size check: one token per 3 characters.

    Real tokenizers average closer to 4 chars/token on code, so this
    overestimates and never green-lights an over-long prompt.
    """
    if limit <= 0:
        raise ValueError("token limit must be positive")
    estimated = math.ceil(len(message.text) / 3)
    return BudgetCheck(ok=estimated <= limit, estimated_tokens=estimated,
                       limit=limit)
