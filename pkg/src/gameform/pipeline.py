"""Natural-language to game-program translation with solver feedback.

The loop: ask the model for game-specific clauses, check them with the
parser, and while they are invalid send the code back together with the
diagnostics. Every request is written to the transcript before it is sent so
that a run can be replayed offline.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Protocol

import httpx

from .parser import SINGLETON, Diagnostic, Span, SyntaxReport, parse_program

log = logging.getLogger(__name__)

TEMPLATE_VERSION = "gameform-prompt/1"

SYSTEM_TEXT = (
    "You write Prolog clauses for a situation-calculus game solver. "
    "The solver already provides the game-independent rules; you supply only "
    "the game-specific clauses for the game you are given."
)

MODES = ("zero_shot", "one_shot", "repair")
STATUSES = ("ok_first_try", "ok_after_repair", "failed_syntax", "llm_error")

API_KEY_VARS = ("GAMEFORM_API_KEY", "OPENAI_API_KEY")


class InvalidExampleError(ValueError):
    kind = "invalid_example"


class ExtractionError(ValueError):
    kind = "extraction_error"


class LlmError(RuntimeError):
    kind = "llm_error"


class ReplayMissError(LlmError):
    """The transcript has no response for the requested call."""


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    user_text: str
    mode: str
    parts: dict = field(compare=False, default_factory=dict)
    template_version: str = TEMPLATE_VERSION

    def messages(self) -> list[dict]:
        return [
            {"role": "system", "content": self.system_text},
            {"role": "user", "content": self.user_text},
        ]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "template_version": self.template_version,
            "system_text": self.system_text,
            "user_text": self.user_text,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PromptBundle":
        return cls(d["system_text"], d["user_text"], d["mode"], {}, d["template_version"])


@dataclass
class LlmConfig:
    model_name: str = "gpt-4o"
    temperature: float = 1.0
    max_output_tokens: int = 1024
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    timeout: float = 60.0
    max_attempts: int = 5
    strict: bool = False
    fresh_restart: bool = False
    transport_retries: int = 3
    backoff: float = 1.0

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")


def _fence(code: str) -> str:
    return "```prolog\n" + code.strip("\n") + "\n```"


def build_prompt(
    gamma_src: str, example: tuple[str, str] | None, target_nl: str
) -> PromptBundle:
    """Assemble the translation prompt; one-shot when ``example`` is given."""
    sections = [
        "The solver defines the following game-independent rules. "
        "Do not repeat them in your answer.",
        _fence(gamma_src),
    ]
    parts = {"gamma": gamma_src, "example_nl": None, "example_xi": None, "target_nl": target_nl}
    if example is not None:
        nl, xi = example
        report = parse_program(xi)[1]
        if not report.ok:
            first = report.errors[0]
            raise InvalidExampleError(
                f"example program has syntax errors: {first.span.line}:{first.span.col}: {first.message}"
            )
        parts["example_nl"], parts["example_xi"] = nl, xi
        sections += [
            "Example game description:",
            nl.strip(),
            "Game-specific clauses for the example:",
            _fence(xi),
        ]
    sections += [
        "Game description to translate:",
        target_nl.strip(),
        "Write the game-specific clauses for this game"
        + (" in the same style as the example" if example is not None else "")
        + ". Reply with a single ```prolog fenced code block and nothing else. "
        "Comments must use %.",
    ]
    mode = "one_shot" if example is not None else "zero_shot"
    return PromptBundle(SYSTEM_TEXT, "\n\n".join(sections) + "\n", mode, parts)


_RULE_COMMENT = "Comments must use % (a '//' comment is not valid Prolog)."
_RULE_SINGLETON = (
    "Every named variable must occur at least twice in its clause; "
    "replace a variable used only once with _."
)
_RULE_PERIOD = "Every clause must end with a period followed by whitespace or end of input."
_RULE_QUOTE = "Atoms starting with an uppercase letter or containing spaces must be quoted: 'C'."
_RULE_GENERAL = "Use only standard Prolog syntax: facts, rules with :-, and , ; -> \\+ in bodies."


def _rules_for(report: SyntaxReport) -> list[str]:
    rules = []
    for d in report.errors:
        if "'//'" in d.message:
            r = _RULE_COMMENT
        elif d.kind == SINGLETON:
            r = _RULE_SINGLETON
        elif "missing '.'" in d.message or "'.'" in d.message:
            r = _RULE_PERIOD
        elif "quoted" in d.message:
            r = _RULE_QUOTE
        else:
            r = _RULE_GENERAL
        if r not in rules:
            rules.append(r)
    return rules


def repair_prompt(
    previous_code: str, report: SyntaxReport, target_nl: str | None = None
) -> PromptBundle:
    """Ask the model to fix ``previous_code`` given the solver's diagnostics."""
    lines = [
        f"- line {d.span.line}, column {d.span.col}: {d.message}" for d in report.errors
    ]
    sections = []
    if target_nl:
        sections += ["Game description:", target_nl.strip()]
    sections += [
        "Your previous game-specific clauses were rejected by the Prolog solver:",
        _fence(previous_code),
        "Solver errors:",
        "\n".join(lines) if lines else "- (no errors reported)",
        "Fix every error. Follow these rules:",
        "\n".join(f"- {r}" for r in _rules_for(report)),
        "Reply with the complete corrected clauses in a single ```prolog fenced code block.",
    ]
    parts = {"previous_code": previous_code, "report": report.to_dict(), "target_nl": target_nl}
    return PromptBundle(SYSTEM_TEXT, "\n\n".join(sections) + "\n", "repair", parts)


_FENCE = re.compile(r"```[^\n`]*\n(.*?)```", re.S)


def extract_code(raw_response: str) -> str:
    """Pull the program text out of a model reply.

    Fenced blocks win and are concatenated verbatim. Without fences the
    longest run of lines that parses cleanly is taken.
    """
    blocks = _FENCE.findall(raw_response)
    if blocks:
        code = "".join(b if b.endswith("\n") else b + "\n" for b in blocks)
        if code.strip():
            return code
    lines = raw_response.splitlines()
    best: list[str] = []
    i = 0
    while i < len(lines):
        end = None
        for j in range(i + 1, len(lines) + 1):
            if not lines[j - 1].rstrip().endswith("."):
                continue
            program, report = parse_program("\n".join(lines[i:j]))
            if not report.ok or not len(program):
                break
            end = j
        if end is None:
            i += 1
            continue
        if end - i > len(best):
            best = lines[i:end]
        i = end
    if not best:
        raise ExtractionError("no Prolog clauses found in the response")
    return "\n".join(best) + "\n"


# ------------------------------------------------------------------ clients


@dataclass(frozen=True)
class ChatRequest:
    description_id: str
    attempt_index: int
    kind: str  # translate or self_correct
    payload: dict


class ChatClient(Protocol):
    def complete(self, request: ChatRequest) -> str: ...


def wire_payload(prompt: PromptBundle, cfg: LlmConfig) -> dict:
    return {
        "model": cfg.model_name,
        "messages": prompt.messages(),
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_output_tokens,
    }


def api_key_from_env() -> str | None:
    for var in API_KEY_VARS:
        if os.environ.get(var):
            return os.environ[var]
    return None


class HttpChatClient:
    """OpenAI-compatible chat-completions client with transport retries."""

    def __init__(
        self,
        cfg: LlmConfig,
        api_key: str | None = None,
        transport: httpx.BaseTransport | None = None,
        sleep=time.sleep,
    ):
        self.cfg = cfg
        key = api_key if api_key is not None else api_key_from_env()
        headers = {"Content-Type": "application/json"}
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._client = httpx.Client(timeout=cfg.timeout, headers=headers, transport=transport)
        self._sleep = sleep

    def complete(self, request: ChatRequest) -> str:
        last = None
        for attempt in range(self.cfg.transport_retries + 1):
            if attempt:
                self._sleep(self.cfg.backoff * 2 ** (attempt - 1))
            try:
                resp = self._client.post(self.cfg.endpoint, json=request.payload)
            except httpx.TransportError as e:
                last = f"{type(e).__name__}: {e}"
                log.warning("chat request failed (%s), attempt %d", last, attempt + 1)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = f"HTTP {resp.status_code}"
                log.warning("chat request got %s, attempt %d", last, attempt + 1)
                continue
            if resp.status_code >= 400:
                raise LlmError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as e:
                raise LlmError(f"malformed chat response: {e}") from e
        raise LlmError(f"giving up after {self.cfg.transport_retries + 1} tries: {last}")

    def close(self):
        self._client.close()


def read_transcript(path: str | Path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if line.strip():
                try:
                    out.append(json.loads(line))
                except json.JSONDecodeError as e:
                    raise ValueError(f"{path}:{n}: invalid JSON: {e.msg}") from e
    return out


class ReplayChatClient:
    """Answers calls from a recorded transcript.

    With ``verify`` the request payload must equal the recorded one, so a
    changed prompt template cannot silently reuse stale answers.
    """

    def __init__(self, records: list[dict] | str | Path, verify: bool = True):
        if not isinstance(records, list):
            records = read_transcript(records)
        self.verify = verify
        self._answers: dict[tuple[str, int], dict] = {}
        for rec in records:
            if rec.get("response") is not None:
                self._answers[rec["description_id"], rec["attempt_index"]] = rec

    def complete(self, request: ChatRequest) -> str:
        rec = self._answers.get((request.description_id, request.attempt_index))
        if rec is None:
            raise ReplayMissError(
                f"no recorded response for {request.description_id} attempt {request.attempt_index}"
            )
        if self.verify and rec["request"] != request.payload:
            raise ReplayMissError(
                f"request for {request.description_id} attempt {request.attempt_index} "
                "differs from the recorded one"
            )
        return rec["response"]["content"]


class ScriptedChatClient:
    """Returns canned replies per description id, in order. For tests and fixtures."""

    def __init__(self, script: dict[str, list[str]]):
        self.script = script
        self.calls: list[ChatRequest] = []
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> str:
        with self._lock:
            self.calls.append(request)
        replies = self.script[request.description_id]
        i = request.attempt_index - 1
        if i >= len(replies):
            raise LlmError(f"script for {request.description_id} has no reply {request.attempt_index}")
        reply = replies[i]
        if isinstance(reply, Exception):
            raise reply
        return reply


class TranscriptWriter:
    """Append-only JSON-lines log; safe to share between worker threads."""

    def __init__(self, path: str | Path, clock=None):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._clock = clock or (lambda: datetime.now(timezone.utc).isoformat())

    def append(self, request: ChatRequest, response: str | None, error: str | None = None):
        rec = {
            "timestamp": self._clock(),
            "description_id": request.description_id,
            "attempt_index": request.attempt_index,
            "kind": request.kind,
            "request": request.payload,
            "response": None if response is None else {"content": response},
        }
        if error is not None:
            rec["error"] = error
        line = json.dumps(rec, ensure_ascii=False, sort_keys=True)
        with self._lock, open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")


# ------------------------------------------------------------------ the loop


@dataclass
class Attempt:
    index: int
    kind: str
    prompt: PromptBundle
    raw_response: str
    extracted_code: str | None
    report: SyntaxReport

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "kind": self.kind,
            "prompt": self.prompt.to_dict(),
            "raw_response": self.raw_response,
            "extracted_code": self.extracted_code,
            "report": self.report.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Attempt":
        return cls(
            d["index"],
            d["kind"],
            PromptBundle.from_dict(d["prompt"]),
            d["raw_response"],
            d["extracted_code"],
            SyntaxReport.from_dict(d["report"]),
        )


@dataclass
class FormalizationResult:
    description_id: str
    final_program: str | None
    attempts: list[Attempt]
    status: str
    first_attempt_syntax_ok: bool
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.final_program is not None

    def to_dict(self) -> dict:
        return {
            "description_id": self.description_id,
            "status": self.status,
            "first_attempt_syntax_ok": self.first_attempt_syntax_ok,
            "final_program": self.final_program,
            "error": self.error,
            "attempts": [a.to_dict() for a in self.attempts],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FormalizationResult":
        return cls(
            d["description_id"],
            d["final_program"],
            [Attempt.from_dict(a) for a in d["attempts"]],
            d["status"],
            d["first_attempt_syntax_ok"],
            d.get("error"),
        )


def _no_code_report(message: str) -> SyntaxReport:
    return SyntaxReport(errors=[Diagnostic(message, Span(1, 1, 0, 0), "extraction_error")])


def formalize(
    target,
    llm: ChatClient,
    cfg: LlmConfig,
    gamma: str,
    example: tuple[str, str] | None,
    transcript: TranscriptWriter | None = None,
) -> FormalizationResult:
    """Translate one description, repairing syntax errors up to ``cfg.max_attempts``.

    ``target`` needs ``id`` and ``text`` attributes.
    """
    first_prompt = build_prompt(gamma, example, target.text)
    attempts: list[Attempt] = []
    prompt, kind = first_prompt, "translate"
    for n in range(1, cfg.max_attempts + 1):
        if n > 1:
            prev = attempts[-1]
            if cfg.fresh_restart and n == cfg.max_attempts:
                prompt, kind = first_prompt, "translate"
            else:
                prompt = repair_prompt(prev.extracted_code or prev.raw_response, prev.report, target.text)
                kind = "self_correct"
        request = ChatRequest(target.id, n, kind, wire_payload(prompt, cfg))
        if transcript is not None:
            transcript.append(request, None)
        try:
            raw = llm.complete(request)
        except LlmError as e:
            if transcript is not None:
                transcript.append(request, None, error=str(e))
            return FormalizationResult(
                target.id, None, attempts, "llm_error",
                bool(attempts) and attempts[0].report.ok, str(e),
            )
        if transcript is not None:
            transcript.append(request, raw)
        try:
            code = extract_code(raw)
            report = parse_program(code, strict=cfg.strict)[1]
        except ExtractionError as e:
            code, report = None, _no_code_report(str(e))
        attempts.append(Attempt(n, kind, prompt, raw, code, report))
        log.debug("%s attempt %d: %d errors", target.id, n, len(report.errors))
        if report.ok:
            status = "ok_first_try" if n == 1 else "ok_after_repair"
            return FormalizationResult(target.id, code, attempts, status, attempts[0].report.ok)
    return FormalizationResult(
        target.id, None, attempts, "failed_syntax", False,
        "unable to generate valid clauses within the maximum number of attempts",
    )
