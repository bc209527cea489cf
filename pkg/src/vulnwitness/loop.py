"""Generate -> execute -> reprompt loop for one (entry, level, config) run.

Termination rules: three consecutive compilation errors mean the model
cannot produce a syntactically valid test here; five compilable
generations without reaching the accepted (FAIL, PASS) pair mean it is
not converging. A hard iteration cap backstops both counters, and three
consecutive responses with no extractable code abort the run. The best
generation (by outcome ranking) is what the final tally records.
"""

from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from . import focal, llm, prompts
from .harness import (
    BuildAdapter,
    ExecutionLog,
    MAVEN,
    TestOutcome,
    Verdict,
    classify_log,
    derive_test_class_name,
    persist_execution,
    place_test,
    run_generated_test,
    workspace_lock,
)
from .manifest import VulnEntry
from .prompts import FeedbackKind, PromptConfig

CONSECUTIVE_ERR_LIMIT = 3
STAGNATION_LIMIT = 5
NO_CODE_LIMIT = 3
HARD_ITERATION_CAP = 18

NO_CODE_NOTE = "your answer contained no code block"


class Termination(str, enum.Enum):
    ACCEPTED = "accepted"
    CONSECUTIVE_ERRORS = "consecutive_errors"
    STAGNATION = "stagnation"
    EXTRACTION_FAILURE = "extraction_failure"
    BUDGET_EXCEEDED = "budget_exceeded"


def select_feedback(before: TestOutcome,
                    after: TestOutcome) -> FeedbackKind | None:
    """Map an outcome pair to the accept decision (None) or a reprompt kind.

    Priority when several conditions hold: ERROR beats BEFORE_PASS beats
    AFTER_FAIL. Total over all nine verdict pairs.
    """
    if before.verdict is Verdict.FAIL and after.verdict is Verdict.PASS:
        return None  # accepted: witnesses the vulnerability and its fix
    if Verdict.ERR in (before.verdict, after.verdict):
        return FeedbackKind.ERROR
    if before.verdict is Verdict.PASS:
        return FeedbackKind.BEFORE_PASS
    return FeedbackKind.AFTER_FAIL  # (FAIL, FAIL)


@dataclass(frozen=True)
class LoopState:
    consecutive_err_count: int = 0
    compilable_noimprove_count: int = 0

    def __post_init__(self):
        if not (0 <= self.consecutive_err_count <= CONSECUTIVE_ERR_LIMIT):
            raise ValueError("consecutive_err_count out of bounds")
        if not (0 <= self.compilable_noimprove_count <= STAGNATION_LIMIT):
            raise ValueError("compilable_noimprove_count out of bounds")


def update_state(state: LoopState,
                 pair: tuple[Verdict, Verdict]) -> tuple[LoopState, Termination | None]:
    """Advance the two termination counters for one executed generation.

    A compilable generation resets the error streak ("consecutive" reads as
    adjacent) and counts toward stagnation; the caller handles acceptance
    before ever calling this.
    """
    before, after = pair
    if Verdict.ERR in (before, after):
        new = LoopState(state.consecutive_err_count + 1,
                        state.compilable_noimprove_count)
        if new.consecutive_err_count >= CONSECUTIVE_ERR_LIMIT:
            return new, Termination.CONSECUTIVE_ERRORS
        return new, None
    new = LoopState(0, state.compilable_noimprove_count + 1)
    if new.compilable_noimprove_count >= STAGNATION_LIMIT:
        return new, Termination.STAGNATION
    return new, None


@dataclass
class IterationRecord:
    ordinal: int
    prompt_kind: str  # INITIAL or a FeedbackKind value
    extracted_code: str | None = None
    before_outcome: TestOutcome | None = None
    after_outcome: TestOutcome | None = None
    logs: tuple[str, str] | None = None  # relative refs (before, after)
    notes: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.extracted_code is None:
            if self.before_outcome or self.after_outcome:
                raise ValueError("outcomes present without extracted code")
        if (self.before_outcome is None) != (self.after_outcome is None):
            raise ValueError("both versions are always executed together")

    @property
    def pair(self) -> tuple[Verdict, Verdict] | None:
        if self.before_outcome is None or self.after_outcome is None:
            return None
        return (self.before_outcome.verdict, self.after_outcome.verdict)

    def to_dict(self) -> dict:
        return {
            "ordinal": self.ordinal,
            "prompt_kind": self.prompt_kind,
            "extracted_code": self.extracted_code,
            "before_outcome": self.before_outcome.to_dict() if self.before_outcome else None,
            "after_outcome": self.after_outcome.to_dict() if self.after_outcome else None,
            "logs": list(self.logs) if self.logs else None,
            "notes": self.notes,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "IterationRecord":
        return cls(
            ordinal=data["ordinal"],
            prompt_kind=data["prompt_kind"],
            extracted_code=data.get("extracted_code"),
            before_outcome=TestOutcome.from_dict(data["before_outcome"])
            if data.get("before_outcome") else None,
            after_outcome=TestOutcome.from_dict(data["after_outcome"])
            if data.get("after_outcome") else None,
            logs=tuple(data["logs"]) if data.get("logs") else None,
            notes=list(data.get("notes", [])),
        )


def _pair_rank(pair: tuple[Verdict, Verdict]) -> int:
    errs = sum(1 for v in pair if v is Verdict.ERR)
    if pair == (Verdict.FAIL, Verdict.PASS):
        return 0
    if errs == 0:
        return 1
    return 1 + errs  # one ERR -> 2, (ERR, ERR) -> 3


def select_best_generation(iterations: list[IterationRecord]) -> int | None:
    """Ordinal of the generation the final tally should keep.

    Ranking: accepted pair, then compiled-on-both, then compiled on one
    version, then neither; ties go to the latest ordinal. None when no
    iteration produced runnable code at all.
    """
    best: IterationRecord | None = None
    best_rank = None
    for it in iterations:
        pair = it.pair
        if pair is None:
            continue
        rank = _pair_rank(pair)
        if best_rank is None or rank < best_rank or (rank == best_rank and it.ordinal > best.ordinal):
            best, best_rank = it, rank
    return best.ordinal if best else None


@dataclass
class RunRecord:
    entry_id: str
    level: str
    config: str  # prompt variant name
    iterations: list[IterationRecord] = field(default_factory=list)
    best_iteration: int | None = None
    final_pair: tuple[str, str] = (Verdict.ERR.value, Verdict.ERR.value)
    termination_reason: str | None = None  # None while the run is in flight
    focal_method: dict | None = None  # name/params, kept for failure triage

    @property
    def complete(self) -> bool:
        return self.termination_reason is not None

    def to_dict(self) -> dict:
        return {
            "entry_id": self.entry_id,
            "level": self.level,
            "config": self.config,
            "iterations": [it.to_dict() for it in self.iterations],
            "best_iteration": self.best_iteration,
            "final_pair": list(self.final_pair),
            "termination_reason": self.termination_reason,
            "focal_method": self.focal_method,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunRecord":
        return cls(
            entry_id=data["entry_id"],
            level=data["level"],
            config=data["config"],
            iterations=[IterationRecord.from_dict(d) for d in data["iterations"]],
            best_iteration=data.get("best_iteration"),
            final_pair=tuple(data["final_pair"]),
            termination_reason=data.get("termination_reason"),
            focal_method=data.get("focal_method"),
        )


def run_record_path(runs_dir: Path, config: str, level: str, entry_id: str) -> Path:
    return Path(runs_dir) / config / level / f"{entry_id}.json"


def save_run_record(record: RunRecord, runs_dir: Path) -> Path:
    path = run_record_path(runs_dir, record.config, record.level, record.entry_id)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(record.to_dict(), indent=2, sort_keys=True) + "\n",
                   encoding="utf-8")
    os.replace(tmp, path)
    return path


def load_run_record(path: Path) -> RunRecord:
    return RunRecord.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


class ScriptedLogMissing(FileNotFoundError):
    pass


class WorkspaceExecutor:
    """Places each generation into real checkouts and runs the build."""

    def __init__(self, before_ws: Path, after_ws: Path,
                 adapter: BuildAdapter = MAVEN):
        self.workspaces = {"before": Path(before_ws), "after": Path(after_ws)}
        self.adapter = adapter

    def run(self, entry: VulnEntry, level: str, config: str, ordinal: int,
            version: str, class_name: str,
            code: str) -> tuple[TestOutcome, ExecutionLog]:
        ws = self.workspaces[version]
        with workspace_lock(ws):
            place_test(code, ws, entry.test_target_dir, class_name)
            return run_generated_test(ws, entry.build_spec, class_name,
                                      version, self.adapter)


class ScriptedExecutor:
    """Serves pre-recorded build logs instead of executing anything.

    Lookup key mirrors the persistence layout:
    ``<root>/<entry>/<config>/<level>/<ordinal>.<version>.log``.
    """

    def __init__(self, root: Path, adapter: BuildAdapter = MAVEN):
        self.root = Path(root)
        self.adapter = adapter

    def run(self, entry: VulnEntry, level: str, config: str, ordinal: int,
            version: str, class_name: str,
            code: str) -> tuple[TestOutcome, ExecutionLog]:
        path = self.root / entry.id / config / level / f"{ordinal}.{version}.log"
        if not path.exists():
            raise ScriptedLogMissing(str(path))
        text = path.read_text(encoding="utf-8")
        exit_code = 0 if any(m in text for m in self.adapter.success_markers) else 1
        log = ExecutionLog(stdout=text, stderr="", exit_code=exit_code,
                           duration=0.0, version=version)
        return classify_log(log, self.adapter), log


@dataclass
class RunContext:
    """Everything run_entry needs besides the entry itself."""

    store: llm.TranscriptStore
    runs_dir: Path
    logs_dir: Path
    executor: object  # WorkspaceExecutor | ScriptedExecutor
    before_ws: Path
    after_ws: Path
    provider: llm.ProviderSettings = field(default_factory=llm.ProviderSettings)
    transport: object = None
    token_limit: int = prompts.DEFAULT_TOKEN_LIMIT
    adapter: BuildAdapter = MAVEN


def conversation_id(entry_id: str, level: str, config: str) -> str:
    return f"{entry_id}.{level}.{config}"


def run_entry(entry: VulnEntry, level: str, config: PromptConfig,
              ctx: RunContext) -> RunRecord:
    """Drive one full loop and persist the RunRecord after every iteration."""
    record = RunRecord(entry_id=entry.id, level=level, config=config.variant,
                       focal_method={
                           "name": entry.method_locator.method_name,
                           "param_types": list(entry.method_locator.param_types or []),
                       })

    focal_source = (ctx.before_ws / entry.focal_file).read_text(
        encoding="utf-8", errors="replace")
    context = focal.slice_levels(focal_source, entry.method_locator)[level]
    message = prompts.build_initial_prompt(
        context.snippet, entry.patched_method_text, config, entry.cwe_id)

    budget = prompts.check_budget(message, ctx.token_limit)
    if not budget.ok:
        record.termination_reason = Termination.BUDGET_EXCEEDED.value
        save_run_record(record, ctx.runs_dir)
        return record

    conv = llm.Conversation(id=conversation_id(entry.id, level, config.variant),
                            model_name=ctx.provider.model)
    state = LoopState()
    no_code_streak = 0
    prompt_kind = "INITIAL"

    while True:
        ordinal = len(record.iterations) + 1
        if ordinal > HARD_ITERATION_CAP:
            record.termination_reason = Termination.BUDGET_EXCEEDED.value
            break

        response = llm.send(conv, message, ctx.store,
                            settings=ctx.provider, transport=ctx.transport)
        code = llm.extract_code(response)

        class_name = None
        if code is not None:
            try:
                derived = derive_test_class_name(code, entry.focal_class)
                class_name = derived.class_name
            except ValueError:
                code = None  # no class declaration: treat as a no-code answer

        if code is None:
            record.iterations.append(IterationRecord(
                ordinal=ordinal, prompt_kind=prompt_kind,
                notes=["no_code_response"]))
            save_run_record(record, ctx.runs_dir)
            no_code_streak += 1
            if no_code_streak >= NO_CODE_LIMIT:
                record.termination_reason = Termination.EXTRACTION_FAILURE.value
                break
            message = prompts.build_feedback_prompt(FeedbackKind.ERROR,
                                                    NO_CODE_NOTE)
            prompt_kind = FeedbackKind.ERROR.value
            continue
        no_code_streak = 0

        outcomes: dict[str, TestOutcome] = {}
        logs: dict[str, ExecutionLog] = {}
        log_refs: list[str] = []
        for version in ("before", "after"):
            outcome, log = ctx.executor.run(
                entry, level, config.variant, ordinal, version, class_name, code)
            outcomes[version] = outcome
            logs[version] = log
            it_dir = (Path(ctx.logs_dir) / config.variant / level / entry.id
                      / str(ordinal))
            persist_execution(log, outcome, it_dir)
            log_refs.append(str(it_dir.relative_to(Path(ctx.logs_dir).parent)
                                / f"{version}.log"))

        iteration = IterationRecord(
            ordinal=ordinal, prompt_kind=prompt_kind,
            extracted_code=code,
            before_outcome=outcomes["before"],
            after_outcome=outcomes["after"],
            logs=(log_refs[0], log_refs[1]),
        )
        if derived.deviates:
            iteration.notes.append("test_class_name_deviation")
        record.iterations.append(iteration)
        save_run_record(record, ctx.runs_dir)

        feedback = select_feedback(outcomes["before"], outcomes["after"])
        if feedback is None:
            record.termination_reason = Termination.ACCEPTED.value
            break

        state, stop = update_state(state, iteration.pair)
        if stop is not None:
            record.termination_reason = stop.value
            break

        if feedback is FeedbackKind.ERROR:
            err_version = ("before" if outcomes["before"].verdict is Verdict.ERR
                           else "after")
            message = prompts.build_feedback_prompt(feedback,
                                                    logs[err_version].text)
        else:
            message = prompts.build_feedback_prompt(feedback)
        prompt_kind = feedback.value

    record.best_iteration = select_best_generation(record.iterations)
    if record.best_iteration is not None:
        best = record.iterations[record.best_iteration - 1]
        record.final_pair = (best.pair[0].value, best.pair[1].value)
    else:
        record.final_pair = (Verdict.ERR.value, Verdict.ERR.value)
    save_run_record(record, ctx.runs_dir)
    return record
