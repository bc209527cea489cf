"""Place a generated test in a workspace, run it, classify the outcome.

Outcomes are three-valued per project version: PASS (ran and passed),
FAIL (ran and failed), ERR (did not compile). Classification is a pure
function of the captured build log, driven by a per-build-tool marker set
(defaults cover Maven + Surefire, the corpus's build stack).
"""

from __future__ import annotations

import enum
import fcntl
import json
import os
import re
import subprocess
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

from .javaparse import JavaParseError, parse_java_unit


class Verdict(str, enum.Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    ERR = "ERR"


# note flags carried on an outcome
ZERO_TESTS_RUN = "zero_tests_run"
NOT_RECOGNIZED = "not_recognized_as_test"
TIMEOUT = "timeout"

DEFAULT_TIMEOUT_SECONDS = 600

GENERATED_MARKER = ".vulnwitness-generated"


class ExecutionEnvironmentError(RuntimeError):
    """The build command could not be launched at all (not a test ERR)."""


@dataclass(frozen=True)
class TestOutcome:
    __test__ = False  # not a pytest class, despite the name

    verdict: Verdict
    tests_run: int = 0
    notes: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.verdict is Verdict.ERR and self.tests_run != 0:
            raise ValueError("ERR implies no tests ran")
        if ZERO_TESTS_RUN in self.notes:
            if self.tests_run != 0 or self.verdict is Verdict.ERR:
                raise ValueError("zero_tests_run flag inconsistent with outcome")

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "tests_run": self.tests_run,
            "notes": sorted(self.notes),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TestOutcome":
        return cls(
            verdict=Verdict(data["verdict"]),
            tests_run=data.get("tests_run", 0),
            notes=frozenset(data.get("notes", ())),
        )


@dataclass(frozen=True)
class ExecutionLog:
    stdout: str
    stderr: str
    exit_code: int
    duration: float
    version: str  # before | after
    timed_out: bool = False

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("duration must be non-negative")

    @property
    def text(self) -> str:
        return self.stdout + ("\n" + self.stderr if self.stderr else "")


@dataclass(frozen=True)
class BuildAdapter:
    """Log markers for one build tool; defaults match Maven/Surefire."""

    compile_failure_markers: tuple[str, ...] = (
        "COMPILATION ERROR",
        "Compilation failure",
        "Failed to execute goal org.apache.maven.plugins:maven-compiler-plugin",
    )
    success_markers: tuple[str, ...] = ("BUILD SUCCESS",)
    failure_markers: tuple[str, ...] = ("BUILD FAILURE",)
    summary_pattern: str = (
        r"Tests run:\s*(\d+),\s*Failures:\s*(\d+),\s*Errors:\s*(\d+)"
        r"(?:,\s*Skipped:\s*(\d+))?"
    )


MAVEN = BuildAdapter()


def classify_log(log: ExecutionLog, adapter: BuildAdapter = MAVEN) -> TestOutcome:
    """Classify one execution from its captured log text.

    Pure: identical logs always classify identically. Compile-failure
    markers win; then non-zero failure/error counters (or a failing exit
    code) mean FAIL; a successful build with zero executed tests is still
    PASS but flagged so reporting can surface it.
    """
    text = log.text

    if log.timed_out:
        # a hanging test is evidence, not a compile problem
        return TestOutcome(Verdict.FAIL, tests_run=0, notes=frozenset({TIMEOUT}))

    if any(marker in text for marker in adapter.compile_failure_markers):
        return TestOutcome(Verdict.ERR, tests_run=0)

    summaries = list(re.finditer(adapter.summary_pattern, text))
    if summaries:
        last = summaries[-1]
        tests_run = int(last.group(1))
        failed = int(last.group(2)) + int(last.group(3))
        if failed > 0 or log.exit_code != 0:
            return TestOutcome(Verdict.FAIL, tests_run=tests_run)
        notes = {ZERO_TESTS_RUN} if tests_run == 0 else set()
        return TestOutcome(Verdict.PASS, tests_run=tests_run,
                           notes=frozenset(notes))

    if any(marker in text for marker in adapter.success_markers):
        if log.exit_code == 0:
            # built fine but the runtime never saw a test class to execute
            return TestOutcome(Verdict.PASS, tests_run=0,
                               notes=frozenset({ZERO_TESTS_RUN, NOT_RECOGNIZED}))
        return TestOutcome(Verdict.FAIL, tests_run=0)

    if any(marker in text for marker in adapter.failure_markers):
        return TestOutcome(Verdict.FAIL, tests_run=0)

    # nothing recognizable: conservative ERR, flagged for audit
    return TestOutcome(Verdict.ERR, tests_run=0,
                       notes=frozenset({NOT_RECOGNIZED}))


@dataclass(frozen=True)
class DerivedName:
    class_name: str
    deviates: bool  # declared name != <FocalClass>Test


_CLASS_DECL_RE = re.compile(r"\bclass\s+([A-Za-z_$][A-Za-z0-9_$]*)")


def derive_test_class_name(code: str, focal_class: str) -> DerivedName:
    """Name of the class declared in generated code, flagging mismatches.

    The file is always named after the declaration (compilation would fail
    otherwise); the expected ``<FocalClass>Test`` convention only yields a
    deviation flag.
    """
    try:
        unit = parse_java_unit(code)
        declared = unit.classes[0].name
    except JavaParseError:
        # fall back to a lexical scan before giving up: the harness only
        # needs the name, not a healthy parse
        m = _CLASS_DECL_RE.search(code)
        if not m:
            raise ValueError("generated code declares no class")
        declared = m.group(1)
    return DerivedName(class_name=declared,
                       deviates=declared != f"{focal_class}Test")


def place_test(code: str, workspace: Path, test_target_dir: str,
               class_name: str) -> Path:
    """Write the generated test into the workspace, replacing any previous one.

    A marker file in the target directory tracks what this tool placed so
    repeated placements in one run never leave two generated tests behind.
    """
    target_dir = Path(workspace) / test_target_dir
    target_dir.mkdir(parents=True, exist_ok=True)

    marker = target_dir / GENERATED_MARKER
    if marker.exists():
        previous = marker.read_text(encoding="utf-8").strip()
        if previous:
            old = target_dir / previous
            if old.exists():
                old.unlink()

    path = target_dir / f"{class_name}.java"
    path.write_text(code if code.endswith("\n") else code + "\n",
                    encoding="utf-8")
    marker.write_text(path.name + "\n", encoding="utf-8")
    return path


TEST_CLASS_PLACEHOLDER = "{test_class}"

LOCK_FILENAME = ".vulnwitness-lock"


@contextmanager
def workspace_lock(workspace: Path):
    """Exclusive per-workspace lock: one execution per checkout at a time.

    Uses flock on a file inside the workspace, so it also serializes
    separate processes pointed at the same checkout.
    """
    lock_path = Path(workspace) / LOCK_FILENAME
    fd = os.open(lock_path, os.O_CREAT | os.O_RDWR, 0o644)
    try:
        fcntl.flock(fd, fcntl.LOCK_EX)
        yield
    finally:
        fcntl.flock(fd, fcntl.LOCK_UN)
        os.close(fd)


def build_command(command_template: list[str], class_name: str,
                  container_image: str | None, workspace: Path,
                  workdir: str) -> tuple[list[str], Path]:
    """Fill the test-class placeholder; wrap in a container when configured."""
    argv = [arg.replace(TEST_CLASS_PLACEHOLDER, class_name)
            for arg in command_template]
    cwd = Path(workspace) / workdir if workdir else Path(workspace)
    if container_image:
        argv = [
            "docker", "run", "--rm",
            "-v", f"{Path(workspace).resolve()}:/workspace",
            "-w", f"/workspace/{workdir}" if workdir else "/workspace",
            container_image,
        ] + argv
        cwd = Path(workspace)
    return argv, cwd


def run_command(argv: list[str], cwd: Path, env: dict[str, str],
                timeout: float, version: str) -> ExecutionLog:
    """Run one build command, capturing everything; timeouts are outcomes."""
    full_env = dict(os.environ)
    full_env.update(env)
    start = time.monotonic()
    try:
        proc = subprocess.run(
            argv, cwd=cwd, env=full_env, timeout=timeout,
            capture_output=True, text=True, errors="replace",
        )
        return ExecutionLog(
            stdout=proc.stdout, stderr=proc.stderr,
            exit_code=proc.returncode,
            duration=time.monotonic() - start, version=version,
        )
    except subprocess.TimeoutExpired as exc:
        return ExecutionLog(
            stdout=(exc.stdout or b"").decode("utf-8", "replace")
            if isinstance(exc.stdout, bytes) else (exc.stdout or ""),
            stderr=(exc.stderr or b"").decode("utf-8", "replace")
            if isinstance(exc.stderr, bytes) else (exc.stderr or ""),
            exit_code=-1,
            duration=time.monotonic() - start, version=version,
            timed_out=True,
        )
    except FileNotFoundError as exc:
        raise ExecutionEnvironmentError(
            f"build command not found: {argv[0]!r}") from exc
    except PermissionError as exc:
        raise ExecutionEnvironmentError(
            f"build command not executable: {argv[0]!r}") from exc


def run_generated_test(workspace: Path, build_spec, class_name: str,
                       version: str,
                       adapter: BuildAdapter = MAVEN) -> tuple[TestOutcome, ExecutionLog]:
    """Execute only the generated test class in a materialized workspace."""
    argv, cwd = build_command(
        build_spec.compile_and_test_command, class_name,
        build_spec.container_image, workspace, build_spec.workdir,
    )
    log = run_command(argv, cwd, build_spec.environment,
                      build_spec.timeout, version)
    return classify_log(log, adapter), log


def persist_execution(log: ExecutionLog, outcome: TestOutcome,
                      directory: Path) -> Path:
    """Write the raw log plus a JSON sidecar with the parsed outcome."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    raw = directory / f"{log.version}.log"
    body = log.stdout
    if log.stderr:
        body += "\n--- stderr ---\n" + log.stderr
    raw.write_text(body, encoding="utf-8")
    sidecar = directory / f"{log.version}.outcome.json"
    sidecar.write_text(
        json.dumps({
            "outcome": outcome.to_dict(),
            "exit_code": log.exit_code,
            "duration": round(log.duration, 3),
            "timed_out": log.timed_out,
            "version": log.version,
        }, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return raw
