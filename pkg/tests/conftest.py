"""Shared fixtures: frozen result grid, labels, and record builders."""

import json
from pathlib import Path

import pytest

from vulnwitness.harness import TestOutcome, Verdict
from vulnwitness.loop import IterationRecord, RunRecord, save_run_record
from vulnwitness.reporting import ManualLabel

DATA = Path(__file__).parent / "data"

LEVELS = ("L0", "L1", "L2", "L3")


def outcome_for(verdict: str) -> TestOutcome:
    v = Verdict(verdict)
    return TestOutcome(v, tests_run=0 if v is Verdict.ERR else 1)


def record_for(entry_id: str, level: str, pair: tuple[str, str],
               config: str = "baseline") -> RunRecord:
    """One-iteration run record whose final pair is the given grid cell."""
    iteration = IterationRecord(
        ordinal=1, prompt_kind="INITIAL",
        extracted_code=f"public class {entry_id.replace('-', '')}Test {{}}",
        before_outcome=outcome_for(pair[0]),
        after_outcome=outcome_for(pair[1]),
        logs=(f"logs/{config}/{level}/{entry_id}/1/before.log",
              f"logs/{config}/{level}/{entry_id}/1/after.log"),
    )
    termination = "accepted" if pair == ("FAIL", "PASS") else "stagnation"
    return RunRecord(
        entry_id=entry_id, level=level, config=config,
        iterations=[iteration], best_iteration=1,
        final_pair=pair, termination_reason=termination,
    )


@pytest.fixture(scope="session")
def table1():
    """The frozen 50-entry result grid: id -> level -> [before, after, manual]."""
    return json.loads((DATA / "table1.json").read_text())


@pytest.fixture(scope="session")
def cwe_map():
    return json.loads((DATA / "cwe_map.json").read_text())


@pytest.fixture(scope="session")
def table1_records(table1):
    records = []
    for entry_id in sorted(table1):
        for level in LEVELS:
            before, after, _ = table1[entry_id][level]
            records.append(record_for(entry_id, level, (before, after)))
    return records


@pytest.fixture(scope="session")
def table1_labels(table1):
    labels = []
    for entry_id in sorted(table1):
        for level in LEVELS:
            labels.append(ManualLabel(entry_id, level, "baseline",
                                      table1[entry_id][level][2]))
    return labels


def materialize_runs(records, runs_dir: Path) -> Path:
    for record in records:
        save_run_record(record, runs_dir)
    return runs_dir


@pytest.fixture()
def sample_bundle():
    return DATA / "sample_bundle"
