"""Acceptance suite: one test per criterion, one PASS line printed each.

Run with `pytest tests/test_acceptance.py -s` to see the per-criterion
lines; every tolerance is pinned here, nothing is deferred.
"""

import itertools
import json
import os
import time

import pytest
from click.testing import CliRunner

from vulnwitness.cli import main as cli_main
from vulnwitness.focal import LEVELS, MethodLocator, extract_fragments, slice_levels
from vulnwitness.harness import ExecutionLog, Verdict, classify_log
from vulnwitness.loop import (
    HARD_ITERATION_CAP,
    LoopState,
    Termination,
    select_feedback,
    update_state,
)
from vulnwitness.prompts import (
    EMOTION_SENTENCE,
    ROLE_SENTENCE,
    VARIANTS,
    FeedbackKind,
    PromptConfig,
    build_feedback_prompt,
    build_initial_prompt,
    cwe_line,
)
from vulnwitness.reporting import MetricsSummary, ablation_table, cwe_table

from conftest import DATA, materialize_runs, outcome_for, record_for

BUNDLE = DATA / "sample_bundle"


def _report(criterion: int, detail: str):
    print(f"\nACCEPTANCE {criterion}: PASS - {detail}")


# --------------------------------------------------------------- criterion 1

def test_criterion_1_table1_fixture_reproduction(tmp_path, table1,
                                                 table1_records):
    started = time.monotonic()
    runs = materialize_runs(table1_records, tmp_path / "runs")
    result = CliRunner().invoke(cli_main, [
        "report", "--runs", str(runs),
        "--labels", str(DATA / "labels_baseline.csv"),
        "--cwe-map", str(DATA / "cwe_map.json"),
        "--out", str(tmp_path / "report")])
    assert result.exit_code == 0, result.output
    summary = json.loads((tmp_path / "report/summary.json").read_text())

    # exact-match tolerance for semantic and usable figures
    assert summary["overall"]["total"] == 200
    assert summary["overall"]["semantic_ok"] == 15
    assert summary["overall"]["semantic_rate"] == "7.5"
    assert summary["overall"]["usable"] == 137
    assert summary["overall"]["usable_rate"] == "68.5"
    per_level_semantic = {lv: summary["by_level"][lv]["semantic_ok"]
                          for lv in LEVELS}
    assert per_level_semantic == {"L0": 5, "L1": 5, "L2": 3, "L3": 2}
    per_level_usable = {lv: summary["by_level"][lv]["usable"] for lv in LEVELS}
    assert per_level_usable == {"L0": 28, "L1": 34, "L2": 40, "L3": 35}

    # independent recount of non-ERR fixture rows, straight off the grid
    recount = {lv: 0 for lv in LEVELS}
    for entry_id, per_level in table1.items():
        for lv in LEVELS:
            before, after, _ = per_level[lv]
            if "ERR" not in (before, after):
                recount[lv] += 1
    for lv in LEVELS:
        assert summary["by_level"][lv]["syntactic_ok"] == recount[lv]
    published = {"L0": 35, "L1": 35, "L2": 31, "L3": 32}
    for lv in LEVELS:
        assert abs(recount[lv] - published[lv]) <= 1

    elapsed = time.monotonic() - started
    assert elapsed < 5.0
    _report(1, f"semantic 15/200 (5/5/3/2), usable 137/200 (28/34/40/35), "
               f"syntactic recount {tuple(recount.values())} within +/-1 of "
               f"(35/35/31/32); {elapsed:.2f}s")


# --------------------------------------------------------------- criterion 2

def test_criterion_2_ablation_rates_verbatim():
    counts = {"baseline": (133, 15), "no_emotion": (137, 9),
              "no_role": (125, 9), "with_cwe": (130, 8)}
    summaries = {name: MetricsSummary(scope=name, total=200,
                                      syntactic_ok=syn, semantic_ok=sem,
                                      usable=None)
                 for name, (syn, sem) in counts.items()}
    table = ablation_table(summaries)
    assert table.rows == [
        ["baseline", "66.5%", "7.5%"],
        ["no_emotion", "68.5%", "4.5%"],
        ["no_role", "62.5%", "4.5%"],
        ["with_cwe", "65.0%", "4.0%"],
    ]
    # one-decimal, round-half-up boundary cases
    from vulnwitness.reporting import format_rate
    assert format_rate(13, 16) == "81.3"   # 81.25 rounds up
    assert format_rate(9, 16) == "56.3"    # 56.25 rounds up
    assert format_rate(1, 3) == "33.3"
    assert format_rate(2, 3) == "66.7"
    _report(2, "four config rows render (66.5,7.5) (68.5,4.5) (62.5,4.5) "
               "(65.0,4.0) verbatim; half-up rounding verified")


# --------------------------------------------------------------- criterion 3

def test_criterion_3_cwe_grouping(table1_records, table1_labels, cwe_map):
    # pin the whole-set syntactic count to the published 133/200 average by
    # flipping four no-ERR records of small excluded groups to (ERR, ERR)
    flips = {("VUL4J-01", "L0"), ("VUL4J-01", "L1"), ("VUL4J-01", "L3"),
             ("VUL4J-08", "L0")}
    records = [record_for(r.entry_id, r.level, ("ERR", "ERR"))
               if (r.entry_id, r.level) in flips else r
               for r in table1_records]

    table = cwe_table(records, table1_labels, cwe_map, min_group=4)
    assert table.rows == [
        ["Average", "66.5%", "-", "7.5%", "-", "68.5%", "-"],
        ["CWE-20", "66.7%", "+0.2%", "0.0%", "-7.5%", "54.2%", "-14.3%"],
        ["CWE-22", "70.0%", "+3.5%", "0.0%", "-7.5%", "85.0%", "+16.5%"],
        ["CWE-79", "81.3%", "+14.7%", "0.0%", "-7.5%", "81.3%", "+12.7%"],
        ["CWE-611", "56.3%", "-10.3%", "0.0%", "-7.5%", "50.0%", "-18.5%"],
        ["CWE-835", "82.1%", "+15.6%", "0.0%", "-7.5%", "60.7%", "-7.8%"],
        ["Not Mapping", "61.1%", "-5.4%", "25.0%", "+17.5%", "88.9%",
         "+20.4%"],
    ]
    subsets = [row[0] for row in table.rows]
    for small in ("CWE-502", "CWE-863", "CWE-94", "CWE-306", "CWE-287",
                  "CWE-400"):
        assert small not in subsets  # groups under four entries excluded
    _report(3, "all 18 group rates and 18 deltas match; <4-entry groups "
               "excluded; Not Mapping row (61.1, 25.0, 88.9)")


# --------------------------------------------------------------- criterion 4

def test_criterion_4_loop_state_machine():
    started = time.monotonic()
    verdicts = (Verdict.PASS, Verdict.FAIL, Verdict.ERR)

    # exhaustive decision table over all nine verdict pairs
    expected = {
        (Verdict.FAIL, Verdict.PASS): None,
        (Verdict.PASS, Verdict.PASS): FeedbackKind.BEFORE_PASS,
        (Verdict.PASS, Verdict.FAIL): FeedbackKind.BEFORE_PASS,
        (Verdict.FAIL, Verdict.FAIL): FeedbackKind.AFTER_FAIL,
    }
    seen_branches = set()
    for before, after in itertools.product(verdicts, repeat=2):
        got = select_feedback(outcome_for(before.value),
                              outcome_for(after.value))
        if Verdict.ERR in (before, after):
            assert got is FeedbackKind.ERROR
        else:
            assert got == expected[(before, after)]
        seen_branches.add(got)
    assert seen_branches == {None, FeedbackKind.ERROR,
                             FeedbackKind.BEFORE_PASS,
                             FeedbackKind.AFTER_FAIL}

    # exhaustive state sweep: every reachable state x every pair
    for err, comp in itertools.product(range(3), range(5)):
        for pair in itertools.product(verdicts, repeat=2):
            state, stop = update_state(LoopState(err, comp), pair)
            if Verdict.ERR in pair:
                assert state.consecutive_err_count == err + 1
                assert state.compilable_noimprove_count == comp
                assert (stop is Termination.CONSECUTIVE_ERRORS) == (err == 2)
            else:
                assert state.consecutive_err_count == 0
                assert state.compilable_noimprove_count == comp + 1
                assert (stop is Termination.STAGNATION) == (comp == 4)

    # adversarial scripts: stop after exactly 3 consecutive ERRs / 5 stalls
    def drive(pairs):
        state, steps = LoopState(), 0
        for pair in pairs:
            steps += 1
            state, stop = update_state(state, pair)
            if stop:
                return steps, stop
        return steps, None

    steps, stop = drive([(Verdict.ERR, Verdict.ERR)] * 10)
    assert (steps, stop) == (3, Termination.CONSECUTIVE_ERRORS)
    steps, stop = drive([(Verdict.PASS, Verdict.PASS)] * 10)
    assert (steps, stop) == (5, Termination.STAGNATION)
    worst = [(Verdict.ERR, Verdict.ERR), (Verdict.ERR, Verdict.ERR),
             (Verdict.FAIL, Verdict.FAIL)] * 10
    steps, stop = drive(worst)
    assert stop is Termination.STAGNATION
    assert steps <= HARD_ITERATION_CAP

    elapsed = time.monotonic() - started
    assert elapsed < 1.0
    _report(4, f"9-pair decision table, full state sweep, adversarial "
               f"scripts stop at 3/5 within the {HARD_ITERATION_CAP}-step "
               f"cap; {elapsed:.2f}s")


# --------------------------------------------------------------- criterion 5

def test_criterion_5_replay_determinism(tmp_path):
    started = time.monotonic()
    runner = CliRunner()
    for name in ("first", "second"):
        result = runner.invoke(cli_main, [
            "run", "--manifest", str(BUNDLE / "manifest.json"),
            "--mode", "replay", "--out", str(tmp_path / name)])
        assert result.exit_code == 0, result.output
        report = runner.invoke(cli_main, [
            "report", "--runs", str(tmp_path / name / "runs"),
            "--manifest", str(BUNDLE / "manifest.json"),
            "--out", str(tmp_path / name / "report")])
        assert report.exit_code == 0, report.output

    first = tmp_path / "first"
    second = tmp_path / "second"
    compared = 0
    for kind in ("runs", "report"):
        for path in sorted((first / kind).rglob("*")):
            if not path.is_file():
                continue
            twin = second / path.relative_to(first)
            assert twin.read_bytes() == path.read_bytes(), path
            compared += 1
    assert compared >= 12 + 5  # all run records plus the report bundle

    records = sorted((first / "runs").rglob("*.json"))
    assert len(records) == 12
    elapsed = time.monotonic() - started
    assert elapsed < 30.0
    _report(5, f"two replay executions byte-identical across {compared} "
               f"files (12 run records + report bundle); {elapsed:.2f}s")


# --------------------------------------------------------------- criterion 6

def test_criterion_6_focal_context_properties():
    started = time.monotonic()
    corpus_dir = DATA / "java_corpus"
    corpus = json.loads((corpus_dir / "corpus.json").read_text())
    assert len(corpus) >= 20

    features = {"empty_ctor": False, "overload": False, "annotation": False}
    for item in corpus:
        source = (corpus_dir / item["file"]).read_text()
        locator = MethodLocator(item["class_name"], item["method_name"],
                                tuple(item["param_types"]))
        bins = extract_fragments(source, locator)
        contexts = slice_levels(source, locator)

        for lower, higher in zip(LEVELS, LEVELS[1:]):
            assert contexts[lower].fragments_used <= \
                contexts[higher].fragments_used
        for level in LEVELS:
            assert bins.vulnerable_method in contexts[level].snippet

        counts = item["expected_counts"]
        assert len(bins.constructor_headers) == counts["constructors"]
        assert len(bins.method_headers) == counts["methods"]
        assert len(bins.field_decls) == counts["fields"]

        if not bins.constructor_headers:
            features["empty_ctor"] = True
        if item["file"] == "Overloads.java":
            features["overload"] = True
        if "@" in bins.class_decl_header + bins.vulnerable_method:
            features["annotation"] = True
    assert all(features.values()), features

    elapsed = time.monotonic() - started
    assert elapsed < 10.0
    _report(6, f"{len(corpus)} classes: monotone containment, verbatim "
               f"method at all levels, member counts match the oracle; "
               f"{elapsed:.2f}s")


# --------------------------------------------------------------- criterion 7

def test_criterion_7_log_classification_corpus():
    corpus_dir = DATA / "log_corpus"
    cases = json.loads((corpus_dir / "labels.json").read_text())
    assert len(cases) >= 12
    mismatches = []
    for case in cases:
        log = ExecutionLog(
            stdout=(corpus_dir / case["file"]).read_text(), stderr="",
            exit_code=case["exit_code"], duration=1.0, version="before",
            timed_out=case["timed_out"])
        outcome = classify_log(log)
        if (outcome.verdict.value != case["verdict"]
                or outcome.tests_run != case["tests_run"]
                or outcome.notes != frozenset(case["notes"])):
            mismatches.append((case["file"], outcome))
    assert mismatches == []

    zero = next(c for c in cases if "zero_tests_run" in c["notes"])
    log = ExecutionLog(stdout=(corpus_dir / zero["file"]).read_text(),
                       stderr="", exit_code=0, duration=1.0, version="before")
    outcome = classify_log(log)
    assert outcome.verdict is Verdict.PASS
    assert "zero_tests_run" in outcome.notes
    _report(7, f"{len(cases)} frozen build logs classify with zero "
               f"misclassifications; zero-tests case is PASS + flag")


# --------------------------------------------------------------- criterion 8

def test_criterion_8_prompt_fidelity():
    focal = "{focal context of the vulnerable code}"
    patched = "{patched method of vulnerable code}"
    rendered = {}
    for variant in VARIANTS:
        message = build_initial_prompt(
            focal, patched, PromptConfig.from_variant(variant),
            cwe_id="CWE-000")
        golden = (DATA / "prompt_golden" / f"{variant}.txt").read_text()
        assert message.text + "\n" == golden, variant
        rendered[variant] = message.text

    assert rendered["baseline"] == (rendered["no_emotion"] + "\n\n"
                                    + EMOTION_SENTENCE)
    assert rendered["no_emotion"] == ROLE_SENTENCE + "\n" + rendered["no_role"]
    assert rendered["with_cwe"].replace(
        cwe_line("CWE-000") + "\n\n", "", 1) == rendered["baseline"]

    assert build_feedback_prompt(FeedbackKind.BEFORE_PASS).text == (
        "The test you've provided should have failed for the original "
        "version of the vulnerability before the patch, but it passes. "
        "Please fix it and return the whole code.")
    assert build_feedback_prompt(FeedbackKind.AFTER_FAIL).text == (
        "The test you've provided should have passed for the patched "
        "version of the vulnerability, but it fails. Please fix it and "
        "return the whole code.")
    assert build_feedback_prompt(FeedbackKind.ERROR, "<log>").text == (
        "The code you provided has errors in it: <log>. Fix the error "
        "indicated by the compiler message, and answer with the WHOLE "
        "fixed code only.")
    _report(8, "all four variants byte-match their goldens; containment "
               "relations and the three feedback sentences hold")


# --------------------------------------------------------------- criterion 9

@pytest.mark.skipif(
    not os.environ.get("VULNWITNESS_LIVE_SMOKE"),
    reason="live smoke test runs only with VULNWITNESS_LIVE_SMOKE=1 "
           "(real provider + real builds; excluded from CI)")
def test_criterion_9_live_smoke(tmp_path):
    manifest = os.environ.get("VULNWITNESS_SMOKE_MANIFEST",
                              str(BUNDLE / "manifest.json"))
    result = CliRunner().invoke(cli_main, [
        "run", "--manifest", manifest, "--mode", "live",
        "--levels", "L0", "--configs", "baseline",
        "--out", str(tmp_path / "live")])
    assert result.exit_code in (0, 1), result.output
    records = sorted((tmp_path / "live" / "runs").rglob("*.json"))
    assert records, "no run record persisted"
    from vulnwitness.loop import load_run_record
    record = load_run_record(records[0])
    assert record.complete  # any verdict pair is acceptable
    _report(9, f"live run persisted a well-formed record: "
               f"{record.final_pair} ({record.termination_reason})")
