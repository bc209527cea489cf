#!/usr/bin/env python3
"""Regenerate the sample replay bundle's transcripts and build logs.

Drives the real pipeline in record mode against canned model responses
and scripted build outcomes, so the recorded transcripts contain exactly
the prompts the pipeline produces. Output lands in
tests/data/sample_bundle/{transcripts,build_logs}; project trees and the
manifest are maintained by hand.
"""

import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "src"))

from vulnwitness import llm, loop, manifest as manifest_mod  # noqa: E402
from vulnwitness.prompts import PromptConfig  # noqa: E402

BUNDLE = REPO / "tests" / "data" / "sample_bundle"

PASS_LOG = """\
[INFO] Scanning for projects...
[INFO] Building {project} 1.0
[INFO]
[INFO] --- maven-surefire-plugin:2.19.1:test (default-test) @ {project} ---
[INFO] Running com.sample.{pkg}.{cls}
[INFO] Tests run: 1, Failures: 0, Errors: 0, Skipped: 0, Time elapsed: 0.1 s - in com.sample.{pkg}.{cls}
[INFO]
[INFO] Results:
[INFO]
[INFO] Tests run: 1, Failures: 0, Errors: 0, Skipped: 0
[INFO]
[INFO] BUILD SUCCESS
"""

FAIL_LOG = """\
[INFO] Scanning for projects...
[INFO] Building {project} 1.0
[INFO]
[INFO] --- maven-surefire-plugin:2.19.1:test (default-test) @ {project} ---
[INFO] Running com.sample.{pkg}.{cls}
[ERROR] Tests run: 1, Failures: 1, Errors: 0, Skipped: 0, Time elapsed: 0.1 s <<< FAILURE! - in com.sample.{pkg}.{cls}
[ERROR] {method}(com.sample.{pkg}.{cls})  Time elapsed: 0.1 s  <<< FAILURE!
java.lang.AssertionError: expected witness behaviour
\tat com.sample.{pkg}.{cls}.{method}({cls}.java:24)
[INFO]
[INFO] Results:
[ERROR] Tests run: 1, Failures: 1, Errors: 0, Skipped: 0
[ERROR] There are test failures.
[INFO] BUILD FAILURE
"""

ERR_LOG = """\
[INFO] Scanning for projects...
[INFO] Building {project} 1.0
[INFO]
[INFO] --- maven-compiler-plugin:3.1:testCompile (default-testCompile) @ {project} ---
[INFO] -------------------------------------------------------------
[ERROR] COMPILATION ERROR :
[INFO] -------------------------------------------------------------
[ERROR] /workspace/src/test/java/com/sample/{pkg}/{cls}.java:[12,8] cannot find symbol
  symbol:   class MissingHelper
  location: class com.sample.{pkg}.{cls}
[INFO] 1 error
[INFO] BUILD FAILURE
"""

TEST_CODE = """\
package com.sample.{pkg};

import org.junit.Test;
import static org.junit.Assert.*;

public class {cls} {{

    // generation {k}
    @Test
    public void {method}() throws Exception {{
        {body}
    }}
}}
"""

PROSE = ("Here is a unit test that should fail before the patch and pass "
         "after it:\n\n```java\n{code}```\n\nLet me know if it needs "
         "adjustments for your build environment.")

# per entry: java package, test class, test method, assertion body
SUBJECTS = {
    "SAMPLE-1": ("expander", "ExpanderTest", "testExpandOutsideTarget",
                 'new Expander().expand("../outside.txt", '
                 'new java.io.File("target"));'),
    "SAMPLE-2": ("jpeg", "JpegDecoderTest", "testExtendTerminates",
                 "assertEquals(-255, new JpegDecoder().decodeSample(0, 8));"),
    "SAMPLE-3": ("yaml", "TreeLoaderTest", "testRejectsForeignTypes",
                 'new TreeLoader().loadTree("!!java.lang.Runtime x");'),
}

# per (entry, level): iteration script; each item is (before, after) or None
# for a response with no extractable code
SCENARIOS = {
    ("SAMPLE-1", "L0"): [("FAIL", "PASS")],
    ("SAMPLE-1", "L1"): [("FAIL", "PASS")],
    ("SAMPLE-1", "L2"): [("FAIL", "PASS")],
    ("SAMPLE-1", "L3"): [("FAIL", "PASS")],
    ("SAMPLE-2", "L0"): [("ERR", "ERR"), ("ERR", "ERR"), ("ERR", "ERR")],
    ("SAMPLE-2", "L1"): [("ERR", "ERR"), ("FAIL", "PASS")],
    ("SAMPLE-2", "L2"): [("FAIL", "FAIL"), ("FAIL", "PASS")],
    ("SAMPLE-2", "L3"): [("PASS", "PASS"), ("FAIL", "FAIL"), ("PASS", "PASS"),
                         ("FAIL", "FAIL"), ("PASS", "FAIL")],
    ("SAMPLE-3", "L0"): [("PASS", "PASS"), ("FAIL", "PASS")],
    ("SAMPLE-3", "L1"): [None, None, None],
    ("SAMPLE-3", "L2"): [("ERR", "PASS"), ("FAIL", "FAIL"), ("ERR", "ERR"),
                         ("FAIL", "PASS")],
    ("SAMPLE-3", "L3"): [None, ("FAIL", "FAIL"), ("PASS", "PASS"),
                         ("FAIL", "FAIL"), ("PASS", "PASS"), ("FAIL", "FAIL")],
}

NO_CODE_RESPONSE = (
    "I would need more details about the build setup before writing the "
    "test; the vulnerable path depends on the runtime configuration.")

LOG_TEMPLATES = {"PASS": PASS_LOG, "FAIL": FAIL_LOG, "ERR": ERR_LOG}


def write_build_logs():
    logs_root = BUNDLE / "build_logs"
    if logs_root.exists():
        shutil.rmtree(logs_root)
    for (entry_id, level), script in sorted(SCENARIOS.items()):
        pkg, cls, method, _ = SUBJECTS[entry_id]
        project = entry_id.lower()
        for ordinal, item in enumerate(script, start=1):
            if item is None:
                continue
            for version, verdict in zip(("before", "after"), item):
                text = LOG_TEMPLATES[verdict].format(
                    project=project, pkg=pkg, cls=cls, method=method)
                path = (logs_root / entry_id / "baseline" / level
                        / f"{ordinal}.{version}.log")
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_text(text, encoding="utf-8")


def make_transport(entry_id: str, level: str):
    pkg, cls, method, body = SUBJECTS[entry_id]
    script = SCENARIOS[(entry_id, level)]

    def transport(conv):
        k = (len(conv.messages) + 1) // 2  # response ordinal
        item = script[k - 1]
        if item is None:
            return NO_CODE_RESPONSE
        code = TEST_CODE.format(pkg=pkg, cls=cls, method=method,
                                body=body, k=k)
        return PROSE.format(code=code)

    return transport


def record_transcripts():
    transcripts = BUNDLE / "transcripts"
    if transcripts.exists():
        shutil.rmtree(transcripts)
    entries = manifest_mod.load_manifest(BUNDLE / "manifest.json")
    store = llm.TranscriptStore("record", transcripts)
    config = PromptConfig.from_variant("baseline")

    with tempfile.TemporaryDirectory() as scratch:
        scratch = Path(scratch)
        for entry in entries:
            before = manifest_mod.materialize(entry, "before",
                                              scratch / entry.id / "before")
            after = manifest_mod.materialize(entry, "after",
                                             scratch / entry.id / "after")
            for level in ("L0", "L1", "L2", "L3"):
                ctx = loop.RunContext(
                    store=store,
                    runs_dir=scratch / "runs",
                    logs_dir=scratch / "logs",
                    executor=loop.ScriptedExecutor(BUNDLE / "build_logs"),
                    before_ws=before,
                    after_ws=after,
                    transport=make_transport(entry.id, level),
                )
                record = loop.run_entry(entry, level, config, ctx)
                print(f"{entry.id} {level}: {record.final_pair} "
                      f"{record.termination_reason} "
                      f"({len(record.iterations)} iterations)")


if __name__ == "__main__":
    write_build_logs()
    record_transcripts()
    print(f"bundle refreshed under {BUNDLE}")
