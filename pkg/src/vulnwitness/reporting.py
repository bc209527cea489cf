"""Aggregate run records into the evaluation tables.

Two automatic predicates drive everything: a run is syntactically correct
when its retained outcome pair contains no ERR (the best generation
compiled on both versions), and semantically correct when that pair is
exactly (FAIL, PASS). Manual usability labels are merged in from a CSV.
Rates display with one decimal, rounded half-up; the delta column of the
CWE table is computed from bankers-rounded group rates so a rate sitting
exactly on a rounding boundary never overstates its gap to the average.
"""

from __future__ import annotations

import csv
import enum
import json
import re
from dataclasses import dataclass, field
from decimal import Decimal, ROUND_HALF_EVEN, ROUND_HALF_UP
from pathlib import Path

from .focal import LEVELS
from .javaparse import JavaParseError, parse_java_unit
from .loop import RunRecord
from .prompts import VARIANTS

NOT_MAPPING = "Not Mapping"


# ---------------------------------------------------------------- predicates

def syntactic_correct(record: RunRecord) -> bool:
    """Best generation compiled on both versions."""
    return "ERR" not in record.final_pair


def semantic_correct(record: RunRecord) -> bool:
    """Fails on the vulnerable version and passes on the fixed one."""
    return tuple(record.final_pair) == ("FAIL", "PASS")


# ------------------------------------------------------------------- labels

@dataclass(frozen=True)
class ManualLabel:
    entry_id: str
    level: str
    config: str
    label: str  # OK | NO

    def __post_init__(self):
        if self.label not in ("OK", "NO"):
            raise ValueError(f"label must be OK or NO, got {self.label!r}")


def load_labels(path: str | Path) -> list[ManualLabel]:
    """Read the manual-evaluation CSV (header: entry_id,level,config,label)."""
    labels: list[ManualLabel] = []
    seen: set[tuple[str, str, str]] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            label = ManualLabel(row["entry_id"], row["level"], row["config"],
                                row["label"].strip())
            key = (label.entry_id, label.level, label.config)
            if key in seen:
                raise ValueError(f"duplicate manual label for {key}")
            seen.add(key)
            labels.append(label)
    return labels


# ------------------------------------------------------------------ rounding

def _raw_rate(count: int, total: int) -> Decimal:
    return Decimal(count) * 100 / Decimal(total)


def format_rate(count: int, total: int) -> str:
    """Percentage with one decimal, round half up: 13/16 -> '81.3'."""
    return str(_raw_rate(count, total).quantize(Decimal("0.1"), ROUND_HALF_UP))


def _even_rate(count: int, total: int) -> Decimal:
    return _raw_rate(count, total).quantize(Decimal("0.1"), ROUND_HALF_EVEN)


def format_delta(count: int, total: int, avg_count: int, avg_total: int) -> str:
    """Signed gap between a group rate and the overall rate, one decimal."""
    delta = _even_rate(count, total) - Decimal(format_rate(avg_count, avg_total))
    sign = "+" if delta >= 0 else ""
    return f"{sign}{delta}"


# ------------------------------------------------------------------- scoping

@dataclass(frozen=True)
class Scope:
    """Record filter: level/config selection, entry subsets, exclusions.

    ``exclude_entry_ids`` mirrors the manually-reviewed-cases exclusion
    used when rates should skip hand-checked entries.
    """

    levels: tuple[str, ...] | None = None
    config: str | None = None
    entry_ids: frozenset[str] | None = None
    exclude_entry_ids: frozenset[str] = frozenset()
    description: str = "all"

    def admits(self, record: RunRecord) -> bool:
        if self.levels is not None and record.level not in self.levels:
            return False
        if self.config is not None and record.config != self.config:
            return False
        if self.entry_ids is not None and record.entry_id not in self.entry_ids:
            return False
        if record.entry_id in self.exclude_entry_ids:
            return False
        return True


@dataclass(frozen=True)
class MetricsSummary:
    scope: str
    total: int
    syntactic_ok: int
    semantic_ok: int
    usable: int | None  # None when no labels were supplied

    def __post_init__(self):
        if not (self.semantic_ok <= self.syntactic_ok <= self.total):
            raise ValueError("count ordering violated: "
                             f"{self.semantic_ok} <= {self.syntactic_ok} "
                             f"<= {self.total} expected")

    @property
    def syntactic_rate(self) -> str:
        return format_rate(self.syntactic_ok, self.total)

    @property
    def semantic_rate(self) -> str:
        return format_rate(self.semantic_ok, self.total)

    @property
    def usable_rate(self) -> str | None:
        if self.usable is None:
            return None
        return format_rate(self.usable, self.total)

    def to_dict(self) -> dict:
        out = {
            "scope": self.scope,
            "total": self.total,
            "syntactic_ok": self.syntactic_ok,
            "syntactic_rate": self.syntactic_rate,
            "semantic_ok": self.semantic_ok,
            "semantic_rate": self.semantic_rate,
        }
        if self.usable is not None:
            out["usable"] = self.usable
            out["usable_rate"] = self.usable_rate
        return out


def summarize(records: list[RunRecord], labels: list[ManualLabel] | None,
              scope: Scope = Scope()) -> MetricsSummary:
    """Count the predicates over one scope of records."""
    selected = [r for r in records if scope.admits(r)]
    if not selected:
        raise ValueError(f"scope {scope.description!r} selects no records")

    usable: int | None = None
    if labels is not None:
        ok_keys = {(l.entry_id, l.level, l.config)
                   for l in labels if l.label == "OK"}
        usable = sum(1 for r in selected
                     if (r.entry_id, r.level, r.config) in ok_keys)

    return MetricsSummary(
        scope=scope.description,
        total=len(selected),
        syntactic_ok=sum(1 for r in selected if syntactic_correct(r)),
        semantic_ok=sum(1 for r in selected if semantic_correct(r)),
        usable=usable,
    )


# -------------------------------------------------------------------- tables

@dataclass
class Table:
    headers: list[str]
    rows: list[list[str]] = field(default_factory=list)
    notices: list[str] = field(default_factory=list)

    def to_markdown(self) -> str:
        lines = ["| " + " | ".join(self.headers) + " |",
                 "|" + "|".join([" --- "] * len(self.headers)) + "|"]
        for row in self.rows:
            lines.append("| " + " | ".join(row) + " |")
        for notice in self.notices:
            lines.append("")
            lines.append(f"*{notice}*")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        import io
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(self.headers)
        writer.writerows(self.rows)
        return buf.getvalue()

    def to_text(self) -> str:
        widths = [len(h) for h in self.headers]
        for row in self.rows:
            widths = [max(w, len(c)) for w, c in zip(widths, row)]
        def fmt(cells):
            return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
        lines = [fmt(self.headers), fmt(["-" * w for w in widths])]
        lines.extend(fmt(row) for row in self.rows)
        lines.extend(f"note: {n}" for n in self.notices)
        return "\n".join(lines) + "\n"


def ablation_table(summaries: dict[str, MetricsSummary]) -> Table:
    """Syntax/semantics rates per prompt variant, baseline first."""
    if "baseline" not in summaries:
        raise ValueError("ablation table requires the baseline config")
    table = Table(headers=["Config", "Syntax", "Semantics"])
    for variant in VARIANTS:
        summary = summaries.get(variant)
        if summary is None:
            table.notices.append(f"config {variant} missing; row omitted")
            continue
        table.rows.append([variant, f"{summary.syntactic_rate}%",
                           f"{summary.semantic_rate}%"])
    return table


def cwe_table(records: list[RunRecord], labels: list[ManualLabel] | None,
              cwe_map: dict[str, str | None], min_group: int = 4) -> Table:
    """Per-CWE-group rates with signed deltas against the overall average.

    Groups smaller than min_group entries are dropped (single outliers skew
    small groups); entries without a CWE id form the "Not Mapping" row.
    """
    if min_group < 1:
        raise ValueError("min_group must be >= 1")

    ok_keys = set()
    if labels is not None:
        ok_keys = {(l.entry_id, l.level, l.config)
                   for l in labels if l.label == "OK"}

    def counts(rs: list[RunRecord]) -> tuple[int, int, int, int]:
        syn = sum(1 for r in rs if syntactic_correct(r))
        sem = sum(1 for r in rs if semantic_correct(r))
        use = sum(1 for r in rs if (r.entry_id, r.level, r.config) in ok_keys)
        return len(rs), syn, sem, use

    total, syn_all, sem_all, use_all = counts(records)

    groups: dict[str, set[str]] = {}
    for record in records:
        cwe = cwe_map.get(record.entry_id) or NOT_MAPPING
        groups.setdefault(cwe, set()).add(record.entry_id)

    def sort_key(cwe: str):
        if cwe == NOT_MAPPING:
            return (1, 0)
        m = re.search(r"(\d+)", cwe)
        return (0, int(m.group(1)) if m else 0)

    headers = ["Subset", "Syntax", "", "Semantics", ""]
    if labels is not None:
        headers += ["Usability", ""]
    table = Table(headers=headers)

    avg_row = ["Average", f"{format_rate(syn_all, total)}%", "-",
               f"{format_rate(sem_all, total)}%", "-"]
    if labels is not None:
        avg_row += [f"{format_rate(use_all, total)}%", "-"]
    table.rows.append(avg_row)

    for cwe in sorted(groups, key=sort_key):
        entry_ids = groups[cwe]
        if cwe != NOT_MAPPING and len(entry_ids) < min_group:
            continue
        rs = [r for r in records
              if (cwe_map.get(r.entry_id) or NOT_MAPPING) == cwe]
        n, syn, sem, use = counts(rs)
        row = [cwe,
               f"{format_rate(syn, n)}%",
               f"{format_delta(syn, n, syn_all, total)}%",
               f"{format_rate(sem, n)}%",
               f"{format_delta(sem, n, sem_all, total)}%"]
        if labels is not None:
            row += [f"{format_rate(use, n)}%",
                    f"{format_delta(use, n, use_all, total)}%"]
        table.rows.append(row)
    return table


def emit_results_table(records: list[RunRecord],
                       labels: list[ManualLabel] | None,
                       config: str = "baseline") -> Table:
    """Per-entry grid: Before/After verdicts (and label) for each level."""
    label_by_key: dict[tuple[str, str], str] = {}
    if labels is not None:
        label_by_key = {(l.entry_id, l.level): l.label
                        for l in labels if l.config == config}

    headers = ["Vul4J ID"]
    for level in LEVELS:
        headers += [f"{level} Before", f"{level} After"]
        if labels is not None:
            headers.append(f"{level} Manual")
    table = Table(headers=headers)
    if labels is None:
        table.notices.append("no manual labels supplied; usability omitted")

    by_entry: dict[str, dict[str, RunRecord]] = {}
    for record in records:
        if record.config != config:
            continue
        by_entry.setdefault(record.entry_id, {})[record.level] = record

    for entry_id in sorted(by_entry):
        row = [entry_id]
        for level in LEVELS:
            record = by_entry[entry_id].get(level)
            if record is None:
                row += ["-", "-"] + (["-"] if labels is not None else [])
                continue
            row += list(record.final_pair)
            if labels is not None:
                row.append(label_by_key.get((entry_id, level), "-"))
        table.rows.append(row)
    return table


# --------------------------------------------------------- failure patterns

class FailureCategory(str, enum.Enum):
    IMPORT_ERROR = "import_error"
    UNDETECTED_TEST = "undetected_test"
    MISTARGETED_TEST = "mistargeted_test"
    MISUSED_CALL = "misused_call"
    VISIBILITY_ERROR = "visibility_error"
    VERSION_ERROR = "version_error"
    OTHER = "other"


@dataclass(frozen=True)
class FailurePattern:
    category: FailureCategory
    evidence: str


_IMPORT_PATTERNS = (
    re.compile(r"package [\w.]+ does not exist"),
    re.compile(r"cannot find symbol[\s\S]{0,120}?symbol:\s+class"),
)
_VISIBILITY_PATTERNS = (
    re.compile(r"has (?:private|protected) access in"),
    re.compile(r"is not public in [\w.]+; cannot be accessed"),
)
_VERSION_PATTERNS = (
    re.compile(r"(?:not supported|invalid) (?:in|source) release"),
    re.compile(r"use -source \d+ or higher"),
    re.compile(r"not supported in -source"),
)
_MISUSED_PATTERNS = (
    re.compile(r"method \w+ in class [\w.<>]+ cannot be applied to given types"),
    re.compile(r"constructor [\w.]+ in class [\w.<>]+ cannot be applied"),
    re.compile(r"incompatible types:"),
)


def _code_redefines_method(code: str, name: str, param_count: int | None) -> bool:
    try:
        unit = parse_java_unit(code)
    except JavaParseError:
        return False
    for cls in unit.classes:
        for member in cls.members:
            if member.kind == "method" and member.name == name:
                if param_count is None or member.param_types is None:
                    return True
                if len(member.param_types) == param_count:
                    return True
    return False


def classify_failure(record: RunRecord,
                     log_text: str = "") -> FailurePattern | None:
    """Tag a non-witnessing run with its most likely failure pattern.

    Heuristic and advisory; the evidence excerpt is retained so a human
    can audit every tag. Returns None for semantically correct runs.
    """
    if semantic_correct(record):
        return None

    best = None
    if record.best_iteration is not None:
        best = record.iterations[record.best_iteration - 1]

    def excerpt(match: re.Match) -> str:
        start = max(match.start() - 40, 0)
        return log_text[start : match.end() + 80].strip()

    for pattern in _IMPORT_PATTERNS:
        m = pattern.search(log_text)
        if m:
            return FailurePattern(FailureCategory.IMPORT_ERROR, excerpt(m))

    if best is not None and best.before_outcome and best.after_outcome:
        flags = best.before_outcome.notes & best.after_outcome.notes
        if "zero_tests_run" in flags:
            return FailurePattern(FailureCategory.UNDETECTED_TEST,
                                  "no tests executed on either version")

    if best is not None and best.extracted_code and record.focal_method:
        name = record.focal_method.get("name")
        params = record.focal_method.get("param_types")
        count = len(params) if params is not None else None
        if name and _code_redefines_method(best.extracted_code, name, count):
            return FailurePattern(
                FailureCategory.MISTARGETED_TEST,
                f"generated test declares its own {name}() instead of "
                "exercising the focal one")

    for pattern in _VISIBILITY_PATTERNS:
        m = pattern.search(log_text)
        if m:
            return FailurePattern(FailureCategory.VISIBILITY_ERROR, excerpt(m))
    for pattern in _VERSION_PATTERNS:
        m = pattern.search(log_text)
        if m:
            return FailurePattern(FailureCategory.VERSION_ERROR, excerpt(m))
    for pattern in _MISUSED_PATTERNS:
        m = pattern.search(log_text)
        if m:
            return FailurePattern(FailureCategory.MISUSED_CALL, excerpt(m))

    return FailurePattern(FailureCategory.OTHER,
                          f"final pair {tuple(record.final_pair)}")


def failures_table(records: list[RunRecord],
                   log_loader=None) -> Table:
    """Counts per failure category plus per-run tags with evidence."""
    table = Table(headers=["Run", "Category", "Evidence"])
    counts: dict[str, int] = {}
    for record in records:
        text = log_loader(record) if log_loader else ""
        pattern = classify_failure(record, text)
        if pattern is None:
            continue
        counts[pattern.category.value] = counts.get(pattern.category.value, 0) + 1
        run_id = f"{record.config}/{record.level}/{record.entry_id}"
        evidence = " ".join(pattern.evidence.split())
        if len(evidence) > 100:
            evidence = evidence[:97] + "..."
        table.rows.append([run_id, pattern.category.value, evidence])
    summary = ", ".join(f"{k}: {v}" for k, v in sorted(counts.items()))
    table.notices.append(f"category counts - {summary}" if summary
                         else "no failures to classify")
    return table


# ------------------------------------------------------------ report bundle

def write_report_bundle(records: list[RunRecord],
                        labels: list[ManualLabel] | None,
                        cwe_map: dict[str, str | None],
                        out_dir: str | Path,
                        log_loader=None) -> Path:
    """Write table1.md, ablation.md, cwe.md, failures.md, summary.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    configs = sorted({r.config for r in records},
                     key=lambda c: VARIANTS.index(c) if c in VARIANTS else 99)

    (out / "table1.md").write_text(
        emit_results_table(records, labels, config=configs[0]).to_markdown(),
        encoding="utf-8")

    summaries = {}
    for config in configs:
        summaries[config] = summarize(records, labels,
                                      Scope(config=config, description=config))
    if "baseline" in summaries:
        (out / "ablation.md").write_text(
            ablation_table(summaries).to_markdown(), encoding="utf-8")

    (out / "cwe.md").write_text(
        cwe_table(records, labels, cwe_map).to_markdown(), encoding="utf-8")

    (out / "failures.md").write_text(
        failures_table(records, log_loader).to_markdown(), encoding="utf-8")

    summary_doc = {
        "overall": summarize(records, labels).to_dict(),
        "by_level": {
            level: summarize(records, labels,
                             Scope(levels=(level,), description=level)).to_dict()
            for level in LEVELS
            if any(r.level == level for r in records)
        },
        "by_config": {c: s.to_dict() for c, s in summaries.items()},
    }
    (out / "summary.json").write_text(
        json.dumps(summary_doc, indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    return out
