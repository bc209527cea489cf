"""Load, validate, and materialize vulnerability entries.

The manifest is one JSON array; each element describes a vulnerability:
what project trees hold the before/after versions, where the vulnerable
class lives, how to identify the method, the fixed method body verbatim,
and how to compile-and-run a single test class. Source-tree references
are either ``{"dir": path}`` or ``{"git": {"url"|"path": ..., "rev": ...}}``
with relative paths resolved against the manifest's own directory.
"""

from __future__ import annotations

import filecmp
import json
import re
import shutil
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

from .focal import LocatorError, MethodLocator, resolve_method
from .harness import TEST_CLASS_PLACEHOLDER
from .javaparse import JavaParseError, parse_java_unit

VERSIONS = ("before", "after")


class ManifestError(ValueError):
    """Manifest file missing, unreadable, or structurally invalid."""


class MaterializeError(RuntimeError):
    """A source-tree reference could not be turned into a checkout."""


@dataclass(frozen=True)
class SourceRef:
    """Reference to one project tree: a directory or a git revision."""

    dir: str | None = None
    git_url: str | None = None
    git_rev: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "SourceRef":
        if not isinstance(data, dict):
            raise ManifestError(f"source ref must be an object, got {data!r}")
        if "dir" in data:
            return cls(dir=data["dir"])
        if "git" in data:
            git = data["git"]
            url = git.get("url") or git.get("path")
            if not url or not git.get("rev"):
                raise ManifestError(
                    "git ref needs 'url' (or 'path') and 'rev'")
            return cls(git_url=url, git_rev=git["rev"])
        raise ManifestError(f"source ref needs 'dir' or 'git', got {sorted(data)}")

    def to_dict(self) -> dict:
        if self.dir is not None:
            return {"dir": self.dir}
        return {"git": {"url": self.git_url, "rev": self.git_rev}}


@dataclass(frozen=True)
class BuildSpec:
    compile_and_test_command: tuple[str, ...]
    environment: dict[str, str] = field(default_factory=dict)
    workdir: str = ""
    timeout: float = 600.0
    container_image: str | None = None

    def __post_init__(self):
        if self.timeout <= 0:
            raise ManifestError("build timeout must be > 0")
        holes = sum(arg.count(TEST_CLASS_PLACEHOLDER)
                    for arg in self.compile_and_test_command)
        if holes != 1:
            raise ManifestError(
                f"command template must contain the {TEST_CLASS_PLACEHOLDER} "
                f"placeholder exactly once (found {holes})")

    @classmethod
    def from_dict(cls, data: dict) -> "BuildSpec":
        return cls(
            compile_and_test_command=tuple(data["compile_and_test_command"]),
            environment=dict(data.get("environment", {})),
            workdir=data.get("workdir", ""),
            timeout=float(data.get("timeout", 600)),
            container_image=data.get("container_image"),
        )

    def to_dict(self) -> dict:
        out = {
            "compile_and_test_command": list(self.compile_and_test_command),
            "environment": dict(self.environment),
            "workdir": self.workdir,
            "timeout": self.timeout,
        }
        if self.container_image:
            out["container_image"] = self.container_image
        return out


@dataclass(frozen=True)
class VulnEntry:
    id: str
    before_ref: SourceRef
    after_ref: SourceRef
    focal_file: str
    method_locator: MethodLocator
    patched_method_text: str
    test_target_dir: str
    build_spec: BuildSpec
    cve_id: str | None = None
    cwe_id: str | None = None  # None renders as "Not Mapping"
    base_dir: Path = Path(".")  # manifest location; resolves relative refs

    @property
    def focal_class(self) -> str:
        return self.method_locator.class_name


_REQUIRED_FIELDS = (
    "id", "before_ref", "after_ref", "focal_file", "method_locator",
    "patched_method_text", "test_target_dir", "build_spec",
)


def _entry_from_dict(data: dict, base_dir: Path, index: int) -> VulnEntry:
    if not isinstance(data, dict):
        raise ManifestError(f"entry #{index} is not an object")
    missing = [f for f in _REQUIRED_FIELDS if not data.get(f)]
    if missing:
        eid = data.get("id", f"#{index}")
        raise ManifestError(f"entry {eid}: missing field(s) {', '.join(missing)}")
    eid = data["id"]
    try:
        return VulnEntry(
            id=eid,
            cve_id=data.get("cve_id"),
            cwe_id=data.get("cwe_id"),
            before_ref=SourceRef.from_dict(data["before_ref"]),
            after_ref=SourceRef.from_dict(data["after_ref"]),
            focal_file=data["focal_file"],
            method_locator=MethodLocator.from_dict(data["method_locator"]),
            patched_method_text=data["patched_method_text"],
            test_target_dir=data["test_target_dir"],
            build_spec=BuildSpec.from_dict(data["build_spec"]),
            base_dir=base_dir,
        )
    except ManifestError as exc:
        raise ManifestError(f"entry {eid}: {exc}") from exc
    except (KeyError, TypeError) as exc:
        raise ManifestError(f"entry {eid}: malformed field: {exc}") from exc


def load_manifest(path: str | Path) -> list[VulnEntry]:
    """Parse a manifest file; order is preserved, ids must be unique."""
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise ManifestError("manifest must be a JSON array of entries")

    entries = [_entry_from_dict(item, path.parent.resolve(), i)
               for i, item in enumerate(data)]
    seen: set[str] = set()
    for entry in entries:
        if entry.id in seen:
            raise ManifestError(f"duplicate entry id {entry.id!r}")
        seen.add(entry.id)
    return entries


def _resolve_dir(ref_dir: str, base_dir: Path) -> Path:
    p = Path(ref_dir)
    return p if p.is_absolute() else base_dir / p


def _copy_tree(src: Path, dest: Path) -> None:
    shutil.copytree(
        src, dest,
        ignore=shutil.ignore_patterns(".git"),
        dirs_exist_ok=False,
    )


def materialize(entry: VulnEntry, version: str, workspace: str | Path) -> Path:
    """Check out one version of the entry's project into workspace.

    Repeated calls with identical inputs produce byte-identical trees: an
    existing workspace is cleared and rebuilt rather than trusted.
    """
    if version not in VERSIONS:
        raise ValueError(f"version must be one of {VERSIONS}, got {version!r}")
    ref = entry.before_ref if version == "before" else entry.after_ref
    workspace = Path(workspace)

    if workspace.exists():
        shutil.rmtree(workspace)
    workspace.parent.mkdir(parents=True, exist_ok=True)

    if ref.dir is not None:
        src = _resolve_dir(ref.dir, entry.base_dir)
        if not src.is_dir():
            raise MaterializeError(
                f"{entry.id}/{version}: source dir not found: {src}")
        _copy_tree(src, workspace)
    else:
        url = ref.git_url
        if url and not re.match(r"^[a-z+]+://", url):
            url = str(_resolve_dir(url, entry.base_dir))
        try:
            subprocess.run(["git", "clone", "--quiet", url, str(workspace)],
                           check=True, capture_output=True, text=True)
            subprocess.run(["git", "-C", str(workspace), "checkout", "--quiet",
                            ref.git_rev],
                           check=True, capture_output=True, text=True)
        except (subprocess.CalledProcessError, FileNotFoundError) as exc:
            detail = getattr(exc, "stderr", "") or str(exc)
            raise MaterializeError(
                f"{entry.id}/{version}: git checkout failed: {detail.strip()}"
            ) from exc
        shutil.rmtree(workspace / ".git", ignore_errors=True)

    if not (workspace / entry.focal_file).is_file():
        raise MaterializeError(
            f"{entry.id}/{version}: tree does not contain {entry.focal_file}")
    return workspace


@dataclass(frozen=True)
class Finding:
    severity: str  # error | warning
    field: str
    message: str


@dataclass
class ValidationReport:
    entry_id: str
    findings: list[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not any(f.severity == "error" for f in self.findings)

    def add(self, severity: str, field_name: str, message: str) -> None:
        self.findings.append(Finding(severity, field_name, message))


def _normalize_ws(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip()


def _tree_files(root: Path) -> dict[str, Path]:
    return {str(p.relative_to(root)): p
            for p in sorted(root.rglob("*")) if p.is_file()}


def validate_entry(entry: VulnEntry, scratch: str | Path) -> ValidationReport:
    """Deep-check one entry against its actual trees.

    Needs a scratch directory for checkouts. Validation failures are data:
    the report lists findings instead of raising.
    """
    report = ValidationReport(entry.id)
    scratch = Path(scratch)
    trees: dict[str, Path] = {}
    for version, ref_field in (("before", "before_ref"), ("after", "after_ref")):
        try:
            trees[version] = materialize(entry, version, scratch / version)
        except (MaterializeError, ValueError) as exc:
            report.add("error", ref_field, str(exc))
    if len(trees) < 2:
        return report

    before_focal = trees["before"] / entry.focal_file
    source = before_focal.read_text(encoding="utf-8", errors="replace")
    try:
        unit = parse_java_unit(source)
        resolve_method(unit, entry.method_locator)
    except JavaParseError as exc:
        report.add("error", "focal_file", f"does not parse: {exc}")
    except LocatorError as exc:
        report.add("error", "method_locator", str(exc))

    after_text = (trees["after"] / entry.focal_file).read_text(
        encoding="utf-8", errors="replace")
    if _normalize_ws(entry.patched_method_text) not in _normalize_ws(after_text):
        report.add("warning", "patched_method_text",
                   "not found in the after-version focal file "
                   "(whitespace-normalized substring check)")

    for version, root in trees.items():
        target = root / entry.test_target_dir
        if target.exists() and not target.is_dir():
            report.add("error", "test_target_dir",
                       f"{version}: exists but is not a directory")

    before_files = _tree_files(trees["before"])
    after_files = _tree_files(trees["after"])
    changed = set()
    for rel in set(before_files) | set(after_files):
        if rel not in before_files or rel not in after_files:
            changed.add(rel)
        elif not filecmp.cmp(before_files[rel], after_files[rel], shallow=False):
            changed.add(rel)
    if not changed:
        report.add("warning", "after_ref",
                   "before and after trees are identical")
    elif changed != {entry.focal_file}:
        extra = sorted(changed - {entry.focal_file})
        if extra:
            # out-of-distribution entries are allowed, knowingly
            report.add("warning", "focal_file",
                       f"fix touches files beyond the focal class: {extra}")
    return report
