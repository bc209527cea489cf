"""Manifest loading, materialization, and deep validation."""

import json
import subprocess

import pytest

from vulnwitness.manifest import (
    ManifestError,
    MaterializeError,
    load_manifest,
    materialize,
    validate_entry,
)

from conftest import DATA

BUNDLE = DATA / "sample_bundle"


def entry_dict(eid="E-1", **overrides):
    base = {
        "id": eid,
        "cve_id": "CVE-2024-0101",
        "cwe_id": "CWE-22",
        "before_ref": {"dir": "projects/path-expander/before"},
        "after_ref": {"dir": "projects/path-expander/after"},
        "focal_file": "src/main/java/com/sample/expander/Expander.java",
        "method_locator": {"class_name": "Expander", "method_name": "expand",
                           "param_types": ["String", "File"]},
        "patched_method_text": "public File expand(String entryName, File targetDirectory)",
        "test_target_dir": "src/test/java/com/sample/expander",
        "build_spec": {
            "compile_and_test_command": ["mvn", "-Dtest={test_class}", "test"],
            "timeout": 600,
        },
    }
    base.update(overrides)
    return base


def write_manifest(tmp_path, entries, name="m.json"):
    path = tmp_path / name
    path.write_text(json.dumps(entries))
    return path


def test_load_sample_bundle():
    entries = load_manifest(BUNDLE / "manifest.json")
    assert [e.id for e in entries] == ["SAMPLE-1", "SAMPLE-2", "SAMPLE-3"]
    assert entries[0].cwe_id == "CWE-22"
    assert entries[2].cwe_id is None
    assert entries[0].method_locator.param_types == ("String", "File")


def test_single_entry_manifest(tmp_path):
    path = write_manifest(tmp_path, [entry_dict()])
    entries = load_manifest(path)
    assert len(entries) == 1
    assert entries[0].base_dir == tmp_path.resolve()


def test_duplicate_id_rejected(tmp_path):
    path = write_manifest(tmp_path, [entry_dict("VUL4J-03"),
                                     entry_dict("VUL4J-03")])
    with pytest.raises(ManifestError, match="duplicate.*VUL4J-03"):
        load_manifest(path)


def test_malformed_json_rejected(tmp_path):
    path = tmp_path / "m.json"
    path.write_text("{not json]")
    with pytest.raises(ManifestError, match="not valid JSON"):
        load_manifest(path)


def test_missing_field_names_entry_and_field(tmp_path):
    entry = entry_dict("E-9")
    del entry["focal_file"]
    path = write_manifest(tmp_path, [entry])
    with pytest.raises(ManifestError, match="E-9.*focal_file"):
        load_manifest(path)


def test_placeholder_must_appear_exactly_once(tmp_path):
    bad = entry_dict(build_spec={
        "compile_and_test_command": ["mvn", "test"], "timeout": 10})
    path = write_manifest(tmp_path, [bad])
    with pytest.raises(ManifestError, match="placeholder"):
        load_manifest(path)
    doubled = entry_dict(build_spec={
        "compile_and_test_command": ["run", "{test_class}", "{test_class}"],
        "timeout": 10})
    path = write_manifest(tmp_path, [doubled])
    with pytest.raises(ManifestError, match="placeholder"):
        load_manifest(path)


def test_nonpositive_timeout_rejected(tmp_path):
    bad = entry_dict(build_spec={
        "compile_and_test_command": ["x", "{test_class}"], "timeout": 0})
    path = write_manifest(tmp_path, [bad])
    with pytest.raises(ManifestError, match="timeout"):
        load_manifest(path)


def test_order_preserved(tmp_path):
    ids = [f"E-{k}" for k in (5, 1, 3)]
    path = write_manifest(tmp_path, [entry_dict(i) for i in ids])
    assert [e.id for e in load_manifest(path)] == ids


# ---------------------------------------------------------- materialize

def test_materialize_before_contains_focal(tmp_path):
    entries = load_manifest(BUNDLE / "manifest.json")
    root = materialize(entries[0], "before", tmp_path / "ws")
    assert (root / entries[0].focal_file).is_file()


def test_materialize_after_contains_patched_text(tmp_path):
    entries = load_manifest(BUNDLE / "manifest.json")
    entry = entries[0]
    root = materialize(entry, "after", tmp_path / "ws")
    text = (root / entry.focal_file).read_text()
    norm = lambda s: " ".join(s.split())
    assert norm(entry.patched_method_text) in norm(text)


def test_materialize_idempotent(tmp_path):
    entries = load_manifest(BUNDLE / "manifest.json")
    entry = entries[1]
    root1 = materialize(entry, "before", tmp_path / "ws")
    first = {p.relative_to(root1): p.read_bytes()
             for p in sorted(root1.rglob("*")) if p.is_file()}
    root2 = materialize(entry, "before", tmp_path / "ws")
    second = {p.relative_to(root2): p.read_bytes()
              for p in sorted(root2.rglob("*")) if p.is_file()}
    assert first == second


def test_materialize_missing_dir_fails(tmp_path):
    entry = load_manifest(write_manifest(
        tmp_path, [entry_dict(before_ref={"dir": "nowhere"})]))[0]
    with pytest.raises(MaterializeError, match="nowhere"):
        materialize(entry, "before", tmp_path / "ws")


def test_materialize_git_ref(tmp_path):
    src = tmp_path / "repo"
    src.mkdir()
    focal = src / "src/main/java/com/sample/expander/Expander.java"
    focal.parent.mkdir(parents=True)
    focal.write_text((BUNDLE / "projects/path-expander/before" /
                      "src/main/java/com/sample/expander/Expander.java"
                      ).read_text())
    subprocess.run(["git", "init", "-q"], cwd=src, check=True)
    subprocess.run(["git", "-c", "user.email=t@t", "-c", "user.name=t",
                    "commit", "-q", "--allow-empty", "-m", "empty"],
                   cwd=src, check=True)
    subprocess.run(["git", "add", "."], cwd=src, check=True)
    subprocess.run(["git", "-c", "user.email=t@t", "-c", "user.name=t",
                    "commit", "-q", "-m", "vulnerable"], cwd=src, check=True)
    rev = subprocess.run(["git", "rev-parse", "HEAD"], cwd=src, check=True,
                         capture_output=True, text=True).stdout.strip()

    manifest_path = write_manifest(tmp_path, [entry_dict(
        before_ref={"git": {"path": "repo", "rev": rev}})])
    entry = load_manifest(manifest_path)[0]
    root = materialize(entry, "before", tmp_path / "ws")
    assert (root / entry.focal_file).is_file()
    assert not (root / ".git").exists()


# ------------------------------------------------------------ validation

def test_validate_well_formed_entry(tmp_path):
    entries = load_manifest(BUNDLE / "manifest.json")
    report = validate_entry(entries[0], tmp_path)
    assert report.findings == []
    assert report.ok


def test_validate_flags_ambiguous_locator(tmp_path):
    entry_data = entry_dict()
    entry_data["method_locator"] = {"class_name": "Expander",
                                    "method_name": "Expander",
                                    "param_types": None}
    entry = load_manifest(write_manifest(tmp_path, [entry_data]))[0]
    # two constructors, no param filter: ambiguous
    import shutil
    shutil.copytree(BUNDLE / "projects", tmp_path / "projects")
    report = validate_entry(entry, tmp_path / "scratch")
    assert any(f.field == "method_locator" and "overload" in f.message
               for f in report.findings)
    assert not report.ok


def test_validate_multi_file_fix_is_warning(tmp_path):
    import shutil
    shutil.copytree(BUNDLE / "projects", tmp_path / "projects")
    extra = (tmp_path / "projects/path-expander/after/README.txt")
    extra.write_text("changed docs\n")
    entry = load_manifest(write_manifest(tmp_path, [entry_dict()]))[0]
    report = validate_entry(entry, tmp_path / "scratch")
    warning = [f for f in report.findings if f.severity == "warning"]
    assert any("beyond the focal class" in f.message for f in warning)
    assert report.ok  # warnings never block


def test_validate_patched_text_mismatch_is_warning(tmp_path):
    import shutil
    shutil.copytree(BUNDLE / "projects", tmp_path / "projects")
    entry = load_manifest(write_manifest(tmp_path, [entry_dict(
        patched_method_text="this text exists nowhere")]))[0]
    report = validate_entry(entry, tmp_path / "scratch")
    assert any(f.field == "patched_method_text" for f in report.findings)
    assert report.ok


def test_fuzzed_manifests_never_yield_invalid_entries(tmp_path):
    """Property: load either rejects a manifest or returns valid entries."""
    from hypothesis import HealthCheck, given, settings, strategies as st

    scalar = st.one_of(st.none(), st.integers(), st.text(max_size=8),
                       st.booleans())
    mangled = st.dictionaries(
        st.sampled_from(["id", "before_ref", "after_ref", "focal_file",
                         "method_locator", "patched_method_text",
                         "test_target_dir", "build_spec", "cwe_id"]),
        st.one_of(scalar, st.dictionaries(st.text(max_size=6), scalar,
                                          max_size=3)),
        max_size=9)

    @given(st.lists(st.one_of(scalar, mangled), max_size=4))
    @settings(max_examples=150,
              suppress_health_check=[HealthCheck.function_scoped_fixture])
    def check(payload):
        path = tmp_path / "fuzz.json"
        path.write_text(json.dumps(payload))
        try:
            entries = load_manifest(path)
        except ManifestError:
            return
        ids = [e.id for e in entries]
        assert len(set(ids)) == len(ids)
        for entry in entries:
            assert entry.id
            assert entry.focal_file
            assert entry.build_spec.timeout > 0
            holes = sum(arg.count("{test_class}")
                        for arg in entry.build_spec.compile_and_test_command)
            assert holes == 1

    check()


def test_fifty_entry_manifest_cwe_recount(tmp_path, cwe_map):
    """Build the 50-subject manifest from the frozen map and recount groups."""
    entries = []
    for eid in sorted(cwe_map):
        entries.append(entry_dict(eid, cwe_id=cwe_map[eid],
                                  before_ref={"dir": str(BUNDLE / "projects/path-expander/before")},
                                  after_ref={"dir": str(BUNDLE / "projects/path-expander/after")}))
    path = write_manifest(tmp_path, entries, name="fifty.json")
    loaded = load_manifest(path)
    assert len(loaded) == 50

    # independent recount of the fixture's CWE tags
    groups = {}
    for entry in loaded:
        groups.setdefault(entry.cwe_id or "Not Mapping", []).append(entry.id)
    big = {cwe: len(ids) for cwe, ids in groups.items() if len(ids) >= 4}
    assert big == {"CWE-835": 7, "CWE-20": 6, "CWE-22": 5, "CWE-79": 4,
                   "CWE-611": 4, "Not Mapping": 9}
