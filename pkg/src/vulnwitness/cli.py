"""Operator entry point: run the pipeline, slice contexts, emit reports."""

from __future__ import annotations

import json
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from . import focal, llm, loop, manifest as manifest_mod, reporting
from .prompts import PromptConfig, VARIANTS

DEFAULT_OUT = "out"


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise click.ClickException(f"cannot read config file {path}: {exc}")
    if not isinstance(data, dict):
        raise click.ClickException("config file must hold a JSON object")
    return data


def _setting(flag_value, config: dict, key: str, default):
    """Flags win over the config file; the config file wins over defaults."""
    if flag_value not in (None, ()):
        return flag_value
    if key in config:
        return config[key]
    return default


@click.group()
def main():
    """Generate and evaluate vulnerability-witnessing unit tests."""


@main.command("run")
@click.option("--manifest", "manifest_path", type=click.Path(), default=None,
              help="Entry manifest (JSON array).")
@click.option("--mode", type=click.Choice(llm.MODES), default=None,
              help="live: call the provider; record: call and persist; "
                   "replay: serve recorded transcripts, no network.")
@click.option("--levels", multiple=True,
              type=click.Choice(focal.LEVELS), help="Context levels to run.")
@click.option("--configs", multiple=True, type=click.Choice(VARIANTS),
              help="Prompt variants to run.")
@click.option("--workers", type=int, default=None, help="Parallel runs.")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Output root (runs/, transcripts/, workspaces/, logs/).")
@click.option("--transcripts", "transcripts_dir", type=click.Path(),
              default=None, help="Transcript store location "
              "(replay default: <manifest dir>/transcripts).")
@click.option("--build-logs", "build_logs_dir", type=click.Path(),
              default=None, help="Replay mode: canned build logs "
              "(default: <manifest dir>/build_logs).")
@click.option("--config", "config_file", type=click.Path(), default=None,
              help="JSON file mirroring these flags; flags win.")
@click.option("--dry-run", is_flag=True,
              help="Validate inputs and print the plan, no side effects.")
def cmd_run(manifest_path, mode, levels, configs, workers, out_dir,
            transcripts_dir, build_logs_dir, config_file, dry_run):
    """Run the generation loop for every (entry, level, config)."""
    cfg = _load_config_file(config_file)
    manifest_path = _setting(manifest_path, cfg, "manifest", None)
    mode = _setting(mode, cfg, "mode", "replay")
    levels = tuple(_setting(tuple(levels), cfg, "levels", focal.LEVELS))
    configs = tuple(_setting(tuple(configs), cfg, "configs", ("baseline",)))
    workers = int(_setting(workers, cfg, "workers", 1))
    out_dir = Path(_setting(out_dir, cfg, "out", DEFAULT_OUT))

    if manifest_path is None:
        raise click.UsageError("--manifest is required")
    if workers < 1:
        raise click.UsageError("--workers must be >= 1")
    if not levels or not configs:
        raise click.UsageError("need at least one level and one config")

    try:
        entries = manifest_mod.load_manifest(manifest_path)
    except manifest_mod.ManifestError as exc:
        raise click.ClickException(str(exc))

    bundle_dir = Path(manifest_path).parent
    if transcripts_dir is None:
        transcripts_dir = (bundle_dir / "transcripts" if mode == "replay"
                           else out_dir / "transcripts")
    if build_logs_dir is None:
        build_logs_dir = bundle_dir / "build_logs"

    if mode == "replay" and not Path(transcripts_dir).is_dir():
        raise click.ClickException(
            f"replay mode needs recorded transcripts at {transcripts_dir}")

    jobs = [(entry, level, variant)
            for entry in entries for level in levels for variant in configs]

    if dry_run:
        click.echo(f"manifest: {manifest_path} ({len(entries)} entries)")
        click.echo(f"mode: {mode}; levels: {','.join(levels)}; "
                   f"configs: {','.join(configs)}; workers: {workers}")
        click.echo(f"would execute {len(jobs)} runs into {out_dir}")
        return

    store = llm.TranscriptStore(mode, transcripts_dir)
    runs_dir = out_dir / "runs"
    logs_dir = out_dir / "logs"
    failures: list[str] = []

    def one_run(job):
        entry, level, variant = job
        record_path = loop.run_record_path(runs_dir, variant, level, entry.id)
        if record_path.exists():
            existing = loop.load_run_record(record_path)
            if existing.complete:
                return f"skip {variant}/{level}/{entry.id} (already complete)"
        ws_root = out_dir / "workspaces" / variant / level / entry.id
        try:
            before_ws = manifest_mod.materialize(entry, "before",
                                                 ws_root / "before")
            after_ws = manifest_mod.materialize(entry, "after",
                                                ws_root / "after")
            if mode == "replay":
                executor = loop.ScriptedExecutor(Path(build_logs_dir))
            else:
                executor = loop.WorkspaceExecutor(before_ws, after_ws)
            ctx = loop.RunContext(
                store=store, runs_dir=runs_dir, logs_dir=logs_dir,
                executor=executor, before_ws=before_ws, after_ws=after_ws,
            )
            record = loop.run_entry(entry, level,
                                    PromptConfig.from_variant(variant), ctx)
            return (f"done {variant}/{level}/{entry.id}: "
                    f"{record.final_pair[0]}/{record.final_pair[1]} "
                    f"({record.termination_reason})")
        except Exception as exc:  # noqa: BLE001 - per-run failures not fatal
            failures.append(f"{variant}/{level}/{entry.id}")
            marker = record_path.with_suffix(".failed.json")
            marker.parent.mkdir(parents=True, exist_ok=True)
            marker.write_text(json.dumps(
                {"entry_id": entry.id, "level": level, "config": variant,
                 "error": f"{type(exc).__name__}: {exc}"},
                indent=2, sort_keys=True) + "\n", encoding="utf-8")
            return f"FAILED {variant}/{level}/{entry.id}: {exc}"

    if workers == 1:
        for job in jobs:
            click.echo(one_run(job))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for line in pool.map(one_run, jobs):
                click.echo(line)

    if failures:
        click.echo(f"{len(failures)} of {len(jobs)} runs failed", err=True)
        sys.exit(1)


@main.command("slice")
@click.option("--manifest", "manifest_path", type=click.Path(), required=True)
@click.option("--entry-id", required=True)
@click.option("--out", "out_dir", type=click.Path(), default=".",
              help="Where the four snippet files go.")
@click.option("--dry-run", is_flag=True)
def cmd_slice(manifest_path, entry_id, out_dir, dry_run):
    """Write the four focal-context files (L0-L3) for one entry."""
    try:
        entries = manifest_mod.load_manifest(manifest_path)
    except manifest_mod.ManifestError as exc:
        raise click.ClickException(str(exc))
    entry = next((e for e in entries if e.id == entry_id), None)
    if entry is None:
        raise click.ClickException(f"no entry with id {entry_id!r} in manifest")
    if dry_run:
        click.echo(f"would slice {entry_id} ({entry.focal_file}) into {out_dir}")
        return

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as scratch:
        tree = manifest_mod.materialize(entry, "before", Path(scratch) / "ws")
        source = (tree / entry.focal_file).read_text(encoding="utf-8",
                                                     errors="replace")
    try:
        contexts = focal.slice_levels(source, entry.method_locator)
    except (focal.LocatorError, ValueError) as exc:
        raise click.ClickException(f"{entry_id}: {exc}")
    for level, context in contexts.items():
        path = out / f"{entry_id}.{level}.txt"
        path.write_text(context.snippet, encoding="utf-8")
        click.echo(str(path))


@main.command("report")
@click.option("--runs", "runs_dir", type=click.Path(), required=True,
              help="Directory of persisted run records.")
@click.option("--labels", "labels_path", type=click.Path(), default=None,
              help="Manual labels CSV (entry_id,level,config,label).")
@click.option("--cwe-map", "cwe_map_path", type=click.Path(), default=None,
              help="JSON object mapping entry id to CWE id (null = none).")
@click.option("--manifest", "manifest_path", type=click.Path(), default=None,
              help="Alternative CWE source: pull ids from a manifest.")
@click.option("--out", "out_dir", type=click.Path(), default="report")
@click.option("--dry-run", is_flag=True)
def cmd_report(runs_dir, labels_path, cwe_map_path, manifest_path, out_dir,
               dry_run):
    """Aggregate run records into the report bundle."""
    runs_dir = Path(runs_dir)
    record_files = sorted(runs_dir.rglob("*.json"))
    record_files = [p for p in record_files if not p.name.endswith(".failed.json")]
    if not record_files:
        raise click.ClickException(f"no run records under {runs_dir}")
    records = [loop.load_run_record(p) for p in record_files]

    labels = None
    if labels_path:
        labels = reporting.load_labels(labels_path)
    else:
        click.echo("no labels file given; usability columns omitted")

    cwe_map: dict[str, str | None] = {}
    if cwe_map_path:
        cwe_map = json.loads(Path(cwe_map_path).read_text(encoding="utf-8"))
    elif manifest_path:
        cwe_map = {e.id: e.cwe_id
                   for e in manifest_mod.load_manifest(manifest_path)}

    if dry_run:
        click.echo(f"would aggregate {len(records)} records into {out_dir}")
        return

    log_root = runs_dir.parent

    def log_loader(record):
        best = record.best_iteration
        if best is None or record.iterations[best - 1].logs is None:
            return ""
        chunks = []
        for rel in record.iterations[best - 1].logs:
            path = log_root / rel
            if path.exists():
                chunks.append(path.read_text(encoding="utf-8",
                                             errors="replace"))
        return "\n".join(chunks)

    out = reporting.write_report_bundle(records, labels, cwe_map, out_dir,
                                        log_loader)
    for name in ("table1.md", "ablation.md", "cwe.md", "failures.md",
                 "summary.json"):
        if (out / name).exists():
            click.echo(str(out / name))


@main.command("validate")
@click.option("--manifest", "manifest_path", type=click.Path(), required=True)
@click.option("--dry-run", is_flag=True,
              help="Structural checks only; skip tree checkouts.")
def cmd_validate(manifest_path, dry_run):
    """Check every manifest entry; exit nonzero on hard violations."""
    try:
        entries = manifest_mod.load_manifest(manifest_path)
    except manifest_mod.ManifestError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"{len(entries)} entries load cleanly")
    if dry_run:
        return

    bad = 0
    for entry in entries:
        with tempfile.TemporaryDirectory() as scratch:
            report = manifest_mod.validate_entry(entry, scratch)
        if not report.findings:
            click.echo(f"{entry.id}: ok")
            continue
        for finding in report.findings:
            click.echo(f"{entry.id}: {finding.severity}: "
                       f"{finding.field}: {finding.message}")
        if not report.ok:
            bad += 1
    if bad:
        click.echo(f"{bad} entries failed validation", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
