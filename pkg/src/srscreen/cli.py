"""Command-line entry point.

Batch subcommands (ingest, dedup, screen-ta, screen-ft, baseline,
metrics, report, replay) run in-process over files; `serve` hosts the
review HTTP API that the browser UI and the `baseline label` thin client
talk to. Exit codes: 0 success, 1 input error, 2 runtime failure.
"""

from __future__ import annotations

import json
import os
import sys

import click
import yaml

from . import baseline as bl
from . import synth
from .corpus import Article, ArticleStore, dedup as dedup_articles, parse_csv, parse_ris, write_dedup_report
from .errors import InputError, SrScreenError
from .gateway import BackendProfile, ChatGateway, HttpChatBackend, KeywordRuleBackend
from .guide import Phase, builtin_phase1_guide, builtin_phase2_guide, load_guide
from .metrics import (
    StageCounts,
    StageMetrics,
    TimeParams,
    confusion,
    metrics as compute_metrics,
    render_report,
    time_model,
)
from .pipeline import RunManifest, export_audit, run_phase1, run_phase2
from .rag import HashEmbeddingBackend, HttpEmbeddingBackend, RagAnswerer
from .replay import replay_paper_counts
from .service import ReviewState, create_app, flagged_from_rows


def _load_config(path):
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        return yaml.safe_load(fh) or {}


def _build_backend(config: dict):
    backend_cfg = config.get("backend", {"type": "keyword"})
    kind = backend_cfg.get("type", "keyword")
    if kind == "keyword":
        rules = backend_cfg.get("rules") or synth.KEYWORD_RULES
        rules = [tuple(rule) for rule in rules]
        return KeywordRuleBackend(rules, default=backend_cfg.get("default", "unsure"))
    if kind == "http":
        return HttpChatBackend(
            base_url=backend_cfg["base_url"],
            model=backend_cfg["model"],
            api_key_env=backend_cfg.get("api_key_env", "SRSCREEN_API_KEY"),
            timeout=float(backend_cfg.get("timeout", 60.0)),
            temperature=float(backend_cfg.get("temperature", 0.0)),
        )
    raise InputError(f"unknown backend type {kind!r}")


def _build_embedding(config: dict):
    cfg = config.get("embedding", {"type": "hash"})
    if cfg.get("type", "hash") == "hash":
        return HashEmbeddingBackend(dim=int(cfg.get("dim", 256)))
    return HttpEmbeddingBackend(
        base_url=cfg["base_url"], model=cfg["model"], dim=int(cfg["dim"]),
        api_key_env=cfg.get("api_key_env", "SRSCREEN_API_KEY"),
    )


def _gateway(config: dict, run_dir) -> ChatGateway:
    profile_cfg = config.get("profile", {})
    profile = BackendProfile(
        name=profile_cfg.get("name", "default"),
        max_concurrent=int(profile_cfg.get("max_concurrent", 8)),
        max_retries=int(profile_cfg.get("max_retries", 3)),
        backoff_base=float(profile_cfg.get("backoff_base", 1.0)),
        timeout=float(profile_cfg.get("timeout", 60.0)),
        temperature=float(profile_cfg.get("temperature", 0.0)),
    )
    transcript = os.path.join(run_dir, "transcript.jsonl") if run_dir else None
    return ChatGateway(_build_backend(config), profile, transcript_path=transcript)


@click.group()
def cli():
    """Systematic-review screening pipeline."""


@cli.command()
@click.option("--ris", "ris_files", multiple=True, type=click.Path(exists=True))
@click.option("--csv", "csv_files", multiple=True, type=click.Path(exists=True))
@click.option("--mapping", type=click.Path(exists=True),
              help="YAML {field: column} map for CSV inputs")
@click.option("--fulltext-dir", type=click.Path(exists=True),
              help="directory of <article_id>.txt full texts")
@click.option("--gold", type=click.Path(exists=True),
              help="file of gold-included article ids, one per line (evaluation only)")
@click.option("--store", "store_path", required=True, type=click.Path())
def ingest(ris_files, csv_files, mapping, fulltext_dir, gold, store_path):
    """Parse RIS/CSV exports into the article store."""
    if not ris_files and not csv_files:
        raise InputError("need at least one --ris or --csv input")
    store = ArticleStore()
    errors = []
    for path in ris_files:
        with open(path, encoding="utf-8") as fh:
            result = parse_ris(fh.read(), source_file=os.path.basename(path))
        errors.extend(result.errors)
        for rec in result.records:
            store.add(Article(record=rec))
    if csv_files:
        if not mapping:
            raise InputError("--csv inputs need a --mapping file")
        column_map = _load_config(mapping)
        for path in csv_files:
            with open(path, encoding="utf-8") as fh:
                result = parse_csv(fh.read(), column_map, source_file=os.path.basename(path))
            errors.extend(result.errors)
            for rec in result.records:
                store.add(Article(record=rec))
    if fulltext_dir:
        for name in sorted(os.listdir(fulltext_dir)):
            if not name.endswith(".txt"):
                continue
            article_id = name[:-4]
            if article_id in store:
                with open(os.path.join(fulltext_dir, name), encoding="utf-8") as fh:
                    store.attach_fulltext(article_id, name, fh.read())
    if gold:
        with open(gold, encoding="utf-8") as fh:
            store.set_gold_labels(line.strip() for line in fh if line.strip())
    store.save(store_path)
    click.echo(f"ingested {len(store)} articles ({len(errors)} record errors)")
    for err in errors:
        click.echo(f"  error: {err}", err=True)


@cli.command("dedup")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--threshold", default=0.90, show_default=True)
@click.option("--report", "report_path", type=click.Path())
def dedup_cmd(store_path, out_path, threshold, report_path):
    """Remove near-duplicates (DOI-exact plus trigram similarity)."""
    store = ArticleStore.load(store_path)
    result = dedup_articles(store.articles(), threshold=threshold)
    deduped = ArticleStore()
    for article in result.kept:
        deduped.add(article)
    deduped.save(out_path)
    if report_path:
        write_dedup_report(result, report_path)
    click.echo(f"kept {len(result.kept)}, removed {len(result.removed)}")


@cli.command("screen-ta")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--run-dir", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--guide", "guide_path", type=click.Path(exists=True))
@click.option("--seed", default=0, show_default=True)
@click.option("--dry-run", is_flag=True)
def screen_ta(store_path, run_dir, config_path, guide_path, seed, dry_run):
    """Phase 1: title/abstract screening."""
    config = _load_config(config_path)
    store = ArticleStore.load(store_path)
    guide = load_guide(guide_path) if guide_path else builtin_phase1_guide()
    os.makedirs(run_dir, exist_ok=True)
    manifest = RunManifest(run_dir)
    manifest.mark("ingest", "done", {"articles": len(store)})
    manifest.mark("dedup", "done")
    manifest.mark("screen_ta", "running")
    gateway = _gateway(config, None if dry_run else run_dir)
    result = run_phase1(store, guide, gateway, run_dir, dry_run=dry_run)
    if dry_run:
        click.echo(f"dry run: prompt bundles written to {run_dir}/dry_run_bundles.jsonl")
        return
    export_audit(result.rows, os.path.join(run_dir, "phase1_audit.csv"),
                 Phase.TITLE_ABSTRACT)
    manifest.mark("screen_ta", "done", {
        "input": len(store), "kept": len(result.kept_ids),
        "excluded": len(result.excluded_ids),
        "measured_hours": round(result.measured_hours, 4),
    })
    click.echo(f"phase 1: kept {len(result.kept_ids)} / excluded {len(result.excluded_ids)}")


@cli.command("screen-ft")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--run-dir", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--guide", "guide_path", type=click.Path(exists=True))
@click.option("--seed", default=0, show_default=True)
def screen_ft(store_path, run_dir, config_path, guide_path, seed):
    """Phase 2: RAG full-text screening of phase-1 survivors."""
    config = _load_config(config_path)
    store = ArticleStore.load(store_path)
    guide = load_guide(guide_path) if guide_path else builtin_phase2_guide()
    manifest = RunManifest(run_dir)
    if manifest.status("screen_ta") != "done":
        raise InputError("phase 1 has not finished in this run directory")
    kept = _phase1_kept_ids(run_dir)
    manifest.mark("screen_ft", "running")
    rag_cfg = config.get("chunker", {})
    rag = RagAnswerer(
        _gateway(config, run_dir),
        _build_embedding(config),
        k=int(rag_cfg.get("k", 5)),
        chunk_size=int(rag_cfg.get("size", 1000)),
        overlap=int(rag_cfg.get("overlap", 200)),
        cache_dir=os.path.join(run_dir, "index_cache"),
    )
    result = run_phase2(store, kept, guide, rag, run_dir)
    export_audit(result.rows, os.path.join(run_dir, "phase2_audit.csv"), Phase.FULL_TEXT)
    manifest.mark("screen_ft", "done", {
        "input": len(kept), "kept": len(result.kept_ids),
        "excluded": len(result.excluded_ids),
        "measured_hours": round(result.measured_hours, 4),
    })
    click.echo(f"phase 2: kept {len(result.kept_ids)} / excluded {len(result.excluded_ids)}")


def _phase1_kept_ids(run_dir) -> list[str]:
    from .pipeline import Checkpoint

    rows = Checkpoint(os.path.join(run_dir, "phase1.checkpoint.jsonl")).load()
    return sorted(aid for aid, row in rows.items() if row["verdict"] != "Exclude")


def _phase_rows(run_dir, phase_file):
    from .pipeline import Checkpoint, _row_from_checkpoint

    rows = Checkpoint(os.path.join(run_dir, phase_file)).load()
    return [_row_from_checkpoint(r) for _, r in sorted(rows.items())]


@cli.group("baseline")
def baseline_group():
    """Active-learning baseline commands."""


@baseline_group.command("simulate")
@click.option("--store", "store_path", type=click.Path(exists=True),
              help="article store; omitted = built-in synthetic corpus")
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--batches", default=20, show_default=True)
@click.option("--batch-size", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
def baseline_simulate(store_path, out_dir, batches, batch_size, seed):
    """Run the label/retrain loop with a simulated reviewer over gold labels."""
    if store_path:
        store = ArticleStore.load(store_path)
        records = [a.record for a in store.articles()]
        gold = store.gold_included_ids()
        if not gold:
            raise InputError("store has no gold labels; simulate needs them")
    else:
        records, gold = synth.synthetic_baseline_records(seed=seed)
    loop = bl.ActiveLearningLoop(records, seed=seed, batch_size=batch_size)
    reviewer = bl.SimulatedReviewer(gold, seed=seed)
    stable_at = None
    for i in range(batches):
        if not loop.unlabeled:
            break
        loop.submit_labels(reviewer.label_batch(loop.unlabeled, batch_size))
        if stable_at is None and loop.is_stable():
            stable_at = i + 1
    os.makedirs(out_dir, exist_ok=True)
    bl.export_history_csv(loop.history, os.path.join(out_dir, "history.csv"))
    loop.model.save(os.path.join(out_dir, "model.npz"))
    partitions = {}
    for name, policy in bl.POLICIES.items():
        part = loop.apply_policy(policy)
        fn = len(set(part.auto_excluded) & gold)
        partitions[name] = {
            "auto_excluded": len(part.auto_excluded),
            "manual_queue": len(part.manual_queue),
            "false_negatives": fn,
        }
    with open(os.path.join(out_dir, "partitions.json"), "w", encoding="utf-8") as fh:
        json.dump({"stable_at_batch": stable_at, "policies": partitions}, fh, indent=2)
    click.echo(f"simulated {len(loop.history)} batches; stable at {stable_at}; "
               f"partitions: {partitions}")


@baseline_group.command("apply")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--policy", type=click.Choice(["A", "B"]), required=True)
@click.option("--out", "out_path", type=click.Path())
def baseline_apply(store_path, model_path, policy, out_path):
    """Score a store with a saved model and partition it under a policy."""
    store = ArticleStore.load(store_path)
    records = [a.record for a in store.articles()]
    featurizer = bl.Featurizer().fit(records)
    model = bl.LinearModel.load(model_path)
    binned = [
        (r.id, bl.bin_probability(bl.score(model, featurizer.featurize(r))))
        for r in records
    ]
    part = bl.apply_threshold(binned, bl.POLICIES[policy])
    summary = {"policy": policy, "auto_excluded": len(part.auto_excluded),
               "manual_queue": len(part.manual_queue)}
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            json.dump({**summary, "auto_excluded_ids": part.auto_excluded,
                       "manual_queue_ids": part.manual_queue}, fh, indent=2)
    click.echo(json.dumps(summary))


@baseline_group.command("label")
@click.option("--service", default="http://127.0.0.1:8000", show_default=True)
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True),
              help="CSV of id,label (include/exclude) rows to submit")
def baseline_label(service, labels_path):
    """Thin client: POST a labeled batch to a running review service."""
    import csv as _csv

    import httpx

    with open(labels_path, encoding="utf-8") as fh:
        rows = [row for row in _csv.reader(fh) if row]
    payload = {"labels": [{"id": r[0], "label": r[1]} for r in rows]}
    resp = httpx.post(f"{service}/labels", json=payload, timeout=60.0)
    if resp.status_code >= 400:
        raise SrScreenError(f"service rejected labels: {resp.status_code} {resp.text}")
    click.echo(resp.text)


@cli.command("metrics")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--run-dir", required=True, type=click.Path(exists=True))
@click.option("--out-dir", type=click.Path())
def metrics_cmd(store_path, run_dir, out_dir):
    """Score a finished run against the store's gold labels."""
    store = ArticleStore.load(store_path)
    gold = store.gold_included_ids()
    if not gold:
        raise InputError("store carries no gold labels")
    p1_rows = _phase_rows(run_dir, "phase1.checkpoint.jsonl")
    p2_rows = _phase_rows(run_dir, "phase2.checkpoint.jsonl")
    doc = _metrics_document(store, gold, p1_rows, p2_rows, run_dir)
    out_dir = out_dir or os.path.join(run_dir, "report")
    doc.write(out_dir)
    click.echo(doc.text)


def _metrics_document(store, gold, p1_rows, p2_rows, run_dir):
    manifest = RunManifest(run_dir)
    p1_kept = {r.article_id for r in p1_rows if r.verdict != "Exclude"}
    p1_excl = {r.article_id for r in p1_rows if r.verdict == "Exclude"}
    p2_kept = {r.article_id for r in p2_rows if r.verdict != "Exclude"}
    p2_excl = {r.article_id for r in p2_rows if r.verdict == "Exclude"}
    stages = []
    c1 = confusion(p1_kept, p1_excl, gold)
    stages.append(StageMetrics("phase1", c1, compute_metrics(c1, len(p1_excl)),
                               remaining=len(p1_kept)))
    if p2_rows:
        c2 = confusion(p2_kept, p2_excl, gold & (p2_kept | p2_excl))
        stages.append(StageMetrics("phase2", c2, compute_metrics(c2, len(p2_excl)),
                                   remaining=len(p2_kept)))
        overall_kept = p2_kept
        overall_excl = p1_excl | p2_excl
        co = confusion(overall_kept, overall_excl, gold)
        stages.append(StageMetrics("overall", co,
                                   compute_metrics(co, len(overall_excl)),
                                   remaining=len(overall_kept)))
    s1 = manifest.data["stages"]["screen_ta"]["counts"].get("measured_hours", 0)
    s2 = manifest.data["stages"]["screen_ft"]["counts"].get("measured_hours", 0)
    from fractions import Fraction

    params = TimeParams(s1_hours=Fraction(s1).limit_denominator(10**6),
                        s2_hours=Fraction(s2).limit_denominator(10**6))
    remaining = len(p2_kept) if p2_rows else len(p1_kept)
    time_report = time_model(params, StageCounts(
        n_ta=len(p1_rows), n_ft=len(p1_kept),
        manual_queue=len(p1_kept), remaining=remaining,
    ))
    return render_report(stages, pipeline_time=time_report)


@cli.command("report")
@click.option("--run-dir", required=True, type=click.Path(exists=True))
def report_cmd(run_dir):
    """Print the rendered report of a finished run."""
    path = os.path.join(run_dir, "report", "report.txt")
    if not os.path.exists(path):
        raise InputError(f"no report at {path}; run `srscreen metrics` first")
    with open(path, encoding="utf-8") as fh:
        click.echo(fh.read())


@cli.command("replay")
@click.option("--paper-counts", is_flag=True, required=True,
              help="reproduce the published tables from frozen stage counts")
@click.option("--out-dir", type=click.Path())
def replay_cmd(paper_counts, out_dir):
    """Count-fixture replay of the published results."""
    result = replay_paper_counts()
    if out_dir:
        result.document.write(out_dir, stem="paper_replay")
    click.echo(result.document.text)


@cli.command("serve")
@click.option("--store", "store_path", type=click.Path(exists=True))
@click.option("--run-dir", type=click.Path(exists=True))
@click.option("--paper-fixture", is_flag=True,
              help="serve the published bin counts instead of a live loop")
@click.option("--static-dir", type=click.Path(exists=True),
              help="directory of built UI assets to serve at /")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--seed", default=0, show_default=True)
def serve(store_path, run_dir, paper_fixture, static_dir, host, port, seed):
    """Host the review API (and UI, if built)."""
    import uvicorn

    state = ReviewState()
    if paper_fixture:
        from .replay import PaperCounts

        state.fixture_bins = PaperCounts().bins
    if store_path:
        store = ArticleStore.load(store_path)
        records = [a.record for a in store.articles()]
        state.loop = bl.ActiveLearningLoop(records, seed=seed)
    if run_dir:
        p2 = os.path.join(run_dir, "phase2.checkpoint.jsonl")
        if os.path.exists(p2):
            state.flagged = flagged_from_rows(_phase_rows(run_dir, "phase2.checkpoint.jsonl"))
        state.adjudication_path = os.path.join(run_dir, "adjudications.jsonl")
    app = create_app(state, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        return 1
    except click.exceptions.ClickException as exc:
        exc.show()
        return 1
    except (InputError, SrScreenError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except Exception as exc:  # runtime failure
        click.echo(f"runtime failure: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
