"""Command-line interface.

Every module operation is exposed as a subcommand; `pipeline` chains them
from a JSON config. Global flags: --seed for anything randomized, --config
for the pipeline config, --report to write a JSON report next to the main
output, --threads as the parallelism cap for client-bound work.
"""

from __future__ import annotations

import json
import shlex
import subprocess
import tempfile
from pathlib import Path

import click
import numpy as np

from . import classifier as clf
from . import curation
from . import dedup as dd
from . import evalkit
from . import merge as mg
from . import ngram
from . import pipeline as pl
from .corpus import (
    CategoryGraph,
    ChatSample,
    Document,
    chat_sample_from_record,
    expand_categories,
    load_chat_jsonl,
    load_jsonl,
    read_jsonl,
    write_chat_jsonl,
    write_jsonl,
)
from .html2md import html_to_markdown


@click.group()
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for randomized steps.")
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Pipeline config file (see the pipeline subcommand).")
@click.option("--report", "report_path", type=click.Path(), default=None,
              help="Write the command's JSON report to this path.")
@click.option("--threads", type=int, default=1, show_default=True,
              help="Max parallel in-flight requests for client-bound commands.")
@click.pass_context
def main(ctx, seed, config_path, report_path, threads):
    ctx.obj = {
        "seed": seed,
        "config": config_path,
        "report": report_path,
        "threads": threads,
    }


def _emit_report(ctx, data: dict):
    path = ctx.obj.get("report")
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
            fh.write("\n")


# ---------------------------------------------------------------------------
# Ingestion and conversion
# ---------------------------------------------------------------------------


@main.command()
@click.argument("input_path", type=click.Path(exists=True))
@click.argument("output_path", type=click.Path())
@click.pass_context
def ingest(ctx, input_path, output_path):
    """Validate and normalize a JSONL corpus (skips malformed lines)."""
    reader = read_jsonl(input_path)
    written = write_jsonl(reader, output_path)
    click.echo(f"ingested {written} documents, skipped {reader.skipped}")
    _emit_report(ctx, {"docs": written, "skipped": reader.skipped,
                       "skipped_lines": reader.skipped_lines})


@main.command()
@click.argument("input_path", type=click.Path(exists=True))
@click.argument("output_path", type=click.Path(), required=False)
def html2md(input_path, output_path):
    """Convert an HTML file to Markdown text."""
    markdown = html_to_markdown(Path(input_path).read_text(encoding="utf-8"))
    if output_path:
        Path(output_path).write_text(markdown + "\n", encoding="utf-8")
    else:
        click.echo(markdown)


@main.command("expand-categories")
@click.argument("graph_path", type=click.Path(exists=True))
@click.option("--allow", "allow_path", type=click.Path(exists=True),
              help="File of allowed category names, one per line.")
@click.option("--all", "accept_all", is_flag=True, help="Accept every category.")
def expand_categories_cmd(graph_path, allow_path, accept_all):
    """Expand a category graph from its root, filtered by a predicate."""
    graph = CategoryGraph.from_json_file(graph_path)
    if accept_all:
        predicate = lambda c: True
    elif allow_path:
        allowed = {
            line.strip() for line in Path(allow_path).read_text(encoding="utf-8").splitlines()
            if line.strip()
        }
        predicate = lambda c: c in allowed
    else:
        raise click.UsageError("pass --allow FILE or --all")
    for name in sorted(expand_categories(graph, predicate)):
        click.echo(name)


# ---------------------------------------------------------------------------
# Rule-based filtering
# ---------------------------------------------------------------------------


@main.command("filter")
@click.argument("input_path", type=click.Path(exists=True))
@click.argument("output_path", type=click.Path())
@click.option("--min-doc-words", type=int, default=50, show_default=True)
@click.option("--terminal-punct", is_flag=True, help="Drop lines without terminal punctuation.")
@click.option("--curly-brace", is_flag=True, help="Drop documents containing '{'.")
@click.option("--skip-heuristic", is_flag=True, help="Apply only the C4 rules.")
@click.pass_context
def filter_cmd(ctx, input_path, output_path, min_doc_words, terminal_punct,
               curly_brace, skip_heuristic):
    """Apply C4 and heuristic substring filters to a corpus."""
    from .filters import FilterConfig, FilterReport, c4_filter, heuristic_filter

    cfg = FilterConfig(
        min_doc_words=min_doc_words,
        apply_terminal_punct=terminal_punct,
        apply_curly_brace=curly_brace,
    ).validate()
    docs, skipped = load_jsonl(input_path)
    report = FilterReport()
    kept = []
    for doc in docs:
        report.docs_in += 1
        out = c4_filter(doc, cfg, report)
        if out is not None and not skip_heuristic:
            out = heuristic_filter(out, cfg, report)
        if out is not None:
            report.docs_out += 1
            kept.append(out)
    written = write_jsonl(kept, output_path)
    click.echo(f"{len(docs)} in, {written} out ({skipped} malformed lines skipped)")
    _emit_report(ctx, report.to_dict())


# ---------------------------------------------------------------------------
# Language-model filtering
# ---------------------------------------------------------------------------


@main.command("lm-train")
@click.argument("corpus_path", type=click.Path(exists=True))
@click.argument("model_path", type=click.Path())
@click.option("--order", type=int, default=5, show_default=True)
@click.option("--smoothing", type=click.Choice(["kneser_ney", "add_k"]),
              default="kneser_ney", show_default=True)
@click.option("--discount", type=float, default=0.75, show_default=True,
              help="Kneser-Ney discount.")
@click.option("--k", type=float, default=1.0, show_default=True, help="Add-k constant.")
def lm_train(corpus_path, model_path, order, smoothing, discount, k):
    """Train an n-gram model on a JSONL corpus."""
    docs, skipped = load_jsonl(corpus_path)
    smooth = ngram.KneserNey(discount) if smoothing == "kneser_ney" else ngram.AddK(k)
    model = ngram.train(docs, order=order, smoothing=smooth)
    model.save(model_path)
    click.echo(
        f"trained order-{order} {smoothing} model on {len(docs)} documents "
        f"({skipped} skipped); vocabulary {len(model.vocab)}"
    )


@main.command("lm-score")
@click.argument("model_path", type=click.Path(exists=True))
@click.option("--text", default=None, help="Score a literal text instead of a corpus.")
@click.option("--input", "input_path", type=click.Path(exists=True), default=None)
def lm_score(model_path, text, input_path):
    """Print perplexity for a text or for every document in a corpus."""
    model = ngram.NGramModel.load(model_path)
    if text is not None:
        click.echo(f"{model.perplexity(text):.6f}")
        return
    if input_path is None:
        raise click.UsageError("pass --text or --input")
    for doc in read_jsonl(input_path):
        try:
            ppl = model.perplexity(doc.content)
            click.echo(json.dumps({"url": doc.url, "perplexity": ppl}))
        except ValueError:
            click.echo(json.dumps({"url": doc.url, "perplexity": None}))


@main.command("lm-filter")
@click.argument("input_path", type=click.Path(exists=True))
@click.argument("output_path", type=click.Path())
@click.option("--model", "model_path", type=click.Path(exists=True), required=True)
@click.option("--threshold", "thresholds", multiple=True,
              help="Per-source threshold as SOURCE=MAX_PERPLEXITY (repeatable).")
@click.option("--default-threshold", type=float, default=None,
              help="Fallback for sources without an explicit threshold.")
@click.pass_context
def lm_filter_cmd(ctx, input_path, output_path, model_path, thresholds, default_threshold):
    """Drop documents whose perplexity exceeds their source threshold."""
    model = ngram.NGramModel.load(model_path)
    parsed = []
    for spec in thresholds:
        source, _, limit = spec.partition("=")
        if not limit:
            raise click.UsageError(f"bad --threshold {spec!r}, expected SOURCE=VALUE")
        parsed.append(ngram.PerplexityThreshold(source, float(limit)))
    docs, _ = load_jsonl(input_path)
    kept, report = ngram.lm_filter(docs, model, parsed, default_threshold=default_threshold)
    written = write_jsonl(kept, output_path)
    click.echo(f"{len(docs)} in, {written} out")
    _emit_report(ctx, report.to_dict())


# ---------------------------------------------------------------------------
# Deduplication and decontamination
# ---------------------------------------------------------------------------


@main.command("dedup")
@click.argument("input_path", type=click.Path(exists=True))
@click.argument("output_path", type=click.Path())
@click.option("--shingle", type=int, default=5, show_default=True)
@click.option("--hashes", type=int, default=112, show_default=True)
@click.option("--bands", type=int, default=14, show_default=True)
@click.option("--rows", type=int, default=8, show_default=True)
@click.option("--per-source", is_flag=True,
              help="Deduplicate within each source label instead of globally.")
@click.option("--signatures", "signatures_path", type=click.Path(), default=None,
              help="Also persist the MinHash signatures to this binary file.")
@click.pass_context
def dedup_cmd(ctx, input_path, output_path, shingle, hashes, bands, rows,
              per_source, signatures_path):
    """MinHash-LSH fuzzy deduplication, keeping the first of each cluster."""
    cfg = dd.LshConfig(
        shingle_size=shingle, num_hashes=hashes, num_bands=bands,
        rows_per_band=rows, seed=ctx.obj["seed"],
    )
    docs, _ = load_jsonl(input_path)
    matrix, ids = dd.signatures_for_texts((doc.content for doc in docs), cfg)
    if signatures_path:
        dd.save_signatures(matrix, ids, cfg, signatures_path)
    if per_source:
        clusters = dd.ClusterSet()
        sources = [doc.source for doc in docs]
        for source in sorted(set(sources)):
            keep = np.array([sources[i] == source for i in ids.tolist()], dtype=bool)
            shard = dd.find_duplicates((matrix[keep], ids[keep]), cfg)
            for x in shard.parent:
                clusters.union(x, shard.find(x))
    else:
        clusters = dd.find_duplicates((matrix, ids), cfg)
    kept, report = dd.deduplicate(docs, clusters)
    written = write_jsonl(kept, output_path)
    click.echo(
        f"{report.samples_before} in, {written} out "
        f"({report.removed} removed across {report.clusters} clusters)"
    )
    _emit_report(ctx, report.to_dict())


def _concatenated_texts(path: str, data_format: str) -> list[str]:
    if data_format == "chat":
        samples, _ = load_chat_jsonl(path)
        return [" ".join(m.content for m in s.messages) for s in samples]
    docs, _ = load_jsonl(path)
    return [d.content for d in docs]


@main.command("decontaminate")
@click.option("--train", "train_path", type=click.Path(exists=True), required=True)
@click.option("--eval", "eval_path", type=click.Path(exists=True), required=True)
@click.option("--ngram", "n", type=int, default=13, show_default=True)
@click.option("--format", "data_format", type=click.Choice(["docs", "chat"]),
              default="docs", show_default=True)
@click.option("--drop-to", type=click.Path(), default=None,
              help="Also write the train set minus overlapping samples here.")
@click.pass_context
def decontaminate(ctx, train_path, eval_path, n, data_format, drop_to):
    """Report word n-gram overlap between a train set and an eval set."""
    train_texts = _concatenated_texts(train_path, data_format)
    eval_texts = _concatenated_texts(eval_path, data_format)
    count, matches = dd.ngram_overlap(train_texts, eval_texts, n=n)
    click.echo(f"{count} overlapping {n}-grams")
    report = {
        "n": n,
        "count": count,
        "matches": [
            {"ngram": g, "train_index": a, "eval_index": b} for g, a, b in matches
        ],
    }
    _emit_report(ctx, report)
    if drop_to:
        from .tokenizer import tokenize

        eval_grams = set()
        for text in eval_texts:
            tokens = tokenize(text)
            for j in range(len(tokens) - n + 1):
                eval_grams.add(tuple(tokens[j : j + n]))

        def contaminated(text: str) -> bool:
            tokens = tokenize(text)
            return any(
                tuple(tokens[j : j + n]) in eval_grams
                for j in range(len(tokens) - n + 1)
            )

        if data_format == "chat":
            samples, _ = load_chat_jsonl(train_path)
            clean = [
                s for s, text in zip(samples, train_texts) if not contaminated(text)
            ]
            write_chat_jsonl(clean, drop_to)
        else:
            docs, _ = load_jsonl(train_path)
            clean = [d for d, text in zip(docs, train_texts) if not contaminated(text)]
            write_jsonl(clean, drop_to)
        click.echo(f"kept {len(clean)} of {len(train_texts)} train samples")


# ---------------------------------------------------------------------------
# Domain classifier
# ---------------------------------------------------------------------------


@main.command("classify-train")
@click.argument("model_path", type=click.Path())
@click.option("--positives", type=click.Path(exists=True), required=True)
@click.option("--background", type=click.Path(exists=True), required=True)
@click.option("--neg-ratio", type=int, default=10, show_default=True)
@click.option("--epochs", type=int, default=5, show_default=True)
@click.option("--lr", type=float, default=0.5, show_default=True)
@click.option("--feature-dim", type=int, default=clf.DEFAULT_FEATURE_DIM, show_default=True)
@click.pass_context
def classify_train(ctx, model_path, positives, background, neg_ratio, epochs, lr, feature_dim):
    """Train the binary relevance classifier (positives vs sampled background)."""
    pos, _ = load_jsonl(positives)
    bg, _ = load_jsonl(background)
    seed = ctx.obj["seed"]
    data = clf.assemble_training_set(pos, bg, neg_ratio=neg_ratio, seed=seed)
    result = clf.train_classifier(data, epochs=epochs, lr=lr, seed=seed,
                                  feature_dim=feature_dim)
    result.model.save(model_path)
    click.echo(
        f"trained on {len(data)} samples ({len(pos)} positive); "
        f"train accuracy {result.train_accuracy:.4f}"
    )


@main.command("classify-score")
@click.argument("model_path", type=click.Path(exists=True))
@click.argument("input_path", type=click.Path(exists=True))
@click.argument("output_path", type=click.Path())
def classify_score(model_path, input_path, output_path):
    """Score a corpus, writing the input JSONL plus a score field."""
    model = clf.LinearClassifier.load(model_path)
    docs, _ = load_jsonl(input_path)
    written = clf.write_scored_jsonl(docs, model, output_path)
    click.echo(f"scored {written} documents")


@main.command("calibrate")
@click.argument("scored_path", type=click.Path(exists=True))
@click.option("--labeler", required=True,
              help='Offline labeler, e.g. "keyword:malware,exploit" '
                   "(external judge labelers plug in via the library API).")
@click.option("--sample-per-bin", type=int, default=50, show_default=True)
@click.pass_context
def calibrate(ctx, scored_path, labeler, sample_per_bin):
    """Sample score bins and measure relevance ratios (writes a bin report)."""
    kind, _, arg = labeler.partition(":")
    if kind != "keyword" or not arg:
        raise click.UsageError('only "keyword:w1,w2,..." labelers are supported here')
    keywords = [w.strip().lower() for w in arg.split(",") if w.strip()]
    predicate = lambda doc: any(k in doc.content.lower() for k in keywords)
    scored = clf.read_scored_jsonl(scored_path)
    report = clf.bin_calibration(scored, sample_per_bin=sample_per_bin,
                                 labeler=predicate, seed=ctx.obj["seed"])
    payload = report.to_dict()
    click.echo(json.dumps(payload, indent=2))
    _emit_report(ctx, payload)


@main.command("select-threshold")
@click.argument("report_path", type=click.Path(exists=True))
@click.option("--min-ratio", type=float, default=0.5, show_default=True)
def select_threshold_cmd(report_path, min_ratio):
    """Pick the score threshold from a calibration bin report."""
    with open(report_path, "r", encoding="utf-8") as fh:
        report = clf.BinReport.from_dict(json.load(fh))
    click.echo(f"{clf.select_threshold(report, min_ratio=min_ratio)}")


# ---------------------------------------------------------------------------
# Curation flows
# ---------------------------------------------------------------------------


@main.command("augment")
@click.argument("input_path", type=click.Path(exists=True))
@click.argument("output_path", type=click.Path())
@click.option("--style", "styles", multiple=True,
              type=click.Choice(["blog", "textbook", "qa"]),
              help="Built-in rewrite style (repeatable; default: all three).")
@click.option("--template", "template_specs", multiple=True,
              help="Custom template as STYLE=PATH (repeatable).")
@click.option("--clients", "clients_path", type=click.Path(exists=True),
              help="JSON list of completion clients.")
@click.option("--endpoint", default=None, help="Single-client endpoint URL.")
@click.option("--model-name", default=None, help="Single-client model name.")
@click.option("--api-key", default=None)
@click.option("--temperature", type=float, default=0.7, show_default=True)
@click.option("--error-budget", type=int, default=100, show_default=True)
@click.pass_context
def augment_cmd(ctx, input_path, output_path, styles, template_specs, clients_path,
                endpoint, model_name, api_key, temperature, error_budget):
    """Rewrite documents into randomized styles via completion clients."""
    templates = []
    for spec in template_specs:
        style, _, path = spec.partition("=")
        if not path:
            raise click.UsageError(f"bad --template {spec!r}, expected STYLE=PATH")
        templates.append(curation.StyleTemplate.from_file(style, path))
    for style in styles or (() if templates else ("blog", "textbook", "qa")):
        templates.append(curation.builtin_template(style))

    if clients_path:
        with open(clients_path, "r", encoding="utf-8") as fh:
            clients = [curation.CompletionClient(**c) for c in json.load(fh)]
    elif endpoint and model_name:
        clients = [curation.CompletionClient(endpoint=endpoint, model_name=model_name,
                                             temperature=temperature, api_key=api_key)]
    else:
        raise click.UsageError("pass --clients FILE or --endpoint with --model-name")

    docs, _ = load_jsonl(input_path)
    rewritten, report = curation.augment(
        docs, templates, clients, seed=ctx.obj["seed"],
        max_concurrency=ctx.obj["threads"], error_budget=error_budget,
    )
    written = write_jsonl(rewritten, output_path)
    click.echo(f"{len(docs)} in, {written} rewritten, {len(report.skipped)} skipped")
    _emit_report(ctx, report.to_dict())


@main.command("judge-filter")
@click.argument("input_path", type=click.Path(exists=True))
@click.argument("output_path", type=click.Path())
@click.option("--min-score", type=int, default=8, show_default=True)
@click.option("--top-k", type=int, default=100, show_default=True)
def judge_filter_cmd(input_path, output_path, min_score, top_k):
    """Keep the best-judged samples per task (score floor + top-k)."""
    judged = curation.load_judged_jsonl(input_path)
    kept = curation.judge_filter(judged, min_score=min_score, top_k=top_k)
    written = write_chat_jsonl(kept, output_path)
    click.echo(f"{len(judged)} judged in, {written} kept")


@main.command("reject-sample")
@click.argument("input_path", type=click.Path(exists=True))
@click.argument("output_path", type=click.Path())
@click.option("--answers", "answers_path", type=click.Path(exists=True), required=True,
              help="JSON map of prompt_id to expected answer.")
@click.option("--extract", is_flag=True,
              help="Extract 'Answer: X' from the last assistant message instead of "
                   "requiring an extracted_answer field.")
@click.pass_context
def reject_sample_cmd(ctx, input_path, output_path, answers_path, extract):
    """Keep only samples whose final answer matches the answer key."""
    with open(answers_path, "r", encoding="utf-8") as fh:
        answer_key = json.load(fh)
    pairs = []
    with open(input_path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            sample = chat_sample_from_record(record)
            if extract:
                assistant = [m.content for m in sample.messages if m.role == "assistant"]
                extracted = curation.extract_answer(assistant[-1]) if assistant else None
                extracted = extracted or ""
            else:
                extracted = str(record.get("extracted_answer", ""))
            pairs.append((sample, extracted))
    kept, report = curation.rejection_sample(
        pairs, answer_key, dataset_key=lambda s: s.prompt_id.rsplit("-", 1)[0]
    )
    written = write_chat_jsonl(kept, output_path)
    click.echo(f"{len(pairs)} in, {written} accepted")
    _emit_report(ctx, report.to_dict())


# ---------------------------------------------------------------------------
# Parameter merging
# ---------------------------------------------------------------------------


def _parse_model_spec(spec: str) -> tuple[str, float]:
    path, _, weight = spec.rpartition(":")
    if not path:
        raise click.UsageError(f"bad --model {spec!r}, expected DIR:WEIGHT")
    return path, float(weight)


@main.command("merge")
@click.option("--base", "base_path", type=click.Path(exists=True), required=True)
@click.option("--model", "model_specs", multiple=True, required=True,
              help="Model directory and weight as DIR:WEIGHT (repeatable).")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--drop", type=float, default=0.5, show_default=True)
@click.option("--density", type=float, default=0.5, show_default=True)
@click.pass_context
def merge_cmd(ctx, base_path, model_specs, out_path, drop, density):
    """DARE-TIES merge one or more models onto a base."""
    base = mg.ParameterMap.load(base_path)
    models = [(mg.ParameterMap.load(path), weight)
              for path, weight in map(_parse_model_spec, model_specs)]
    merged = mg.dare_ties(base, models, drop_prob=drop, density=density,
                          seed=ctx.obj["seed"])
    merged.save(out_path)
    click.echo(f"merged {len(models)} models into {out_path}")


@main.command("grid-search")
@click.option("--base", "base_path", type=click.Path(exists=True), required=True)
@click.option("--model-a", type=click.Path(exists=True), required=True)
@click.option("--model-b", type=click.Path(exists=True), required=True)
@click.option("--scorer-cmd", required=True,
              help="Command run per grid point with the merged-model directory "
                   "appended; must print a float score.")
@click.option("--step", type=float, default=0.05, show_default=True)
@click.option("--drop", type=float, default=0.5, show_default=True)
@click.option("--density", type=float, default=0.5, show_default=True)
@click.pass_context
def grid_search_cmd(ctx, base_path, model_a, model_b, scorer_cmd, step, drop, density):
    """Scan merge ratios (0.5+w):(0.5-w) and report the best."""
    base = mg.ParameterMap.load(base_path)
    a = mg.ParameterMap.load(model_a)
    b = mg.ParameterMap.load(model_b)
    cmd = shlex.split(scorer_cmd)

    def scorer(pm: mg.ParameterMap) -> float:
        with tempfile.TemporaryDirectory(prefix="corpuskit-merge-") as tmp:
            pm.save(tmp)
            proc = subprocess.run(cmd + [tmp], capture_output=True, text=True, check=True)
            return float(proc.stdout.strip().splitlines()[-1])

    best, table = mg.grid_search(base, a, b, scorer, step=step, drop_prob=drop,
                                 density=density, seed=ctx.obj["seed"])
    for w, value in table:
        shown = "failed" if value is None else f"{value:.6f}"
        click.echo(f"w={w:.2f} ratio={0.5 + w:.2f}:{0.5 - w:.2f} score={shown}")
    click.echo(f"best w={best.w:.2f} (ratio {best.weight_a:.2f}:{best.weight_b:.2f})")
    _emit_report(ctx, {"best_w": best.w, "table": [
        {"w": w, "score": s} for w, s in table
    ]})


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@main.command("eval")
@click.argument("input_path", type=click.Path(exists=True))
@click.option("--metric", type=click.Choice(["accuracy", "mad", "f1"]), required=True)
def eval_cmd(input_path, metric):
    """Score a prediction JSONL with one metric."""
    records = evalkit.load_prediction_jsonl(input_path)
    fn = evalkit.METRIC_FUNCS[evalkit.Metric(metric)]
    click.echo(f"{fn(records):.6f}")


@main.command("calibration")
@click.argument("input_path", type=click.Path(exists=True))
@click.option("--bins", type=int, default=10, show_default=True)
@click.pass_context
def calibration_cmd(ctx, input_path, bins):
    """Expected calibration error over a prediction JSONL."""
    records = evalkit.load_prediction_jsonl(input_path)
    report = evalkit.ece(records, num_bins=bins)
    payload = report.to_dict()
    click.echo(json.dumps(payload, indent=2))
    _emit_report(ctx, payload)


@main.command("aggregate")
@click.option("--scores", "scores_path", type=click.Path(exists=True), required=True,
              help='JSON list of {"name", "value", "metric"}.')
@click.option("--spec", "spec_list", default=None,
              help="Expected benchmarks as NAME:METRIC,... (validates the set).")
@click.option("--mt-bench", type=float, default=None,
              help="Also mix in an instruction-following score.")
@click.option("--w-mt", type=float, default=0.3, show_default=True)
@click.option("--w-cyber", type=float, default=0.7, show_default=True)
@click.pass_context
def aggregate_cmd(ctx, scores_path, spec_list, mt_bench, w_mt, w_cyber):
    """Aggregate benchmark scores (deviation metrics negated)."""
    with open(scores_path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    scores = [
        evalkit.BenchmarkScore(s["name"], float(s["value"]), evalkit.Metric(s["metric"]))
        for s in raw
    ]
    expected = None
    if spec_list:
        expected = []
        for item in spec_list.split(","):
            name, _, metric = item.strip().partition(":")
            expected.append(name)
            declared = next((s for s in scores if s.name == name), None)
            if declared is not None and metric and declared.metric.value != metric:
                raise click.UsageError(
                    f"{name}: metric mismatch ({declared.metric.value} vs {metric})"
                )
    value = evalkit.aggregate_cyber(scores, expected=expected)
    click.echo(f"aggregate: {value:.4f} ({value:.2f})")
    payload = {
        "scores": [
            {"name": s.name, "value": s.value, "metric": s.metric.value} for s in scores
        ],
        "aggregate": value,
    }
    if mt_bench is not None:
        mixed = evalkit.aggregate_weighted(mt_bench, value, w_mt=w_mt, w_cyber=w_cyber)
        click.echo(f"weighted: {mixed:.4f} ({mixed:.2f})")
        payload.update({"mt_bench": mt_bench, "weighted": mixed})
    _emit_report(ctx, payload)


@main.command("stats")
@click.argument("input_path", type=click.Path(exists=True))
@click.pass_context
def stats_cmd(ctx, input_path):
    """Sample/token statistics per source."""
    docs, _ = load_jsonl(input_path)
    payload = pl.stats(docs).to_dict()
    click.echo(json.dumps(payload, indent=2))
    _emit_report(ctx, payload)


@main.command("pipeline")
@click.pass_context
def pipeline_cmd(ctx):
    """Run the staged pipeline described by --config."""
    config_path = ctx.obj.get("config")
    if not config_path:
        raise click.UsageError("pipeline needs --config CONFIG.json")
    try:
        cfg = pl.PipelineConfig.from_file(config_path)
        report = pl.run_pipeline(cfg, base_dir=Path(config_path).parent)
    except pl.PipelineStageError as exc:
        raise click.ClickException(str(exc))
    except pl.PipelineError as exc:
        raise click.ClickException(f"invalid pipeline config: {exc}")
    for stage in report["stages"]:
        click.echo(
            f"stage {stage['name']} ({stage['op']}): "
            f"{stage['docs_in']} -> {stage['docs_out']}"
        )
    click.echo(f"wrote {report['written']} documents")
    if ctx.obj.get("report") and not cfg.report_path:
        _emit_report(ctx, report)


if __name__ == "__main__":
    main()
