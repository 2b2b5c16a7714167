"""Command-line entry point: annotate / agree / evaluate / drop / radar /
map / validate.

Exit codes: 0 success, 1 runtime failure, 2 usage error. All tabular output
uses dot decimal separators and a fixed column order; kappas print with 4
decimals, F1 and accuracy with 2, drops as integer percent, and mean drops
with one decimal.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import annotator as annotator_mod
from . import corpus as corpus_mod
from . import metrics as metrics_mod
from . import schema as schema_mod
from .llm_backend import CompletionClient, load_backend_config

HUMAN_ROW = "human"


def _fail(message: str):
    raise click.ClickException(message)


def _schema(name: str) -> schema_mod.LabelSchema:
    try:
        return schema_mod.builtin_schema(name)
    except schema_mod.UnknownSchemaError as exc:
        raise click.UsageError(str(exc))


@click.group()
def main():
    """Citation annotation and evaluation toolkit."""


@main.command()
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True), help="Corpus JSONL file.")
@click.option("--schema", "schema_name", required=True, help="Schema name.")
@click.option("--backend-config", required=True, type=click.Path(exists=True),
              help="Backend settings file (key = value lines).")
@click.option("--template", "template_path", type=click.Path(exists=True),
              help="Prompt template file; defaults to the built-in template.")
@click.option("--runs", default=3, show_default=True, help="Runs per instance.")
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Output annotation JSONL file.")
def annotate(input_path, schema_name, backend_config, template_path, runs,
             out_path):
    """Annotate a corpus with repeated LLM runs and majority-vote aggregation."""
    sch = _schema(schema_name)
    try:
        instances = corpus_mod.load_instances(input_path)
        config = load_backend_config(backend_config)
    except (corpus_mod.CorpusError, ValueError) as exc:
        _fail(str(exc))
    if template_path:
        template = annotator_mod.load_template(template_path, schema_name)
    else:
        template = annotator_mod.default_template(schema_name)
    client = CompletionClient(config)
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    try:
        records = annotator_mod.annotate_batch(instances, sch, template,
                                               client, n_runs=runs)
    except annotator_mod.BatchAbortedError as exc:
        annotator_mod.write_annotations(exc.partial_records, out_path)
        click.echo(f"aborted, flushed {len(exc.partial_records)} records", err=True)
        _fail(str(exc))
    annotator_mod.write_annotations(records, out_path)
    counts = {}
    for rec in records:
        if rec.run == 0:
            counts[rec.resolved] = counts.get(rec.resolved, 0) + 1
    summary = ", ".join(f"{k}={v}" for k, v in sorted(counts.items()))
    click.echo(f"wrote {len(records)} records to {out_path} ({summary})")


def _aligned_sequences(files, schema_name):
    """Load annotation files, check alignment, return ordered
    {annotator_id: [label-or-None]} over the first file's instance order."""
    per_file = []
    for path in files:
        records = annotator_mod.read_annotations(path)
        records = [r for r in records if r.run == 0 and r.schema == schema_name]
        if not records:
            _fail(f"{path}: no aggregated records for schema {schema_name!r}")
        annotator_id = records[0].annotator_id
        labels = {r.instance_id: (r.label if r.resolved != "unresolved" else None)
                  for r in records}
        per_file.append((annotator_id, labels))
    reference = list(per_file[0][1])
    ref_set = set(reference)
    for annotator_id, labels in per_file[1:]:
        diff = ref_set ^ set(labels)
        if diff:
            _fail(f"annotator {annotator_id!r}: instance sets differ "
                  f"(symmetric difference: {sorted(diff)[:10]})")
    # human consensus goes last, mirroring the agreement-table layout
    per_file.sort(key=lambda item: item[0].lower() == HUMAN_ROW)
    return {aid: [labels[i] for i in reference] for aid, labels in per_file}


@main.command()
@click.option("--schema", "schema_name", required=True)
@click.option("--input", "input_paths", required=True, multiple=True,
              type=click.Path(exists=True), help="Annotation JSONL files (>=2).")
@click.option("--out", "out_path", required=True, type=click.Path())
def agree(schema_name, input_paths, out_path):
    """Pairwise Cohen's kappa matrix over aggregated annotation files."""
    _schema(schema_name)
    if len(input_paths) < 2:
        _fail("need at least two annotators")
    sequences = _aligned_sequences(input_paths, schema_name)
    try:
        matrix = metrics_mod.agreement_matrix(sequences)
    except metrics_mod.MetricsError as exc:
        _fail(str(exc))
    ids = list(sequences)
    lines = ["\t".join(["annotator"] + ids[:-1])]
    for i, row_id in enumerate(ids[1:], start=1):
        cells = [row_id]
        for col_id in ids[:i]:
            result = matrix.get((col_id, row_id)) or matrix[(row_id, col_id)]
            cells.append(f"{result.kappa:.4f}")
        cells += [""] * (len(ids) - 1 - i)
        lines.append("\t".join(cells))
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    Path(out_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    click.echo(f"wrote {len(ids)}x{len(ids)} agreement table to {out_path}")


@main.command()
@click.option("--gold", "gold_path", required=True, type=click.Path(exists=True),
              help="Gold-bearing corpus JSONL.")
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True),
              help="Prediction annotation JSONL.")
@click.option("--schema", "schema_name", required=True)
@click.option("--dataset", default="", help="Dataset name recorded in the report.")
@click.option("--domain-tag", type=click.Choice(["in_domain", "cross_domain"]),
              default="in_domain", show_default=True)
@click.option("--domain", "domains", multiple=True,
              help="Restrict scoring to these domains (repeatable).")
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="JSON report path; .tsv and .per_class.tsv go beside it.")
def evaluate(gold_path, pred_path, schema_name, dataset, domain_tag, domains,
             out_path):
    """Score predictions against gold labels: accuracy, per-class P/R/F1,
    macro F1."""
    sch = _schema(schema_name)
    try:
        instances = corpus_mod.load_instances(gold_path)
    except corpus_mod.CorpusError as exc:
        _fail(str(exc))
    if domains:
        instances = corpus_mod.filter_by_domain(instances, set(domains))
    records = annotator_mod.read_annotations(pred_path)
    predictions = annotator_mod.aggregated_labels(
        r for r in records if r.schema == schema_name)
    annotator_id = next((r.annotator_id for r in records), "")
    ids = {inst.id for inst in instances}
    predictions = {k: v for k, v in predictions.items() if k in ids}
    try:
        cm = metrics_mod.confusion_matrix(instances, predictions, sch)
        report = metrics_mod.evaluate(cm, annotator_id=annotator_id,
                                      dataset=dataset, domain_tag=domain_tag)
    except metrics_mod.MetricsError as exc:
        _fail(f"no scored instances: {exc}")

    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report.to_record(), indent=2) + "\n",
                   encoding="utf-8")
    stem = out.with_suffix("")
    row = "\t".join([report.schema, report.annotator_id, report.domain_tag,
                     f"{report.accuracy:.2f}", f"{report.macro_f1:.2f}"])
    Path(f"{stem}.tsv").write_text(
        "schema\tannotator\tdomain_tag\taccuracy\tmacro_f1\n" + row + "\n",
        encoding="utf-8")
    per_class_lines = ["label\tprecision\trecall\tf1\tsupport"]
    for c in report.per_class:
        per_class_lines.append(
            f"{c.label}\t{c.precision:.2f}\t{c.recall:.2f}\t{c.f1:.2f}\t{c.support}")
    Path(f"{stem}.per_class.tsv").write_text(
        "\n".join(per_class_lines) + "\n", encoding="utf-8")
    click.echo(f"accuracy={report.accuracy:.2f} macro_f1={report.macro_f1:.2f} "
               f"(excluded={cm.excluded}) -> {out_path}")


def _load_reports(paths):
    reports = []
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            reports.append(metrics_mod.EvalReport.from_record(json.load(fh)))
    return reports


@main.command()
@click.option("--in-report", "in_paths", required=True, multiple=True,
              type=click.Path(exists=True), help="In-domain report JSONs.")
@click.option("--cross-report", "cross_paths", required=True, multiple=True,
              type=click.Path(exists=True), help="Cross-domain report JSONs.")
@click.option("--out", "out_path", required=True, type=click.Path())
def drop(in_paths, cross_paths, out_path):
    """Cross-domain macro-F1 drop table; rows paired by (schema, annotator)."""
    in_reports = {(r.schema, r.annotator_id): r for r in _load_reports(in_paths)}
    cross_reports = {(r.schema, r.annotator_id): r for r in _load_reports(cross_paths)}
    unpaired = set(in_reports) ^ set(cross_reports)
    if unpaired:
        _fail(f"unpaired rows: {sorted(unpaired)}")
    lines = ["schema\tannotator\tin_f1\tcross_f1\tdrop_percent\tbucket"]
    drops = []
    for key in in_reports:
        in_r, cross_r = in_reports[key], cross_reports[key]
        if in_r.macro_f1 <= 0:
            lines.append(f"{key[0]}\t{key[1]}\t{in_r.macro_f1:.2f}"
                         f"\t{cross_r.macro_f1:.2f}\tundefined\t")
            continue
        result = metrics_mod.cross_domain_drop(in_r.macro_f1, cross_r.macro_f1)
        drops.append(result)
        lines.append(f"{key[0]}\t{key[1]}\t{result.in_f1:.2f}"
                     f"\t{result.cross_f1:.2f}\t{result.drop_percent}"
                     f"\t{result.bucket}")
    if drops:
        mean = metrics_mod.aggregate_drops(drops)
        lines.append(f"mean\t\t\t\t{metrics_mod.format_mean_drop(mean)}\t")
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    Path(out_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    click.echo(f"wrote {len(lines) - 1} rows to {out_path}")


@main.command()
@click.option("--report", "report_paths", required=True, multiple=True,
              type=click.Path(exists=True), help="EvalReport JSON files.")
@click.option("--out-csv", required=True, type=click.Path())
@click.option("--out-chart", required=True, type=click.Path(),
              help="Static chart file (vector formats like .svg recommended).")
def radar(report_paths, out_csv, out_chart):
    """Per-class F1 radar chart plus a long-format CSV, one panel per schema."""
    reports = _load_reports(report_paths)
    schemas = {r.schema for r in reports}
    if len(schemas) != 1:
        _fail(f"reports mix schemas in one panel: {sorted(schemas)}")
    lines = ["framework,model,class,domain_tag,f1"]
    for r in reports:
        for c in r.per_class:
            lines.append(f"{r.schema},{r.annotator_id},{c.label},"
                         f"{r.domain_tag},{c.f1:.2f}")
    Path(out_csv).parent.mkdir(parents=True, exist_ok=True)
    Path(out_csv).write_text("\n".join(lines) + "\n", encoding="utf-8")
    _render_radar(reports, out_chart)
    click.echo(f"wrote {len(lines) - 1} rows to {out_csv} and chart to {out_chart}")


def _render_radar(reports, out_chart):
    import math

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = [c.label for c in reports[0].per_class]
    angles = [2 * math.pi * i / len(labels) for i in range(len(labels))]
    fig, ax = plt.subplots(figsize=(7, 7), subplot_kw=dict(polar=True))
    colors = {"in_domain": "#1f77b4", "cross_domain": "#d62728"}
    for r in reports:
        values = [c.f1 for c in r.per_class]
        closed_angles = angles + angles[:1]
        closed_values = values + values[:1]
        color = colors.get(r.domain_tag, "#2ca02c")
        name = f"{r.annotator_id} ({r.domain_tag})"
        ax.plot(closed_angles, closed_values, linewidth=2, label=name, color=color)
        ax.fill(closed_angles, closed_values, alpha=0.15, color=color)
    ax.set_ylim(0, 1)
    ax.set_thetagrids([math.degrees(a) for a in angles], labels)
    ax.legend(loc="upper right", bbox_to_anchor=(1.35, 1.1))
    ax.set_title(f"Per-class F1 ({reports[0].schema})", y=1.08)
    Path(out_chart).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_chart, bbox_inches="tight")
    plt.close(fig)


@main.command(name="map")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True),
              help="JSONL records carrying a 'label' field.")
@click.option("--source", default="acl-arc", show_default=True)
@click.option("--target", default="scicite", show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def map_cmd(input_path, source, target, out_path):
    """Rewrite record labels through the built-in schema mapping."""
    try:
        mapping = schema_mod.builtin_mapping(source, target)
    except schema_mod.UnknownSchemaError as exc:
        raise click.UsageError(str(exc))
    out_lines = []
    with open(input_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                _fail(f"{input_path}:{lineno}: malformed record: {exc}")
            if "label" not in rec:
                _fail(f"{input_path}:{lineno}: record has no 'label' field")
            try:
                rec["label"] = schema_mod.map_label(mapping, rec["label"])
            except schema_mod.LabelValidationError as exc:
                _fail(f"{input_path}:{lineno}: {exc}")
            out_lines.append(json.dumps(rec, ensure_ascii=False))
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    text = "\n".join(out_lines) + ("\n" if out_lines else "")
    Path(out_path).write_text(text, encoding="utf-8")
    click.echo(f"mapped {len(out_lines)} records to {out_path}")


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True),
              help="Corpus JSONL file.")
@click.option("--split", "split_path", type=click.Path(exists=True),
              help="Optional split file to check for leakage.")
def validate(input_path, split_path):
    """Validate a corpus file and, optionally, a train/test split."""
    try:
        instances = corpus_mod.load_instances(input_path)
    except corpus_mod.CorpusError as exc:
        _fail(str(exc))
    click.echo(f"{len(instances)} instances OK")
    if split_path:
        try:
            split = corpus_mod.load_split(split_path)
            report = corpus_mod.check_split(instances, split)
        except corpus_mod.CorpusError as exc:
            _fail(str(exc))
        if not report.ok():
            for doc in report.leaking_docs:
                click.echo(f"leaking source_doc_id: {doc}", err=True)
            for id_ in report.overlapping_ids:
                click.echo(f"id on both sides: {id_}", err=True)
            _fail("split validation failed")
        click.echo(f"split OK: {len(split.train)} train / {len(split.test)} test")


if __name__ == "__main__":
    sys.exit(main())
