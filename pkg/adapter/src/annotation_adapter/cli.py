"""Command-line front end for the annotation adapter.

One subcommand: ``annotate --in chunks.jsonl --out ingest.json --config
adapter.toml``. Exit codes: 0 success, 2 any input/config/pipeline/endpoint
error.
"""

from __future__ import annotations

import json
import sys

import click

from .annotate import annotate, read_chunks_jsonl, write_ingest
from .config import AdapterError, load_config

EXIT_VALIDATION = 2


@click.group()
def main():
    """Produce the swapping pipeline's ingest JSON from raw text chunks."""


@main.command(name="annotate")
@click.option("--in", "in_path", required=True, type=click.Path(),
              help="JSON-lines chunk list {id, doc_id, text}.")
@click.option("--out", "out_path", required=True,
              help="Ingest JSON output (written atomically).")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--report", "report_path", default=None,
              help="Write the annotation report here instead of stdout.")
def annotate_cmd(in_path, out_path, config_path, report_path):
    """Run NER and embedding over the chunks and write the ingest file."""
    try:
        config = load_config(config_path)
        chunks = read_chunks_jsonl(in_path)
        doc, report = annotate(chunks, config)
        write_ingest(doc, out_path)
    except (AdapterError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    text = json.dumps(report, indent=2, sort_keys=True)
    if report_path:
        with open(report_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        click.echo(text)


if __name__ == "__main__":
    main()
