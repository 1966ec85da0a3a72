import argparse
import logging
import sys
from pathlib import Path

from alignment import (
    compare_boards, compute_alignment, compute_human_scoreboard, compute_scoreboard, render_report,
)
from config import RunConfig
from errors import ConfigError, EmptyInput
from storage import RecordStore, load_annotations
from utils import dump_json, write_text_atomic

logger = logging.getLogger(__name__)

CATEGORY = "Reporting"

REPORT_FILES = {"json": "report.json", "csv": "report.csv", "markdown": "report.md"}


def _records(config: RunConfig, records_dir: Path | None):
    store = RecordStore(records_dir or config.output_dir)
    records = store.load_records()
    if not records:
        raise EmptyInput(f"no evaluation records under {store.records_dir}")
    failed = sum(r.failed for r in records)
    if failed:
        logger.warning("%d of %d records carry an error and have no judgments", failed, len(records))
    return records


def _annotations(config: RunConfig, required: bool):
    if config.annotations is None:
        if required:
            raise ConfigError("no annotation file given (use --annotations)")
        return None
    if not config.annotations.exists():
        raise ConfigError(f"annotation file {config.annotations} does not exist")
    return load_annotations(config.annotations)


def handle_align(args, config: RunConfig) -> int:
    annotations = _annotations(config, required=True)
    report = compute_alignment(_records(config, args.records), annotations)
    path = config.output_dir / "alignment_report.json"
    write_text_atomic(path, dump_json(report.model_dump(mode="json")))
    print(f"overall alignment {report.overall.ratio:.3f} over {report.overall.count} cells")
    for model_id, ratio in report.per_model.items():
        print(f"  {model_id}: {ratio.ratio:.3f} ({ratio.count} cells)")
    logger.info("wrote %s", path)
    return 0


def handle_rank(args, config: RunConfig) -> int:
    board = compute_scoreboard(_records(config, args.records))
    write_text_atomic(config.output_dir / "scoreboard.json", dump_json(board.model_dump(mode="json")))
    for entry in board.rankings["overall"]:
        tie = "\t(tie)" if entry.tied else ""
        print(f"{entry.rank}\t{entry.model_id}\t{entry.score:.3f}{tie}")

    annotations = _annotations(config, required=False)
    if annotations:
        human = compute_human_scoreboard(annotations)
        correlations = compare_boards(board, human)
        write_text_atomic(config.output_dir / "human_scoreboard.json", dump_json(human.model_dump(mode="json")))
        write_text_atomic(config.output_dir / "rank_correlation.json", dump_json(correlations))
        overall = correlations.get("overall")
        print(f"agent vs human Kendall tau-b (overall): {'-' if overall is None else f'{overall:.3f}'}")
    return 0


def handle_report(args, config: RunConfig) -> int:
    records = _records(config, args.records)
    annotations = _annotations(config, required=False)
    board = compute_scoreboard(records)
    alignment = compute_alignment(records, annotations) if annotations else None
    correlations = compare_boards(board, compute_human_scoreboard(annotations)) if annotations else None
    document = render_report(alignment, board, args.format, correlations=correlations)
    if args.stdout:
        sys.stdout.write(document)
        return 0
    path = config.output_dir / REPORT_FILES[args.format]
    write_text_atomic(path, document)
    logger.info("wrote %s", path)
    return 0


def setup_reporting_commands(subparsers, common: argparse.ArgumentParser) -> None:
    """Register align, rank and report."""

    def add_inputs(parser: argparse.ArgumentParser, annotations_help: str) -> None:
        parser.add_argument("--records", type=Path, help="directory holding records/ (default: the output dir)")
        parser.add_argument("--annotations", type=Path, help=annotations_help)

    align = subparsers.add_parser("align", parents=[common], help="Alignment of agent verdicts with human labels")
    add_inputs(align, "human annotation file (.json array or .jsonl)")
    align.set_defaults(category=CATEGORY, handler=handle_align)

    rank = subparsers.add_parser("rank", parents=[common], help="Per-dimension model scores and rankings")
    add_inputs(rank, "optional human annotations for an agent-vs-human ranking comparison")
    rank.set_defaults(category=CATEGORY, handler=handle_rank)

    report = subparsers.add_parser("report", parents=[common], help="Render scoreboard and alignment as a document")
    add_inputs(report, "optional human annotations; adds the alignment sections")
    report.add_argument("--format", choices=sorted(REPORT_FILES), default="markdown")
    report.add_argument("--stdout", action="store_true", help="print instead of writing report.<ext>")
    report.set_defaults(category=CATEGORY, handler=handle_report)
