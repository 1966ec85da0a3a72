"""Agent-versus-human alignment, scoreboards, rank agreement and reports."""

from __future__ import annotations

import csv
import io
import logging
import math
from collections import defaultdict
from typing import Iterable, Literal, Mapping, Sequence

from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import kendalltau

from errors import EmptyInput, EmptyJoin, InvalidRecord, MismatchedSets, UndefinedCorrelation, UnknownFormat
from schema import (
    ALL_DIMENSIONS, DIMENSION_ABBREVIATIONS, FORMAT_VERSION, AnnotationRecord, DimensionId, EvaluationRecord, Verdict,
)
from utils import dump_json

logger = logging.getLogger(__name__)

OVERALL = "overall"
REPORT_FORMATS = ("json", "csv", "markdown")


def alignment_weight(agent: Verdict, human: Verdict) -> float:
    """1 on agreement, 0.5 for a half / yes pair, 0 otherwise."""
    if agent is human:
        return 1.0
    if {agent, human} == {Verdict.HALF, Verdict.YES}:
        return 0.5
    return 0.0


class AlignmentCell(BaseModel):
    model_config = ConfigDict(frozen=True, protected_namespaces=())

    video_id: str
    model_id: str
    dimension: DimensionId
    agent: Verdict
    human: Verdict
    weight: float
    agent_reason: str = ""
    human_explanation: str | None = None


class Ratio(BaseModel):
    model_config = ConfigDict(frozen=True, protected_namespaces=())

    ratio: float
    count: int = Field(gt=0)


class CellRef(BaseModel):
    model_config = ConfigDict(frozen=True, protected_namespaces=())

    video_id: str
    dimension: DimensionId


class AlignmentReport(BaseModel):
    model_config = ConfigDict(frozen=True, protected_namespaces=())

    format_version: int = FORMAT_VERSION
    overall: Ratio
    per_model: dict[str, Ratio]
    per_dimension: dict[DimensionId, Ratio]
    per_model_dimension: dict[str, dict[DimensionId, Ratio]]
    cells: tuple[AlignmentCell, ...]
    # cells present on one side only
    unmatched_agent: tuple[CellRef, ...] = ()
    unmatched_human: tuple[CellRef, ...] = ()

    @property
    def disagreements(self) -> list[AlignmentCell]:
        return [cell for cell in self.cells if cell.weight < 1.0]


def _ratio(weights: Sequence[float]) -> Ratio:
    return Ratio(ratio=math.fsum(weights) / len(weights), count=len(weights))


def _dim_order(dim: DimensionId) -> int:
    return ALL_DIMENSIONS.index(dim)


def _index_unique(items, kind: str) -> dict:
    indexed = {}
    for item in items:
        if item.video_id in indexed:
            raise InvalidRecord(f"duplicate {kind} for video {item.video_id}")
        indexed[item.video_id] = item
    return indexed


def compute_alignment(
    records: Iterable[EvaluationRecord], annotations: Iterable[AnnotationRecord],
) -> AlignmentReport:
    """Join agent and human verdicts on (video_id, dimension) and average the weights."""
    by_video = _index_unique(records, "evaluation record")
    labels = _index_unique(annotations, "annotation")

    cells: list[AlignmentCell] = []
    unmatched_agent: list[CellRef] = []
    unmatched_human: list[CellRef] = []
    for video_id in sorted(set(by_video) | set(labels)):
        record, annotation = by_video.get(video_id), labels.get(video_id)
        if record and annotation and record.model_id != annotation.model_id:
            raise InvalidRecord(
                f"video {video_id} is {record.model_id} in the records but {annotation.model_id} in the annotations"
            )
        judged = {j.dimension: j for j in record.judgments} if record else {}
        human = dict(annotation.dimensions) if annotation else {}
        for dim in ALL_DIMENSIONS:
            if dim in judged and dim in human:
                judgment, label = judged[dim], human[dim]
                cells.append(AlignmentCell(
                    video_id=video_id,
                    model_id=record.model_id,
                    dimension=dim,
                    agent=judgment.verdict,
                    human=label.score,
                    weight=alignment_weight(judgment.verdict, label.score),
                    agent_reason=judgment.reason,
                    human_explanation=label.explanation,
                ))
            elif dim in judged:
                unmatched_agent.append(CellRef(video_id=video_id, dimension=dim))
            elif dim in human:
                unmatched_human.append(CellRef(video_id=video_id, dimension=dim))
    if not cells:
        raise EmptyJoin("no (video, dimension) pair has both an agent verdict and a human label")

    cells.sort(key=lambda c: (c.model_id, c.video_id, _dim_order(c.dimension)))
    per_model: dict[str, list[float]] = defaultdict(list)
    per_dimension: dict[DimensionId, list[float]] = defaultdict(list)
    per_cell: dict[str, dict[DimensionId, list[float]]] = defaultdict(lambda: defaultdict(list))
    for cell in cells:
        per_model[cell.model_id].append(cell.weight)
        per_dimension[cell.dimension].append(cell.weight)
        per_cell[cell.model_id][cell.dimension].append(cell.weight)

    if unmatched_agent or unmatched_human:
        logger.info(
            "alignment coverage: %d agent-only and %d human-only cells left out",
            len(unmatched_agent), len(unmatched_human),
        )
    return AlignmentReport(
        overall=_ratio([c.weight for c in cells]),
        per_model={m: _ratio(per_model[m]) for m in sorted(per_model)},
        per_dimension={d: _ratio(per_dimension[d]) for d in ALL_DIMENSIONS if d in per_dimension},
        per_model_dimension={
            m: {d: _ratio(per_cell[m][d]) for d in ALL_DIMENSIONS if d in per_cell[m]} for m in sorted(per_cell)
        },
        cells=tuple(cells),
        unmatched_agent=tuple(unmatched_agent),
        unmatched_human=tuple(unmatched_human),
    )


# --- scoreboards ---

class RankEntry(BaseModel):
    model_config = ConfigDict(frozen=True, protected_namespaces=())

    model_id: str
    score: float
    rank: int
    tied: bool = False


class ScoreBoard(BaseModel):
    model_config = ConfigDict(frozen=True, protected_namespaces=())

    format_version: int = FORMAT_VERSION
    source: Literal["agent", "human"] = "agent"
    scores: dict[str, dict[DimensionId, float]]
    counts: dict[str, dict[DimensionId, int]]
    overall: dict[str, float]
    # "overall" first, then one ranking per dimension with samples
    rankings: dict[str, tuple[RankEntry, ...]]

    def ranking(self, key: str = OVERALL) -> list[str]:
        return [entry.model_id for entry in self.rankings[key]]


def _same(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=0.0, abs_tol=1e-12)


def rank_models(scores: Mapping[str, float]) -> tuple[RankEntry, ...]:
    """Descending ranking; ties keep model_id order and are marked as tied."""
    ordered = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
    entries = []
    for i, (model_id, score) in enumerate(ordered):
        tied = (i > 0 and _same(score, ordered[i - 1][1])) or (
            i + 1 < len(ordered) and _same(score, ordered[i + 1][1])
        )
        entries.append(RankEntry(model_id=model_id, score=score, rank=i + 1, tied=tied))
    return tuple(entries)


def _build_board(
    rows: Iterable[tuple[str, DimensionId, Verdict]],
    source: Literal["agent", "human"],
    weights: Mapping[DimensionId, float] | None,
) -> ScoreBoard:
    values: dict[str, dict[DimensionId, list[float]]] = defaultdict(lambda: defaultdict(list))
    for model_id, dim, verdict in rows:
        values[model_id][dim].append(verdict.numeric())
    if not values:
        raise EmptyInput("no judgments to score")

    scores: dict[str, dict[DimensionId, float]] = {}
    counts: dict[str, dict[DimensionId, int]] = {}
    overall: dict[str, float] = {}
    for model_id in sorted(values):
        per_dim = values[model_id]
        dims = [d for d in ALL_DIMENSIONS if d in per_dim]
        scores[model_id] = {d: math.fsum(per_dim[d]) / len(per_dim[d]) for d in dims}
        counts[model_id] = {d: len(per_dim[d]) for d in dims}
        w = {d: (weights or {}).get(d, 1.0) for d in dims}
        total = math.fsum(w.values())
        if total <= 0:
            raise ValueError(f"dimension weights for {model_id} sum to zero")
        overall[model_id] = math.fsum(scores[model_id][d] * w[d] for d in dims) / total

    rankings: dict[str, tuple[RankEntry, ...]] = {OVERALL: rank_models(overall)}
    for dim in ALL_DIMENSIONS:
        dim_scores = {m: s[dim] for m, s in scores.items() if dim in s}
        if dim_scores:
            rankings[dim.value] = rank_models(dim_scores)
    return ScoreBoard(source=source, scores=scores, counts=counts, overall=overall, rankings=rankings)


def compute_scoreboard(
    records: Iterable[EvaluationRecord], weights: Mapping[DimensionId, float] | None = None,
) -> ScoreBoard:
    """Mean agent score per (model, dimension) and the overall mean over judged dimensions.

    Records with an error annotation carry no judgments and are skipped.
    """
    records = list(records)
    if not records:
        raise EmptyInput("no evaluation records")
    rows = [(r.model_id, j.dimension, j.verdict) for r in records for j in r.judgments]
    return _build_board(rows, "agent", weights)


def compute_human_scoreboard(
    annotations: Iterable[AnnotationRecord], weights: Mapping[DimensionId, float] | None = None,
) -> ScoreBoard:
    rows = [(a.model_id, dim, label.score) for a in annotations for dim, label in a.dimensions.items()]
    return _build_board(rows, "human", weights)


# --- rank agreement ---

def _as_scores(ranking) -> dict[str, float]:
    if isinstance(ranking, Mapping):
        return {str(k): float(v) for k, v in ranking.items()}
    items = list(ranking)
    if items and isinstance(items[0], RankEntry):
        return {e.model_id: e.score for e in items}
    if len(set(items)) != len(items):
        raise MismatchedSets("a ranking lists the same model twice")
    # best first, so earlier positions score higher
    return {str(model_id): float(len(items) - i) for i, model_id in enumerate(items)}


def rank_correlation(a, b) -> float:
    """Kendall tau-b between two rankings over the same models.

    Each ranking is a best-first list of model ids, a ``{model_id: score}``
    mapping or a sequence of ``RankEntry``; score ties are handled by tau-b.
    """
    sa, sb = _as_scores(a), _as_scores(b)
    if set(sa) != set(sb):
        raise MismatchedSets(f"rankings cover different models: {sorted(set(sa) ^ set(sb))}")
    if len(sa) < 2:
        raise UndefinedCorrelation("rank correlation needs at least two models")
    models = sorted(sa)
    tau, _ = kendalltau([sa[m] for m in models], [sb[m] for m in models])
    if tau is None or math.isnan(tau):
        raise UndefinedCorrelation("one ranking is all ties")
    return float(tau)


def compare_boards(agent: ScoreBoard, human: ScoreBoard) -> dict[str, float | None]:
    """Kendall tau-b per ranking key over the models both boards rank; None when undefined."""
    result: dict[str, float | None] = {}
    for key, entries in agent.rankings.items():
        if key not in human.rankings:
            continue
        a = {e.model_id: e.score for e in entries}
        h = {e.model_id: e.score for e in human.rankings[key]}
        common = sorted(set(a) & set(h))
        try:
            result[key] = rank_correlation({m: a[m] for m in common}, {m: h[m] for m in common})
        except UndefinedCorrelation:
            result[key] = None
    return result


# --- rendering ---

def _fmt(value: float | None) -> str:
    return "-" if value is None else f"{value:.3f}"


def _cell_text(text: str | None) -> str:
    return (text or "").replace("|", "\\|").replace("\n", " ").strip()


def _judged_dimensions(alignment: AlignmentReport | None, board: ScoreBoard | None) -> list[DimensionId]:
    used: set[DimensionId] = set()
    if board is not None:
        for per_dim in board.scores.values():
            used.update(per_dim)
    if alignment is not None:
        used.update(alignment.per_dimension)
    return [d for d in ALL_DIMENSIONS if d in used]


def _render_markdown(
    alignment: AlignmentReport | None,
    board: ScoreBoard | None,
    correlations: Mapping[str, float | None] | None,
) -> str:
    dims = _judged_dimensions(alignment, board)
    abbrs = [DIMENSION_ABBREVIATIONS[d] for d in dims]
    lines = ["# Evaluation report", ""]
    lines.append("Dimensions: " + ", ".join(f"{DIMENSION_ABBREVIATIONS[d]} {d.value}" for d in dims))
    lines.append("")

    if board is not None:
        lines += ["## Scoreboard", ""]
        lines.append("| Rank | Model | " + " | ".join(abbrs) + " | Overall |")
        lines.append("|---|---|" + "---|" * len(dims) + "---|")
        for entry in board.rankings[OVERALL]:
            scores = board.scores[entry.model_id]
            rank = f"{entry.rank}{' (tie)' if entry.tied else ''}"
            row = [rank, entry.model_id] + [_fmt(scores.get(d)) for d in dims] + [_fmt(entry.score)]
            lines.append("| " + " | ".join(row) + " |")
        lines.append("")

    if alignment is not None:
        lines += ["## Alignment with human labels", ""]
        lines.append(f"Overall alignment: {_fmt(alignment.overall.ratio)} over {alignment.overall.count} cells")
        lines.append("")
        lines.append("| Model | " + " | ".join(abbrs) + " | Overall |")
        lines.append("|---|" + "---|" * len(dims) + "---|")
        for model_id, per_dim in alignment.per_model_dimension.items():
            row = [model_id] + [_fmt(per_dim[d].ratio if d in per_dim else None) for d in dims]
            row.append(_fmt(alignment.per_model[model_id].ratio))
            lines.append("| " + " | ".join(row) + " |")
        all_row = ["All models"] + [
            _fmt(alignment.per_dimension[d].ratio if d in alignment.per_dimension else None) for d in dims
        ] + [_fmt(alignment.overall.ratio)]
        lines.append("| " + " | ".join(all_row) + " |")
        lines.append("")

        lines += ["### Coverage", ""]
        lines.append(f"- agent verdicts without a human label: {len(alignment.unmatched_agent)}")
        lines.append(f"- human labels without an agent verdict: {len(alignment.unmatched_human)}")
        for ref in alignment.unmatched_agent:
            lines.append(f"  - agent only: {ref.video_id} / {ref.dimension.value}")
        for ref in alignment.unmatched_human:
            lines.append(f"  - human only: {ref.video_id} / {ref.dimension.value}")
        lines.append("")

        lines += ["### Disagreements", ""]
        disagreements = alignment.disagreements
        if not disagreements:
            lines.append("none")
        else:
            lines.append("| Video | Model | Dimension | Agent | Human | Weight | Agent reason | Human explanation |")
            lines.append("|---|---|---|---|---|---|---|---|")
            for cell in disagreements:
                lines.append("| " + " | ".join([
                    cell.video_id, cell.model_id, cell.dimension.value, cell.agent.value, cell.human.value,
                    _fmt(cell.weight), _cell_text(cell.agent_reason), _cell_text(cell.human_explanation),
                ]) + " |")
        lines.append("")

    if correlations:
        lines += ["## Ranking agreement (Kendall tau-b)", ""]
        lines.append("| Ranking | tau |")
        lines.append("|---|---|")
        for key, tau in correlations.items():
            label = key if key == OVERALL else DIMENSION_ABBREVIATIONS[DimensionId(key)]
            lines.append(f"| {label} | {_fmt(tau)} |")
        lines.append("")
    return "\n".join(lines)


def _render_csv(alignment: AlignmentReport | None, board: ScoreBoard | None) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["model_id", "dimension", "agent_score", "agent_samples", "alignment_ratio", "alignment_samples"])
    models = sorted(set(board.scores if board else ()) | set(alignment.per_model_dimension if alignment else ()))
    for model_id in models:
        scores = board.scores.get(model_id, {}) if board else {}
        counts = board.counts.get(model_id, {}) if board else {}
        ratios = alignment.per_model_dimension.get(model_id, {}) if alignment else {}
        for dim in ALL_DIMENSIONS:
            if dim not in scores and dim not in ratios:
                continue
            ratio = ratios.get(dim)
            writer.writerow([
                model_id,
                dim.value,
                f"{scores[dim]:.3f}" if dim in scores else "",
                counts.get(dim, 0) if dim in scores else "",
                f"{ratio.ratio:.3f}" if ratio else "",
                ratio.count if ratio else "",
            ])
    return buffer.getvalue()


def render_report(
    alignment: AlignmentReport | None,
    board: ScoreBoard | None,
    fmt: str = "markdown",
    *,
    correlations: Mapping[str, float | None] | None = None,
) -> str:
    """Deterministic report document; either input may be left out."""
    if fmt not in REPORT_FORMATS:
        raise UnknownFormat(f"unknown report format {fmt!r} (expected one of {', '.join(REPORT_FORMATS)})")
    if alignment is None and board is None:
        raise EmptyInput("nothing to report")
    if fmt == "json":
        return dump_json({
            "format_version": FORMAT_VERSION,
            "alignment": alignment.model_dump(mode="json") if alignment else None,
            "scoreboard": board.model_dump(mode="json") if board else None,
            "rank_correlation": dict(correlations) if correlations else None,
        })
    if fmt == "csv":
        return _render_csv(alignment, board)
    return _render_markdown(alignment, board, correlations)


def parse_alignment_report(data: dict) -> AlignmentReport:
    return AlignmentReport.model_validate(data)


def parse_scoreboard(data: dict) -> ScoreBoard:
    return ScoreBoard.model_validate(data)
