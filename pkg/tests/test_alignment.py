import csv
import io
import json
import random
from pathlib import Path

import pytest

from alignment import (
    OVERALL, alignment_weight, compare_boards, compute_alignment, compute_human_scoreboard, compute_scoreboard,
    parse_alignment_report, parse_scoreboard, rank_correlation, rank_models, render_report,
)
from errors import EmptyInput, EmptyJoin, InvalidRecord, MismatchedSets, UndefinedCorrelation, UnknownFormat
from schema import ALL_DIMENSIONS, AnnotationRecord, DimensionId, EvaluationRecord, Judgment, StructuredPrompt, Verdict

GOLDEN = Path(__file__).parent / "golden"


def _record(video_id: str, model_id: str, verdicts: dict[str, tuple[str, str]]) -> EvaluationRecord:
    prompt = StructuredPrompt(raw_prompt="raw", dimensions={dim: f"about {dim}" for dim in verdicts})
    return EvaluationRecord(
        video_id=video_id,
        model_id=model_id,
        structured_prompt=prompt,
        judgments=tuple(
            Judgment(dimension=dim, verdict=verdict, reason=reason) for dim, (verdict, reason) in verdicts.items()
        ),
    )


def _labels(video_id: str, model_id: str, scores: dict[str, tuple[float, str | None]]) -> AnnotationRecord:
    return AnnotationRecord(video_id=video_id, model_id=model_id, dimensions={
        dim: {"score": score, "explanation": explanation} for dim, (score, explanation) in scores.items()
    })


def _report_inputs():
    records = [
        _record("v1", "model-a", {"appearance": ("yes", ""), "style": ("half", "too dark")}),
        _record("v2", "model-b", {"appearance": ("no", "wrong animal"), "style": ("yes", "")}),
    ]
    annotations = [
        _labels("v1", "model-a", {"appearance": (1, None), "style": (1, None)}),
        _labels("v2", "model-b", {
            "appearance": (0, "a cat, not a dog"), "style": (1, None), "lighting": (0.5, "flat light"),
        }),
    ]
    return records, annotations


@pytest.mark.parametrize("agent, human, weight", [
    (Verdict.YES, Verdict.YES, 1.0),
    (Verdict.HALF, Verdict.HALF, 1.0),
    (Verdict.NO, Verdict.NO, 1.0),
    (Verdict.HALF, Verdict.YES, 0.5),
    (Verdict.YES, Verdict.HALF, 0.5),
    (Verdict.HALF, Verdict.NO, 0.0),
    (Verdict.NO, Verdict.HALF, 0.0),
    (Verdict.YES, Verdict.NO, 0.0),
    (Verdict.NO, Verdict.YES, 0.0),
])
def test_alignment_weights(agent, human, weight):
    assert alignment_weight(agent, human) == weight


def test_ten_cell_alignment():
    # six agreements, two half/yes pairs and two misses
    pairs = ["yes/yes", "yes/yes", "no/no", "no/no", "half/half", "yes/yes",
             "half/yes", "yes/half", "no/yes", "half/no"]
    agent, human = {}, {}
    for dim, pair in zip(ALL_DIMENSIONS, pairs):
        a, h = pair.split("/")
        agent[dim.value] = (a, "" if a == "yes" else "reason")
        score = Verdict(h).numeric()
        human[dim.value] = (score, None if h == "yes" else "explanation")
    report = compute_alignment([_record("v1", "m", agent)], [_labels("v1", "m", human)])
    assert report.overall.count == 10
    assert report.overall.ratio == pytest.approx(0.7)
    assert len(report.disagreements) == 4


def test_alignment_ignores_input_order():
    rng = random.Random(0)
    records, annotations = [], []
    for i in range(6):
        dims = rng.sample([d.value for d in ALL_DIMENSIONS], 4)
        verdicts = {d: rng.choice([("yes", ""), ("half", "r"), ("no", "r")]) for d in dims}
        records.append(_record(f"v{i}", f"m{i % 3}", verdicts))
        labels = {d: rng.choice([(1, None), (0.5, "e"), (0, "e")]) for d in dims}
        annotations.append(_labels(f"v{i}", f"m{i % 3}", labels))
    expected = compute_alignment(records, annotations)
    for _ in range(200):
        rng.shuffle(records)
        rng.shuffle(annotations)
        assert compute_alignment(records, annotations) == expected


def test_alignment_needs_overlap():
    records = [_record("v1", "m", {"style": ("yes", "")})]
    with pytest.raises(EmptyJoin):
        compute_alignment(records, [_labels("v2", "m", {"style": (1, None)})])
    with pytest.raises(EmptyJoin):
        compute_alignment(records, [_labels("v1", "m", {"lighting": (1, None)})])


def test_duplicate_records_are_rejected():
    record = _record("v1", "m", {"style": ("yes", "")})
    labels = _labels("v1", "m", {"style": (1, None)})
    with pytest.raises(InvalidRecord):
        compute_alignment([record, record], [labels])
    with pytest.raises(InvalidRecord):
        compute_alignment([record], [labels, labels])


def test_model_mismatch_is_rejected():
    records = [_record("v1", "model-a", {"style": ("yes", "")})]
    with pytest.raises(InvalidRecord, match="v1"):
        compute_alignment(records, [_labels("v1", "model-b", {"style": (1, None)})])


def test_alignment_coverage():
    records, annotations = _report_inputs()
    report = compute_alignment(records, annotations)
    assert report.overall.ratio == pytest.approx(0.875)
    assert report.per_model["model-a"].ratio == pytest.approx(0.75)
    assert report.per_dimension[DimensionId.STYLE].ratio == pytest.approx(0.75)
    assert [(r.video_id, r.dimension) for r in report.unmatched_human] == [("v2", DimensionId.LIGHTING)]
    assert report.unmatched_agent == ()


# --- scoreboards ---

def test_scoreboard_means_and_overall():
    records = [
        _record("v1", "m1", {"appearance": ("yes", ""), "style": ("no", "r")}),
        _record("v2", "m1", {"appearance": ("half", "r")}),
        _record("v3", "m2", {"appearance": ("yes", ""), "style": ("yes", "")}),
        EvaluationRecord(video_id="v4", model_id="m2", error="StructuringFailed: gave up"),
    ]
    board = compute_scoreboard(records)
    assert board.scores["m1"] == {DimensionId.APPEARANCE: 0.75, DimensionId.STYLE: 0.0}
    assert board.counts["m1"] == {DimensionId.APPEARANCE: 2, DimensionId.STYLE: 1}
    assert board.overall == {"m1": pytest.approx(0.375), "m2": 1.0}
    assert board.ranking() == ["m2", "m1"]
    assert board.ranking("style") == ["m2", "m1"]


def test_scoreboard_dimension_weights():
    records = [_record("v1", "m", {"appearance": ("yes", ""), "style": ("no", "r")})]
    board = compute_scoreboard(records, weights={DimensionId.APPEARANCE: 3.0})
    assert board.overall["m"] == pytest.approx(0.75)


def test_scoreboard_needs_records():
    with pytest.raises(EmptyInput):
        compute_scoreboard([])
    with pytest.raises(EmptyInput):
        compute_scoreboard([EvaluationRecord(video_id="v1", model_id="m", error="BackendUnavailable: down")])


def test_ranking_ties():
    entries = rank_models({"b": 0.5, "a": 0.5, "c": 0.9})
    assert [(e.model_id, e.rank, e.tied) for e in entries] == [("c", 1, False), ("a", 2, True), ("b", 3, True)]


def test_human_scoreboard():
    _, annotations = _report_inputs()
    board = compute_human_scoreboard(annotations)
    assert board.source == "human"
    assert board.overall["model-b"] == pytest.approx(0.5)
    assert board.scores["model-b"][DimensionId.LIGHTING] == 0.5


# --- rank agreement ---

@pytest.mark.parametrize("a, b, tau", [
    (["x", "y", "z"], ["x", "y", "z"], 1.0),
    (["x", "y", "z"], ["z", "y", "x"], -1.0),
    (["x", "y", "z"], ["x", "z", "y"], 1 / 3),
])
def test_rank_correlation(a, b, tau):
    assert rank_correlation(a, b) == pytest.approx(tau)


def test_rank_correlation_accepts_scores():
    assert rank_correlation({"x": 0.9, "y": 0.1}, ["x", "y"]) == pytest.approx(1.0)


def test_rank_correlation_errors():
    with pytest.raises(MismatchedSets):
        rank_correlation(["x", "y"], ["x", "z"])
    with pytest.raises(MismatchedSets):
        rank_correlation(["x", "x"], ["x", "y"])
    with pytest.raises(UndefinedCorrelation):
        rank_correlation(["x"], ["x"])
    with pytest.raises(UndefinedCorrelation):
        rank_correlation({"x": 1.0, "y": 1.0}, {"x": 0.5, "y": 0.1})


def test_compare_boards_marks_undefined_rankings():
    records, annotations = _report_inputs()
    result = compare_boards(compute_scoreboard(records), compute_human_scoreboard(annotations))
    assert result == {OVERALL: pytest.approx(1.0), "appearance": pytest.approx(1.0), "style": None}


# --- rendering ---

def _rendered(fmt: str) -> str:
    records, annotations = _report_inputs()
    alignment = compute_alignment(records, annotations)
    board = compute_scoreboard(records)
    correlations = compare_boards(board, compute_human_scoreboard(annotations))
    return render_report(alignment, board, fmt, correlations=correlations)


def test_markdown_report_matches_golden():
    assert _rendered("markdown") == (GOLDEN / "report.md").read_text(encoding="utf-8")


def test_json_report_reloads():
    records, annotations = _report_inputs()
    alignment = compute_alignment(records, annotations)
    board = compute_scoreboard(records)
    data = json.loads(render_report(alignment, board, "json"))
    assert parse_alignment_report(data["alignment"]) == alignment
    assert parse_scoreboard(data["scoreboard"]) == board
    assert data["rank_correlation"] is None


def test_csv_report():
    rows = list(csv.DictReader(io.StringIO(_rendered("csv"))))
    assert len(rows) == 4
    assert rows[1] == {
        "model_id": "model-a", "dimension": "style", "agent_score": "0.500", "agent_samples": "1",
        "alignment_ratio": "0.500", "alignment_samples": "1",
    }


def test_report_rejects_unknown_format():
    records, _ = _report_inputs()
    with pytest.raises(UnknownFormat):
        render_report(None, compute_scoreboard(records), "html")
    with pytest.raises(EmptyInput):
        render_report(None, None)


def test_report_is_deterministic():
    assert _rendered("markdown") == _rendered("markdown")
    assert _rendered("json") == _rendered("json")
