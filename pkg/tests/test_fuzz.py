import json
import random

import numpy as np
import pytest

from agent import parse_judgments
from errors import JudgeParseError, SchemaError, ToolError
from flowcore import FlowField
from schema import ALL_DIMENSIONS, validate_structured_prompt
from temporal_tools import O_CAP, PatchGridConfig, aggregate_patch_scores, patch_window_scores


def _degenerate_table(rng: np.random.Generator) -> np.ndarray:
    windows, patches = int(rng.integers(1, 5)), int(rng.integers(1, 12))
    kind = rng.integers(0, 5)
    if kind == 0:
        return np.zeros((windows, patches))
    if kind == 1:
        return np.full((windows, patches), rng.uniform(0, 1))
    if kind == 2:
        table = np.zeros((windows, patches))
        table[rng.integers(0, windows), rng.integers(0, patches)] = rng.uniform(0, 1e6)
        return table
    if kind == 3:
        return rng.uniform(0, 1e-9, size=(windows, patches))
    return rng.choice([0.0, 0.5, 1.0], size=(windows, patches))


def test_aggregate_stays_bounded():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        result = aggregate_patch_scores(_degenerate_table(rng))
        assert 0.0 <= result.o <= O_CAP
        assert 0 <= result.m < len(result.s)


def test_patch_scores_stay_in_range():
    rng = np.random.default_rng(1)
    for _ in range(60):
        height, width = int(rng.integers(16, 41)), int(rng.integers(16, 41))
        cfg = PatchGridConfig(
            patch_size=int(rng.choice([8, 16])),
            window_len=int(rng.integers(2, 5)),
            window_stride=1,
            alpha=float(rng.uniform(0, 1)),
            beta=float(rng.uniform(0.1, 1)),
        )
        n = cfg.window_len + int(rng.integers(0, 4))
        flows = [FlowField(rng.normal(scale=rng.uniform(0, 3), size=(height, width, 2))) for _ in range(n)]
        table = patch_window_scores(flows, cfg)
        assert np.all(table >= 0.0)
        assert np.all(table <= cfg.alpha + cfg.beta + 1e-12)


def test_single_patch_grid_scores_zero():
    rng = np.random.default_rng(2)
    flows = [FlowField(rng.normal(size=(32, 32, 2))) for _ in range(8)]
    result = aggregate_patch_scores(patch_window_scores(flows, PatchGridConfig(window_len=4, window_stride=2)))
    assert result.s.shape == (1,)
    assert result.o == 0.0


def test_undersized_inputs_raise_tool_errors():
    rng = np.random.default_rng(3)
    for _ in range(50):
        side = int(rng.integers(1, 40))
        count = int(rng.integers(0, 10))
        flows = [FlowField(np.zeros((side, side, 2))) for _ in range(count)]
        try:
            table = patch_window_scores(flows, PatchGridConfig(patch_size=16))
        except ToolError:
            continue
        assert table.shape[1] >= 1


def _mutated_judgments(rng: random.Random) -> str:
    dims = [d.value for d in ALL_DIMENSIONS]
    items = []
    for _ in range(rng.randint(0, 4)):
        item = {
            "dimension": rng.choice(dims + ["mood", "", " style ", 3, None]),
            "answer": rng.choice(["yes", "no", "half", "YES", "maybe", 1, None, ""]),
            "reason": rng.choice(["", "because", None, 5, ["x"], "  "]),
        }
        for key in list(item):
            if rng.random() < 0.1:
                del item[key]
        items.append(item if rng.random() > 0.05 else rng.choice([1, "text", None, []]))
    text = json.dumps(items if rng.random() > 0.05 else {"items": items})
    if rng.random() < 0.1:
        text = text[: rng.randint(0, len(text))]
    if rng.random() < 0.1:
        text = f"```json\n{text}\n```"
    return text


def test_judger_output_fuzz_raises_only_parse_errors():
    rng = random.Random(4)
    expected = [ALL_DIMENSIONS[0], ALL_DIMENSIONS[8]]
    for _ in range(500):
        try:
            judgments = parse_judgments(_mutated_judgments(rng), expected)
        except JudgeParseError:
            continue
        assert [j.dimension for j in judgments] == expected


@pytest.mark.parametrize("seed", range(5))
def test_structurer_output_fuzz_raises_only_schema_errors(seed):
    rng = random.Random(seed)
    dims = [d.value for d in ALL_DIMENSIONS]
    for _ in range(100):
        doc = {
            rng.choice(dims + ["mood", "Style", "subject_pose"]): rng.choice(["text", "", None, 3, [], "  ok "])
            for _ in range(rng.randint(0, 4))
        }
        text = json.dumps(doc)
        if rng.random() < 0.1:
            text = text[: rng.randint(0, len(text))]
        try:
            prompt = validate_structured_prompt(text, raw_prompt="raw")
        except SchemaError:
            continue
        assert prompt.active_dimensions()
