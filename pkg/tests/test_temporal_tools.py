import numpy as np
import pytest

from errors import (
    BackendFailure, DimensionMismatch, EmptyGrid, EmptyInput, EmptyTable, LengthMismatch, NonFiniteInput, TooFewFrames,
)
from flowcore import FlowField, Frame, HomographyParams
from temporal_tools import (
    DEFAULT_TEMPORAL_BANDS, DYNAMIC_DEGREE, MEAN_FRAME_DIFFERENCE, SUBJECT_CONSISTENCY, TEMPORAL_ANOMALY,
    PatchGridConfig, ToolSuite, aggregate_patch_scores, compensate_camera, detect_shot_boundaries,
    direction_consistency_field, direction_variance_field, dynamic_degree, magnitude_diff_field,
    EventSegment, PatchScoreTable, SegmentScore, TemporalAnalysis, anomaly_report, mean_frame_difference,
    min_max_normalize, patch_grid, patch_window_scores, score_segment, segment_flows, subject_consistency,
    temporal_anomaly_score, window_starts,
)
from temporal_tools import _axis_spans


def _uniform(dx: float, dy: float, h: int = 8, w: int = 8) -> FlowField:
    return FlowField(np.broadcast_to(np.array([dx, dy], dtype=np.float64), (h, w, 2)).copy())


# --- primitives ---

@pytest.mark.parametrize("values, expected", [
    ([2, 4, 6], [0, 0.5, 1]),
    ([5, 5, 5], [0, 0, 0]),
    ([-1, 1], [0, 1]),
])
def test_min_max_normalize(values, expected):
    assert min_max_normalize(values) == pytest.approx(expected)


def test_min_max_normalize_errors():
    with pytest.raises(EmptyInput):
        min_max_normalize([])
    with pytest.raises(NonFiniteInput):
        min_max_normalize([1.0, np.nan])


def test_magnitude_diff_is_absolute():
    assert np.all(magnitude_diff_field(_uniform(1, 0), _uniform(1, 0)) == 0)
    assert np.allclose(magnitude_diff_field(_uniform(1, 0), _uniform(0, 3)), 2.0)
    assert np.allclose(magnitude_diff_field(_uniform(3, 0), _uniform(0, -1)), 2.0)
    with pytest.raises(DimensionMismatch):
        magnitude_diff_field(_uniform(1, 0), _uniform(1, 0, h=4))


def test_direction_consistency():
    assert np.allclose(direction_consistency_field(_uniform(1, 2), _uniform(1, 2)), 1.0)
    assert np.allclose(direction_consistency_field(_uniform(1, 2), _uniform(-1, -2)), -1.0)
    assert np.all(direction_consistency_field(_uniform(0.01, 0), _uniform(0, 0.02)) == 1.0)
    assert np.allclose(direction_consistency_field(_uniform(1, 0), _uniform(0, 5)), 0.0)


def test_direction_variance():
    assert np.all(direction_variance_field([_uniform(1, 1)] * 4) == 0)
    # constant turn rate: every consistency value is cos(0.3) up to rounding
    turning = [_uniform(np.cos(0.3 * t), np.sin(0.3 * t)) for t in range(6)]
    assert np.all(direction_variance_field(turning) == 0)
    # consistency series [1, -1]
    assert np.allclose(direction_variance_field([_uniform(1, 0), _uniform(1, 0), _uniform(-1, 0)]), 1.0)
    # consistency series [1, 1, 0]
    series = [_uniform(1, 0), _uniform(1, 0), _uniform(1, 0), _uniform(0, 1)]
    assert np.allclose(direction_variance_field(series), 2 / 9)
    with pytest.raises(TooFewFrames):
        direction_variance_field([_uniform(1, 0)] * 2)


def test_axis_spans_merge_small_remainders():
    assert _axis_spans(96, 32) == [(0, 32), (32, 64), (64, 96)]
    assert _axis_spans(100, 32) == [(0, 32), (32, 64), (64, 100)]
    assert _axis_spans(80, 32) == [(0, 32), (32, 64), (64, 80)]
    assert _axis_spans(32, 32) == [(0, 32)]
    with pytest.raises(EmptyGrid):
        _axis_spans(20, 32)


def test_patch_grid_is_row_major():
    grid = patch_grid(64, 96, 32)
    assert len(grid) == 6
    assert grid[0] == (0, 32, 0, 32)
    assert grid[1] == (0, 32, 32, 64)
    assert grid[3] == (32, 64, 0, 32)


def test_window_starts_cover_the_tail():
    assert window_starts(10, 4, 3) == [0, 3, 6]
    assert window_starts(11, 4, 3) == [0, 3, 6, 7]
    assert window_starts(8, 8, 4) == [0]
    with pytest.raises(TooFewFrames):
        window_starts(3, 4, 2)


# --- patch scores ---

def test_zero_flows_give_zero_table():
    table = patch_window_scores([FlowField.zeros(64, 64)] * 10, PatchGridConfig(window_len=4, window_stride=2))
    assert table.shape == (4, 4)
    assert np.all(table == 0)


def test_single_cell_carrying_all_variation():
    cfg = PatchGridConfig(patch_size=32, window_len=3, window_stride=3)
    flows = []
    for value in [(1, 0), (2, 0), (-1, 0), (0, 0), (0, 0), (0, 0)]:
        vectors = np.zeros((64, 64, 2))
        vectors[:32, :32] = value
        flows.append(FlowField(vectors))
    table = patch_window_scores(flows, cfg)
    expected = np.zeros((2, 4))
    expected[0, 0] = cfg.alpha + cfg.beta
    assert table == pytest.approx(expected)


def test_equal_windows_give_zero_table():
    flows = [_uniform(1, 0, 32, 32), _uniform(2, 0, 32, 32)] * 4
    cfg = PatchGridConfig(patch_size=16, window_len=3, window_stride=2)
    assert np.all(patch_window_scores(flows, cfg) == 0)


def test_patch_window_scores_needs_enough_flows():
    with pytest.raises(TooFewFrames):
        patch_window_scores([FlowField.zeros(32, 32)] * 3)
    with pytest.raises(EmptyGrid):
        patch_window_scores([FlowField.zeros(16, 16)] * 8)


@pytest.mark.parametrize("s, gamma, m, o", [
    ([1, 1, 1, 1], 1.0, 0, 0.0),
    ([0.1, 0.2, 0.3, 0.4], 0.2, 2, 0.75),
    ([0, 0, 0, 5], 0.0, 1, 10.0),
    ([0.7], 0.7, 0, 0.0),
])
def test_aggregate_patch_scores(s, gamma, m, o):
    table = aggregate_patch_scores([s])
    assert table.gamma == pytest.approx(gamma)
    assert table.m == m
    assert table.o == pytest.approx(o)


def test_aggregate_takes_max_over_windows():
    table = aggregate_patch_scores([[0.1, 0.9, 0.2], [0.5, 0.1, 0.2]])
    assert table.s == pytest.approx([0.5, 0.9, 0.2])
    assert table.argmax_patch() == 1
    with pytest.raises(EmptyTable):
        aggregate_patch_scores(np.empty((0, 0)))


def test_aggregate_ignores_patch_order_and_scale():
    rng = np.random.default_rng(5)
    for _ in range(50):
        table = rng.uniform(0.1, 1.0, size=(int(rng.integers(1, 5)), int(rng.integers(2, 16))))
        base = aggregate_patch_scores(table)
        shuffled = aggregate_patch_scores(table[:, rng.permutation(table.shape[1])])
        assert shuffled.o == pytest.approx(base.o, abs=1e-12)
        assert (shuffled.gamma, shuffled.m) == (base.gamma, base.m)
        for c in (0.01, 0.5, 3.0, 250.0):
            scaled = aggregate_patch_scores(c * table)
            assert scaled.o == pytest.approx(base.o, rel=1e-9, abs=1e-12)
            assert scaled.gamma == pytest.approx(c * base.gamma)
            assert scaled.m == base.m


def test_noise_floor_flattens_small_ranges():
    flows = [FlowField.zeros(64, 64)] * 5
    vectors = np.zeros((64, 64, 2))
    vectors[:32, :32, 0] = 0.04
    flows[2] = FlowField(vectors)
    # below flow_epsilon, so only the magnitude term moves
    cfg = PatchGridConfig(window_len=4, window_stride=1)
    assert patch_window_scores(flows, cfg).max() == pytest.approx(cfg.alpha)
    floored = PatchGridConfig(window_len=4, window_stride=1, noise_floor=0.05)
    assert np.all(patch_window_scores(flows, floored) == 0)


def _graded_flows(boost: float, cell: int = 5) -> list[FlowField]:
    """Rightward flows on a 3x3 patch grid; patch i pulses by 0.1 * (i + 1), ``cell`` gets ``boost`` more on pair 3."""
    flows = []
    for t in range(8):
        vectors = np.zeros((96, 96, 2))
        for i in range(9):
            y0, x0 = (i // 3) * 32, (i % 3) * 32
            vectors[y0:y0 + 32, x0:x0 + 32, 0] = 1.0 + 0.1 * (i + 1) * (t % 2)
        if t == 3:
            y0, x0 = (cell // 3) * 32, (cell % 3) * 32
            vectors[y0:y0 + 32, x0:x0 + 32, 0] += boost
        flows.append(FlowField(vectors))
    return flows


def test_more_flicker_energy_never_lowers_the_score():
    cfg = PatchGridConfig(patch_size=32, window_len=4, window_stride=2)
    scores = [
        aggregate_patch_scores(patch_window_scores(_graded_flows(boost), cfg)).o
        for boost in (0.0, 0.05, 0.1, 0.3, 1.0, 3.0)
    ]
    assert scores[0] == pytest.approx(0.625)
    assert all(later >= earlier - 1e-12 for earlier, later in zip(scores, scores[1:]))
    assert scores[-1] > scores[0]


def _naive_scores(flows, patch, window_len, stride, alpha, beta, epsilon):
    """Direct evaluation of f, s, gamma, M and o with explicit loops."""
    n = len(flows)
    h, w = flows[0].shape
    starts = list(range(0, n - window_len + 1, stride))
    if starts[-1] != n - window_len:
        starts.append(n - window_len)
    cells = [(y, x) for y in range(0, h, patch) for x in range(0, w, patch)]

    def cosine(a, b):
        ma, mb = np.hypot(*a), np.hypot(*b)
        if ma < epsilon or mb < epsilon:
            return 1.0
        return max(-1.0, min(1.0, float(a @ b) / (ma * mb)))

    u = np.zeros((len(starts), len(cells)))
    v = np.zeros((len(starts), len(cells)))
    for j, start in enumerate(starts):
        for i, (y0, x0) in enumerate(cells):
            u_sum = v_sum = 0.0
            for y in range(y0, y0 + patch):
                for x in range(x0, x0 + patch):
                    vecs = [flows[t].vectors[y, x] for t in range(start, start + window_len)]
                    mags = [np.hypot(*vec) for vec in vecs]
                    u_sum += sum(abs(mags[t + 1] - mags[t]) for t in range(window_len - 1)) / (window_len - 1)
                    series = [cosine(vecs[t], vecs[t + 1]) for t in range(window_len - 1)]
                    mean = sum(series) / len(series)
                    v_sum += sum((c - mean) ** 2 for c in series) / len(series)
            u[j, i] = u_sum / patch ** 2
            v[j, i] = v_sum / patch ** 2

    def eta(values):
        lo, hi = values.min(), values.max()
        return np.zeros_like(values) if hi == lo else (values - lo) / (hi - lo)

    f = alpha * eta(u) + beta * eta(v)
    s = [max(f[j, i] for j in range(len(starts))) for i in range(len(cells))]
    gamma = sorted(s)[(len(s) - 1) // 2]
    above = [x for x in s if x > gamma]
    if not above:
        return f, s, gamma, 0, 0.0
    g = max(gamma, 1e-6)
    return f, s, gamma, len(above), min(sum((x - g) / g for x in above) / len(above), 10.0)


@pytest.mark.parametrize("seed", range(20))
def test_pipeline_matches_naive_evaluation(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 12))
    window_len = int(rng.integers(2, min(n, 5) + 1))
    stride = int(rng.integers(1, window_len + 1))
    flows = [FlowField(rng.normal(scale=1.5, size=(16, 24, 2))) for _ in range(n)]
    # a few exactly static pixels exercise the epsilon rule
    flows[0] = FlowField(np.where(rng.random((16, 24, 1)) < 0.1, 0.0, flows[0].vectors))
    cfg = PatchGridConfig(patch_size=8, window_len=window_len, window_stride=stride, noise_floor=0.0)

    f_table = patch_window_scores(flows, cfg)
    result = aggregate_patch_scores(f_table)
    f, s, gamma, m, o = _naive_scores(flows, 8, window_len, stride, cfg.alpha, cfg.beta, cfg.flow_epsilon)
    assert np.abs(f_table - f).max() < 1e-9
    assert np.abs(result.s - np.array(s)).max() < 1e-9
    assert abs(result.gamma - gamma) < 1e-9
    assert result.m == m
    assert abs(result.o - o) < 1e-9


# --- shot splitting ---

RED, BLUE = (255, 0, 0), (0, 0, 255)


def test_identical_frames_are_one_segment(solid_frames):
    segments = detect_shot_boundaries(solid_frames([RED] * 40))
    assert [(s.start, s.end) for s in segments] == [(0, 40)]


def test_hard_cut_splits_segments(solid_frames):
    segments = detect_shot_boundaries(solid_frames([RED] * 20 + [BLUE] * 20))
    assert [(s.start, s.end) for s in segments] == [(0, 20), (20, 40)]


def test_brightness_ramp_is_not_a_cut(solid_frames):
    ramp = [round(255 * (0.5 + 0.01 * t)) for t in range(40)]
    colors = [(v, 0, 0) for v in ramp[:20]] + [(0, 0, v) for v in ramp[20:]]
    segments = detect_shot_boundaries(solid_frames(colors))
    assert [(s.start, s.end) for s in segments] == [(0, 20), (20, 40)]


def test_random_cut_positions(solid_frames):
    rng = np.random.default_rng(7)
    for _ in range(50):
        n = int(rng.integers(10, 101))
        cut = int(rng.integers(2, n - 1))
        segments = detect_shot_boundaries(solid_frames([RED] * cut + [BLUE] * (n - cut)))
        assert [(s.start, s.end) for s in segments] == [(0, cut), (cut, n)]


def test_single_frame_segments_are_merged(solid_frames):
    segments = detect_shot_boundaries(solid_frames([RED] * 5 + [BLUE] + [RED] * 5))
    assert [(s.start, s.end) for s in segments] == [(0, 6), (6, 11)]
    with pytest.raises(TooFewFrames):
        detect_shot_boundaries(solid_frames([RED]))


# --- camera compensation ---

def _zoom_flow(ratio: float, size: int = 128) -> FlowField:
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    c = (size - 1) / 2
    return FlowField(np.stack([(ratio - 1) * (xs - c), (ratio - 1) * (ys - c)], axis=-1))


def test_compensation_removes_zoom(static_video):
    frames = static_video(n=9, size=128, seed=2)
    flows = [_zoom_flow(r) for r in (1.02, 1.0, 1.03, 1.0, 1.01, 1.03, 1.0, 1.02)]
    cfg = PatchGridConfig(window_len=4, window_stride=2)
    params = HomographyParams(min_corners=20)

    raw = score_segment(frames, flows, cfg, compensate=False)
    compensated = score_segment(frames, flows, cfg, compensate=True, homography_params=params)
    assert raw.table.o > 0
    assert compensated.flagged == []
    assert compensated.table.o <= 0.1 * raw.table.o


def test_compensated_pan_scores_below_pan_with_flicker(static_video):
    frames = static_video(n=9, size=128, seed=4)
    pan = [_uniform(2, 0, 128, 128) for _ in range(8)]
    rng = np.random.default_rng(0)
    flicker = []
    for t, flow in enumerate(pan):
        vectors = flow.vectors.copy()
        if t in (3, 4):
            vectors[32:64, 64:96] += rng.normal(scale=3.0, size=(32, 32, 2))
        flicker.append(FlowField(vectors))
    cfg = PatchGridConfig(window_len=4, window_stride=2)
    params = HomographyParams(min_corners=20)

    pan_only = score_segment(frames, pan, cfg, homography_params=params)
    with_flicker = score_segment(frames, flicker, cfg, homography_params=params)
    assert pan_only.table.o < with_flicker.table.o
    assert with_flicker.table.argmax_patch() == 6


def test_estimated_pan_leaves_small_residual(pan_video):
    frames = pan_video(n=4, dx=2, size=128)
    flows = segment_flows(frames)
    result = compensate_camera(flows, frames, HomographyParams(min_corners=20))
    assert result.flagged == []
    for residual in result.flows:
        interior = residual.magnitude()[13:-13, 13:-13]
        assert interior.mean() < 0.3


def _with_flicker(frames: list[Frame], other: np.ndarray, y0: int, x0: int, at=(4, 5), patch: int = 32):
    out = []
    for frame in frames:
        rgb = frame.rgb.copy()
        if frame.index in at:
            rgb[y0:y0 + patch, x0:x0 + patch] = other[y0:y0 + patch, x0:x0 + patch]
        out.append(Frame(rgb=rgb, index=frame.index, timestamp=frame.timestamp))
    return out


def test_estimated_pan_scores_below_pan_with_flicker(pan_video, textured):
    frames = pan_video(n=10, dx=2, size=128)
    flickering = _with_flicker(frames, textured(128, 128, seed=77), 32, 64)
    params = HomographyParams(min_corners=20)

    pan_only = temporal_anomaly_score(frames, 8.0, homography_params=params)
    with_flicker = temporal_anomaly_score(flickering, 8.0, homography_params=params)
    assert "uncompensated_pair:0" not in pan_only.flags
    assert pan_only.raw_score / with_flicker.raw_score < 1.0
    assert with_flicker.details["segments"][0]["argmax_patch"] == 6


def test_flat_frames_pass_through_flagged():
    frames = [Frame(rgb=np.full((32, 32, 3), 90, dtype=np.uint8), index=i) for i in range(4)]
    flows = [FlowField.zeros(32, 32)] * 3
    result = compensate_camera(flows, frames)
    assert result.flagged == [0, 1, 2]
    assert all(out is flow for out, flow in zip(result.flows, flows))
    with pytest.raises(LengthMismatch):
        compensate_camera(flows[:2], frames)


# --- tools ---

def test_static_video_scores_zero(static_video):
    frames = static_video(n=32, size=64)
    report = temporal_anomaly_score(frames, fps=8.0)
    assert report.tool_name == TEMPORAL_ANOMALY
    assert report.raw_score == 0.0
    assert report.band == "excellent temporal stability"

    suite = ToolSuite()
    reports, errors = suite.run(frames, 8.0)
    assert errors == []
    by_name = {r.tool_name: r for r in reports}
    assert by_name[DYNAMIC_DEGREE].raw_score == 0.0
    assert by_name[SUBJECT_CONSISTENCY].raw_score == pytest.approx(1.0)
    assert MEAN_FRAME_DIFFERENCE not in by_name


@pytest.mark.parametrize("cell", range(9))
def test_flicker_is_localized(flicker_video, static_video, cell):
    cfg = PatchGridConfig(patch_size=32, window_len=4, window_stride=2)
    clean = temporal_anomaly_score(static_video(n=12, size=96), 8.0, cfg, compensate=False)
    frames = flicker_video(n=12, size=96, patch=32, cell=cell)
    report = temporal_anomaly_score(frames, 8.0, cfg, compensate=False)
    assert report.raw_score > clean.raw_score
    assert report.details["segments"][0]["argmax_patch"] == cell
    assert "camera_compensation_off" in report.flags


def test_random_flicker_placements_are_localized(flicker_video):
    rng = np.random.default_rng(13)
    for _ in range(50):
        cell = int(rng.integers(0, 9))
        start = int(rng.integers(1, 10))
        seed = int(rng.integers(0, 500))
        frames = flicker_video(n=12, size=96, cell=cell, flicker_frames=(start, start + 1), seed=seed)
        report = temporal_anomaly_score(frames, 8.0)
        assert report.raw_score > 0.0
        assert report.details["segments"][0]["argmax_patch"] == cell, (cell, start)


def _tinted(frames: list[Frame], channel: int, offset: int = 0) -> list[Frame]:
    out = []
    for i, frame in enumerate(frames):
        rgb = np.zeros_like(frame.rgb)
        rgb[..., channel] = frame.rgb[..., channel]
        out.append(Frame(rgb=rgb, index=offset + i, timestamp=(offset + i) / 8.0))
    return out


def test_segments_score_as_if_alone(flicker_video):
    cfg = PatchGridConfig(window_len=4, window_stride=2)
    red = _tinted(flicker_video(n=10, cell=4, flicker_frames=(3, 4), seed=1), channel=0)
    blue = _tinted(flicker_video(n=12, cell=2, flicker_frames=(6, 7), seed=2), channel=2)
    joined = red + _tinted(blue, channel=2, offset=len(red))

    together = temporal_anomaly_score(joined, 8.0, cfg, compensate=False).details["segments"]
    assert [(s["start"], s["end"]) for s in together] == [(0, 10), (10, 22)]
    for part, clip in zip(together, (red, blue)):
        alone = temporal_anomaly_score(clip, 8.0, cfg, compensate=False).details["segments"]
        assert len(alone) == 1
        assert part["o"] == pytest.approx(alone[0]["o"], abs=1e-9)
        assert part["argmax_patch"] == alone[0]["argmax_patch"]


def test_short_video_is_rejected(static_video):
    with pytest.raises(TooFewFrames):
        temporal_anomaly_score(static_video(n=8), 8.0)


def test_short_segments_are_flagged(textured):
    a, b = textured(64, 64, seed=1), textured(64, 64, seed=2)
    blue = b.copy()
    blue[..., 0] = 0
    blue[..., 1] = 0
    red = a.copy()
    red[..., 1] = 0
    red[..., 2] = 0
    frames = [Frame(rgb=rgb, index=i) for i, rgb in enumerate([red] * 10 + [blue] * 5)]
    report = temporal_anomaly_score(frames, 8.0, PatchGridConfig(window_len=4, window_stride=2), compensate=False)
    assert not any(flag.startswith("short_segment") for flag in report.flags)
    assert len(report.details["segments"]) == 2
    report = temporal_anomaly_score(frames, 8.0, PatchGridConfig(window_len=8, window_stride=4), compensate=False)
    assert "short_segment:10-15" in report.flags
    assert [(s["start"], s["end"]) for s in report.details["segments"]] == [(0, 10)]


def _scored(start: int, end: int, o: float) -> SegmentScore:
    table = PatchScoreTable(f_table=np.zeros((1, 2)), s=np.array([0.0, 1.0]), gamma=0.0, o=o, m=1)
    return SegmentScore(segment=EventSegment(start, end), table=table)


def test_segment_aggregation_modes():
    analysis = TemporalAnalysis(
        segments=[EventSegment(0, 10), EventSegment(10, 40)],
        scores=[_scored(0, 10, 0.2), _scored(10, 40, 1.0)],
        skipped=[],
        raw_flows=[],
    )
    assert anomaly_report(analysis, 8.0, segment_agg="mean").raw_score == pytest.approx(0.8)
    assert anomaly_report(analysis, 8.0, segment_agg="max").raw_score == pytest.approx(1.0)
    empty = TemporalAnalysis(segments=[EventSegment(0, 3)], scores=[], skipped=[EventSegment(0, 3)], raw_flows=[])
    with pytest.raises(TooFewFrames):
        anomaly_report(empty, 8.0)


def test_dynamic_degree():
    assert dynamic_degree([FlowField.zeros(8, 8)] * 3).raw_score == 0.0
    report = dynamic_degree([_uniform(0, 2)] * 3)
    assert report.raw_score == pytest.approx(2.0)
    assert report.band == "strong motion"
    with pytest.raises(EmptyInput):
        dynamic_degree([])


def test_subject_consistency_drops_for_new_content(static_video):
    same = static_video(n=4, size=32)
    assert subject_consistency(same).raw_score == pytest.approx(1.0)
    changed = same[:2] + [Frame(rgb=np.full((32, 32, 3), (200, 30, 30), dtype=np.uint8), index=i) for i in (2, 3)]
    assert subject_consistency(changed).raw_score < 1.0
    with pytest.raises(TooFewFrames):
        subject_consistency(same[:1])


class _StubEmbedding:
    name = "stub"

    def __init__(self, vectors):
        self.vectors = vectors

    def embed(self, frame: Frame) -> np.ndarray:
        return np.asarray(self.vectors[frame.index], dtype=np.float64)


def _blank(n: int) -> list[Frame]:
    return [Frame(rgb=np.zeros((16, 16, 3), dtype=np.uint8), index=i) for i in range(n)]


@pytest.mark.parametrize("vectors", [
    # e1 orthogonal to e2, e2 = e3
    [(1, 0), (0, 1), (0, 1)],
    # alternating orthogonal embeddings
    [(1, 0), (0, 1), (1, 0), (0, 1), (1, 0)],
])
def test_subject_consistency_with_stub_embeddings(vectors):
    report = subject_consistency(_blank(len(vectors)), _StubEmbedding(vectors))
    assert report.raw_score == pytest.approx(0.25)
    assert report.details["backend"] == "stub"


def test_subject_consistency_backend_failures():
    with pytest.raises(BackendFailure):
        subject_consistency(_blank(2), _StubEmbedding([(0, 0), (1, 0)]))


def test_mean_frame_difference():
    frames = [Frame(rgb=np.full((8, 8, 3), v, dtype=np.uint8), index=i) for i, v in enumerate([0, 51, 0])]
    report = mean_frame_difference(frames)
    assert report.raw_score == pytest.approx(0.2)
    assert report.band == "abrupt change"


def test_tool_suite_reports_failures_per_tool(static_video):
    suite = ToolSuite(extra_tools=(MEAN_FRAME_DIFFERENCE,))
    reports, errors = suite.run(static_video(n=5, size=64), 8.0)
    assert [r.tool_name for r in reports] == [DYNAMIC_DEGREE, SUBJECT_CONSISTENCY, MEAN_FRAME_DIFFERENCE]
    assert len(errors) == 1 and errors[0].startswith(f"{TEMPORAL_ANOMALY}:")


def test_report_band_table_is_carried(static_video):
    report = temporal_anomaly_score(static_video(n=10, size=64), 8.0)
    assert report.band_table == DEFAULT_TEMPORAL_BANDS
    assert report.details["segment_agg"] == "mean"
