"""Temporal patch tools: anomaly score, dynamic degree and subject consistency.

Each tool emits a banded ``ToolReport`` for the judger.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal, Protocol, Sequence

import numpy as np
from PIL import Image
from pydantic import BaseModel, ConfigDict, Field, model_validator

from errors import (
    BackendFailure, DegenerateConfiguration, DimensionMismatch, EmptyGrid, EmptyInput, EmptyTable, FlowError,
    InsufficientCorners, LengthMismatch, NonFiniteInput, PointAtInfinity, ToolError, TooFewFrames,
)
from flowcore import (
    ClassicalFlowBackend, FlowBackend, FlowField, Frame, HomographyParams, estimate_homography,
    homography_induced_flow, subtract_global_motion,
)
from schema import BandTable, ToolReport

logger = logging.getLogger(__name__)

DEFAULT_THETA = 0.30
FLOW_EPSILON = 0.05
GAMMA_FLOOR = 1e-6
O_CAP = 10.0
_VARIANCE_EPSILON = 1e-12

TEMPORAL_ANOMALY = "temporal_anomaly"
DYNAMIC_DEGREE = "dynamic_degree"
SUBJECT_CONSISTENCY = "subject_consistency"
MEAN_FRAME_DIFFERENCE = "mean_frame_difference"

TOOL_DESCRIPTIONS: dict[str, str] = {
    TEMPORAL_ANOMALY: (
        "Measures local temporal anomalies (flicker, collapse, sudden jumps) over all frames. "
        "Each spatial patch gets its largest motion irregularity over sliding windows, after shot "
        "splitting and camera-motion removal; the score is the mean relative excess of patches above "
        "the median patch. 0 means no patch stands out; higher is worse."
    ),
    DYNAMIC_DEGREE: (
        "Mean optical-flow magnitude in pixels per frame over all frames, camera motion included. "
        "Indicates how much the video moves, not whether the motion is correct."
    ),
    SUBJECT_CONSISTENCY: (
        "Mean similarity of every frame to the first frame and to its predecessor, in [-1, 1]. "
        "Values near 1 mean the subject keeps its identity and appearance over time."
    ),
    MEAN_FRAME_DIFFERENCE: (
        "Mean absolute pixel change between consecutive frames, in [0, 1]. A plain reference that "
        "does not separate camera motion from artifacts."
    ),
}

DEFAULT_TEMPORAL_BANDS = BandTable.ascending([
    (0.05, "excellent temporal stability", "no region deviates noticeably from the typical motion variation"),
    (0.3, "minor local flicker", "a few regions show mild, short-lived motion irregularities"),
    (1.0, "noticeable flicker or local collapse", "some regions change erratically relative to the rest of the frame"),
    (math.inf, "severe temporal artifacts", "regions flicker, collapse or jump strongly over time"),
])

DEFAULT_DYNAMIC_BANDS = BandTable.ascending([
    (0.2, "near static", "almost no visible motion"),
    (1.5, "moderate motion", "clear but calm motion of the subject or camera"),
    (6.0, "strong motion", "fast subject or camera movement"),
    (math.inf, "extreme motion", "very fast or chaotic movement"),
])

DEFAULT_SUBJECT_BANDS = BandTable.descending([
    (0.95, "highly consistent subject", "the subject keeps its identity and appearance throughout"),
    (0.85, "mostly consistent subject", "small appearance drift over time"),
    (0.70, "noticeable subject drift", "the subject's appearance changes visibly"),
    (-math.inf, "unstable subject identity", "the subject changes identity or falls apart"),
])

DEFAULT_FRAME_DIFF_BANDS = BandTable.ascending([
    (0.01, "nearly static frames", "consecutive frames are almost identical"),
    (0.05, "gradual change", "smooth, small changes between frames"),
    (0.15, "substantial change", "large changes between consecutive frames"),
    (math.inf, "abrupt change", "consecutive frames differ drastically"),
])


class PatchGridConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    patch_size: int = Field(default=32, ge=8)
    window_len: int = Field(default=8, ge=2)
    window_stride: int = Field(default=4, ge=1)
    alpha: float = Field(default=0.5, ge=0)
    beta: float = Field(default=0.5, ge=0)
    # vectors shorter than this count as static when comparing directions
    flow_epsilon: float = Field(default=FLOW_EPSILON, ge=0)
    # cell ranges at or below this normalize to zero
    noise_floor: float = Field(default=0.0, ge=0)

    @model_validator(mode="after")
    def _check(self) -> "PatchGridConfig":
        if self.window_stride > self.window_len:
            raise ValueError("window_stride must not exceed window_len")
        if self.alpha + self.beta <= 0:
            raise ValueError("alpha + beta must be positive")
        return self


@dataclass(frozen=True)
class EventSegment:
    start: int
    end: int

    def __post_init__(self):
        if self.end <= self.start:
            raise ValueError(f"empty segment [{self.start}, {self.end})")

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass(frozen=True, eq=False)
class PatchScoreTable:
    f_table: np.ndarray
    s: np.ndarray
    gamma: float
    o: float
    m: int
    patches: tuple[tuple[int, int, int, int], ...] = ()

    def argmax_patch(self) -> int:
        return int(np.argmax(self.s))


# --- normalization and per-pixel fields ---

def min_max_normalize(values: Sequence[float] | np.ndarray, min_range: float = 0.0) -> np.ndarray:
    """(x - min) / (max - min); all zeros when the range is at most ``min_range``."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise EmptyInput("cannot normalize an empty sequence")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput("cannot normalize non-finite values")
    lo, hi = arr.min(), arr.max()
    if hi - lo <= min_range:
        return np.zeros_like(arr)
    return (arr - lo) / (hi - lo)


def _check_pair(f_t: FlowField, f_t1: FlowField) -> None:
    if f_t.shape != f_t1.shape:
        raise DimensionMismatch(f"flow {f_t.width}x{f_t.height} vs {f_t1.width}x{f_t1.height}")


def magnitude_diff_field(f_t: FlowField, f_t1: FlowField) -> np.ndarray:
    _check_pair(f_t, f_t1)
    return np.abs(f_t1.magnitude() - f_t.magnitude())


def direction_consistency_field(f_t: FlowField, f_t1: FlowField, epsilon: float = FLOW_EPSILON) -> np.ndarray:
    """Per-pixel cosine similarity; 1 where either vector is shorter than ``epsilon``."""
    _check_pair(f_t, f_t1)
    m0, m1 = f_t.magnitude(), f_t1.magnitude()
    dot = (f_t.vectors * f_t1.vectors).sum(axis=-1)
    static = (m0 < epsilon) | (m1 < epsilon)
    cos = np.where(static, 1.0, dot / np.where(static, 1.0, m0 * m1))
    return np.clip(cos, -1.0, 1.0)


def direction_variance_field(flows: Sequence[FlowField], epsilon: float = FLOW_EPSILON) -> np.ndarray:
    """Per-pixel population variance of the direction-consistency series."""
    if len(flows) < 3:
        raise TooFewFrames("direction variance needs at least 3 flow fields")
    series = np.stack([direction_consistency_field(a, b, epsilon) for a, b in zip(flows[:-1], flows[1:])])
    variance = series.var(axis=0)
    # rounding leaves ~1e-32 on constant series
    return np.where(variance < _VARIANCE_EPSILON, 0.0, variance)


# --- patch grid ---

def _axis_spans(length: int, patch: int) -> list[tuple[int, int]]:
    if length < patch:
        raise EmptyGrid(f"frame side {length} is smaller than one {patch}px patch")
    full, rest = divmod(length, patch)
    edges = [i * patch for i in range(full + 1)]
    if rest:
        # a partial patch stands alone from half a patch up, otherwise joins its neighbor
        if 2 * rest >= patch:
            edges.append(length)
        else:
            edges[-1] = length
    return list(zip(edges[:-1], edges[1:]))


def patch_grid(height: int, width: int, patch_size: int) -> tuple[tuple[int, int, int, int], ...]:
    """Row-major patches as (y0, y1, x0, x1)."""
    return tuple(
        (y0, y1, x0, x1)
        for y0, y1 in _axis_spans(height, patch_size)
        for x0, x1 in _axis_spans(width, patch_size)
    )


def window_starts(n_flows: int, window_len: int, stride: int) -> list[int]:
    """Window start offsets; a last window is aligned to the end when the stride misses it."""
    if n_flows < window_len:
        raise TooFewFrames(f"{n_flows} flow fields cannot fill a window of {window_len}")
    starts = list(range(0, n_flows - window_len + 1, stride))
    if starts[-1] != n_flows - window_len:
        starts.append(n_flows - window_len)
    return starts


def _patch_means(values: np.ndarray, patches) -> np.ndarray:
    return np.array([values[y0:y1, x0:x1].mean() for y0, y1, x0, x1 in patches])


def patch_window_scores(flows: Sequence[FlowField], cfg: PatchGridConfig | None = None) -> np.ndarray:
    """W x N table of ``alpha * eta(u) + beta * eta(v)`` for every window and patch."""
    cfg = cfg or PatchGridConfig()
    if len(flows) < max(cfg.window_len, 2):
        raise TooFewFrames(f"need at least {cfg.window_len} flow fields, got {len(flows)}")
    shape = flows[0].shape
    for flow in flows[1:]:
        if flow.shape != shape:
            raise DimensionMismatch("flow fields of one segment must share dimensions")
    patches = patch_grid(shape[0], shape[1], cfg.patch_size)
    starts = window_starts(len(flows), cfg.window_len, cfg.window_stride)

    mags = [flow.magnitude() for flow in flows]
    u_pairs = [np.abs(b - a) for a, b in zip(mags[:-1], mags[1:])]
    w_pairs = [direction_consistency_field(a, b, cfg.flow_epsilon) for a, b in zip(flows[:-1], flows[1:])]

    pairs_per_window = cfg.window_len - 1
    u_cells = np.empty((len(starts), len(patches)))
    v_cells = np.empty((len(starts), len(patches)))
    for j, start in enumerate(starts):
        span = slice(start, start + pairs_per_window)
        u_cells[j] = _patch_means(np.mean(u_pairs[span], axis=0), patches)
        v_cells[j] = _patch_means(np.var(w_pairs[span], axis=0), patches)

    u_norm = min_max_normalize(u_cells.ravel(), cfg.noise_floor).reshape(u_cells.shape)
    v_norm = min_max_normalize(v_cells.ravel(), cfg.noise_floor).reshape(v_cells.shape)
    return cfg.alpha * u_norm + cfg.beta * v_norm


def aggregate_patch_scores(f_table, patches: tuple = ()) -> PatchScoreTable:
    """Per-patch maxima, their lower median and the mean relative excess above it."""
    table = np.asarray(f_table, dtype=np.float64)
    if table.size == 0:
        raise EmptyTable("patch score table is empty")
    if table.ndim == 1:
        table = table[np.newaxis, :]
    s = table.max(axis=0)
    gamma = float(np.sort(s)[(len(s) - 1) // 2])
    above = s > gamma
    m = int(above.sum())
    if m == 0:
        o = 0.0
    else:
        g = max(gamma, GAMMA_FLOOR)
        # scores under the gamma floor contribute no excess
        o = min(float(np.mean(np.maximum(s[above] - g, 0.0) / g)), O_CAP)
    return PatchScoreTable(f_table=table, s=s, gamma=gamma, o=o, m=m, patches=tuple(patches))


# --- shot splitting ---

def _to_hsv(frame: Frame) -> np.ndarray:
    hsv = Image.fromarray(frame.rgb).convert("HSV")
    return np.asarray(hsv, dtype=np.float64) / 255.0


def hsv_difference(a: np.ndarray, b: np.ndarray) -> float:
    """Largest per-channel mean absolute HSV change; hue is circular, 180 degrees = 1."""
    dh = np.abs(a[..., 0] - b[..., 0])
    dh = 2.0 * np.minimum(dh, 1.0 - dh)
    ds = np.abs(a[..., 1] - b[..., 1])
    dv = np.abs(a[..., 2] - b[..., 2])
    return float(max(dh.mean(), ds.mean(), dv.mean()))


def frame_differences(frames: Sequence[Frame]) -> list[float]:
    hsv = [_to_hsv(frame) for frame in frames]
    return [hsv_difference(a, b) for a, b in zip(hsv[:-1], hsv[1:])]


def detect_shot_boundaries(frames: Sequence[Frame], theta: float = DEFAULT_THETA) -> list[EventSegment]:
    if len(frames) < 2:
        raise TooFewFrames("shot detection needs at least 2 frames")
    if theta <= 0:
        raise ValueError("theta must be positive")
    n = len(frames)
    cuts = [i for i, diff in enumerate(frame_differences(frames), start=1) if diff > theta]
    edges = [0, *cuts, n]

    merged: list[list[int]] = []
    carry: int | None = None
    for start, end in zip(edges[:-1], edges[1:]):
        if carry is not None:
            start, carry = carry, None
        if end - start < 2:
            if merged:
                merged[-1][1] = end
            else:
                carry = start
            continue
        merged.append([start, end])
    if carry is not None:
        merged.append([carry, n])
    return [EventSegment(start, end) for start, end in merged]


# --- camera compensation ---

@dataclass(frozen=True, eq=False)
class Compensation:
    flows: list[FlowField]
    flagged: list[int] = field(default_factory=list)


def compensate_camera(
    flows: Sequence[FlowField],
    frames: Sequence[Frame],
    params: HomographyParams | None = None,
) -> Compensation:
    """Remove homography-induced global motion from every pair's flow.

    Pairs whose homography cannot be estimated pass through unchanged; their
    first-frame indices are listed in ``flagged``.
    """
    if len(flows) != len(frames) - 1:
        raise LengthMismatch(f"{len(flows)} flow fields for {len(frames)} frames")
    out: list[FlowField] = []
    flagged: list[int] = []
    for t, flow in enumerate(flows):
        a, b = frames[t], frames[t + 1]
        try:
            h = estimate_homography(a, b, params, flow=flow)
            out.append(subtract_global_motion(flow, homography_induced_flow(h, a.width, a.height)))
        except (InsufficientCorners, DegenerateConfiguration, PointAtInfinity) as e:
            logger.debug("pair %d->%d left uncompensated: %s", a.index, b.index, e)
            out.append(flow)
            flagged.append(a.index)
    return Compensation(flows=out, flagged=flagged)


# --- temporal anomaly ---

@dataclass(frozen=True, eq=False)
class SegmentScore:
    segment: EventSegment
    table: PatchScoreTable
    flagged: list[int] = field(default_factory=list)


@dataclass(frozen=True, eq=False)
class TemporalAnalysis:
    segments: list[EventSegment]
    scores: list[SegmentScore]
    skipped: list[EventSegment]
    # uncompensated flows of every scored or skipped segment, for dynamic degree
    raw_flows: list[FlowField]


def segment_flows(frames: Sequence[Frame], backend: FlowBackend | None = None) -> list[FlowField]:
    backend = backend or ClassicalFlowBackend()
    return [backend.estimate(a, b) for a, b in zip(frames[:-1], frames[1:])]


def score_segment(
    frames: Sequence[Frame],
    flows: Sequence[FlowField],
    cfg: PatchGridConfig | None = None,
    *,
    compensate: bool = True,
    homography_params: HomographyParams | None = None,
    segment: EventSegment | None = None,
) -> SegmentScore:
    cfg = cfg or PatchGridConfig()
    flagged: list[int] = []
    if compensate:
        compensation = compensate_camera(flows, frames, homography_params)
        flows, flagged = compensation.flows, compensation.flagged
    f_table = patch_window_scores(flows, cfg)
    patches = patch_grid(flows[0].height, flows[0].width, cfg.patch_size)
    table = aggregate_patch_scores(f_table, patches)
    segment = segment or EventSegment(frames[0].index, frames[-1].index + 1)
    return SegmentScore(segment=segment, table=table, flagged=flagged)


def analyze_temporal(
    frames: Sequence[Frame],
    cfg: PatchGridConfig | None = None,
    theta: float = DEFAULT_THETA,
    *,
    flow_backend: FlowBackend | None = None,
    compensate: bool = True,
    homography_params: HomographyParams | None = None,
) -> TemporalAnalysis:
    """Split into events and score every event long enough to fill a window."""
    cfg = cfg or PatchGridConfig()
    segments = detect_shot_boundaries(frames, theta)
    scores: list[SegmentScore] = []
    skipped: list[EventSegment] = []
    raw_flows: list[FlowField] = []
    for segment in segments:
        clip = list(frames[segment.start:segment.end])
        flows = segment_flows(clip, flow_backend)
        raw_flows.extend(flows)
        if len(clip) < cfg.window_len + 1:
            skipped.append(segment)
            continue
        scores.append(score_segment(
            clip, flows, cfg, compensate=compensate, homography_params=homography_params, segment=segment,
        ))
    return TemporalAnalysis(segments=segments, scores=scores, skipped=skipped, raw_flows=raw_flows)


def band_label(raw: float, band_table: BandTable) -> str:
    return band_table.label_for(raw)


def make_report(tool_name: str, raw: float, bands: BandTable, flags=(), details=None) -> ToolReport:
    return ToolReport(
        tool_name=tool_name,
        raw_score=float(raw),
        band=band_label(raw, bands),
        band_table=bands,
        flags=tuple(flags),
        details=details or {},
    )


def _combine_segments(scores: list[SegmentScore], segment_agg: str) -> float:
    if segment_agg == "max":
        return max(score.table.o for score in scores)
    total = sum(score.segment.length for score in scores)
    return sum(score.table.o * score.segment.length for score in scores) / total


def anomaly_report(
    analysis: TemporalAnalysis,
    fps: float,
    *,
    segment_agg: Literal["mean", "max"] = "mean",
    compensate: bool = True,
    bands: BandTable = DEFAULT_TEMPORAL_BANDS,
) -> ToolReport:
    if not analysis.scores:
        raise TooFewFrames("no event segment is long enough to score")
    flags: list[str] = []
    if not compensate:
        flags.append("camera_compensation_off")
    flags += [f"short_segment:{seg.start}-{seg.end}" for seg in analysis.skipped]
    details_segments = []
    for score in analysis.scores:
        flags += [f"uncompensated_pair:{index}" for index in score.flagged]
        details_segments.append({
            "start": score.segment.start,
            "end": score.segment.end,
            "o": score.table.o,
            "gamma": score.table.gamma,
            "patches_above_median": score.table.m,
            "argmax_patch": score.table.argmax_patch(),
        })
    raw = _combine_segments(analysis.scores, segment_agg)
    details = {"fps": fps, "segment_agg": segment_agg, "segments": details_segments}
    return make_report(TEMPORAL_ANOMALY, raw, bands, flags, details)


def temporal_anomaly_score(
    frames: Sequence[Frame],
    fps: float,
    cfg: PatchGridConfig | None = None,
    theta: float = DEFAULT_THETA,
    *,
    segment_agg: Literal["mean", "max"] = "mean",
    compensate: bool = True,
    flow_backend: FlowBackend | None = None,
    homography_params: HomographyParams | None = None,
    bands: BandTable = DEFAULT_TEMPORAL_BANDS,
) -> ToolReport:
    cfg = cfg or PatchGridConfig()
    if len(frames) < cfg.window_len + 1:
        raise TooFewFrames(f"need at least {cfg.window_len + 1} frames, got {len(frames)}")
    analysis = analyze_temporal(
        frames, cfg, theta, flow_backend=flow_backend, compensate=compensate, homography_params=homography_params,
    )
    return anomaly_report(analysis, fps, segment_agg=segment_agg, compensate=compensate, bands=bands)


# --- other tools ---

def dynamic_degree(flows: Sequence[FlowField], bands: BandTable = DEFAULT_DYNAMIC_BANDS) -> ToolReport:
    """Mean flow magnitude over all pixels and pairs, camera motion included."""
    if not flows:
        raise EmptyInput("dynamic degree needs at least one flow field")
    raw = float(np.mean([flow.magnitude().mean() for flow in flows]))
    return make_report(DYNAMIC_DEGREE, raw, bands, details={"pairs": len(flows)})


class EmbeddingBackend(Protocol):
    name: str

    def embed(self, frame: Frame) -> np.ndarray: ...


@dataclass(frozen=True)
class HistogramEmbedding:
    """Concatenated per-channel color histograms, L2-normalized."""
    bins: int = 48
    name: str = "color-histogram"

    def embed(self, frame: Frame) -> np.ndarray:
        hist = np.concatenate([
            np.histogram(frame.rgb[..., c], bins=self.bins, range=(0, 256))[0] for c in range(3)
        ]).astype(np.float64)
        return hist / np.linalg.norm(hist)


def _unit(vector) -> np.ndarray:
    v = np.asarray(vector, dtype=np.float64).ravel()
    norm = np.linalg.norm(v)
    if not np.isfinite(norm) or norm == 0:
        raise BackendFailure("embedding backend returned a zero or non-finite vector")
    return v / norm


def subject_consistency(
    frames: Sequence[Frame],
    embed: EmbeddingBackend | None = None,
    bands: BandTable = DEFAULT_SUBJECT_BANDS,
) -> ToolReport:
    """Mean of half first-frame and half previous-frame cosine similarity."""
    if len(frames) < 2:
        raise TooFewFrames("subject consistency needs at least 2 frames")
    embed = embed or HistogramEmbedding()
    vectors = []
    for frame in frames:
        try:
            vectors.append(_unit(embed.embed(frame)))
        except ToolError:
            raise
        except Exception as e:
            raise BackendFailure(f"embedding backend {getattr(embed, 'name', '?')} failed: {e}") from e
    first = vectors[0]
    scores = [
        0.5 * float(np.clip(first @ current, -1.0, 1.0)) + 0.5 * float(np.clip(prev @ current, -1.0, 1.0))
        for prev, current in zip(vectors[:-1], vectors[1:])
    ]
    raw = float(np.mean(scores))
    return make_report(SUBJECT_CONSISTENCY, raw, bands, details={"backend": getattr(embed, "name", "custom")})


def mean_frame_difference(frames: Sequence[Frame], bands: BandTable = DEFAULT_FRAME_DIFF_BANDS) -> ToolReport:
    if len(frames) < 2:
        raise TooFewFrames("frame difference needs at least 2 frames")
    diffs = [
        np.abs(b.rgb.astype(np.int16) - a.rgb.astype(np.int16)).mean() / 255.0
        for a, b in zip(frames[:-1], frames[1:])
    ]
    return make_report(MEAN_FRAME_DIFFERENCE, float(np.mean(diffs)), bands)


# --- tool suite ---

@dataclass(frozen=True)
class ToolSuite:
    """Settings for one pass of every patch tool over a video."""
    patch_grid: PatchGridConfig = field(default_factory=PatchGridConfig)
    theta: float = DEFAULT_THETA
    segment_agg: Literal["mean", "max"] = "mean"
    compensate: bool = True
    flow_backend: FlowBackend | None = None
    homography_params: HomographyParams | None = None
    embedding: EmbeddingBackend | None = None
    temporal_bands: BandTable = DEFAULT_TEMPORAL_BANDS
    dynamic_bands: BandTable = DEFAULT_DYNAMIC_BANDS
    subject_bands: BandTable = DEFAULT_SUBJECT_BANDS
    frame_diff_bands: BandTable = DEFAULT_FRAME_DIFF_BANDS
    extra_tools: tuple[str, ...] = ()

    def run(self, frames: Sequence[Frame], fps: float) -> tuple[list[ToolReport], list[str]]:
        """All tool reports plus ``tool:error`` notes for tools that could not run."""
        reports: list[ToolReport] = []
        errors: list[str] = []

        analysis = None
        try:
            analysis = analyze_temporal(
                frames, self.patch_grid, self.theta, flow_backend=self.flow_backend,
                compensate=self.compensate, homography_params=self.homography_params,
            )
            reports.append(anomaly_report(
                analysis, fps, segment_agg=self.segment_agg, compensate=self.compensate, bands=self.temporal_bands,
            ))
        except (ToolError, FlowError) as e:
            errors.append(f"{TEMPORAL_ANOMALY}: {e}")
        except Exception as e:
            logger.exception("temporal anomaly tool crashed")
            errors.append(f"{TEMPORAL_ANOMALY}: {type(e).__name__}: {e}")

        try:
            flows = analysis.raw_flows if analysis is not None else segment_flows(frames, self.flow_backend)
            reports.append(dynamic_degree(flows, self.dynamic_bands))
        except (ToolError, FlowError) as e:
            errors.append(f"{DYNAMIC_DEGREE}: {e}")
        except Exception as e:
            logger.exception("dynamic degree tool crashed")
            errors.append(f"{DYNAMIC_DEGREE}: {type(e).__name__}: {e}")

        try:
            reports.append(subject_consistency(frames, self.embedding, self.subject_bands))
        except ToolError as e:
            errors.append(f"{SUBJECT_CONSISTENCY}: {e}")

        if MEAN_FRAME_DIFFERENCE in self.extra_tools:
            try:
                reports.append(mean_frame_difference(frames, self.frame_diff_bands))
            except ToolError as e:
                errors.append(f"{MEAN_FRAME_DIFFERENCE}: {e}")

        for note in errors:
            logger.warning("tool failed: %s", note)
        return reports, errors
