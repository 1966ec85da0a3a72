"""Structurer and judger orchestration.

The structurer splits a raw prompt into per-dimension instructions; the
judger answers yes / half / no per dimension from sampled frames plus the
patch-tool reports. Malformed model output is re-prompted with the parse
error appended, up to the backend's ``max_retries``.
"""

from __future__ import annotations

import asyncio
import json
import logging
import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from string import Template
from typing import Sequence

import numpy as np

from backends import ChatBackend, ChatRequest, ImagePart, Part, TextPart
from config import DEFAULT_FRAME_SAMPLES, RunConfig
from errors import (
    BackendUnavailable, DuplicateDimension, EmptyPrompt, EmptyVideo, ExpansionFailed, JudgeParseError,
    JudgingFailed, MalformedJson, MalformedOutput, MissingDimension, MissingReason, NoActiveDimensions,
    StructuringFailed, TooManyImages, UnknownAnswer, UnknownDimension, UnknownField,
)
from flowcore import ClassicalFlowBackend, Frame, PrecomputedFlowBackend
from schema import (
    DimensionId, EvaluationRecord, Judgment, StructuredPrompt, TaskMode, TEMPORAL_DIMENSIONS, ToolReport, Verdict,
    select_dimensions, validate_structured_prompt,
)
from temporal_tools import TEMPORAL_ANOMALY, TOOL_DESCRIPTIONS, ToolSuite
from utils import format_timestamp, png_data_url, rgb_to_png_bytes, utc_now_iso

logger = logging.getLogger(__name__)

TEMPLATE_DIR = Path(__file__).resolve().parent / "prompts"
STRUCTURER_TEMPLATE = "structurer_v1"
JUDGER_TEMPLATE = "judger_v1"
EXPANDER_TEMPLATE = "expander_v1"

EXPANSION_COMPONENTS = ("camera", "background", "subject", "style", "lighting")

DIMENSION_CRITERIA: dict[DimensionId, str] = {
    DimensionId.CAMERA_MOTION: "the camera moves or is placed as instructed (direction, speed, shot type)",
    DimensionId.BACKGROUND: "the setting matches the instruction and stays coherent",
    DimensionId.CATEGORY_QUANTITY: "the instructed kinds of objects or beings appear in the instructed numbers",
    DimensionId.APPEARANCE: "the subject looks as instructed and keeps that look across frames",
    DimensionId.EXPRESSION: "faces show the instructed expression or emotion",
    DimensionId.SPATIAL_RELATION: "objects keep the instructed positions relative to each other",
    DimensionId.INTERACTION: "subjects interact with each other or with objects as instructed, physically plausibly",
    DimensionId.MOTION_DETAIL: "the subject performs the instructed motion smoothly, without flicker, collapse or jumps",
    DimensionId.STYLE: "the video has the instructed visual style",
    DimensionId.LIGHTING: "light sources, brightness and shadows match the instruction",
}

_FENCE = re.compile(r"^\s*```[A-Za-z]*\s*\n(.*?)\n?\s*```\s*$", re.DOTALL)
_COMPONENT_LINE = re.compile(r"^\s*(camera|background|subject|style|lighting)\s*:\s*\S", re.IGNORECASE | re.MULTILINE)


@lru_cache(maxsize=None)
def load_template(name: str) -> Template:
    return Template((TEMPLATE_DIR / f"{name}.txt").read_text(encoding="utf-8"))


def strip_code_fence(text: str) -> str:
    """Drop a single surrounding fenced code block, if present."""
    match = _FENCE.match(text)
    return match.group(1) if match else text.strip()


# --- structurer ---

@dataclass(frozen=True)
class StructuringResult:
    prompt: StructuredPrompt
    retry_count: int = 0


async def structure_prompt(
    raw: str,
    backend: ChatBackend,
    *,
    task_mode: TaskMode = TaskMode.T2V,
    reference_image: str | None = None,
    video_id: str | None = None,
    base_dir: Path | None = None,
    check_image: bool = True,
) -> StructuringResult:
    if not raw or not raw.strip():
        raise EmptyPrompt("raw prompt is empty")
    request = ChatRequest(
        system=load_template(STRUCTURER_TEMPLATE).substitute(),
        parts=(TextPart(raw),),
        metadata={"purpose": "structure", "video_id": video_id, "raw_prompt": raw},
    )
    for attempt in range(backend.max_retries + 1):
        response = await backend.send(request)
        try:
            prompt = validate_structured_prompt(
                strip_code_fence(response.text),
                raw_prompt=raw,
                task_mode=task_mode,
                reference_image=reference_image,
                base_dir=base_dir,
                check_image=check_image,
            )
            return StructuringResult(prompt=prompt, retry_count=attempt)
        except (MalformedJson, UnknownDimension, UnknownField, EmptyPrompt) as e:
            logger.warning("structurer output rejected (attempt %d/%d): %s", attempt + 1, backend.max_retries + 1, e)
            request = request.with_feedback(response.text, str(e))
    raise StructuringFailed(f"no valid structured prompt after {backend.max_retries + 1} attempts")


def missing_components(text: str) -> tuple[str, ...]:
    found = {m.group(1).lower() for m in _COMPONENT_LINE.finditer(text)}
    return tuple(c for c in EXPANSION_COMPONENTS if c not in found)


async def expand_prompt(raw: str, backend: ChatBackend) -> str:
    """Expanded prompt with one labeled line per component."""
    if not raw or not raw.strip():
        raise EmptyPrompt("raw prompt is empty")
    request = ChatRequest(
        system=load_template(EXPANDER_TEMPLATE).substitute(),
        parts=(TextPart(raw),),
        metadata={"purpose": "expand", "raw_prompt": raw},
    )
    missing: tuple[str, ...] = EXPANSION_COMPONENTS
    for attempt in range(backend.max_retries + 1):
        response = await backend.send(request)
        text = strip_code_fence(response.text)
        missing = missing_components(text)
        if not missing:
            return text
        error = f"missing components: {', '.join(missing)}"
        logger.warning("expansion rejected (attempt %d/%d): %s", attempt + 1, backend.max_retries + 1, error)
        request = request.with_feedback(response.text, error)
    raise ExpansionFailed(f"expansion still lacks {', '.join(missing)}", missing)


# --- judger ---

def sample_frames(video: Sequence[Frame], k: int = DEFAULT_FRAME_SAMPLES) -> list[Frame]:
    """Uniform sample of ``k`` frames that always keeps the first and last frame."""
    if not video:
        raise EmptyVideo("video has no frames")
    if k < 1:
        raise ValueError("k must be at least 1")
    n = len(video)
    if n <= k:
        return list(video)
    if k == 1:
        return [video[0]]
    return [video[math.floor(i * (n - 1) / (k - 1) + 0.5)] for i in range(k)]


@dataclass(frozen=True, eq=False)
class JudgeTask:
    video_id: str
    prompt: StructuredPrompt
    frames: list[Frame]
    dimensions: list[DimensionId]
    tool_reports: list[ToolReport] = field(default_factory=list)
    reference: np.ndarray | None = None
    use_structured_content: bool = True
    attach_tools_to_all: bool = False


def _format_bound(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:g}"


def describe_tool_report(report: ToolReport, applies_to: Sequence[DimensionId]) -> str:
    table = report.band_table
    lines = [
        f"Tool: {report.tool_name}",
        f"Function: {TOOL_DESCRIPTIONS.get(report.tool_name, report.tool_name)}",
        f"Applies to: {', '.join(d.value for d in applies_to)}",
        f"Raw score: {report.raw_score:.4f}",
        f"Assessment: {report.band}",
        "Score bands:",
    ]
    lower: float | None = None
    for band in table.bands:
        if table.order == "ascending":
            span = f"above {_format_bound(lower)}" if math.isinf(band.bound) else f"<= {_format_bound(band.bound)}"
        else:
            span = f"below {_format_bound(lower)}" if math.isinf(band.bound) else f">= {_format_bound(band.bound)}"
        lines.append(f"  {span}: {band.label} ({band.description})")
        lower = band.bound
    if report.flags:
        lines.append(f"Notes: {', '.join(report.flags)}")
    return "\n".join(lines)


def _attached_reports(task: JudgeTask) -> list[tuple[ToolReport, list[DimensionId]]]:
    temporal_active = [d for d in task.dimensions if d in TEMPORAL_DIMENSIONS]
    targets = list(task.dimensions) if task.attach_tools_to_all else temporal_active
    attached = []
    for report in task.tool_reports:
        if report.tool_name == TEMPORAL_ANOMALY:
            attached.append((report, targets or list(task.dimensions)))
        elif targets:
            attached.append((report, targets))
    return attached


def _image(rgb: np.ndarray) -> ImagePart:
    return ImagePart(png_data_url(rgb_to_png_bytes(rgb)))


def build_judge_request(task: JudgeTask, max_images: int = 16, max_tokens: int = 2048) -> ChatRequest:
    if not task.dimensions:
        raise NoActiveDimensions(f"{task.video_id}: nothing to judge")
    flags: list[str] = []
    frames = list(task.frames)
    reference = task.reference if task.prompt.task_mode is TaskMode.I2V else None
    budget = max_images - (1 if reference is not None else 0)
    if len(frames) > budget:
        if budget < 1:
            raise TooManyImages(f"backend accepts {max_images} images, the reference image alone needs one")
        logger.info("%s: downsampling %d frames to %d for the image limit", task.video_id, len(frames), budget)
        frames = sample_frames(frames, budget)
        flags.append("frame_downsample")

    criteria = "\n".join(f"- {d.value}: {DIMENSION_CRITERIA[d]}" for d in task.dimensions)
    system = load_template(JUDGER_TEMPLATE).substitute(criteria=criteria)

    parts: list[Part] = []
    if task.use_structured_content:
        content = "\n".join(f"- {d.value}: {task.prompt.content(d)}" for d in task.dimensions)
        parts.append(TextPart(f"Instructions per dimension:\n{content}"))
    else:
        parts.append(TextPart(f"Generation prompt:\n{task.prompt.raw_prompt}"))

    if reference is not None:
        parts.append(TextPart("Conditioning image: the video must start from this image and stay faithful to it."))
        parts.append(_image(reference))

    k = len(frames)
    for i, frame in enumerate(frames, start=1):
        parts.append(TextPart(f"Frame {i}/{k} (index {frame.index}, t={format_timestamp(frame.timestamp)})"))
        parts.append(_image(frame.rgb))

    for report, applies_to in _attached_reports(task):
        parts.append(TextPart(describe_tool_report(report, applies_to)))

    parts.append(TextPart(
        "Dimensions to judge: " + ", ".join(d.value for d in task.dimensions)
        + "\nReturn only the JSON array."
    ))
    return ChatRequest(
        system=system,
        parts=tuple(parts),
        max_tokens=max_tokens,
        metadata={
            "purpose": "judge",
            "video_id": task.video_id,
            "dimensions": [d.value for d in task.dimensions],
            "flags": flags,
        },
    )


def parse_judgments(response: str, expected: Sequence[DimensionId]) -> list[Judgment]:
    if not expected:
        raise ValueError("expected dimensions must not be empty")
    try:
        data = json.loads(strip_code_fence(response))
    except json.JSONDecodeError as e:
        raise MalformedOutput(f"not valid JSON: {e.msg}") from None
    if not isinstance(data, list):
        raise MalformedOutput("expected a JSON array of judgments")

    wanted = set(expected)
    found: dict[DimensionId, Judgment] = {}
    for item in data:
        if not isinstance(item, dict) or not isinstance(item.get("dimension"), str):
            raise MalformedOutput("every judgment needs a string 'dimension'")
        try:
            dim = DimensionId(item["dimension"].strip())
        except ValueError:
            raise MalformedOutput(f"unknown dimension {item['dimension']!r}") from None
        if dim not in wanted:
            raise MalformedOutput(f"dimension {dim.value} was not requested")
        if dim in found:
            raise DuplicateDimension(dim.value)
        answer = item.get("answer")
        if not isinstance(answer, str):
            raise UnknownAnswer(str(answer))
        try:
            verdict = Verdict(answer.strip().lower())
        except ValueError:
            raise UnknownAnswer(answer) from None
        reason = item.get("reason") or ""
        if not isinstance(reason, str):
            raise MalformedOutput(f"reason for {dim.value} must be text")
        if verdict is not Verdict.YES and not reason.strip():
            raise MissingReason(dim.value)
        found[dim] = Judgment(dimension=dim, verdict=verdict, reason=reason.strip())

    for dim in expected:
        if dim not in found:
            raise MissingDimension(dim.value)
    return [found[dim] for dim in expected]


def dump_judgments(judgments: Sequence[Judgment]) -> str:
    """Judger-shaped JSON array for a judgment list."""
    return json.dumps([
        {"dimension": j.dimension.value, "answer": j.verdict.value, "reason": j.reason} for j in judgments
    ])


async def _ask_judger(
    request: ChatRequest, backend: ChatBackend, dims: list[DimensionId],
) -> tuple[list[Judgment], int]:
    for attempt in range(backend.max_retries + 1):
        response = await backend.send(request)
        try:
            return parse_judgments(response.text, dims), attempt
        except JudgeParseError as e:
            logger.warning(
                "%s: judger output rejected (attempt %d/%d): %s",
                request.metadata.get("video_id"), attempt + 1, backend.max_retries + 1, e,
            )
            request = request.with_feedback(response.text, str(e))
    raise JudgingFailed(f"no valid judgments after {backend.max_retries + 1} attempts")


@dataclass(frozen=True)
class JudgeConfig:
    frame_samples: int = DEFAULT_FRAME_SAMPLES
    use_structured_content: bool = True
    attach_tools: bool = True
    attach_tools_to_all: bool = False
    max_tokens: int = 2048
    tools: ToolSuite = field(default_factory=ToolSuite)

    @classmethod
    def from_run_config(cls, config: RunConfig, video_id: str | None = None) -> "JudgeConfig":
        flow_backend = (
            PrecomputedFlowBackend(config.flow_root / video_id)
            if config.flow_root is not None and video_id is not None
            else ClassicalFlowBackend(config.flow)
        )
        tools = ToolSuite(
            patch_grid=config.patch_grid,
            theta=config.theta,
            segment_agg=config.segment_agg,
            compensate=config.compensate_camera,
            flow_backend=flow_backend,
            homography_params=config.homography.model_copy(update={"seed": config.seed}),
            temporal_bands=config.temporal_bands,
            dynamic_bands=config.dynamic_bands,
            subject_bands=config.subject_bands,
            frame_diff_bands=config.frame_diff_bands,
            extra_tools=tuple(config.extra_tools),
        )
        return cls(
            frame_samples=config.frame_samples,
            use_structured_content=config.use_structured_content,
            attach_tools=config.attach_tools,
            attach_tools_to_all=config.attach_tools_to_all,
            max_tokens=config.judger.max_tokens,
            tools=tools,
        )


async def judge_video(
    prompt: StructuredPrompt,
    frames: Sequence[Frame],
    fps: float,
    backend: ChatBackend,
    cfg: JudgeConfig | None = None,
    *,
    video_id: str,
    model_id: str,
    reference: np.ndarray | None = None,
    backends: dict[str, str] | None = None,
    prior_retries: int = 0,
) -> EvaluationRecord:
    """Evaluate one video; backend and retry failures end up in ``record.error``."""
    cfg = cfg or JudgeConfig()
    if not frames:
        raise EmptyVideo(f"{video_id}: video has no frames")
    started = utc_now_iso()
    flags: list[str] = []
    if not cfg.use_structured_content:
        flags.append("raw_prompt_judging")

    reports: list[ToolReport] = []
    if cfg.attach_tools:
        reports, notes = await asyncio.to_thread(cfg.tools.run, frames, fps)
        flags += [f"tool_failed:{note.split(':', 1)[0]}" for note in notes]
    else:
        flags.append("tools_off")

    dims = select_dimensions(prompt)
    judgments: list[Judgment] = []
    retries = 0
    error: str | None = None
    if not dims:
        flags.append("nothing_to_judge")
    else:
        task = JudgeTask(
            video_id=video_id,
            prompt=prompt,
            frames=sample_frames(frames, cfg.frame_samples),
            dimensions=dims,
            tool_reports=reports,
            reference=reference,
            use_structured_content=cfg.use_structured_content,
            attach_tools_to_all=cfg.attach_tools_to_all,
        )
        request = build_judge_request(task, backend.max_images, cfg.max_tokens)
        flags += request.metadata["flags"]
        try:
            judgments, retries = await _ask_judger(request, backend, dims)
        except BackendUnavailable as e:
            error = f"backend unavailable: {e}"
        except JudgingFailed as e:
            error = f"judging failed: {e}"
            retries = backend.max_retries
        if error:
            logger.error("%s: %s", video_id, error)

    return EvaluationRecord(
        video_id=video_id,
        model_id=model_id,
        structured_prompt=prompt,
        judgments=tuple(judgments),
        tool_reports=tuple(reports),
        backends=dict(backends or {"judger": backend.identity}),
        template_version=JUDGER_TEMPLATE,
        retry_count=prior_retries + retries,
        flags=tuple(flags),
        error=error,
        started_at=started,
        finished_at=utc_now_iso(),
    )
