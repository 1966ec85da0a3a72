"""Persisted data shapes: structured prompts, verdicts, tool reports,
annotations and evaluation records.

Every model is frozen once built. JSON produced by the ``dump_*`` helpers has
a stable key order, writes verdicts as the numerics 0 / 0.5 / 1 and writes
infinite band bounds as ``null``.
"""

from __future__ import annotations

import json
import math
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Literal

from PIL import Image, UnidentifiedImageError
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_serializer, field_validator, model_validator

from errors import (
    EmptyPrompt, InvalidRecord, MalformedJson, MissingReferenceImage, UnknownDimension, UnknownField,
)
from utils import dump_json

FORMAT_VERSION = 1


class DimensionId(str, Enum):
    CAMERA_MOTION = "camera_motion"
    BACKGROUND = "background"
    CATEGORY_QUANTITY = "category_quantity"
    APPEARANCE = "appearance"
    EXPRESSION = "expression"
    SPATIAL_RELATION = "spatial_relation"
    INTERACTION = "interaction"
    MOTION_DETAIL = "motion_detail"
    STYLE = "style"
    LIGHTING = "lighting"

    @classmethod
    def parse(cls, name: str) -> "DimensionId":
        try:
            return cls(name)
        except ValueError:
            raise UnknownDimension(name) from None


ALL_DIMENSIONS: tuple[DimensionId, ...] = tuple(DimensionId)

# Dimensions that depend on dense temporal evidence; the only ones judged for I2V
# and the ones the temporal tool reports are attached to.
TEMPORAL_DIMENSIONS: tuple[DimensionId, ...] = (
    DimensionId.CAMERA_MOTION,
    DimensionId.INTERACTION,
    DimensionId.MOTION_DETAIL,
)

DIMENSION_ABBREVIATIONS: dict[DimensionId, str] = {
    DimensionId.CAMERA_MOTION: "Ca.",
    DimensionId.BACKGROUND: "Bg.",
    DimensionId.CATEGORY_QUANTITY: "CQ.",
    DimensionId.APPEARANCE: "Ap.",
    DimensionId.EXPRESSION: "Ex.",
    DimensionId.SPATIAL_RELATION: "Sp.",
    DimensionId.INTERACTION: "In.",
    DimensionId.MOTION_DETAIL: "Mo.",
    DimensionId.STYLE: "St.",
    DimensionId.LIGHTING: "Li.",
}


class TaskMode(str, Enum):
    T2V = "T2V"
    I2V = "I2V"


class Verdict(str, Enum):
    YES = "yes"
    HALF = "half"
    NO = "no"

    def numeric(self) -> float:
        return _VERDICT_NUMERIC[self]

    def serialized(self) -> int | float:
        """Numeric form written to JSON files (1, 0.5 or 0)."""
        return {Verdict.YES: 1, Verdict.HALF: 0.5, Verdict.NO: 0}[self]

    @classmethod
    def from_score(cls, value: Any) -> "Verdict":
        if isinstance(value, bool):
            raise ValueError(f"not a verdict score: {value!r}")
        if isinstance(value, (int, float)):
            for verdict, numeric in _VERDICT_NUMERIC.items():
                if float(value) == numeric:
                    return verdict
            raise ValueError(f"not a verdict score: {value!r}")
        if isinstance(value, str):
            return cls(value.strip().lower())
        if isinstance(value, Verdict):
            return value
        raise ValueError(f"not a verdict: {value!r}")


_VERDICT_NUMERIC: dict[Verdict, float] = {Verdict.YES: 1.0, Verdict.HALF: 0.5, Verdict.NO: 0.0}


def _coerce_verdict(value: Any) -> Verdict:
    return Verdict.from_score(value)


# --- structured prompts ---

class StructuredPrompt(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    raw_prompt: str
    task_mode: TaskMode = TaskMode.T2V
    reference_image: str | None = None
    dimensions: dict[DimensionId, str | None]

    @field_validator("dimensions", mode="before")
    @classmethod
    def _fill_dimensions(cls, value: Any) -> dict:
        if not isinstance(value, dict):
            raise ValueError("dimensions must be an object")
        filled: dict[DimensionId, str | None] = {dim: None for dim in ALL_DIMENSIONS}
        for key, text in value.items():
            dim = DimensionId(key)
            if text is not None:
                if not isinstance(text, str) or not text.strip():
                    raise ValueError(f"dimension {dim.value} must be non-empty text or null")
                text = text.strip()
            filled[dim] = text
        return filled

    @model_validator(mode="after")
    def _check_invariants(self) -> "StructuredPrompt":
        if not any(self.dimensions.values()):
            raise ValueError("at least one dimension must carry content")
        if self.task_mode is TaskMode.I2V and not self.reference_image:
            raise ValueError("I2V prompts require a reference_image")
        return self

    def active_dimensions(self) -> list[DimensionId]:
        return [dim for dim in ALL_DIMENSIONS if self.dimensions.get(dim)]

    def content(self, dim: DimensionId) -> str | None:
        return self.dimensions.get(dim)

    def to_dict(self) -> dict:
        data: dict[str, Any] = {"raw_prompt": self.raw_prompt, "task_mode": self.task_mode.value}
        if self.reference_image is not None:
            data["reference_image"] = self.reference_image
        data["dimensions"] = {dim.value: self.dimensions[dim] for dim in ALL_DIMENSIONS}
        return data


_PROMPT_KEYS = {"raw_prompt", "task_mode", "reference_image", "dimensions", "video_id", "model_id", "video_dir"}


def _load_json_object(document: str | bytes) -> Any:
    if isinstance(document, bytes):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as e:
            raise MalformedJson(f"document is not UTF-8: {e}") from None
    try:
        return json.loads(document)
    except json.JSONDecodeError as e:
        raise MalformedJson(f"invalid JSON: {e.msg} at line {e.lineno} column {e.colno}") from None


def _check_reference_image(path: str | None, base_dir: Path | None) -> None:
    if not path:
        raise MissingReferenceImage("I2V prompt has no reference_image")
    resolved = Path(path)
    if base_dir is not None and not resolved.is_absolute():
        resolved = base_dir / resolved
    try:
        with Image.open(resolved) as img:
            img.verify()
    except (OSError, UnidentifiedImageError) as e:
        raise MissingReferenceImage(f"reference image {resolved} is not readable: {e}") from None


def validate_structured_prompt(
    document: str | bytes,
    *,
    raw_prompt: str | None = None,
    task_mode: TaskMode | str = TaskMode.T2V,
    reference_image: str | None = None,
    base_dir: Path | None = None,
    check_image: bool = True,
) -> StructuredPrompt:
    """Parse and validate a structured prompt document.

    Two shapes are accepted: the full prompt-file object (with a ``dimensions``
    key) or the bare dimension map a structurer returns, in which case
    ``raw_prompt``/``task_mode``/``reference_image`` come from the arguments.
    Dimension keys that are absent or null are "not instructed".
    """
    data = _load_json_object(document)
    if not isinstance(data, dict):
        raise MalformedJson("expected a JSON object")

    if "dimensions" in data:
        for key in data:
            if key not in _PROMPT_KEYS:
                raise UnknownField(key)
        dims_raw = data["dimensions"]
        if not isinstance(dims_raw, dict):
            raise MalformedJson("'dimensions' must be an object")
        raw_prompt = data.get("raw_prompt", raw_prompt)
        task_mode = data.get("task_mode", task_mode)
        reference_image = data.get("reference_image", reference_image)
    else:
        dims_raw = data

    dimensions: dict[DimensionId, str | None] = {}
    for key, text in dims_raw.items():
        dim = DimensionId.parse(key)
        if text is None:
            dimensions[dim] = None
            continue
        if not isinstance(text, str):
            raise MalformedJson(f"dimension {key} must be text or null")
        if not text.strip():
            raise EmptyPrompt(f"dimension {key} is an empty instruction; use null for 'not instructed'")
        dimensions[dim] = text.strip()

    if not any(dimensions.values()):
        raise EmptyPrompt("no dimension carries content")
    if not isinstance(raw_prompt, str):
        raise MalformedJson("raw_prompt must be text")
    try:
        mode = TaskMode(task_mode)
    except ValueError:
        raise MalformedJson(f"unknown task_mode: {task_mode!r}") from None
    if mode is TaskMode.I2V:
        if check_image:
            _check_reference_image(reference_image, base_dir)
        elif not reference_image:
            raise MissingReferenceImage("I2V prompt has no reference_image")

    return StructuredPrompt(
        raw_prompt=raw_prompt,
        task_mode=mode,
        reference_image=reference_image,
        dimensions={dim.value: text for dim, text in dimensions.items()},
    )


def select_dimensions(prompt: StructuredPrompt) -> list[DimensionId]:
    """Dimensions to judge, in the fixed enum order."""
    active = prompt.active_dimensions()
    if prompt.task_mode is TaskMode.I2V:
        return [dim for dim in active if dim in TEMPORAL_DIMENSIONS]
    return active


class PromptEntry(BaseModel):
    """One line of a prompt file: a video plus its (raw or structured) prompt."""
    model_config = ConfigDict(frozen=True, extra="forbid", protected_namespaces=())

    video_id: str = Field(min_length=1)
    model_id: str = Field(min_length=1)
    task_mode: TaskMode = TaskMode.T2V
    raw_prompt: str
    reference_image: str | None = None
    video_dir: str | None = None
    dimensions: dict[str, str | None] | None = None

    @property
    def is_structured(self) -> bool:
        return self.dimensions is not None

    def structured(self, base_dir: Path | None = None, check_image: bool = True) -> StructuredPrompt:
        return validate_structured_prompt(
            json.dumps({"dimensions": self.dimensions or {}}),
            raw_prompt=self.raw_prompt,
            task_mode=self.task_mode,
            reference_image=self.reference_image,
            base_dir=base_dir,
            check_image=check_image,
        )

    def with_prompt(self, prompt: StructuredPrompt) -> "PromptEntry":
        return self.model_copy(update={
            "raw_prompt": prompt.raw_prompt,
            "dimensions": {dim.value: prompt.dimensions[dim] for dim in ALL_DIMENSIONS},
        })

    def to_dict(self) -> dict:
        data: dict[str, Any] = {
            "video_id": self.video_id,
            "model_id": self.model_id,
            "task_mode": self.task_mode.value,
            "raw_prompt": self.raw_prompt,
        }
        if self.reference_image is not None:
            data["reference_image"] = self.reference_image
        if self.video_dir is not None:
            data["video_dir"] = self.video_dir
        if self.dimensions is not None:
            data["dimensions"] = dict(self.dimensions)
        return data


# --- verdicts ---

class Judgment(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    dimension: DimensionId
    verdict: Verdict
    reason: str = ""

    @field_validator("verdict", mode="before")
    @classmethod
    def _parse_verdict(cls, value: Any) -> Verdict:
        return _coerce_verdict(value)

    @model_validator(mode="after")
    def _reason_required(self) -> "Judgment":
        if self.verdict is not Verdict.YES and not self.reason.strip():
            raise ValueError(f"a reason is required when {self.dimension.value} is not 'yes'")
        return self

    @field_serializer("verdict")
    def _dump_verdict(self, verdict: Verdict) -> int | float:
        return verdict.serialized()


# --- tool reports ---

class Band(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    bound: float
    label: str = Field(min_length=1)
    description: str = ""

    @field_validator("bound", mode="before")
    @classmethod
    def _none_is_infinite(cls, value: Any) -> float:
        # null bounds are the open-ended sentinel; the table fixes its sign
        return math.nan if value is None else value

    @field_serializer("bound")
    def _dump_bound(self, bound: float) -> float | None:
        return None if math.isinf(bound) or math.isnan(bound) else bound


class BandTable(BaseModel):
    """Ordered score ranges with quality labels.

    Ascending tables use upper bounds (first band with ``bound >= raw``) and end
    with +inf; descending tables use lower bounds (first band with
    ``bound <= raw``) and end with -inf.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    order: Literal["ascending", "descending"] = "ascending"
    bands: tuple[Band, ...]

    @model_validator(mode="before")
    @classmethod
    def _resolve_sentinel(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        order = data.get("order", "ascending")
        sentinel = math.inf if order == "ascending" else -math.inf
        bands = []
        for band in data.get("bands", ()):
            if isinstance(band, dict) and band.get("bound") is None:
                band = {**band, "bound": sentinel}
            elif isinstance(band, Band) and math.isnan(band.bound):
                band = band.model_copy(update={"bound": sentinel})
            bands.append(band)
        return {**data, "bands": tuple(bands)}

    @model_validator(mode="after")
    def _check_order(self) -> "BandTable":
        if not self.bands:
            raise ValueError("band table is empty")
        bounds = [band.bound for band in self.bands]
        if self.order == "ascending":
            if any(b >= a for a, b in zip(bounds[1:], bounds[:-1])) or bounds[-1] != math.inf:
                raise ValueError("ascending band bounds must strictly increase and end with +inf")
        else:
            if any(b <= a for a, b in zip(bounds[1:], bounds[:-1])) or bounds[-1] != -math.inf:
                raise ValueError("descending band bounds must strictly decrease and end with -inf")
        return self

    def label_for(self, raw: float) -> str:
        return self.band_for(raw).label

    def band_for(self, raw: float) -> Band:
        for band in self.bands:
            if (self.order == "ascending" and raw <= band.bound) or (self.order == "descending" and raw >= band.bound):
                return band
        return self.bands[-1]

    @classmethod
    def ascending(cls, rows: Iterable[tuple[float, str, str]]) -> "BandTable":
        return cls(order="ascending", bands=tuple(Band(bound=b, label=l, description=d) for b, l, d in rows))

    @classmethod
    def descending(cls, rows: Iterable[tuple[float, str, str]]) -> "BandTable":
        return cls(order="descending", bands=tuple(Band(bound=b, label=l, description=d) for b, l, d in rows))


class ToolReport(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    tool_name: str = Field(min_length=1)
    raw_score: float
    band: str
    band_table: BandTable
    flags: tuple[str, ...] = ()
    details: dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _band_matches(self) -> "ToolReport":
        if not math.isfinite(self.raw_score):
            raise ValueError("raw_score must be finite")
        expected = self.band_table.label_for(self.raw_score)
        if self.band != expected:
            raise ValueError(f"band {self.band!r} does not match score {self.raw_score} (expected {expected!r})")
        return self


# --- records ---

class EvaluationRecord(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", protected_namespaces=())

    format_version: int = FORMAT_VERSION
    video_id: str = Field(min_length=1)
    model_id: str = Field(min_length=1)
    # None only when structuring failed before judging
    structured_prompt: StructuredPrompt | None = None
    judgments: tuple[Judgment, ...] = ()
    tool_reports: tuple[ToolReport, ...] = ()
    backends: dict[str, str] = Field(default_factory=dict)
    template_version: str = ""
    retry_count: int = Field(default=0, ge=0)
    flags: tuple[str, ...] = ()
    error: str | None = None
    started_at: str = ""
    finished_at: str = ""

    @model_validator(mode="after")
    def _check_judgments(self) -> "EvaluationRecord":
        if self.judgments and self.structured_prompt is None:
            raise ValueError("judgments need a structured prompt")
        seen: set[DimensionId] = set()
        for judgment in self.judgments:
            if judgment.dimension in seen:
                raise ValueError(f"more than one judgment for {judgment.dimension.value}")
            seen.add(judgment.dimension)
            if not self.structured_prompt.content(judgment.dimension):
                raise ValueError(f"{judgment.dimension.value} was judged but carries no prompt content")
        return self

    @property
    def failed(self) -> bool:
        return self.error is not None

    def verdicts(self) -> dict[DimensionId, Verdict]:
        return {j.dimension: j.verdict for j in self.judgments}

    def to_dict(self) -> dict:
        data = self.model_dump(mode="json")
        if self.structured_prompt is not None:
            data["structured_prompt"] = self.structured_prompt.to_dict()
        return data


class HumanVerdict(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    score: Verdict
    explanation: str | None = None

    @field_validator("score", mode="before")
    @classmethod
    def _parse_score(cls, value: Any) -> Verdict:
        return _coerce_verdict(value)

    @model_validator(mode="after")
    def _explanation_required(self) -> "HumanVerdict":
        if self.score is not Verdict.YES and not (self.explanation or "").strip():
            raise ValueError("an explanation is required for scores of 0 or 0.5")
        return self

    @field_serializer("score")
    def _dump_score(self, score: Verdict) -> int | float:
        return score.serialized()


class AnnotationRecord(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", protected_namespaces=())

    video_id: str = Field(min_length=1)
    model_id: str = Field(min_length=1)
    dimensions: dict[DimensionId, HumanVerdict]

    def verdicts(self) -> dict[DimensionId, Verdict]:
        return {dim: label.score for dim, label in self.dimensions.items()}

    def to_dict(self) -> dict:
        data = self.model_dump(mode="json", exclude_none=True)
        data["dimensions"] = {
            dim.value: self.dimensions[dim].model_dump(mode="json", exclude_none=True)
            for dim in ALL_DIMENSIONS if dim in self.dimensions
        }
        return data


# --- (de)serialization helpers ---

def _invalid(kind: str, error: ValidationError) -> InvalidRecord:
    first = error.errors()[0]
    where = ".".join(str(p) for p in first.get("loc", ()))
    return InvalidRecord(f"invalid {kind}: {where}: {first.get('msg')}")


def _check_dimension_keys(data: Any) -> None:
    if isinstance(data, dict) and isinstance(data.get("dimensions"), dict):
        for key in data["dimensions"]:
            DimensionId.parse(key)


def dump_structured_prompt(prompt: StructuredPrompt) -> str:
    return dump_json(prompt.to_dict())


def dump_record(record: EvaluationRecord) -> str:
    return dump_json(record.to_dict())


def parse_record(document: str | bytes) -> EvaluationRecord:
    data = _load_json_object(document)
    try:
        return EvaluationRecord.model_validate(data)
    except ValidationError as e:
        raise _invalid("evaluation record", e) from None


def parse_tool_report(data: dict) -> ToolReport:
    try:
        return ToolReport.model_validate(data)
    except ValidationError as e:
        raise _invalid("tool report", e) from None


def dump_annotations(annotations: Iterable[AnnotationRecord]) -> str:
    return dump_json([a.to_dict() for a in annotations])


def parse_annotations(document: str | bytes) -> list[AnnotationRecord]:
    data = _load_json_object(document)
    if not isinstance(data, list):
        raise MalformedJson("annotation file must be a JSON array")
    annotations = []
    for i, item in enumerate(data):
        _check_dimension_keys(item)
        try:
            annotations.append(AnnotationRecord.model_validate(item))
        except ValidationError as e:
            raise _invalid(f"annotation #{i}", e) from None
    return annotations


def parse_prompt_entry(data: Any) -> PromptEntry:
    if not isinstance(data, dict):
        raise MalformedJson("prompt entry must be a JSON object")
    for key in data:
        if key not in _PROMPT_KEYS:
            raise UnknownField(key)
    _check_dimension_keys(data)
    try:
        return PromptEntry.model_validate(data)
    except ValidationError as e:
        raise _invalid("prompt entry", e) from None
