"""Flat-file persistence: frame directories, prompt and annotation files,
evaluation records and the append-only run index."""

from __future__ import annotations

import asyncio
import json
import logging
import re
from pathlib import Path
from typing import Any, Iterable

import numpy as np
from PIL import Image, UnidentifiedImageError

from errors import (
    InvalidRecord, MalformedJson, MissingFrame, MissingManifest, UnsupportedFormat, VideoDimensionMismatch,
)
from flowcore import Frame
from schema import (
    AnnotationRecord, EvaluationRecord, PromptEntry, ToolReport, dump_record, parse_annotations, parse_prompt_entry,
    parse_record,
)
from utils import dump_json, dump_json_line, write_text_atomic

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
FRAME_EXTENSIONS = (".ppm", ".png")
_FRAME_NAME = re.compile(r"^(\d{6})\.([A-Za-z0-9]+)$")

STATUS_OK = "ok"
STATUS_ERROR = "error"


# --- videos ---

def _read_manifest(directory: Path) -> tuple[float, int, int, int]:
    path = directory / MANIFEST
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise MissingManifest(f"{directory} has no {MANIFEST}") from None
    except (OSError, json.JSONDecodeError) as e:
        raise MissingManifest(f"{path} is unreadable: {e}") from None
    try:
        fps, width, height, count = float(data["fps"]), int(data["width"]), int(data["height"]), int(data["count"])
    except (KeyError, TypeError, ValueError) as e:
        raise MissingManifest(f"{path} needs numeric fps, width, height and count: {e}") from None
    if fps <= 0 or width <= 0 or height <= 0 or count < 0:
        raise MissingManifest(f"{path} holds out-of-range values")
    return fps, width, height, count


def _read_frame(path: Path) -> np.ndarray:
    if path.suffix == ".ppm":
        with open(path, "rb") as f:
            if f.read(2) != b"P6":
                raise UnsupportedFormat(f"{path} is not a binary (P6) PPM")
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8).copy()
    except (OSError, UnidentifiedImageError) as e:
        raise UnsupportedFormat(f"cannot decode {path}: {e}") from None


def load_video(directory: Path) -> tuple[list[Frame], float]:
    """Frames ``000000.ppm`` / ``000000.png`` ... in index order, plus the manifest fps."""
    directory = Path(directory)
    fps, width, height, count = _read_manifest(directory)
    if count == 0:
        raise MissingFrame(0)

    available: dict[int, Path] = {}
    for path in directory.iterdir():
        match = _FRAME_NAME.match(path.name)
        if not match:
            continue
        if f".{match.group(2).lower()}" not in FRAME_EXTENSIONS:
            raise UnsupportedFormat(f"{path.name}: frames must be .ppm or .png")
        available.setdefault(int(match.group(1)), path)

    frames = []
    for i in range(count):
        if i not in available:
            raise MissingFrame(i)
        rgb = _read_frame(available[i])
        if rgb.shape[:2] != (height, width):
            raise VideoDimensionMismatch(
                f"frame {i} is {rgb.shape[1]}x{rgb.shape[0]}, manifest says {width}x{height}"
            )
        frames.append(Frame(rgb=rgb, index=i, timestamp=i / fps))
    return frames, fps


def write_video(directory: Path, frames: Iterable[np.ndarray | Frame], fps: float, fmt: str = "png") -> Path:
    """Write frames and a manifest in the layout ``load_video`` reads."""
    if fmt not in ("png", "ppm"):
        raise UnsupportedFormat(f"unknown frame format {fmt!r}")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    count, shape = 0, None
    for i, frame in enumerate(frames):
        rgb = frame.rgb if isinstance(frame, Frame) else np.asarray(frame, dtype=np.uint8)
        shape = rgb.shape
        Image.fromarray(rgb).save(directory / f"{i:06d}.{fmt}")
        count += 1
    height, width = (shape[0], shape[1]) if shape else (0, 0)
    manifest = {"fps": fps, "width": width, "height": height, "count": count}
    write_text_atomic(directory / MANIFEST, dump_json(manifest))
    return directory


# --- prompts and annotations ---

def _json_lines(path: Path) -> list[Any]:
    items = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            items.append(json.loads(line))
        except json.JSONDecodeError as e:
            raise MalformedJson(f"{path}:{lineno}: {e.msg}") from None
    return items


def _json_items(path: Path) -> list[Any]:
    if path.suffix == ".jsonl":
        return _json_lines(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise MalformedJson(f"{path}: {e.msg} at line {e.lineno}") from None
    return data if isinstance(data, list) else [data]


def load_prompt_entries(path: Path) -> list[PromptEntry]:
    """Prompt entries from a ``.jsonl`` file, a ``.json`` object/array or a directory of ``.json`` files."""
    path = Path(path)
    files = sorted(path.glob("*.json")) if path.is_dir() else [path]
    entries = []
    for file in files:
        entries.extend(parse_prompt_entry(item) for item in _json_items(file))
    seen: set[str] = set()
    for entry in entries:
        if entry.video_id in seen:
            raise InvalidRecord(f"video {entry.video_id} appears twice in {path}")
        seen.add(entry.video_id)
    return entries


def write_prompt_entries(path: Path, entries: Iterable[PromptEntry]) -> None:
    write_text_atomic(Path(path), "".join(dump_json_line(e.to_dict()) for e in entries))


def load_annotations(path: Path) -> list[AnnotationRecord]:
    path = Path(path)
    if path.suffix == ".jsonl":
        return parse_annotations(json.dumps(_json_lines(path)))
    return parse_annotations(path.read_bytes())


def resolve_video_dir(entry: PromptEntry, videos_root: Path | None) -> Path:
    root = Path(videos_root) if videos_root is not None else Path(".")
    return root / (entry.video_dir or entry.video_id)


# --- records and the run index ---

class RecordStore:
    """Output directory holding ``records/``, ``tools/`` and ``index.jsonl``."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.records_dir = self.root / "records"
        self.tools_dir = self.root / "tools"
        self.index_path = self.root / "index.jsonl"

    def record_path(self, video_id: str) -> Path:
        return self.records_dir / f"{video_id}.json"

    def write_record(self, record: EvaluationRecord) -> Path:
        path = self.record_path(record.video_id)
        write_text_atomic(path, dump_record(record))
        return path

    def write_tool_reports(self, video_id: str, reports: Iterable[ToolReport], errors: Iterable[str] = ()) -> Path:
        path = self.tools_dir / f"{video_id}.json"
        write_text_atomic(path, dump_json({
            "video_id": video_id,
            "tool_reports": [r.model_dump(mode="json") for r in reports],
            "errors": list(errors),
        }))
        return path

    def load_records(self) -> list[EvaluationRecord]:
        if not self.records_dir.is_dir():
            return []
        return [parse_record(p.read_bytes()) for p in sorted(self.records_dir.glob("*.json"))]

    def index_entries(self) -> list[dict]:
        if not self.index_path.exists():
            return []
        return _json_lines(self.index_path)

    def completed(self) -> set[str]:
        """Video ids whose latest index entry is ``ok`` and whose record file exists."""
        latest: dict[str, str] = {}
        for entry in self.index_entries():
            latest[entry["video_id"]] = entry.get("status", "")
        return {vid for vid, status in latest.items() if status == STATUS_OK and self.record_path(vid).exists()}

    def index_entry(self, record: EvaluationRecord) -> dict:
        return {
            "video_id": record.video_id,
            "model_id": record.model_id,
            "status": STATUS_ERROR if record.failed else STATUS_OK,
            "path": str(self.record_path(record.video_id).relative_to(self.root)),
        }


class IndexWriter:
    """Single writer task appending index lines fed through a queue."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self._queue: asyncio.Queue[dict | None] = asyncio.Queue()
        self._task: asyncio.Task | None = None

    async def __aenter__(self) -> "IndexWriter":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._task = asyncio.create_task(self._run())
        return self

    async def __aexit__(self, *exc) -> None:
        await self._queue.put(None)
        if self._task is not None:
            await self._task

    async def put(self, entry: dict) -> None:
        await self._queue.put(entry)

    async def _run(self) -> None:
        while True:
            entry = await self._queue.get()
            if entry is None:
                return
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(dump_json_line(entry))
