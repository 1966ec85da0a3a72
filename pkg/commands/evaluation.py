import argparse
import asyncio
import logging
import sys
from pathlib import Path

from agent import JudgeConfig, expand_prompt, judge_video, structure_prompt
from backends import ChatBackend, make_backends
from config import RunConfig
from errors import AgentError, ConfigError, FlowError, SchemaError, ToolError, VideoLoadError
from schema import EvaluationRecord, PromptEntry, TaskMode
from storage import (
    IndexWriter, RecordStore, load_prompt_entries, load_video, resolve_video_dir, write_prompt_entries,
)
from temporal_tools import MEAN_FRAME_DIFFERENCE
from utils import dump_json_line, load_rgb_image, utc_now_iso

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARTIAL = 2
EXIT_CONFIG = 3
EXIT_NO_INPUTS = 4

CATEGORY = "Evaluation"


def _require_prompts(config: RunConfig) -> list[PromptEntry]:
    if config.prompts is None:
        raise ConfigError("no prompt file given (use --prompts or set 'prompts' in the config)")
    if not config.prompts.exists():
        raise ConfigError(f"prompt file {config.prompts} does not exist")
    return load_prompt_entries(config.prompts)


def _prompt_base_dir(config: RunConfig) -> Path:
    path = config.prompts or Path(".")
    return path if path.is_dir() else path.parent


def _reference_path(entry: PromptEntry, base_dir: Path) -> Path | None:
    if not entry.reference_image:
        return None
    path = Path(entry.reference_image)
    return path if path.is_absolute() else base_dir / path


async def _gather_bounded(workers: int, coros) -> list:
    semaphore = asyncio.Semaphore(workers)

    async def bounded(coro):
        async with semaphore:
            return await coro

    return await asyncio.gather(*(bounded(c) for c in coros))


# --- structure / expand ---

async def _structure_all(config: RunConfig, output: Path) -> int:
    entries = _require_prompts(config)
    if not entries:
        logger.error("no prompts in %s", config.prompts)
        return EXIT_NO_INPUTS
    base_dir = _prompt_base_dir(config)
    structurer, _ = make_backends(config)

    async def one(entry: PromptEntry) -> tuple[PromptEntry, bool]:
        if entry.is_structured:
            return entry, True
        try:
            result = await structure_prompt(
                entry.raw_prompt, structurer, task_mode=entry.task_mode,
                reference_image=entry.reference_image, video_id=entry.video_id, base_dir=base_dir,
            )
        except (AgentError, SchemaError) as e:
            logger.error("%s: structuring failed: %s", entry.video_id, e)
            return entry, False
        if result.retry_count:
            logger.info("%s: structured after %d retries", entry.video_id, result.retry_count)
        return entry.with_prompt(result.prompt), True

    async with structurer:
        results = await _gather_bounded(config.workers, [one(e) for e in entries])
    write_prompt_entries(output, [entry for entry, _ in results])
    logger.info("wrote %d prompts to %s", len(results), output)
    return EXIT_OK if all(ok for _, ok in results) else EXIT_PARTIAL


async def _expand_all(config: RunConfig, texts: list[tuple[str | None, str]]) -> int:
    if not texts:
        return EXIT_NO_INPUTS
    structurer, _ = make_backends(config)
    failed = 0
    async with structurer:
        for video_id, raw in texts:
            try:
                expanded = await expand_prompt(raw, structurer)
            except (AgentError, SchemaError) as e:
                logger.error("%s: expansion failed: %s", video_id or "prompt", e)
                failed += 1
                continue
            if video_id is None:
                print(expanded)
            else:
                sys.stdout.write(dump_json_line({"video_id": video_id, "raw_prompt": raw, "expanded": expanded}))
    return EXIT_PARTIAL if failed else EXIT_OK


# --- tools ---

def _tool_targets(config: RunConfig) -> list[tuple[str, Path]]:
    if config.prompts is not None:
        return [(e.video_id, resolve_video_dir(e, config.videos_root)) for e in _require_prompts(config)]
    if config.videos_root is None or not config.videos_root.is_dir():
        raise ConfigError("tools needs --prompts or an existing --videos-root")
    return [(p.name, p) for p in sorted(config.videos_root.iterdir()) if (p / "manifest.json").exists()]


async def _run_tools(config: RunConfig) -> int:
    targets = _tool_targets(config)
    if not targets:
        logger.error("no videos to analyze")
        return EXIT_NO_INPUTS
    store = RecordStore(config.output_dir)
    forced = config.model_copy(update={"extra_tools": (MEAN_FRAME_DIFFERENCE,)})

    async def one(video_id: str, directory: Path) -> bool:
        try:
            frames, fps = await asyncio.to_thread(load_video, directory)
        except VideoLoadError as e:
            logger.error("%s: %s", video_id, e)
            store.write_tool_reports(video_id, [], [f"load: {e}"])
            return False
        suite = JudgeConfig.from_run_config(forced, video_id).tools
        reports, errors = await asyncio.to_thread(suite.run, frames, fps)
        store.write_tool_reports(video_id, reports, errors)
        for report in reports:
            print(f"{video_id}\t{report.tool_name}\t{report.raw_score:.4f}\t{report.band}")
        return not errors

    results = await _gather_bounded(config.workers, [one(vid, d) for vid, d in targets])
    return EXIT_OK if all(results) else EXIT_PARTIAL


# --- judge ---

def _failure_record(entry: PromptEntry, prompt, error: Exception, backends: dict[str, str]) -> EvaluationRecord:
    now = utc_now_iso()
    return EvaluationRecord(
        video_id=entry.video_id,
        model_id=entry.model_id,
        structured_prompt=prompt,
        backends=backends,
        error=f"{type(error).__name__}: {error}",
        started_at=now,
        finished_at=now,
    )


async def evaluate_entry(
    entry: PromptEntry, config: RunConfig, structurer: ChatBackend, judger: ChatBackend,
) -> EvaluationRecord:
    """Structure (unless pre-structured), load and judge one video; failures land in the record."""
    base_dir = _prompt_base_dir(config)
    backends = {"structurer": structurer.identity, "judger": judger.identity}
    prompt = None
    retries = 0
    try:
        if entry.is_structured:
            prompt = entry.structured(base_dir)
        else:
            result = await structure_prompt(
                entry.raw_prompt, structurer, task_mode=entry.task_mode,
                reference_image=entry.reference_image, video_id=entry.video_id, base_dir=base_dir,
            )
            prompt, retries = result.prompt, result.retry_count
        frames, fps = await asyncio.to_thread(load_video, resolve_video_dir(entry, config.videos_root))
        reference = None
        if prompt.task_mode is TaskMode.I2V:
            reference = await asyncio.to_thread(load_rgb_image, _reference_path(entry, base_dir))
        return await judge_video(
            prompt, frames, fps, judger, JudgeConfig.from_run_config(config, entry.video_id),
            video_id=entry.video_id, model_id=entry.model_id, reference=reference,
            backends=backends, prior_retries=retries,
        )
    except (AgentError, SchemaError, VideoLoadError, FlowError, ToolError, OSError) as e:
        logger.error("%s: evaluation failed: %s", entry.video_id, e)
        return _failure_record(entry, prompt, e, backends)


async def run_batch(
    config: RunConfig, backends: tuple[ChatBackend, ChatBackend] | None = None,
) -> int:
    """Evaluate every prompt entry, writing one record per video and an index line each.

    Videos whose latest index status is ``ok`` are skipped unless ``force`` is set.
    """
    entries = _require_prompts(config)
    if config.task_mode is not None:
        entries = [e for e in entries if e.task_mode is config.task_mode]
    if not entries:
        logger.error("no prompts to evaluate in %s", config.prompts)
        return EXIT_NO_INPUTS
    if config.videos_root is not None and not config.videos_root.is_dir():
        raise ConfigError(f"videos root {config.videos_root} is not a directory")

    store = RecordStore(config.output_dir)
    done = set() if config.force else store.completed()
    todo = [e for e in entries if e.video_id not in done]
    if len(todo) < len(entries):
        logger.info("skipping %d already evaluated videos", len(entries) - len(todo))
    if not todo:
        return EXIT_OK

    structurer, judger = backends or make_backends(config)
    semaphore = asyncio.Semaphore(config.workers)

    async with structurer, judger, IndexWriter(store.index_path) as index:
        async def one(entry: PromptEntry) -> bool:
            async with semaphore:
                record = await evaluate_entry(entry, config, structurer, judger)
                store.write_record(record)
                await index.put(store.index_entry(record))
                logger.info("%s: %s", entry.video_id, "failed" if record.failed else "done")
                return not record.failed

        results = await asyncio.gather(*(one(e) for e in todo))

    failed = results.count(False)
    if failed:
        logger.warning("%d of %d videos failed", failed, len(todo))
        return EXIT_PARTIAL
    return EXIT_OK


# --- registration ---

def _add_input_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--prompts", type=Path, help="prompt file (.jsonl / .json) or directory of .json files")
    parser.add_argument("--videos-root", type=Path, help="directory holding one frame directory per video")


def setup_evaluation_commands(subparsers, common: argparse.ArgumentParser) -> None:
    """Register structure, expand, tools and judge."""

    structure = subparsers.add_parser(
        "structure", parents=[common], help="Split raw prompts into per-dimension instructions",
    )
    structure.add_argument("--prompts", type=Path)
    structure.add_argument("--output", type=Path, help="structured prompt file (default <output-dir>/structured_prompts.jsonl)")
    structure.set_defaults(
        category=CATEGORY,
        handler=lambda args, config: asyncio.run(
            _structure_all(config, args.output or config.output_dir / "structured_prompts.jsonl")
        ),
    )

    expand = subparsers.add_parser("expand", parents=[common], help="Expand short prompts into five-component prompts")
    expand.add_argument("--prompt", help="a single raw prompt; the expansion is printed")
    expand.add_argument("--prompts", type=Path)

    def handle_expand(args, config: RunConfig) -> int:
        if args.prompt is not None:
            texts = [(None, args.prompt)]
        else:
            texts = [(e.video_id, e.raw_prompt) for e in _require_prompts(config)]
        return asyncio.run(_expand_all(config, texts))

    expand.set_defaults(category=CATEGORY, handler=handle_expand)

    tools = subparsers.add_parser("tools", parents=[common], help="Compute tool reports only, without the judger")
    _add_input_args(tools)
    tools.add_argument("--flow-root", type=Path, help="precomputed .flo files, one directory per video")
    tools.set_defaults(category=CATEGORY, handler=lambda args, config: asyncio.run(_run_tools(config)))

    judge = subparsers.add_parser("judge", parents=[common], help="Full evaluation: structure, tools and judger")
    _add_input_args(judge)
    judge.add_argument("--flow-root", type=Path, help="precomputed .flo files, one directory per video")
    judge.add_argument("--task-mode", choices=[m.value for m in TaskMode])
    judge.set_defaults(category=CATEGORY, handler=lambda args, config: asyncio.run(run_batch(config)))
