import json
import os
from pathlib import Path
from typing import Any, Literal

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from errors import ConfigError
from flowcore import FlowParams, HomographyParams
from schema import BandTable, TaskMode
from temporal_tools import (
    DEFAULT_DYNAMIC_BANDS, DEFAULT_FRAME_DIFF_BANDS, DEFAULT_SUBJECT_BANDS, DEFAULT_TEMPORAL_BANDS,
    DEFAULT_THETA, PatchGridConfig,
)

load_dotenv()

# Name of the environment variable holding the chat API key
API_KEY_ENV = os.getenv("VGE_API_KEY_ENV", "VGE_API_KEY")

# OpenAI-compatible chat-completions endpoint used when the config file names none
DEFAULT_ENDPOINT = os.getenv("VGE_ENDPOINT", "https://api.openai.com/v1/chat/completions")

STRUCTURER_MODEL = os.getenv("VGE_STRUCTURER_MODEL", "gpt-4o")
JUDGER_MODEL = os.getenv("VGE_JUDGER_MODEL", "qwen-vl-max")

LOG_LEVEL = os.getenv("VGE_LOG_LEVEL", "INFO").upper()

# Frames handed to the judger per video
DEFAULT_FRAME_SAMPLES = 8

# Structured-output re-prompts after the first attempt
DEFAULT_MAX_RETRIES = 3


class BackendConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    endpoint: str = DEFAULT_ENDPOINT
    model: str
    api_key_env: str = API_KEY_ENV
    max_images: int = Field(default=16, ge=1)
    max_retries: int = Field(default=DEFAULT_MAX_RETRIES, ge=0)
    transport_attempts: int = Field(default=4, ge=1)
    requests_per_minute: int = Field(default=60, ge=1)
    timeout: float = Field(default=120.0, gt=0)
    max_tokens: int = Field(default=2048, ge=1)

    def api_key(self) -> str | None:
        return os.getenv(self.api_key_env) or None


class RunConfig(BaseModel):
    """Everything a batch run needs; loaded from ``--config`` JSON plus CLI flags."""
    model_config = ConfigDict(extra="forbid")

    backend: Literal["real", "mock"] = "real"
    mock_script: Path | None = None
    structurer: BackendConfig = Field(default_factory=lambda: BackendConfig(model=STRUCTURER_MODEL))
    judger: BackendConfig = Field(default_factory=lambda: BackendConfig(model=JUDGER_MODEL))
    workers: int = Field(default=4, ge=1)
    seed: int = Field(default=0, ge=0)
    force: bool = False

    patch_grid: PatchGridConfig = Field(default_factory=PatchGridConfig)
    flow: FlowParams = Field(default_factory=FlowParams)
    homography: HomographyParams = Field(default_factory=HomographyParams)
    theta: float = Field(default=DEFAULT_THETA, gt=0)
    segment_agg: Literal["mean", "max"] = "mean"
    frame_samples: int = Field(default=DEFAULT_FRAME_SAMPLES, ge=1)

    temporal_bands: BandTable = DEFAULT_TEMPORAL_BANDS
    dynamic_bands: BandTable = DEFAULT_DYNAMIC_BANDS
    subject_bands: BandTable = DEFAULT_SUBJECT_BANDS
    frame_diff_bands: BandTable = DEFAULT_FRAME_DIFF_BANDS

    use_structured_content: bool = True
    attach_tools: bool = True
    attach_tools_to_all: bool = False
    compensate_camera: bool = True
    extra_tools: tuple[Literal["mean_frame_difference"], ...] = ()

    prompts: Path | None = None
    videos_root: Path | None = None
    flow_root: Path | None = None
    annotations: Path | None = None
    output_dir: Path = Path("out")
    task_mode: TaskMode | None = None

    @model_validator(mode="after")
    def _check_mock(self) -> "RunConfig":
        if self.mock_script is not None and self.backend != "mock":
            raise ValueError("mock_script is only valid with backend 'mock'")
        return self


def load_run_config(path: Path | None = None, overrides: dict[str, Any] | None = None) -> RunConfig:
    """Build a RunConfig from defaults, an optional JSON file, then CLI overrides."""
    data: dict[str, Any] = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first.get("loc", ()))
        raise ConfigError(f"invalid configuration at {where or '<root>'}: {first.get('msg')}") from None
