import json

import numpy as np
import pytest
from scipy import ndimage

from flowcore import Frame
from storage import write_video


def _texture(height: int, width: int, seed: int = 0, sigma: float = 3.0) -> np.ndarray:
    """Smooth random gray texture as an RGB uint8 buffer."""
    rng = np.random.default_rng(seed)
    noise = ndimage.gaussian_filter(rng.random((height, width)), sigma, mode="wrap")
    noise = (noise - noise.min()) / (noise.max() - noise.min())
    gray = (noise * 200 + 28).astype(np.uint8)
    return np.repeat(gray[..., None], 3, axis=2)


def _frames(buffers, fps: float = 8.0) -> list[Frame]:
    return [Frame(rgb=rgb, index=i, timestamp=i / fps) for i, rgb in enumerate(buffers)]


@pytest.fixture
def textured():
    return _texture


@pytest.fixture
def as_frames():
    return _frames


@pytest.fixture
def static_video():
    def make(n: int = 12, size: int = 64, seed: int = 0) -> list[Frame]:
        rgb = _texture(size, size, seed)
        return _frames([rgb] * n)
    return make


@pytest.fixture
def shifted_pair():
    """Frames a, b with b = a moved by (dx, dy): the true flow is (dx, dy) everywhere."""
    def make(dx: int, dy: int, size: int = 96, seed: int = 0) -> tuple[Frame, Frame]:
        a = _texture(size, size, seed)
        b = np.roll(a, (dy, dx), axis=(0, 1))
        return Frame(rgb=a, index=0), Frame(rgb=b, index=1)
    return make


@pytest.fixture
def pan_video():
    """Crops of a larger canvas sliding right by ``dx`` px per frame (content moves left)."""
    def make(n: int = 10, dx: int = 2, size: int = 96, seed: int = 0) -> list[Frame]:
        canvas = _texture(size, size + dx * n, seed)
        return _frames([canvas[:, t * dx:t * dx + size] for t in range(n)])
    return make


@pytest.fixture
def flicker_video():
    """Static texture whose ``patch``-sized cell ``cell`` shows other content on ``flicker_frames``."""
    def make(
        n: int = 12, size: int = 96, patch: int = 32, cell: int = 0, flicker_frames=(5, 6), seed: int = 0,
    ) -> list[Frame]:
        base = _texture(size, size, seed)
        other = _texture(size, size, seed + 1000)
        per_row = size // patch
        y0, x0 = (cell // per_row) * patch, (cell % per_row) * patch
        buffers = []
        for t in range(n):
            rgb = base.copy()
            if t in flicker_frames:
                rgb[y0:y0 + patch, x0:x0 + patch] = other[y0:y0 + patch, x0:x0 + patch]
            buffers.append(rgb)
        return _frames(buffers)
    return make


@pytest.fixture
def solid_frames():
    def make(colors) -> list[Frame]:
        return _frames([np.full((16, 16, 3), color, dtype=np.uint8) for color in colors])
    return make


class FakeClock:
    def __init__(self, start: float = 0.0):
        self.now = start
        self.sleeps: list[float] = []

    def __call__(self) -> float:
        return self.now

    async def sleep(self, seconds: float) -> None:
        self.sleeps.append(seconds)
        self.now += seconds


@pytest.fixture
def fake_clock():
    return FakeClock()


PROMPTS = [
    {"video_id": "v1", "model_id": "model-a", "raw_prompt": "A red ball rests on a wooden table."},
    {"video_id": "v2", "model_id": "model-b", "raw_prompt": "A red ball rests on a wooden table."},
    {"video_id": "v3", "model_id": "model-a", "raw_prompt": "Camera: slow pan left\nSubject: a red ball"},
]


@pytest.fixture
def batch_inputs(tmp_path):
    """Three 10-frame static videos plus a raw prompt file; returns (prompts, videos_root)."""
    videos = tmp_path / "videos"
    for i, entry in enumerate(PROMPTS):
        rgb = _texture(48, 48, seed=i)
        write_video(videos / entry["video_id"], [rgb] * 10, fps=8.0)
    prompts = tmp_path / "prompts.jsonl"
    prompts.write_text("".join(json.dumps(e) + "\n" for e in PROMPTS), encoding="utf-8")
    return prompts, videos
