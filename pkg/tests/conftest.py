import numpy as np
import pytest

from promptcast.data import SeriesCollection
from promptcast.model import ModelConfig, build_model
from promptcast.synth import SynthSpec, generate


def tiny_config(**kw):
    """Smallest multimodal model that still exercises every component."""
    base = dict(context_length=8, patch_len=4, d_ts=16, tsfm_layers=2, tsfm_heads=2, ts_prompt_length=2,
                d_v=8, vision_layers=2, vision_heads=2, vision_prompt_length=3, image_size=16, patch_size=8,
                d_t=12, text_layers=2, text_heads=2, text_prompt_length=2, max_text_len=6)
    base.update(kw)
    return ModelConfig(**base)


@pytest.fixture
def tiny_model():
    return build_model(tiny_config(), seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def sine_collection():
    values = generate(SynthSpec(num_series=6, length=80, kind="sine_mix", noise=0.05, seed=1))
    return SeriesCollection.for_dataset("synthetic", values, context_length=8)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Print and record one PASS/FAIL line, then assert."""
    def check(number, title, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}" + (f" ({detail})" if detail else "")
        print(line)
        ACCEPTANCE_LINES.append(line)
        assert ok, line
    return check


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
