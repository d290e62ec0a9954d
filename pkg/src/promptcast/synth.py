"""Deterministic synthetic series for desk-scale experiments."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .tensor import Rng

KINDS = ("sine_mix", "trend_season", "random_walk")


@dataclass(frozen=True)
class SynthSpec:
    num_series: int = 20
    length: int = 400
    kind: str = "sine_mix"
    noise: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown synthetic kind {self.kind!r} (expected one of {', '.join(KINDS)})")
        if self.num_series < 1 or self.length < 2:
            raise ConfigError("num_series must be >= 1 and length >= 2")
        if self.noise < 0:
            raise ConfigError("noise must be >= 0")


def _sine_mix(rng, n, length):
    # Two integer periods shared by every series (a common seasonality), so a
    # noiseless series repeats exactly; amplitudes and phases vary per series.
    t = np.arange(length)
    p1 = int(rng.integers(12, 33))
    p2 = int(rng.integers(4, 11))
    amp = np.column_stack([rng.uniform(0.5, 1.5, (n,)), rng.uniform(0.1, 0.5, (n,))])
    phase = rng.uniform(0, 2 * np.pi, (n, 2))
    out = (amp[:, :1] * np.sin(2 * np.pi * t / p1 + phase[:, :1])
           + amp[:, 1:] * np.sin(2 * np.pi * t / p2 + phase[:, 1:]))
    return out, (p1, p2)


def generate(spec):
    """Array of shape ``(num_series, length)``."""
    rng = Rng(spec.seed).child(f"synth.{spec.kind}")
    n, length = spec.num_series, spec.length
    t = np.arange(length)
    if spec.kind == "sine_mix":
        clean, _ = _sine_mix(rng, n, length)
    elif spec.kind == "trend_season":
        slope = rng.uniform(-0.01, 0.01, (n, 1))
        level = rng.uniform(-1.0, 1.0, (n, 1))
        period = rng.integers(6, 25, (n, 1))
        amp = rng.uniform(0.5, 1.5, (n, 1))
        clean = level + slope * t + amp * np.sin(2 * np.pi * t / period)
    else:
        steps = rng.normal(1.0, (n, length))
        steps[:, 0] = 0.0
        clean = np.cumsum(steps, axis=1)
    if spec.noise > 0:
        clean = clean + rng.child("noise").normal(spec.noise, (n, length))
    return clean


def sine_periods(spec):
    """The (long, short) integer periods shared by a ``sine_mix`` dataset."""
    if spec.kind != "sine_mix":
        raise ConfigError("periods exist only for sine_mix")
    return _sine_mix(Rng(spec.seed).child(f"synth.{spec.kind}"), spec.num_series, spec.length)[1]


def to_csv(values):
    """Wide CSV, one series per row, shortest round-trip float formatting."""
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in np.asarray(values))


def write_csv(spec, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_csv(generate(spec)), encoding="utf-8")
    return path
