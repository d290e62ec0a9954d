"""Prompt-injectable pre-norm transformer layers.

A stack runs ``O^k = f^k(P^k, O^{k-1})``: on every scheduled layer the rows
carrying the previous layer's prompts are stripped and fresh prompt rows are
prepended before the frozen layer runs. Unscheduled layers pass the sequence
through, including whatever prompt rows it currently carries.

Sequences are ``(s, d)`` or batched ``(B, s, d)``; prompts are ``(l, d)`` and
are broadcast over the batch.
"""

import enum
import functools
import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, DimensionError, NumericFault
from .tensor import Tensor, seeded_init


class ScheduleVariant(str, enum.Enum):
    FIRST = "first"
    ODD = "odd"
    TOP_HALF = "top_half"
    ALL = "all"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace(" ", "_").replace("-", "_")
        aliases = {"tophalf": "top_half", "top": "top_half"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            names = ", ".join(v.value for v in cls)
            raise ConfigError(f"unknown prompt schedule {value!r} (expected one of {names})") from None


@dataclass(frozen=True)
class PromptSchedule:
    variant: ScheduleVariant
    num_layers: int

    def __post_init__(self):
        object.__setattr__(self, "variant", ScheduleVariant.parse(self.variant))
        if self.num_layers < 0:
            raise ConfigError(f"num_layers must be >= 0, got {self.num_layers}")

    def layers(self):
        return resolve_schedule(self)


def resolve_schedule(schedule):
    """1-based layer indices receiving prompts.

    ``top_half`` is the ceil(L/2) layers nearest the output.
    """
    n = schedule.num_layers
    v = schedule.variant
    if n == 0:
        return frozenset()
    if v is ScheduleVariant.FIRST:
        return frozenset({1})
    if v is ScheduleVariant.ODD:
        return frozenset(range(1, n + 1, 2))
    if v is ScheduleVariant.TOP_HALF:
        return frozenset(range(n - math.ceil(n / 2) + 1, n + 1))
    return frozenset(range(1, n + 1))


@dataclass
class StackConfig:
    num_layers: int
    d_model: int
    num_heads: int
    causal: bool = False
    prompt_length: int = 0
    schedule: ScheduleVariant = ScheduleVariant.ALL

    def __post_init__(self):
        self.schedule = ScheduleVariant.parse(self.schedule)
        if self.num_layers < 0:
            raise ConfigError("num_layers must be >= 0")
        if self.num_heads < 1 or self.d_model % self.num_heads:
            raise ConfigError(f"d_model={self.d_model} is not divisible by num_heads={self.num_heads}")
        if self.prompt_length < 0:
            raise ConfigError("prompt_length must be >= 0")

    @property
    def prompt_schedule(self):
        return PromptSchedule(self.schedule, self.num_layers)


@dataclass
class LayerWeights:
    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    ln1_g: Tensor
    ln1_b: Tensor
    ln2_g: Tensor
    ln2_b: Tensor

    @classmethod
    def init(cls, d, rng):
        """Fixed random stand-in for pretrained weights (all frozen)."""
        s = 1.0 / math.sqrt(d)
        g = lambda shape, sigma: seeded_init(shape, ("gaussian", sigma), rng)  # noqa: E731
        z = lambda shape: seeded_init(shape, "zeros", rng)  # noqa: E731
        return cls(
            wq=g((d, d), s), bq=z((d,)),
            wk=g((d, d), s), bk=z((d,)),
            wv=g((d, d), s), bv=z((d,)),
            wo=g((d, d), s), bo=z((d,)),
            w1=g((d, 4 * d), s), b1=g((4 * d,), 0.02),
            w2=g((4 * d, d), 1.0 / math.sqrt(4 * d)), b2=z((d,)),
            ln1_g=Tensor(np.ones(d)), ln1_b=z((d,)),
            ln2_g=Tensor(np.ones(d)), ln2_b=z((d,)),
        )

    def named(self):
        return dict(vars(self))


@dataclass
class PromptSet:
    length: int
    schedule: PromptSchedule
    prompts: dict = field(default_factory=dict)

    def __post_init__(self):
        layers = self.schedule.layers()
        for k, p in self.prompts.items():
            if k not in layers:
                raise ConfigError(f"prompt for layer {k} is outside schedule {sorted(layers)}")
            if p.shape[0] != self.length:
                raise ConfigError(f"prompt for layer {k} has {p.shape[0]} rows, expected {self.length}")

    @classmethod
    def init(cls, schedule, length, width, rng, sigma=0.02, name="prompt"):
        prompts = {}
        if length > 0:
            for k in sorted(schedule.layers()):
                prompts[k] = seeded_init(
                    (length, width), ("gaussian", sigma), rng, requires_grad=True, name=f"{name}.{k}"
                )
        return cls(length, schedule, prompts)

    @classmethod
    def empty(cls, num_layers):
        return cls(0, PromptSchedule(ScheduleVariant.ALL, num_layers))

    def tensors(self):
        return [self.prompts[k] for k in sorted(self.prompts)]


@dataclass
class TransformerStack:
    config: StackConfig
    layers: list

    @classmethod
    def init(cls, config, rng):
        layers = [LayerWeights.init(config.d_model, rng.child(f"layer{k}")) for k in range(config.num_layers)]
        return cls(config, layers)


@functools.lru_cache(maxsize=64)
def sinusoidal_positions(n, d):
    """Fixed ``(n, d)`` sin/cos table (cached, read-only)."""
    pos = np.arange(n)[:, None]
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    table = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    table.flags.writeable = False
    return table


def inject_prompts(seq, prompt, carried_prompt_len=0):
    """Drop ``carried_prompt_len`` leading rows of ``seq`` and prepend ``prompt``."""
    s = seq.shape[-2]
    if carried_prompt_len > s:
        raise ContractError(f"carried prompt length {carried_prompt_len} exceeds sequence length {s}")
    if prompt.shape[-1] != seq.shape[-1]:
        raise DimensionError(f"prompt width {prompt.shape[-1]} != sequence width {seq.shape[-1]}")
    l = prompt.shape[0]  # noqa: E741
    if l == 0 and carried_prompt_len == 0:
        return seq
    content = seq[..., carried_prompt_len:, :] if carried_prompt_len else seq
    if l == 0:
        return content
    if seq.ndim == 3:
        prompt = T.broadcast_to(prompt, (seq.shape[0], l, seq.shape[-1]))
    return T.concat([prompt, content], axis=-2)


def layer_forward(x, w, causal=False, num_heads=1):
    """Pre-norm self-attention block followed by a pre-norm GELU MLP block."""
    d = w.wq.shape[0]
    if x.shape[-1] != d:
        raise DimensionError(f"layer expects width {d}, got input of shape {x.shape}")
    squeeze = x.ndim == 2
    if squeeze:
        x = T.reshape(x, (1,) + x.shape)

    h = T.layer_norm(x, w.ln1_g, w.ln1_b)
    q = T.linear(h, w.wq, w.bq)
    k = T.linear(h, w.wk, w.bk)
    v = T.linear(h, w.wv, w.bv)
    x = x + T.linear(T.attention(q, k, v, num_heads, causal), w.wo, w.bo)

    h2 = T.layer_norm(x, w.ln2_g, w.ln2_b)
    x = x + T.linear(T.gelu(T.linear(h2, w.w1, w.b1)), w.w2, w.b2)
    if squeeze:
        x = T.reshape(x, x.shape[1:])
    return x


def stack_forward(tokens, config, weights, prompts, name="stack"):
    """Run every layer, injecting prompts on scheduled layers.

    Returns the final hidden states, current prompt rows included.
    """
    if len(weights) != config.num_layers:
        raise ConfigError(f"{name}: {len(weights)} layer weights for num_layers={config.num_layers}")
    scheduled = prompts.schedule.layers() if prompts.length > 0 else frozenset()
    seq = tokens
    carried = 0
    for k in range(1, config.num_layers + 1):
        if k in scheduled:
            if k not in prompts.prompts:
                raise ConfigError(f"{name}: no prompt tensor for scheduled layer {k}")
            seq = inject_prompts(seq, prompts.prompts[k], carried)
            carried = prompts.length
        seq = layer_forward(seq, weights[k - 1], config.causal, config.num_heads)
        if not np.isfinite(seq.data).all():
            raise NumericFault(f"{name}: non-finite values after layer {k}")
    return seq
