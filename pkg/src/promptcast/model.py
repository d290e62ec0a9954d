"""Multimodal prompted forecaster: patch embedding, interaction layers,
fusion, the prompted time-series stack and the forecast head.

Forward pass for a batch of standardized contexts ``(B, C)``::

    image    -> vision stack (prompted) -> I_v ─┐
    text     -> text stack (prompted)   -> I_t ─┼─> [O_v'; O_t'; O_ts] -> TS stack (prompted) -> head
    contexts -> patch embedding ────────────────┘

The head reads only the trailing ``C / patch_len`` rows (the time-series
positions) and maps each to one patch of the horizon, so ``H == C``.
"""

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import tensor as T
from .encoders import TextEncoder, VisionEncoder, text_forward, tokenize, vision_forward
from .errors import ConfigError, DimensionError, InputError, NumericFault
from .render import render_batch
from .tensor import Rng, Tensor, seeded_init
from .transformer import PromptSet, StackConfig, TransformerStack, layer_forward, sinusoidal_positions, stack_forward

FORMAT = "promptcast-model"
FORMAT_VERSION = 1


@dataclass
class ModelConfig:
    context_length: int = 32
    patch_len: int = 0  # 0 -> context_length // 4
    tsfm_variant: str = "timer"  # timer: causal; chronos: bidirectional
    d_ts: int = 64
    tsfm_layers: int = 2
    tsfm_heads: int = 4
    ts_prompt_length: int = 4
    schedule: str = "all"
    use_vision: bool = True
    d_v: int = 32
    vision_layers: int = 2
    vision_heads: int = 4
    vision_prompt_length: int = 10
    image_size: int = 64
    patch_size: int = 8
    line_thickness: int = 1
    use_text: bool = True
    d_t: int = 48
    text_layers: int = 2
    text_heads: int = 4
    text_prompt_length: int = 4
    max_text_len: int = 32
    init_sigma: float = 0.02
    backbone_seed: int = 0  # frozen "pretrained" weights; independent of the run seed

    def __post_init__(self):
        if self.patch_len == 0:
            self.patch_len = max(1, self.context_length // 4)
        if self.context_length < 1 or self.context_length % self.patch_len:
            raise ConfigError(
                f"context_length={self.context_length} is not divisible by patch_len={self.patch_len}"
            )
        if self.tsfm_variant not in ("timer", "chronos"):
            raise ConfigError(f"tsfm_variant must be 'timer' or 'chronos', got {self.tsfm_variant!r}")
        if self.image_size % self.patch_size:
            raise ConfigError(f"image_size={self.image_size} is not divisible by patch_size={self.patch_size}")

    @property
    def horizon(self):
        return self.context_length

    @property
    def num_ts_patches(self):
        return self.context_length // self.patch_len

    def stack(self, which):
        if which == "tsfm":
            return StackConfig(self.tsfm_layers, self.d_ts, self.tsfm_heads, self.tsfm_variant == "timer",
                               self.ts_prompt_length, self.schedule)
        if which == "vision":
            return StackConfig(self.vision_layers, self.d_v, self.vision_heads, False,
                               self.vision_prompt_length, self.schedule)
        if which == "text":
            return StackConfig(self.text_layers, self.d_t, self.text_heads, False,
                               self.text_prompt_length, self.schedule)
        raise KeyError(which)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class PatchEmbedder:
    patch_len: int
    weight: Tensor  # (patch_len, d_ts), frozen
    bias: Tensor


@dataclass
class InteractionLayer:
    weight: Tensor  # (d_src, d_ts), trainable
    bias: Tensor

    @classmethod
    def init(cls, d_src, d_ts, rng, sigma=0.02, name="interaction"):
        return cls(
            seeded_init((d_src, d_ts), ("gaussian", sigma), rng, requires_grad=True, name=f"{name}.weight"),
            seeded_init((d_ts,), "zeros", rng, requires_grad=True, name=f"{name}.bias"),
        )

    @property
    def num_params(self):
        return self.weight.data.size + self.bias.data.size


@dataclass
class ForecastHead:
    weight: Tensor  # (d_ts, patch_len), trainable
    bias: Tensor


@dataclass
class MultimodalForecaster:
    config: ModelConfig
    seed: int
    patch: PatchEmbedder
    tsfm: TransformerStack
    ts_prompts: PromptSet
    head: ForecastHead
    vision: VisionEncoder = None
    text: TextEncoder = None
    iv: InteractionLayer = None
    it: InteractionLayer = None

    def named_tensors(self):
        """Every tensor in the model keyed by a stable dotted name."""
        out = {
            "patch.weight": self.patch.weight,
            "patch.bias": self.patch.bias,
            "head.weight": self.head.weight,
            "head.bias": self.head.bias,
        }
        for k, p in self.ts_prompts.prompts.items():
            out[f"tsfm.prompt.{k}"] = p
        for i, lw in enumerate(self.tsfm.layers, 1):
            for n, t in lw.named().items():
                out[f"tsfm.layer{i}.{n}"] = t
        if self.vision is not None:
            out["vision.patch.weight"] = self.vision.patch_w
            out["vision.patch.bias"] = self.vision.patch_b
            for k, p in self.vision.prompts.prompts.items():
                out[f"vision.prompt.{k}"] = p
            for i, lw in enumerate(self.vision.stack.layers, 1):
                for n, t in lw.named().items():
                    out[f"vision.layer{i}.{n}"] = t
            out["iv.weight"] = self.iv.weight
            out["iv.bias"] = self.iv.bias
        if self.text is not None:
            out["text.embed"] = self.text.token_embed
            for k, p in self.text.prompts.prompts.items():
                out[f"text.prompt.{k}"] = p
            for i, lw in enumerate(self.text.stack.layers, 1):
                for n, t in lw.named().items():
                    out[f"text.layer{i}.{n}"] = t
            out["it.weight"] = self.it.weight
            out["it.bias"] = self.it.bias
        return out

    def trainable(self):
        return {n: t for n, t in self.named_tensors().items() if t.requires_grad}

    def frozen(self):
        return {n: t for n, t in self.named_tensors().items() if not t.requires_grad}

    def zero_grad(self):
        for t in self.trainable().values():
            t.zero_grad()


def build_model(config=None, seed=0):
    """Frozen weights come from ``config.backbone_seed``; trainable ones from ``seed``."""
    config = config or ModelConfig()
    frozen = Rng(config.backbone_seed).child("backbone")
    train = Rng(seed).child("trainable")
    sigma = config.init_sigma
    ts_cfg = config.stack("tsfm")
    fr_patch = frozen.child("tsfm.patch")
    patch = PatchEmbedder(
        config.patch_len,
        seeded_init((config.patch_len, config.d_ts), ("gaussian", 1.0 / np.sqrt(config.patch_len)), fr_patch),
        seeded_init((config.d_ts,), ("gaussian", 0.02), fr_patch),
    )
    tsfm = TransformerStack.init(ts_cfg, frozen.child("tsfm.stack"))
    ts_prompts = PromptSet.init(ts_cfg.prompt_schedule, ts_cfg.prompt_length, config.d_ts,
                                train.child("tsfm.prompt"), sigma=sigma, name="tsfm.prompt")
    h_rng = train.child("head")
    head = ForecastHead(
        seeded_init((config.d_ts, config.patch_len), ("gaussian", sigma), h_rng, requires_grad=True,
                    name="head.weight"),
        seeded_init((config.patch_len,), "zeros", h_rng, requires_grad=True, name="head.bias"),
    )
    model = MultimodalForecaster(config, int(seed), patch, tsfm, ts_prompts, head)
    if config.use_vision:
        model.vision = VisionEncoder.init(config.stack("vision"), frozen.child("vision"), train.child("vision.prompt"),
                                          patch_size=config.patch_size, image_size=config.image_size, sigma=sigma)
        model.iv = InteractionLayer.init(config.d_v, config.d_ts, train.child("iv"), sigma, name="iv")
    if config.use_text:
        model.text = TextEncoder.init(config.stack("text"), frozen.child("text"), train.child("text.prompt"),
                                      max_text_len=config.max_text_len, sigma=sigma)
        model.it = InteractionLayer.init(config.d_t, config.d_ts, train.child("it"), sigma, name="it")
    return model


# ------------------------------------------------------------------ pieces


def _check_finite(t, where):
    if not np.isfinite(t.data).all():
        raise NumericFault(f"non-finite values in {where}")
    return t


def patch_embed(x_ts, embedder):
    """Consecutive non-overlapping patches, linearly embedded, plus positions."""
    x = np.asarray(x_ts, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None]
    b, c = x.shape
    p = embedder.patch_len
    if c % p:
        raise DimensionError(f"context length {c} is not divisible by patch length {p}")
    patches = Tensor(x.reshape(b, c // p, p))
    out = T.linear(patches, embedder.weight, embedder.bias)
    out = out + sinusoidal_positions(c // p, embedder.weight.shape[1])
    return T.reshape(out, out.shape[1:]) if single else out


def project_modality(o, layer):
    if o.shape[-1] != layer.weight.shape[0]:
        raise DimensionError(f"interaction layer expects width {layer.weight.shape[0]}, got {o.shape}")
    return T.linear(o, layer.weight, layer.bias)


def fuse(o_v, o_t, o_ts):
    """Row concatenation in order vision, text, time series.

    Returns the fused tensor and the ``(start, stop)`` row range of each segment.
    """
    width = o_ts.shape[-1]
    parts, segments, start = [], {}, 0
    for name, t in (("vision", o_v), ("text", o_t), ("ts", o_ts)):
        if t is None:
            continue
        if t.shape[-1] != width:
            raise DimensionError(f"{name} rows have width {t.shape[-1]}, expected {width}")
        if o_ts.ndim == 3 and t.ndim == 2:
            t = T.broadcast_to(t, (o_ts.shape[0],) + t.shape)
        parts.append(t)
        segments[name] = (start, start + t.shape[-2])
        start += t.shape[-2]
    return T.concat(parts, axis=-2), segments


def apply_head(rows, head):
    """Map ``(B, n, d_ts)`` time-series rows to a ``(B, n * patch_len)`` forecast."""
    y = T.linear(rows, head.weight, head.bias)
    return T.reshape(y, (y.shape[0], y.shape[1] * y.shape[2]))


# ------------------------------------------------------------------ forward


def forward(model, contexts, description=None):
    """Batched forecast in standardized space, shape ``(B, H)``."""
    cfg = model.config
    x = np.atleast_2d(np.asarray(contexts, dtype=np.float64))
    if x.shape[1] != cfg.context_length:
        raise DimensionError(f"expected contexts of length {cfg.context_length}, got {x.shape[1]}")
    o_v = o_t = None
    if model.vision is not None:
        imgs = render_batch(x, cfg.image_size, cfg.image_size, cfg.line_thickness)
        o_v = project_modality(_check_finite(vision_forward(imgs, model.vision), "vision encoder"), model.iv)
    if model.text is not None:
        if not description:
            raise InputError("text modality is enabled but no description was given")
        ids = tokenize(description, model.text.max_text_len)
        o_t = project_modality(_check_finite(text_forward(ids, model.text), "text encoder"), model.it)
    o_ts = patch_embed(x, model.patch)
    o_m, _ = fuse(o_v, o_t, o_ts)
    o_m = stack_forward(o_m, model.tsfm.config, model.tsfm.layers, model.ts_prompts, name="tsfm")
    n = cfg.num_ts_patches
    y = apply_head(o_m[:, -n:, :], model.head)
    return _check_finite(y, "forecast head")


def forecast_window(x_ts, description, model):
    """Single-window forecast as a 1-D array of length ``H``."""
    with T.no_grad():
        return forward(model, np.asarray(x_ts, dtype=np.float64)[None], description).data[0].copy()


def bare_tsfm_forward(model, contexts):
    """The time-series backbone alone: patch embedding, unprompted layers, head."""
    x = np.atleast_2d(np.asarray(contexts, dtype=np.float64))
    h = patch_embed(x, model.patch)
    cfg = model.tsfm.config
    for w in model.tsfm.layers:
        h = layer_forward(h, w, cfg.causal, cfg.num_heads)
    return apply_head(h, model.head)


# ------------------------------------------------------------------ persistence


def save_model(model, path):
    """JSON document: format tag, config, seed and every tensor as shape + flat data."""
    doc = {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "seed": model.seed,
        "config": asdict(model.config),
        "tensors": {
            name: {"shape": list(t.shape), "trainable": t.requires_grad, "data": t.data.ravel().tolist()}
            for name, t in sorted(model.named_tensors().items())
        },
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_model(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != FORMAT:
        raise InputError(f"{path} is not a {FORMAT} file")
    if doc.get("version") != FORMAT_VERSION:
        raise InputError(f"unsupported model format version {doc.get('version')}")
    model = build_model(ModelConfig.from_dict(doc["config"]), doc["seed"])
    tensors = model.named_tensors()
    missing = set(tensors) ^ set(doc["tensors"])
    if missing:
        raise InputError(f"tensor set mismatch: {sorted(missing)}")
    for name, t in tensors.items():
        rec = doc["tensors"][name]
        data = np.asarray(rec["data"], dtype=np.float64).reshape(rec["shape"])
        if data.shape != t.shape:
            raise InputError(f"{name}: stored shape {data.shape} != expected {t.shape}")
        t.data = data
    return model
