"""Frozen vision and text encoders with per-layer soft prompts."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import DimensionError, InputError
from .render import RasterImage
from .tensor import Tensor, seeded_init
from .transformer import PromptSet, TransformerStack, sinusoidal_positions, stack_forward

PAD_ID = 256
VOCAB_SIZE = 257


def patchify_image(img, patch_size):
    """Non-overlapping patches in row-major grid order, each flattened row-major.

    Accepts a :class:`RasterImage`, a ``(h, w)`` array or a ``(B, h, w)`` batch.
    """
    px = img.pixels if isinstance(img, RasterImage) else np.asarray(img, dtype=np.float64)
    single = px.ndim == 2
    if single:
        px = px[None]
    b, h, w = px.shape
    p = patch_size
    if h % p or w % p:
        raise DimensionError(f"image {h}x{w} is not divisible by patch size {p}")
    out = px.reshape(b, h // p, p, w // p, p).transpose(0, 1, 3, 2, 4).reshape(b, (h // p) * (w // p), p * p)
    return out[0] if single else out


@dataclass
class VisionEncoder:
    patch_size: int
    image_size: int
    patch_w: Tensor
    patch_b: Tensor
    stack: TransformerStack
    prompts: PromptSet

    @classmethod
    def init(cls, config, frozen_rng, prompt_rng, patch_size=8, image_size=64, sigma=0.02):
        p2 = patch_size * patch_size
        return cls(
            patch_size=patch_size,
            image_size=image_size,
            patch_w=seeded_init((p2, config.d_model), ("gaussian", 1.0 / np.sqrt(p2)), frozen_rng.child("patch")),
            patch_b=seeded_init((config.d_model,), ("gaussian", 0.02), frozen_rng.child("patch_b")),
            stack=TransformerStack.init(config, frozen_rng.child("stack")),
            prompts=PromptSet.init(config.prompt_schedule, config.prompt_length, config.d_model, prompt_rng,
                                   sigma=sigma, name="vision.prompt"),
        )

    @property
    def num_patches(self):
        return (self.image_size // self.patch_size) ** 2


def vision_forward(img, enc):
    """Patch tokens (plus positions) through the prompted vision stack."""
    patches = patchify_image(img, enc.patch_size)
    tokens = T.linear(Tensor(patches), enc.patch_w, enc.patch_b)
    tokens = tokens + sinusoidal_positions(patches.shape[-2], enc.stack.config.d_model)
    return stack_forward(tokens, enc.stack.config, enc.stack.layers, enc.prompts, name="vision")


def tokenize(text, max_text_len):
    """UTF-8 bytes as ids 0-255, truncated or padded with ``PAD_ID``."""
    if not text:
        raise InputError("text must be non-empty")
    ids = list(text.encode("utf-8"))[:max_text_len]
    return ids + [PAD_ID] * (max_text_len - len(ids))


def detokenize(ids):
    return bytes(i for i in ids if i != PAD_ID).decode("utf-8", errors="replace")


@dataclass
class TextEncoder:
    max_text_len: int
    token_embed: Tensor
    stack: TransformerStack
    prompts: PromptSet

    @classmethod
    def init(cls, config, frozen_rng, prompt_rng, max_text_len=32, sigma=0.02):
        return cls(
            max_text_len=max_text_len,
            token_embed=seeded_init((VOCAB_SIZE, config.d_model), ("gaussian", 1.0), frozen_rng.child("embed")),
            stack=TransformerStack.init(config, frozen_rng.child("stack")),
            prompts=PromptSet.init(config.prompt_schedule, config.prompt_length, config.d_model, prompt_rng,
                                   sigma=sigma, name="text.prompt"),
        )


def text_forward(ids, enc):
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= VOCAB_SIZE):
        raise InputError(f"token ids must lie in [0, {VOCAB_SIZE}), got range [{ids.min()}, {ids.max()}]")
    # frozen table: a plain gather, no gradient needed
    tokens = Tensor(enc.token_embed.data[ids] + sinusoidal_positions(ids.shape[-1], enc.stack.config.d_model))
    return stack_forward(tokens, enc.stack.config, enc.stack.layers, enc.prompts, name="text")


# ------------------------------------------------------------ descriptions


def load_descriptions(path):
    """Read ``name: description`` lines; ``#`` starts a comment line."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        name, sep, text = line.partition(":")
        if not sep or not name.strip() or not text.strip():
            raise InputError(f"{path}:{lineno}: expected 'name: description'")
        out[name.strip()] = text.strip()
    return out


def default_descriptions():
    return load_descriptions(Path(__file__).with_name("descriptions.txt"))


def describe(dataset_name, descriptions=None):
    table = default_descriptions() if descriptions is None else descriptions
    text = table.get(dataset_name) or table.get("default")
    if not text:
        raise InputError(f"no description for dataset {dataset_name!r}")
    return text

