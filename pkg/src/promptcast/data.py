"""Series ingestion, splitting, windowing and standardization."""

import csv
import enum
import io
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, InputError
from .tensor import Rng

log = logging.getLogger(__name__)


class Standardization(str, enum.Enum):
    PER_WINDOW = "per_window"
    WHOLE_SERIES = "whole_series"


class SplitAxis(str, enum.Enum):
    TIME = "time"
    SERIES = "series"


@dataclass(frozen=True)
class DatasetInfo:
    context_length: int
    frequency: str
    standardization: Standardization
    split_axis: SplitAxis
    subsample: str = None


# Context lengths and preprocessing per benchmark corpus.
DATASETS = {
    "covid19": DatasetInfo(30, "1D", Standardization.WHOLE_SERIES, SplitAxis.SERIES),
    "nn5": DatasetInfo(56, "1D", Standardization.PER_WINDOW, SplitAxis.TIME),
    "car_parts": DatasetInfo(12, "1M", Standardization.WHOLE_SERIES, SplitAxis.SERIES),
    "au_elec": DatasetInfo(48, "30min", Standardization.PER_WINDOW, SplitAxis.TIME, "au_elec"),
    "cif2016": DatasetInfo(12, "1M", Standardization.WHOLE_SERIES, SplitAxis.SERIES),
    "dominick": DatasetInfo(8, "1W", Standardization.PER_WINDOW, SplitAxis.TIME, "dominick"),
    "hospital": DatasetInfo(12, "1M", Standardization.WHOLE_SERIES, SplitAxis.SERIES),
    "tourism": DatasetInfo(24, "1M", Standardization.WHOLE_SERIES, SplitAxis.SERIES),
}

AU_ELEC_STEPS = 15_000
DOMINICK_SERIES = 100
MIN_STD = 1e-8


@dataclass
class SeriesCollection:
    name: str
    series: list
    ids: list = None
    frequency: str = ""
    context_length: int = 0
    standardization: Standardization = Standardization.PER_WINDOW
    split_axis: SplitAxis = SplitAxis.TIME
    subsample: str = None
    offsets: list = None  # start of each series within its raw source
    stats: list = None  # (mean, std) of each full raw series

    def __post_init__(self):
        self.series = [np.asarray(s, dtype=np.float64) for s in self.series]
        if self.ids is None:
            self.ids = [str(i) for i in range(len(self.series))]
        if self.offsets is None:
            self.offsets = [0] * len(self.series)
        if self.stats is None:
            self.stats = [series_stats(s) for s in self.series]
        self.standardization = Standardization(self.standardization)
        self.split_axis = SplitAxis(self.split_axis)
        if len(self.ids) != len(self.series):
            raise InputError("ids and series differ in length")

    @property
    def horizon(self):
        return self.context_length

    def __len__(self):
        return len(self.series)

    def lengths(self):
        return [len(s) for s in self.series]

    @classmethod
    def for_dataset(cls, name, series, ids=None, **overrides):
        """Collection carrying the registered defaults for a named corpus."""
        info = DATASETS.get(name)
        kw = {}
        if info is not None:
            kw = dict(frequency=info.frequency, context_length=info.context_length,
                      standardization=info.standardization, split_axis=info.split_axis,
                      subsample=info.subsample)
        kw.update(overrides)
        return cls(name, series, ids, **kw)


def series_stats(x):
    x = np.asarray(x, dtype=np.float64)
    return float(x.mean()), float(x.std())


# ------------------------------------------------------------------ loading


def _parse_value(cell, row, col):
    text = cell.strip()
    try:
        v = float(text)
    except ValueError:
        raise InputError(f"row {row}, column {col}: cannot parse {text!r} as a number") from None
    if not math.isfinite(v):
        raise InputError(f"row {row}, column {col}: missing or non-finite value {text!r}")
    return v


def _read_wide_csv(text):
    series, ids = [], []
    for r, row in enumerate(csv.reader(io.StringIO(text)), 1):
        while row and not row[-1].strip():
            row = row[:-1]
        if not row:
            continue
        for c, cell in enumerate(row, 1):
            if not cell.strip():
                raise InputError(f"row {r}, column {c}: missing value")
        series.append([_parse_value(cell, r, c) for c, cell in enumerate(row, 1)])
        ids.append(str(len(ids)))
    return series, ids


def _read_long_csv(text):
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        return [], []
    cols = [h.strip().lower() for h in header]
    if "id" not in cols or "value" not in cols:
        raise InputError("long CSV needs a header with 'id' and 'value' columns")
    i_id, i_val = cols.index("id"), cols.index("value")
    groups = {}
    for r, row in enumerate(reader, 2):
        if not row or not any(cell.strip() for cell in row):
            continue
        if len(row) <= max(i_id, i_val):
            raise InputError(f"row {r}: expected {len(cols)} columns, got {len(row)}")
        groups.setdefault(row[i_id].strip(), []).append(_parse_value(row[i_val], r, i_val + 1))
    return list(groups.values()), list(groups)


def _read_jsonl(text):
    series, ids = [], []
    for r, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InputError(f"line {r}: invalid JSON ({exc.msg})") from None
        if not isinstance(rec, dict) or "values" not in rec:
            raise InputError(f"line {r}: expected an object with 'id' and 'values'")
        vals = []
        for c, v in enumerate(rec["values"], 1):
            if v is None:
                raise InputError(f"line {r}, value {c}: missing value")
            vals.append(_parse_value(str(v), r, c))
        series.append(vals)
        ids.append(str(rec.get("id", len(ids))))
    return series, ids


READERS = {"wide": _read_wide_csv, "long": _read_long_csv, "jsonl": _read_jsonl}


def load_collection(path, schema=None, name=None, **overrides):
    """Read a file into a :class:`SeriesCollection`.

    ``schema`` is ``wide`` (CSV, one series per row), ``long`` (CSV with
    ``id,value`` columns, rows in time order) or ``jsonl`` (``{"id", "values"}``
    per line). It defaults from the file suffix.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    if schema is None:
        schema = "jsonl" if path.suffix == ".jsonl" else "wide"
    if schema not in READERS:
        raise ConfigError(f"unknown schema {schema!r} (expected one of {sorted(READERS)})")
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        raise InputError(f"{path}: file is empty")
    series, ids = READERS[schema](text)
    if not series:
        raise InputError(f"{path}: no series found")
    for sid, s in zip(ids, series):
        if len(s) < 2:
            raise InputError(f"{path}: series {sid!r} has fewer than 2 values")
    return SeriesCollection.for_dataset(name or path.stem, series, ids, **overrides)


# ------------------------------------------------------------------ subsampling


def apply_subsample(c, seed=0):
    """Apply the collection's subsample rule: ``au_elec`` or ``dominick``."""
    rule = c.subsample
    if rule is None:
        return c
    if rule == "au_elec":
        if c.name != "au_elec":
            raise ConfigError(f"au_elec truncation does not apply to dataset {c.name!r}")
        series = [s[:AU_ELEC_STEPS] for s in c.series]
        return replace(c, series=series, stats=[series_stats(s) for s in series])
    if rule == "dominick":
        if c.name != "dominick":
            raise ConfigError(f"dominick sampling does not apply to dataset {c.name!r}")
        order = Rng(seed).child("dominick").permutation(len(c.series))[:DOMINICK_SERIES]
        pick = lambda xs: [xs[i] for i in order]  # noqa: E731
        return replace(c, series=pick(c.series), ids=pick(c.ids), offsets=pick(c.offsets), stats=pick(c.stats))
    raise ConfigError(f"unknown subsample rule {rule!r}")


# ------------------------------------------------------------------ splitting


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple = (0.6, 0.2, 0.2)
    axis: SplitAxis = SplitAxis.TIME
    shuffle_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "axis", SplitAxis(self.axis))
        if len(self.ratios) != 3 or abs(sum(self.ratios) - 1.0) > 1e-12 or min(self.ratios) < 0:
            raise ConfigError(f"split ratios must be three non-negative numbers summing to 1, got {self.ratios}")

    def cuts(self, n):
        a = math.floor(self.ratios[0] * n + 1e-9)
        b = math.floor((self.ratios[0] + self.ratios[1]) * n + 1e-9)
        return a, b


def split(c, spec):
    """60:20:20 partition along time (per series) or across series (shuffled)."""
    if spec.axis is SplitAxis.TIME:
        short = [sid for sid, s in zip(c.ids, c.series) if len(s) < 5]
        if short:
            raise InputError(f"series too short for a time split: {short[:5]}")
        parts = ([], [], [])
        for s, off in zip(c.series, c.offsets):
            a, b = spec.cuts(len(s))
            for part, (lo, hi) in zip(parts, ((0, a), (a, b), (b, len(s)))):
                part.append((s[lo:hi], off + lo))
        return tuple(
            replace(c, series=[p[0] for p in part], offsets=[p[1] for p in part], ids=list(c.ids), stats=list(c.stats))
            for part in parts
        )
    n = len(c.series)
    if n < 5:
        raise InputError(f"need at least 5 series for a series split, got {n}")
    order = Rng(spec.shuffle_seed).child("series_split").permutation(n)
    a, b = spec.cuts(n)
    out = []
    for idx in (order[:a], order[a:b], order[b:]):
        idx = list(idx)
        out.append(replace(
            c,
            series=[c.series[i] for i in idx],
            ids=[c.ids[i] for i in idx],
            offsets=[c.offsets[i] for i in idx],
            stats=[c.stats[i] for i in idx],
        ))
    return tuple(out)


# ------------------------------------------------------------------ windows


def make_windows(segment, context_length, horizon, stride=1):
    """Sliding ``(context, target)`` pairs; ``(offset, context, target)`` triples."""
    seg = np.asarray(segment, dtype=np.float64)
    n = seg.size
    span = context_length + horizon
    if stride < 1:
        raise ConfigError("stride must be >= 1")
    if n < span:
        log.debug("segment of length %d is shorter than C+H=%d; no windows", n, span)
        return []
    return [
        (o, seg[o:o + context_length], seg[o + context_length:o + span])
        for o in range(0, n - span + 1, stride)
    ]


@dataclass
class WindowPair:
    context: np.ndarray
    target: np.ndarray
    mean: float
    std: float
    series_id: str = ""
    offset: int = 0

    def destandardize(self, values):
        return np.asarray(values) * self.std + self.mean

    def raw_context(self):
        return self.destandardize(self.context)


def standardize(context, target, mode, series_stats=None):
    """Scale a raw pair; returns ``None`` when a per-window std is degenerate."""
    ctx = np.asarray(context, dtype=np.float64)
    tgt = np.asarray(target, dtype=np.float64)
    mode = Standardization(mode)
    if mode is Standardization.PER_WINDOW:
        mu, sd = float(ctx.mean()), float(ctx.std())
    else:
        if series_stats is None:
            raise ConfigError("whole-series standardization needs the series statistics")
        mu, sd = series_stats
    if sd <= MIN_STD:
        return None
    return WindowPair((ctx - mu) / sd, (tgt - mu) / sd, mu, sd)


@dataclass
class WindowSet:
    windows: list = field(default_factory=list)
    skipped: int = 0

    def __len__(self):
        return len(self.windows)

    def contexts(self):
        return np.stack([w.context for w in self.windows])

    def targets(self):
        return np.stack([w.target for w in self.windows])


def build_windows(c, stride, context_length=None, horizon=None):
    """Standardized windows for every series, ordered by (series, offset)."""
    C = context_length or c.context_length
    H = horizon or C
    out = WindowSet()
    for sid, seg, off, stats in zip(c.ids, c.series, c.offsets, c.stats):
        for o, ctx, tgt in make_windows(seg, C, H, stride):
            pair = standardize(ctx, tgt, c.standardization, stats)
            if pair is None:
                out.skipped += 1
                continue
            pair.series_id = sid
            pair.offset = off + o
            out.windows.append(pair)
    if out.skipped:
        log.info("%s: skipped %d windows with near-zero std", c.name, out.skipped)
    return out


@dataclass
class PreparedData:
    train: WindowSet
    val: WindowSet
    test: WindowSet
    context_length: int


def prepare(c, seed=0, train_stride=1, eval_stride=None, split_spec=None):
    """Subsample, split and window a collection in one go."""
    C = c.context_length
    if C < 1:
        raise ConfigError(f"collection {c.name!r} has no context length")
    c = apply_subsample(c, seed)
    spec = split_spec or SplitSpec(axis=c.split_axis, shuffle_seed=seed)
    tr, va, te = split(c, spec)
    eval_stride = eval_stride or C
    return PreparedData(
        build_windows(tr, train_stride),
        build_windows(va, eval_stride),
        build_windows(te, eval_stride),
        C,
    )
