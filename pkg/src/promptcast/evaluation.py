"""Evaluation, parameter-efficiency accounting, ablation runners and reports."""

import csv
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field, replace
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction

import numpy as np

from .data import prepare
from .errors import ConfigError, InputError
from .model import ModelConfig, build_model
from .training import TrainConfig, evaluate_windows, train
from .transformer import PromptSchedule, ScheduleVariant

log = logging.getLogger(__name__)


def evaluate(model, windows, description=None):
    """Mean per-window MSE in standardized space."""
    return evaluate_windows(model, list(getattr(windows, "windows", windows)), description)


# ------------------------------------------------------------------ parameter accounting


@dataclass(frozen=True)
class Backbone:
    name: str
    num_layers: int
    width: int


# Layer counts and widths are not published alongside the trainable counts;
# each pair below is the unique one that makes every row of the reference
# table come out exactly under count_trainable, e.g.
#   timer + clip:  12*10*768 + 8*4*1024 + (768*1024 + 1024)   =   912,384
#   timer + qwen:  28*4*1536 + 8*4*1024 + (1536*1024 + 1024)  = 1,778,688
#   chronos + blip + llama:
#       12*10*768 + 32*4*4096 + 12*4*768
#       + (768*768 + 768) + (4096*768 + 768)                   = 4,390,400
BACKBONES = {
    "clip": Backbone("CLIP", 12, 768),
    "blip": Backbone("BLIP", 12, 768),
    "qwen": Backbone("Qwen", 28, 1536),
    "llama": Backbone("Llama", 32, 4096),
    "timer": Backbone("Timer", 8, 1024),
    "chronos": Backbone("Chronos", 12, 768),
}

# Published checkpoint sizes, taken as given inputs.
TSFM_TOTALS = {"timer": 84_142_080, "chronos": 205_292_928}


@dataclass(frozen=True)
class ComponentSpec:
    num_layers: int
    width: int
    prompt_length: int
    schedule: ScheduleVariant = ScheduleVariant.ALL

    def prompted_layers(self):
        return len(PromptSchedule(self.schedule, self.num_layers).layers())


@dataclass(frozen=True)
class ArchSpec:
    tsfm: ComponentSpec
    vision: ComponentSpec = None
    text: ComponentSpec = None

    @classmethod
    def preset(cls, tsfm, vision=None, text=None, prompt_lengths=(10, 4, 4)):
        """Architecture from backbone names; ``prompt_lengths`` is (vision, text, tsfm)."""
        def comp(key, length):
            if key is None:
                return None
            try:
                b = BACKBONES[key.lower()]
            except KeyError:
                raise ConfigError(f"unknown backbone {key!r}") from None
            return ComponentSpec(b.num_layers, b.width, length)

        lv, lt, lts = prompt_lengths
        return cls(comp(tsfm, lts), comp(vision, lv), comp(text, lt))

    @classmethod
    def from_model_config(cls, cfg):
        sched = ScheduleVariant.parse(cfg.schedule)
        vision = ComponentSpec(cfg.vision_layers, cfg.d_v, cfg.vision_prompt_length, sched) if cfg.use_vision else None
        text = ComponentSpec(cfg.text_layers, cfg.d_t, cfg.text_prompt_length, sched) if cfg.use_text else None
        return cls(ComponentSpec(cfg.tsfm_layers, cfg.d_ts, cfg.ts_prompt_length, sched), vision, text)


def count_trainable(spec):
    """Prompt rows on every prompted layer plus one biased projection per extra modality.

    The forecast head is not included.
    """
    d_ts = spec.tsfm.width
    total = 0
    for comp in (spec.vision, spec.text, spec.tsfm):
        if comp is not None and comp.prompt_length > 0:
            total += comp.prompted_layers() * comp.prompt_length * comp.width
    for comp in (spec.vision, spec.text):
        if comp is not None:
            total += comp.width * d_ts + d_ts
    return total


def round_pct(numer, denom):
    """Percentage rounded half-up to two decimals, computed exactly."""
    if denom == 0:
        raise InputError("total parameter count is zero")
    scaled = Fraction(100 * 100 * numer, denom)  # hundredths of a percent, exact
    whole, rem = divmod(scaled.numerator, scaled.denominator)
    if 2 * rem >= scaled.denominator:
        whole += 1
    return (Decimal(whole) / Decimal(100)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)


@dataclass(frozen=True)
class EfficiencyRow:
    tsfm: str
    vision: str
    text: str
    trainable: int
    total: int
    ratio_pct: Decimal
    relative_pct: Decimal


def efficiency_report(spec, total, tsfm_total, labels=("", "", "")):
    """Trainable count with its share of ``total`` and of ``tsfm_total``."""
    if total <= 0 or tsfm_total <= 0:
        raise InputError("total parameter counts must be positive")
    n = count_trainable(spec)
    return EfficiencyRow(labels[0], labels[1], labels[2], n, total,
                         round_pct(n, total), round_pct(n, tsfm_total))


# (tsfm, vision, text, published total of the assembled model)
TABLE6_ROWS = (
    ("timer", "clip", None, 172_510_464),
    ("timer", "blip", None, 171_144_960),
    ("timer", None, "qwen", 1_629_635_072),
    ("timer", None, "llama", 6_696_238_080),
    ("timer", "clip", "qwen", 1_717_970_688),
    ("timer", "clip", "llama", 6_784_573_696),
    ("timer", "blip", "qwen", 1_716_605_184),
    ("timer", "blip", "llama", 6_783_208_192),
    ("chronos", "clip", None, 293_468_544),
    ("chronos", "blip", None, 292_103_040),
    ("chronos", None, "qwen", 1_750_396_544),
    ("chronos", "clip", "qwen", 1_838_535_296),
    ("chronos", "blip", "llama", 6_903_117_440),
)


def table6():
    """Efficiency rows for every preset combination, full fine-tune rows first per backbone."""
    rows = []
    for tsfm in ("timer", "chronos"):
        full = TSFM_TOTALS[tsfm]
        rows.append(EfficiencyRow(BACKBONES[tsfm].name, "-", "-", full, full,
                                  round_pct(full, full), round_pct(full, full)))
        for ts, v, t, total in TABLE6_ROWS:
            if ts != tsfm:
                continue
            labels = (BACKBONES[ts].name, BACKBONES[v].name if v else "-", BACKBONES[t].name if t else "-")
            rows.append(efficiency_report(ArchSpec.preset(ts, v, t), total, full, labels))
    return rows


TABLE6_HEADER = ("tsfm", "vision", "text", "trainable", "total", "trainable_ratio_pct", "relative_pct")


def table6_text(rows=None):
    rows = rows if rows is not None else table6()
    body = [(r.tsfm, r.vision, r.text, f"{r.trainable:,}", f"{r.total:,}", f"{r.ratio_pct}%", f"{r.relative_pct}%")
            for r in rows]
    return format_table(TABLE6_HEADER, body)


def table6_csv(rows=None):
    rows = rows if rows is not None else table6()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE6_HEADER)
    for r in rows:
        w.writerow([r.tsfm, r.vision, r.text, r.trainable, r.total, r.ratio_pct, r.relative_pct])
    return buf.getvalue()


def format_table(header, rows):
    """Plain aligned text table; numbers right-aligned."""
    cells = [list(map(str, header))] + [list(map(str, r)) for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]

    def numeric(s):
        return s[:1].isdigit() or s[:1] in "-+." and s[1:2].isdigit()

    lines = []
    for k, row in enumerate(cells):
        parts = [c.rjust(w) if k and numeric(c) else c.ljust(w) for c, w in zip(row, widths)]
        lines.append("  ".join(parts).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ ablations

AXES = ("modality", "location", "length", "epochs", "volume")
MODALITY_LEVELS = ("none", "V", "T", "V+T")
LOCATION_LEVELS = tuple(v.value for v in ScheduleVariant)
LENGTH_LEVELS = (4, 10, 16)
VOLUME_LEVELS = (0.25, 0.5, 0.75, 1.0)
COMPONENTS = ("tsfm", "vision", "text")


def default_levels(axis, epochs=10):
    if axis == "modality":
        return MODALITY_LEVELS
    if axis == "location":
        return LOCATION_LEVELS
    if axis == "length":
        return LENGTH_LEVELS
    if axis == "epochs":
        return tuple(range(1, epochs + 1))
    if axis == "volume":
        return VOLUME_LEVELS
    raise ConfigError(f"unknown ablation axis {axis!r} (expected one of {', '.join(AXES)})")


@dataclass
class AblationGrid:
    axis: str
    levels: tuple = ()
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seeds: tuple = (0,)
    components: tuple = COMPONENTS  # only used by the length axis

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"unknown ablation axis {self.axis!r} (expected one of {', '.join(AXES)})")
        if not self.levels:
            self.levels = default_levels(self.axis, self.train.epochs)
        self.levels = tuple(self.levels)
        if self.axis == "modality":
            bad = [lv for lv in self.levels if lv not in MODALITY_LEVELS]
            if bad:
                raise ConfigError(f"modality levels must be drawn from {MODALITY_LEVELS}, got {bad}")
        if self.axis == "location":
            self.levels = tuple(ScheduleVariant.parse(lv).value for lv in self.levels)
        if self.axis == "length":
            for c in self.components:
                if c not in COMPONENTS:
                    raise ConfigError(f"unknown component {c!r} (expected one of {', '.join(COMPONENTS)})")
        if not self.seeds:
            raise ConfigError("at least one seed is required")

    def runs(self):
        """``(label, component, level, model config, train config)`` per trained model."""
        if self.axis == "epochs":
            # one run traced epoch by epoch
            return [("epochs", "", max(self.levels), self.model, replace(self.train, epochs=max(self.levels)))]
        out = []
        if self.axis == "length":
            for comp in self.components:
                key = {"tsfm": "ts_prompt_length", "vision": "vision_prompt_length", "text": "text_prompt_length"}[comp]
                for lv in self.levels:
                    out.append((f"{comp}={lv}", comp, lv, replace(self.model, **{key: int(lv)}), self.train))
            return out
        for lv in self.levels:
            if self.axis == "modality":
                m = replace(self.model, use_vision="V" in lv, use_text="T" in lv)
                out.append((lv, "", lv, m, self.train))
            elif self.axis == "location":
                out.append((lv, "", lv, replace(self.model, schedule=lv), self.train))
            else:
                out.append((str(lv), "", lv, self.model, replace(self.train, data_fraction=float(lv))))
        return out


REPORT_COLUMNS = ("axis", "level", "component", "seed", "status", "trainable_params",
                  "zero_shot_val_mse", "val_mse", "test_mse")


@dataclass
class RunReport:
    experiment: str
    axis: str
    rows: list = field(default_factory=list)
    curves: dict = field(default_factory=dict)  # seed -> epoch -> val_mse history
    seconds: dict = field(default_factory=dict)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in REPORT_COLUMNS])
        return buf.getvalue()

    def to_json(self):
        return json.dumps({"experiment": self.experiment, "axis": self.axis, "rows": self.rows,
                           "curves": self.curves, "seconds": self.seconds}, indent=2, default=_fmt)

    def to_text(self):
        body = [[_short(r[c]) for c in REPORT_COLUMNS[1:]] for r in self.rows]
        return format_table(REPORT_COLUMNS[1:], body)

    def ok_rows(self):
        return [r for r in self.rows if r["status"] == "ok"]

    def curve(self, key="val_mse"):
        """``(level, mean, std)`` over seeds for every level, in grid order."""
        levels, vals = [], {}
        for r in self.ok_rows():
            if r["level"] not in vals:
                levels.append(r["level"])
            vals.setdefault(r["level"], []).append(r[key])
        return [(lv, float(np.mean(vals[lv])), float(np.std(vals[lv]))) for lv in levels]

    def svg(self, key="val_mse"):
        pts = self.curve(key)
        xs = [_as_number(lv, i) for i, (lv, _, _) in enumerate(pts)]
        return line_chart_svg({key: (xs, [m for _, m, _ in pts])}, title=f"{self.experiment}: {key} by {self.axis}",
                              xlabel=self.axis, ylabel=key)


def _as_number(level, i):
    try:
        return float(level)
    except (TypeError, ValueError):
        return float(i)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (np.floating, np.integer)):
        return _fmt(v.item())
    return v if isinstance(v, (str, int)) else str(v)


def _short(v):
    return f"{v:.4f}" if isinstance(v, float) else str(v)


def trainable_params(model):
    return int(sum(t.data.size for t in model.trainable().values()))


def run_ablation(grid, collection, description=None, experiment=None, on_row=None):
    """Train and evaluate one model per level and seed on a shared split.

    Every row carries the zero-shot validation MSE of its freshly built model.
    A failing level is recorded with its error and the rest still run.
    """
    report = RunReport(experiment or f"ablate_{grid.axis}", grid.axis)
    tc = grid.train
    for seed in grid.seeds:
        prepared = prepare(collection, seed=seed, train_stride=tc.train_stride, eval_stride=tc.eval_stride or None)
        for label, comp, level, mcfg, tcfg in grid.runs():
            t0 = time.perf_counter()
            tcfg = replace(tcfg, seed=seed)
            row = dict(axis=grid.axis, level=label, component=comp, seed=seed, status="ok",
                       trainable_params=0, zero_shot_val_mse=float("nan"), val_mse=float("nan"),
                       test_mse=float("nan"))
            try:
                model = build_model(mcfg, seed)
                row["trainable_params"] = trainable_params(model)
                if grid.axis == "epochs":
                    rows = _epoch_rows(grid, model, prepared, tcfg, description, row)
                else:
                    hist = train(model, prepared.train, prepared.val, tcfg, description)
                    row.update(zero_shot_val_mse=hist.zero_shot_val_mse, val_mse=hist.val_mse[-1],
                               test_mse=evaluate(model, prepared.test, description))
                    report.curves.setdefault(str(seed), {})[label] = hist.val_mse
                    rows = [row]
            except Exception as exc:  # noqa: BLE001 - recorded, remaining levels still run
                log.warning("level %s (seed %s) failed: %s", label, seed, exc)
                row["status"] = f"error: {type(exc).__name__}: {exc}"
                rows = [row]
            report.seconds[f"{seed}/{label}"] = time.perf_counter() - t0
            for r in rows:
                report.rows.append(r)
                if on_row is not None:
                    on_row(r)
    return report


def _epoch_rows(grid, model, prepared, tcfg, description, base):
    rows = []
    wanted = set(grid.levels)

    def hook(epoch, hist):
        if epoch in wanted:
            rows.append(dict(base, level=str(epoch), zero_shot_val_mse=hist.zero_shot_val_mse,
                             val_mse=hist.val_mse[-1], test_mse=evaluate(model, prepared.test, description)))

    train(model, prepared.train, prepared.val, tcfg, description, on_epoch=hook)
    return rows


# ------------------------------------------------------------------ charts


def line_chart_svg(series, title="", xlabel="", ylabel="", width=480, height=320):
    """Self-contained SVG line chart of ``{name: (xs, ys)}``."""
    pad_l, pad_r, pad_t, pad_b = 60, 20, 30, 45
    xs_all = [float(x) for xs, _ in series.values() for x in xs]
    ys_all = [float(y) for _, ys in series.values() for y in ys if math.isfinite(y)]
    if not xs_all or not ys_all:
        raise InputError("nothing to plot")
    x0, x1 = min(xs_all), max(xs_all)
    y0, y1 = min(ys_all), max(ys_all)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    pw, ph = width - pad_l - pad_r, height - pad_t - pad_b

    def sx(x):
        return pad_l + (float(x) - x0) / (x1 - x0) * pw

    def sy(y):
        return pad_t + (1 - (float(y) - y0) / (y1 - y0)) * ph

    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{_esc(title)}</text>',
        f'<line x1="{pad_l}" y1="{pad_t + ph}" x2="{pad_l + pw}" y2="{pad_t + ph}" stroke="black"/>',
        f'<line x1="{pad_l}" y1="{pad_t}" x2="{pad_l}" y2="{pad_t + ph}" stroke="black"/>',
    ]
    for i in range(5):
        yv = y0 + (y1 - y0) * i / 4
        out.append(f'<text x="{pad_l - 6}" y="{sy(yv) + 4:.1f}" text-anchor="end">{yv:.4g}</text>')
    for xv in sorted(set(xs_all)):
        out.append(f'<text x="{sx(xv):.1f}" y="{pad_t + ph + 16}" text-anchor="middle">{xv:g}</text>')
    out.append(f'<text x="{pad_l + pw / 2:.1f}" y="{height - 8}" text-anchor="middle">{_esc(xlabel)}</text>')
    out.append(f'<text x="14" y="{pad_t + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {pad_t + ph / 2:.1f})">{_esc(ylabel)}</text>')
    for k, (name, (xs, ys)) in enumerate(series.items()):
        color = colors[k % len(colors)]
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys) if math.isfinite(y))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        for x, y in zip(xs, ys):
            if math.isfinite(y):
                out.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="{color}"/>')
        out.append(f'<text x="{pad_l + pw - 4}" y="{pad_t + 14 + 14 * k}" text-anchor="end" fill="{color}">'
                   f"{_esc(name)}</text>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s):
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
