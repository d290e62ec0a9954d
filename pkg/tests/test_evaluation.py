from decimal import Decimal

import numpy as np
import pytest
from conftest import tiny_config

from promptcast.data import SeriesCollection, build_windows
from promptcast.errors import ConfigError, InputError
from promptcast.evaluation import (
    AblationGrid,
    ArchSpec,
    ComponentSpec,
    RunReport,
    count_trainable,
    efficiency_report,
    evaluate,
    line_chart_svg,
    round_pct,
    run_ablation,
    table6,
    table6_csv,
    table6_text,
    trainable_params,
)
from promptcast.model import build_model
from promptcast.training import TrainConfig

DESC = "synthetic sums of sinusoids"

# ---------------------------------------------------------------- counting


@pytest.mark.parametrize(
    "tsfm,vision,text,expected",
    [
        ("timer", "clip", None, 912_384),
        ("timer", None, "qwen", 1_778_688),
        ("chronos", "blip", "llama", 4_390_400),
    ],
)
def test_count_trainable_examples(tsfm, vision, text, expected):
    assert count_trainable(ArchSpec.preset(tsfm, vision, text)) == expected


def test_count_trainable_zero():
    assert count_trainable(ArchSpec.preset("timer", prompt_lengths=(0, 0, 0))) == 0


def test_count_trainable_respects_schedule():
    spec = ArchSpec(ComponentSpec(8, 16, 4, "first"))
    assert count_trainable(spec) == 4 * 16
    spec = ArchSpec(ComponentSpec(5, 16, 4, "top_half"))
    assert count_trainable(spec) == 3 * 4 * 16


def test_efficiency_examples():
    row = efficiency_report(ArchSpec.preset("timer", "clip"), 172_510_464, 84_142_080)
    assert (row.ratio_pct, row.relative_pct) == (Decimal("0.53"), Decimal("1.08"))
    assert round_pct(7, 7) == Decimal("100.00")
    assert round_pct(1, 800) == Decimal("0.13")  # 0.125 rounds half-up
    with pytest.raises(InputError):
        efficiency_report(ArchSpec.preset("timer"), 0, 1)


# (tsfm, vision, text, trainable, ratio %, relative %)
REFERENCE = [
    ("Timer", "CLIP", "-", 912_384, "0.53", "1.08"),
    ("Timer", "BLIP", "-", 912_384, "0.53", "1.08"),
    ("Timer", "-", "Qwen", 1_778_688, "0.11", "2.11"),
    ("Timer", "-", "Llama", 4_752_384, "0.07", "5.65"),
    ("Timer", "CLIP", "Qwen", 2_658_304, "0.15", "3.16"),
    ("Timer", "CLIP", "Llama", 5_632_000, "0.08", "6.69"),
    ("Timer", "BLIP", "Qwen", 2_658_304, "0.15", "3.16"),
    ("Timer", "BLIP", "Llama", 5_632_000, "0.08", "6.69"),
    ("Chronos", "CLIP", "-", 719_616, "0.25", "0.35"),
    ("Chronos", "BLIP", "-", 719_616, "0.25", "0.35"),
    ("Chronos", "-", "Qwen", 1_389_312, "0.08", "0.68"),
    ("Chronos", "CLIP", "Qwen", 2_072_064, "0.11", "1.01"),
    ("Chronos", "BLIP", "Llama", 4_390_400, "0.06", "2.14"),
]


def test_efficiency_rows_and_rendering():
    rows = table6()
    assert len(rows) == 15
    got = [(r.tsfm, r.vision, r.text, r.trainable, str(r.ratio_pct), str(r.relative_pct))
           for r in rows if r.vision != "-" or r.text != "-"]
    assert got == REFERENCE
    txt = table6_text(rows)
    assert "912,384" in txt and "0.53%" in txt and "1.08%" in txt
    assert table6_csv(rows).splitlines()[0].startswith("tsfm,vision,text,trainable")


@pytest.mark.parametrize("schedule", ["all", "first", "odd", "top_half"])
@pytest.mark.parametrize("vision,text", [(True, True), (True, False), (False, True), (False, False)])
def test_formula_matches_construction(schedule, vision, text):
    cfg = tiny_config(schedule=schedule, use_vision=vision, use_text=text, tsfm_layers=3)
    model = build_model(cfg, seed=0)
    head = model.head.weight.data.size + model.head.bias.data.size
    assert count_trainable(ArchSpec.from_model_config(cfg)) == trainable_params(model) - head


# ---------------------------------------------------------------- evaluate


def test_zero_forecaster_has_unit_mse():
    r = np.random.default_rng(0)
    c = SeriesCollection("noise", [r.normal(size=4000) for _ in range(4)], context_length=8,
                         standardization="whole_series")
    windows = build_windows(c, 8)
    model = build_model(tiny_config(use_vision=False, use_text=False), seed=0)
    model.head.weight.data[:] = 0
    model.head.bias.data[:] = 0
    mse = evaluate(model, windows)
    assert abs(mse - 1.0) < 0.05
    assert evaluate(model, windows) == mse


def test_perfect_forecaster_and_empty():
    model = build_model(tiny_config(use_vision=False, use_text=False), seed=0)
    model.head.weight.data[:] = 0
    model.head.bias.data[:] = 0.5
    c = SeriesCollection("flat", [np.r_[np.zeros(8), np.full(8, 0.5)]], context_length=8,
                         standardization="whole_series", stats=[(0.0, 1.0)])
    assert evaluate(model, build_windows(c, 8)) == 0.0
    with pytest.raises(InputError):
        evaluate(model, [])


# ---------------------------------------------------------------- ablations


def small_grid(axis, **kw):
    model = kw.pop("model", tiny_config())
    train = kw.pop("train", TrainConfig(epochs=1, batch_size=16, train_stride=8, lr_multiplier=50))
    return AblationGrid(axis, model=model, train=train, **kw)


def test_modality_grid(sine_collection):
    rep = run_ablation(small_grid("modality"), sine_collection, DESC)
    assert [r["level"] for r in rep.rows] == ["none", "V", "T", "V+T"]
    assert all(r["status"] == "ok" for r in rep.rows)
    params = {r["level"]: r["trainable_params"] for r in rep.rows}
    assert params["none"] < params["V"] < params["V+T"]
    assert all(np.isfinite(r["zero_shot_val_mse"]) for r in rep.rows)


def test_location_grid_schedules():
    grid = small_grid("location", model=tiny_config(tsfm_layers=4, vision_layers=4, text_layers=4))
    runs = grid.runs()
    assert [r[0] for r in runs] == ["first", "odd", "top_half", "all"]
    counts = [count_trainable(ArchSpec.from_model_config(r[3])) for r in runs]
    assert counts[0] < counts[1] == counts[2] < counts[3]


def test_length_grid_runs():
    assert len(small_grid("length").runs()) == 9
    runs = small_grid("length", components=("vision",)).runs()
    assert [(r[0], r[3].vision_prompt_length) for r in runs] == [("vision=4", 4), ("vision=10", 10), ("vision=16", 16)]
    with pytest.raises(ConfigError):
        small_grid("length", components=("audio",))


def test_epoch_curve(sine_collection):
    grid = small_grid("epochs", train=TrainConfig(epochs=10, batch_size=32, train_stride=16, lr_multiplier=50),
                      model=tiny_config(use_vision=False))
    rep = run_ablation(grid, sine_collection, DESC)
    assert [r["level"] for r in rep.rows] == [str(e) for e in range(1, 11)]
    assert len(rep.curve()) == 10


def test_volume_levels_and_determinism(sine_collection):
    grid = small_grid("volume", levels=(0.5, 1.0), model=tiny_config(use_vision=False))
    a = run_ablation(grid, sine_collection, DESC)
    b = run_ablation(grid, sine_collection, DESC)
    assert a.to_csv() == b.to_csv()
    assert [r["level"] for r in a.rows] == ["0.5", "1.0"]


def test_failed_level_is_recorded(sine_collection):
    # no description: the text-enabled levels fail, the others still run
    rep = run_ablation(small_grid("modality", model=tiny_config(image_size=16)), sine_collection, None)
    status = {r["level"]: r["status"] for r in rep.rows}
    assert status["none"] == "ok" and status["V"] == "ok"
    assert status["T"].startswith("error: InputError")
    assert len(rep.ok_rows()) == 2


def test_grid_validation():
    with pytest.raises(ConfigError):
        AblationGrid("colour")
    with pytest.raises(ConfigError):
        AblationGrid("modality", levels=("V", "audio"))
    with pytest.raises(ConfigError):
        AblationGrid("modality", seeds=())


# ---------------------------------------------------------------- reports


def test_report_outputs():
    rows = [dict(axis="volume", level=lv, component="", seed=s, status="ok", trainable_params=10,
                 zero_shot_val_mse=1.0, val_mse=v, test_mse=v) for lv, s, v in
            (("0.5", 0, 0.4), ("0.5", 1, 0.6), ("1.0", 0, 0.2), ("1.0", 1, 0.2))]
    rep = RunReport("exp", "volume", rows)
    assert rep.curve() == [("0.5", 0.5, pytest.approx(0.1)), ("1.0", 0.2, 0.0)]
    assert rep.to_csv().count("\n") == 5
    assert "0.4000" in rep.to_text()
    svg = rep.svg()
    assert svg.startswith("<svg") and svg.count("<circle") == 2


def test_svg_escapes_and_rejects_empty():
    svg = line_chart_svg({"a<b": ([1, 2], [3.0, 4.0])}, title="x & y")
    assert "a&lt;b" in svg and "x &amp; y" in svg
    with pytest.raises(InputError):
        line_chart_svg({"a": ([], [])})
