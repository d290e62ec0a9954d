import hashlib
import subprocess
import sys

import pytest
import yaml

from promptcast.cli import main
from promptcast.config import load_config, parse_config
from promptcast.errors import ConfigError

TINY_MODEL = dict(patch_len=4, d_ts=16, tsfm_layers=2, tsfm_heads=2, ts_prompt_length=2, d_v=8, vision_layers=2,
                  vision_heads=2, vision_prompt_length=3, image_size=16, patch_size=8, d_t=12, text_layers=2,
                  text_heads=2, text_prompt_length=2, max_text_len=6)


def tiny_cfg(**over):
    cfg = {
        "schema_version": 1,
        "experiment": "t",
        "seed": 0,
        "dataset": {"synthetic": {"num_series": 6, "length": 80, "kind": "sine_mix", "noise": 0.05},
                    "context_length": 8, "description": "synthetic sums of sinusoids"},
        "model": dict(TINY_MODEL),
        "train": {"epochs": 2, "batch_size": 16, "lr_multiplier": 50, "train_stride": 4},
    }
    cfg.update(over)
    return cfg


def write_cfg(tmp_path, cfg, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return p


def only_run(root):
    dirs = [d for d in root.iterdir() if d.is_dir()]
    assert len(dirs) == 1
    return dirs[0]


# ---------------------------------------------------------------- config


def test_config_defaults_and_seed_threading(tmp_path):
    cfg = load_config(write_cfg(tmp_path, tiny_cfg(seed=7)))
    assert cfg.train.seed == 7 and cfg.ablation.seeds == [7]
    assert cfg.dataset.synthetic["seed"] == 7
    assert cfg.model.context_length == 8
    assert load_config(write_cfg(tmp_path, tiny_cfg()), seed=3).train.seed == 3


def test_config_snapshot_roundtrip(tmp_path):
    cfg = load_config(write_cfg(tmp_path, tiny_cfg()))
    again = parse_config(yaml.safe_load(cfg.to_yaml()), tmp_path)
    assert again == cfg


@pytest.mark.parametrize(
    "mutate,field",
    [
        (lambda c: c["train"].update(epochs=0), "train"),
        (lambda c: c["train"].update(epochs="ten"), "train.epochs"),
        (lambda c: c["model"].update(colour=1), "model.colour"),
        (lambda c: c.update(extra=1), "extra"),
        (lambda c: c.pop("schema_version"), "schema_version"),
        (lambda c: c.update(schema_version=2), "schema_version"),
        (lambda c: c["dataset"].update(split_axis="diagonal"), "dataset.split_axis"),
        (lambda c: c["dataset"]["synthetic"].update(kind="chirp"), "dataset.synthetic"),
        (lambda c: c["model"].update(context_length=16), "model.context_length"),
    ],
)
def test_config_errors_name_field(mutate, field):
    cfg = tiny_cfg()
    mutate(cfg)
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        parse_config(cfg)


def test_missing_dataset_path(tmp_path, capsys):
    cfg = tiny_cfg(dataset={"path": "nowhere.csv", "context_length": 8})
    code = main(["train", "--config", str(write_cfg(tmp_path, cfg)), "--out", str(tmp_path / "runs")])
    assert code == 2
    assert "dataset.path" in capsys.readouterr().err


# ---------------------------------------------------------------- train / eval


def test_train_writes_artifacts_and_is_deterministic(tmp_path, capsys):
    path = write_cfg(tmp_path, tiny_cfg())
    histories = []
    for k in range(2):
        out = tmp_path / f"runs{k}"
        assert main(["train", "--config", str(path), "--out", str(out)]) == 0
        run = only_run(out)
        for name in ("config.yaml", "model.json", "history.csv", "timings.csv", "metrics.json", "curve.svg"):
            assert (run / name).exists(), name
        histories.append((run / "history.csv").read_bytes())
    assert histories[0] == histories[1]
    assert histories[0].count(b"\n") == 4  # header, zero-shot row, 2 epochs
    run = only_run(tmp_path / "runs0")
    assert run.name.startswith("t_") and run.name.endswith("_0")
    # the snapshot alone reproduces the run
    assert main(["train", "--config", str(run / "config.yaml"), "--out", str(tmp_path / "re")]) == 0
    assert (only_run(tmp_path / "re") / "history.csv").read_bytes() == histories[0]
    # evaluate the saved model
    assert main(["eval", "--config", str(path), "--model", str(run / "model.json"),
                 "--out", str(tmp_path / "ev")]) == 0
    lines = (only_run(tmp_path / "ev") / "eval.csv").read_text().splitlines()
    assert lines[0] == "split,windows,mse" and len(lines) == 3


def test_out_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("PROMPTCAST_OUT", str(tmp_path / "envroot"))
    cfg = tiny_cfg(train={"epochs": 1, "batch_size": 32, "train_stride": 8})
    assert main(["train", "--config", str(write_cfg(tmp_path, cfg))]) == 0
    only_run(tmp_path / "envroot")


def test_runtime_fault_exit_code(tmp_path):
    cfg = tiny_cfg(dataset={"synthetic": {"num_series": 2, "length": 80}, "context_length": 8,
                            "split_axis": "series", "description": "x"})
    assert main(["train", "--config", str(write_cfg(tmp_path, cfg)), "--out", str(tmp_path)]) == 1


# ---------------------------------------------------------------- ablate / report


def test_ablate_location(tmp_path):
    cfg = tiny_cfg(train={"epochs": 1, "batch_size": 32, "train_stride": 8, "lr_multiplier": 50})
    path = write_cfg(tmp_path, cfg)
    assert main(["ablate", "--config", str(path), "--axis", "location", "--out", str(tmp_path / "a")]) == 0
    run = only_run(tmp_path / "a")
    rows = (run / "report.csv").read_text().splitlines()
    assert len(rows) == 5
    assert [r.split(",")[1] for r in rows[1:]] == ["first", "odd", "top_half", "all"]
    assert main(["report", "--results", str(run / "report.json")]) == 0
    assert (run / "report.svg").exists()


def test_ablate_length_component(tmp_path):
    cfg = tiny_cfg(model=dict(TINY_MODEL, use_vision=False, use_text=False),
                   train={"epochs": 1, "batch_size": 32, "train_stride": 8})
    path = write_cfg(tmp_path, cfg)
    assert main(["ablate", "--config", str(path), "--axis", "length", "--component", "tsfm",
                 "--out", str(tmp_path / "a")]) == 0
    rows = (only_run(tmp_path / "a") / "report.csv").read_text().splitlines()
    assert [r.split(",")[1] for r in rows[1:]] == ["tsfm=4", "tsfm=10", "tsfm=16"]
    assert main(["ablate", "--config", str(path), "--axis", "modality", "--component", "tsfm"]) == 2


def test_ablate_unknown_axis(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["ablate", "--config", "x.yaml", "--axis", "colour"])
    assert info.value.code == 2


def test_report_table6(tmp_path, capsys):
    assert main(["report", "--table6", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    row = next(line for line in out.splitlines() if "CLIP" in line and "Timer" in line)
    assert "912,384" in row and "0.53" in row and "1.08" in row
    csv = (tmp_path / "table6.csv").read_text()
    assert "Timer,CLIP,-,912384,172510464,0.53,1.08" in csv


def test_report_needs_an_option():
    assert main(["report"]) == 2


# ---------------------------------------------------------------- render / synth


def test_render_and_synth(tmp_path):
    assert main(["render", "--values", "1,3,2,5", "--size", "16", "-o", str(tmp_path / "a.pgm")]) == 0
    assert (tmp_path / "a.pgm").read_bytes().startswith(b"P5\n16 16\n255\n")
    assert main(["render", "--values", "1,x", "-o", str(tmp_path / "b.pgm")]) == 2
    assert main(["render", "--values", "1", "-o", str(tmp_path / "b.pgm")]) == 1
    digests = []
    for k in range(2):
        target = tmp_path / f"s{k}.csv"
        assert main(["synth", "--num-series", "10", "--length", "200", "--seed", "3", "-o", str(target)]) == 0
        digests.append(hashlib.sha256(target.read_bytes()).hexdigest())
    assert digests[0] == digests[1]
    assert main(["render", "--input", str(tmp_path / "s0.csv"), "--index", "2", "--context", "32",
                 "-o", str(tmp_path / "c.pgm")]) == 0
    with pytest.raises(SystemExit) as info:
        main(["synth", "--kind", "chirp", "-o", str(tmp_path / "x.csv")])
    assert info.value.code == 2


def test_console_script_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "promptcast.cli", "report", "--table6", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "4,390,400" in res.stdout
