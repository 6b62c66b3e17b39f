import json
import struct

import numpy as np
import pytest

from flowattack.classifier import MLPClassifier
from flowattack.data import gen_shapes, load_dataset
from flowattack.exceptions import CheckpointError, ConfigError
from flowattack.flow import NormalizingFlow
from flowattack.harness import (build_report, checkpoint_load, checkpoint_save, dump_images,
                                emit_report, load_report, main, parse_config, read_pgm, write_pgm)
from flowattack.harness.config import load_config, render_defaults
from flowattack.harness.report import without_timestamp

SMALL_CONFIG = """
[data]
n = 150
[flow]
high_res_blocks = 1
low_res_blocks = 1
fc_blocks = 1
hidden = 8,8
epochs = 2
[classifier]
epochs = 3
[attack]
examples = 3
max_iters = 5
nes_max_iters = 3
budget = 100
"""


# ---------------------------------------------------------------- config

def test_defaults_round_trip_through_text():
    cfg = parse_config(render_defaults())
    assert cfg.to_dict() == parse_config("").to_dict()
    assert cfg["attack"]["budget"] == 10_000 and cfg["attack"]["n_samples"] == 20
    assert cfg["flow"]["batch_size"] == 64 and cfg["flow"]["hidden"] == (64, 64)


def test_config_overrides_and_comments():
    cfg = parse_config("# desk run\n[attack]\neps = 0.05  # wider ball\nnorm = 2\n[io]\nseed = 7\n")
    assert cfg["attack"]["eps"] == 0.05 and cfg["attack"]["norm"] == "2"
    assert cfg["io"]["seed"] == 7


@pytest.mark.parametrize("text", [
    "[bogus]\nx = 1\n",
    "[attack]\nunknown_key = 1\n",
    "[attack]\nbudget = many\n",
    "[attack]\nk = 50\n",
    "[data]\nclasses = 7\n",
    "no section header\n",
])
def test_config_rejections(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.cfg")


# ---------------------------------------------------------------- checkpoints

@pytest.fixture(scope="module")
def fitted(tmp_path_factory):
    d = gen_shapes(90, 3, seed=0, noise_std=0.03, intensity=(0.1, 0.2), background=0.4)
    flow = NormalizingFlow(1, 1, 1, hidden=(8,), epochs=1, seed=2).fit(d.images)
    clf = MLPClassifier(hidden=(16,), epochs=2, seed=2).fit(d.images, d.labels)
    return d, flow, clf


@pytest.mark.parametrize("which", ["flow", "clf"])
def test_checkpoint_round_trip_is_byte_identical(fitted, tmp_path, which):
    d, flow, clf = fitted
    model = flow if which == "flow" else clf
    a, b = tmp_path / "a.nfck", tmp_path / "b.nfck"
    checkpoint_save(model, a, {"note": "x"})
    loaded = checkpoint_load(a)
    checkpoint_save(loaded, b, {"note": "x"})
    assert a.read_bytes() == b.read_bytes()
    assert loaded.checkpoint_metadata_ == {"note": "x"}
    assert loaded.get_params() == model.get_params()


def test_reloaded_flow_scores_exactly(fitted, tmp_path):
    d, flow, _ = fitted
    checkpoint_save(flow, tmp_path / "f.nfck")
    again = checkpoint_load(tmp_path / "f.nfck")
    np.testing.assert_array_equal(again.score_samples(d.images), flow.score_samples(d.images))


def test_reloaded_classifier_predicts_exactly(fitted, tmp_path):
    d, _, clf = fitted
    checkpoint_save(clf, tmp_path / "c.nfck")
    again = checkpoint_load(tmp_path / "c.nfck")
    np.testing.assert_array_equal(again.predict_log_proba(d.images), clf.predict_log_proba(d.images))


def corrupt(raw, where):
    if where == "magic":
        return b"NFCX" + raw[4:]
    if where == "version":
        return raw[:4] + struct.pack("<I", 2) + raw[8:]
    if where == "descriptor_length":
        return raw[:8]
    if where == "payload":
        flipped = bytearray(raw)
        flipped[-10] ^= 0x01
        return bytes(flipped)
    if where == "truncated":
        return raw[:-1]
    raise AssertionError(where)


@pytest.mark.parametrize("where, field", [
    ("magic", "magic"), ("version", "version"), ("descriptor_length", "descriptor_length"),
    ("payload", "payload"), ("truncated", "payload"),
])
def test_checkpoint_corruption_names_field(fitted, tmp_path, where, field):
    _, flow, _ = fitted
    path = tmp_path / "f.nfck"
    checkpoint_save(flow, path)
    path.write_bytes(corrupt(path.read_bytes(), where))
    with pytest.raises(CheckpointError) as info:
        checkpoint_load(path)
    assert info.value.field == field


# ---------------------------------------------------------------- reports

def fake_result(queries, success):
    records = [{"index": i, "label": 0, "success": s, "queries": q, "loss": 0.0, "norm": 0.01,
                "iterations": 1, "failure": None if s else "budget"}
               for i, (q, s) in enumerate(zip(queries, success))]
    return {"attack": "flow", "config": {}, "records": records}


def test_report_statistics_and_files(tmp_path):
    doc = build_report(fake_result([100, 300, 200], [True, True, True]))
    assert doc["aggregates"]["avg_queries"] == 200 and doc["aggregates"]["median_queries"] == 200
    json_path, csv_path = emit_report(doc, str(tmp_path / "r"))
    assert load_report(json_path)["aggregates"] == doc["aggregates"]
    lines = open(csv_path).read().splitlines()
    assert lines[0] == "index,label,success,queries,loss,norm,iterations,failure"
    assert len(lines) == 4


def test_report_rate_rounding():
    doc = build_report(fake_result([100, 10_000, 200], [True, False, True]))
    assert doc["aggregates"]["success_rate_percent"] == 66.67
    assert doc["aggregates"]["median_queries"] == 150


def test_emit_rejects_inconsistent_aggregates(tmp_path):
    doc = build_report(fake_result([100], [True]))
    doc["aggregates"]["avg_queries"] = 5
    with pytest.raises(ValueError):
        emit_report(doc, str(tmp_path / "r"))


def test_timestamp_is_only_metadata():
    a = build_report(fake_result([1], [True]))
    b = build_report(fake_result([1], [True]))
    assert without_timestamp(a) == without_timestamp(b)


# ---------------------------------------------------------------- images

def test_pgm_round_trip(tmp_path):
    img = np.linspace(0, 1, 12, dtype=np.float32).reshape(1, 3, 4)
    write_pgm(tmp_path / "a.pgm", img)
    raw = (tmp_path / "a.pgm").read_bytes()
    assert raw.startswith(b"P5\n4 3\n255\n")
    np.testing.assert_array_equal(read_pgm(tmp_path / "a.pgm"), np.round(img[0] * 255))


def test_zero_perturbation_is_mid_gray(tmp_path):
    x = np.random.default_rng(0).uniform(size=(1, 8, 8)).astype(np.float32)
    paths = dump_images(x, x, str(tmp_path / "ex"))
    assert len(paths) == 3
    assert np.all(read_pgm(paths[2]) == 128)


# ---------------------------------------------------------------- CLI

@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "small.cfg").write_text(SMALL_CONFIG)
    return tmp_path


def run(*argv):
    return main(list(argv))


def test_cli_usage_errors(workdir, capsys):
    assert run("frobnicate") == 2
    assert run("gen-data", "--no-such-flag") == 2
    assert "usage:" in capsys.readouterr().err


def test_cli_validation_errors(workdir, capsys):
    assert run("train-flow", "--out", "empty") == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("flowattack train-flow: error:")
    (workdir / "bad.cfg").write_text("[attack]\nk = 0\n")
    assert run("gen-data", "--config", "bad.cfg") == 1


def test_cli_gen_data_is_deterministic(workdir):
    assert run("gen-data", "--seed", "7", "--out", "a", "--config", "small.cfg") == 0
    assert run("gen-data", "--seed", "7", "--out", "b", "--config", "small.cfg") == 0
    for name in ("train.nfds", "test.nfds"):
        assert (workdir / "a" / name).read_bytes() == (workdir / "b" / name).read_bytes()
    assert len(load_dataset(workdir / "a" / "train.nfds")) == 120


def test_cli_pipeline(workdir, capsys):
    common = ["--config", "small.cfg", "--out", "run", "--seed", "3"]
    assert run("gen-data", *common) == 0
    assert run("train-flow", *common) == 0
    assert run("train-classifier", *common) == 0
    assert run("train-classifier", "--defended", *common) == 0
    assert run("attack", "--attack", "flow", "--eps", "0.031373", *common) == 0
    for attack in ("flow", "nes", "pgd"):
        assert run("eval", "--attack", attack, *common) == 0
    assert run("eval", "--attack", "nes", "--defended", *common) == 0
    assert run("sample", "--count", "4", *common) == 0
    assert run("dump-images", "--attack", "pgd", *common) == 0
    out = workdir / "run"
    nes_def = load_report(out / "report_nes_defended.json")
    assert nes_def["attack_config"]["sigma"] == 0.001 and nes_def["attack_config"]["n_samples"] == 100
    flow_report = load_report(out / "report_flow.json")
    assert flow_report["config"]["attack"]["budget"] == 100
    assert all(r["queries"] <= 100 for r in flow_report["records"])
    assert len(list((out / "samples").glob("*.pgm"))) == 4
    single = json.loads(capsys.readouterr().out.splitlines()[4])
    assert single.get("attack") == "flow" or single.get("skipped") == "misclassified"
