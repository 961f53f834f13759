import csv
import json

import jsonschema
import numpy as np
import pytest

from framebits.cli import main
from framebits.media_io import FramePlanes, write_sequence
from framebits.ratecontrol import REPORT_SCHEMA

FAST = {"forest": {"n_estimators": 8}, "synth": {"base_qps": [22, 30, 38, 46]}}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "fast.json"
    cfg.write_text(json.dumps(FAST))
    data = root / "data"
    rc = main(["--config", str(cfg), "synth", "--out", str(data), "--sequences", "6",
               "--frames", "33", "--width", "64", "--height", "64", "--seed", "2",
               "--write-yuv"])
    assert rc == 0
    return root, cfg, data


def test_analyze_writes_csv(tmp_path):
    rng = np.random.default_rng(0)
    frames = [FramePlanes(rng.integers(0, 256, (32, 64), dtype=np.uint8),
                          rng.integers(0, 256, (16, 32), dtype=np.uint8),
                          rng.integers(0, 256, (16, 32), dtype=np.uint8)) for _ in range(5)]
    write_sequence(tmp_path / "in.yuv", frames)
    out = tmp_path / "nested" / "f.csv"
    assert main(["analyze", str(tmp_path / "in.yuv"), "--width", "64", "--height", "32",
                 "-o", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert len(rows) == 6 and rows[0][0] == "frame_index"
    assert (out.parent / "resolved_config.json").exists()


def test_analyze_usage_and_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(["analyze", "x.yuv", "--height", "64"])
    assert info.value.code == 2
    assert main(["analyze", str(tmp_path / "missing.yuv"), "--width", "64",
                 "--height", "64"]) == 1
    (tmp_path / "odd.yuv").write_bytes(bytes(100))
    assert main(["analyze", str(tmp_path / "odd.yuv"), "--width", "63",
                 "--height", "64"]) == 3
    assert "error" in capsys.readouterr().err


def test_synth_deterministic(workspace, tmp_path):
    root, cfg, data = workspace
    again = tmp_path / "again"
    main(["--config", str(cfg), "synth", "--out", str(again), "--sequences", "6",
          "--frames", "33", "--width", "64", "--height", "64", "--seed", "2"])
    assert (again / "log.csv").read_bytes() == (data / "log.csv").read_bytes()
    assert (data / "resolved_config.json").exists()
    resolved = json.loads((data / "resolved_config.json").read_text())
    assert resolved["synth"]["sequences"] == 6 and resolved["forest"]["n_estimators"] == 8


def test_analyze_matches_synth_features(workspace, tmp_path):
    root, cfg, data = workspace
    out = tmp_path / "a.csv"
    main(["analyze", str(data / "yuv" / "syn000.yuv"), "--width", "64", "--height", "64",
          "-o", str(out)])
    assert out.read_text() == (data / "features" / "syn000.csv").read_text()


@pytest.fixture(scope="module")
def trained(workspace):
    root, cfg, data = workspace
    out = root / "train"
    assert main(["--config", str(cfg), "train", "--data", str(data), "--out", str(out),
                 "--folds", "5"]) == 0
    return out


def test_train_reports(trained, capsys):
    report = json.loads((trained / "cv_report.json").read_text())
    assert report["folds"] == 5
    assert all(len(r["folds"]) == 5 for r in report["reports"])
    assert set(report["summary"]) == {"I", "P", "B"}
    assert {p.name for p in (trained / "models").iterdir()} == {"I.json", "P.json", "B.json"}
    assert (trained / "resolved_config.json").exists()


def test_train_is_reproducible(workspace, trained, tmp_path):
    root, cfg, data = workspace
    main(["--config", str(cfg), "train", "--data", str(data), "--out", str(tmp_path / "t"),
          "--folds", "5", "--frame-type", "B"])
    assert (tmp_path / "t" / "models" / "B.json").read_bytes() == \
        (trained / "models" / "B.json").read_bytes()


def test_predict_evaluate_importance(workspace, trained, tmp_path):
    root, cfg, data = workspace
    pred = tmp_path / "pred.csv"
    assert main(["predict", "--models", str(trained / "models"), "--data", str(data),
                 "-o", str(pred)]) == 0
    ev = tmp_path / "eval.json"
    assert main(["evaluate", "--predictions", str(pred), "-o", str(ev)]) == 0
    result = json.loads(ev.read_text())
    assert set(result["frame_types"]) == {"I", "P", "B"}
    imp = tmp_path / "imp.json"
    assert main(["importance", "--model", str(trained / "models" / "I.json"),
                 "-o", str(imp)]) == 0
    doc = json.loads(imp.read_text())
    assert doc["ranking"][0] == "q"
    assert sum(doc["scores"].values()) == pytest.approx(1.0)


def test_evaluate_bd_rate(tmp_path):
    pred = tmp_path / "p.csv"
    pred.write_text("sequence_id,frame_index,frame_type,q,bits,predicted\ns,0,I,30,100,90\n")
    anchor = tmp_path / "a.csv"
    test = tmp_path / "t.csv"
    anchor.write_text("rate,quality\n1000,30\n2000,33\n4000,36\n8000,38\n")
    test.write_text("rate,psnr_y,psnr_u,psnr_v\n2000,30,30,30\n4000,33,33,33\n"
                    "8000,36,36,36\n16000,38,38,38\n")
    out = tmp_path / "e.json"
    main(["evaluate", "--predictions", str(pred), "--anchor-rd", str(anchor),
          "--test-rd", str(test), "-o", str(out)])
    doc = json.loads(out.read_text())
    assert doc["bd_rate_percent"] == pytest.approx(100.0, abs=0.01)
    assert doc["frame_types"]["I"]["mape"] == pytest.approx(10.0)


def test_simulate_rc_oracle_report(workspace, trained, tmp_path):
    root, cfg, data = workspace
    report = tmp_path / "rc" / "r.json"
    assert main(["--config", str(cfg), "simulate-rc",
                 "--features", str(data / "features" / "syn001.csv"),
                 "--models", str(trained / "models"), "--target-bitrate", "300000",
                 "--height", "64", "--oracle", str(data / "oracle.json"),
                 "--report", str(report)]) == 0
    doc = json.loads(report.read_text())
    jsonschema.validate(doc, REPORT_SCHEMA)
    assert len(doc["frames"]) == 33
    assert (report.parent / "resolved_config.json").exists()


def test_simulate_rc_replay(workspace, trained, tmp_path):
    root, cfg, data = workspace
    report = tmp_path / "r.json"
    assert main(["--config", str(cfg), "simulate-rc", "--backend", "replay",
                 "--log", str(data / "log.csv"), "--calibrate",
                 "--features", str(data / "features" / "syn002.csv"),
                 "--models", str(trained / "models"), "--target-bitrate", "300000",
                 "--c-high", "0.25", "--report", str(report)]) == 0
    jsonschema.validate(json.loads(report.read_text()), REPORT_SCHEMA)


def test_simulate_rc_needs_target(workspace, trained, tmp_path):
    root, cfg, data = workspace
    assert main(["simulate-rc", "--features", str(data / "features" / "syn001.csv"),
                 "--models", str(trained / "models"), "--height", "64",
                 "--report", str(tmp_path / "r.json")]) == 3


def test_gop_dump(capsys):
    assert main(["gop", "dump", "--frames", "5", "--gop-size", "4", "--intra-period", "8"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "frame_index,type,level,ref0,ref1"
    assert lines[3] == "2,B,1,0,4"


def test_bad_config_exit_code(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"nope": 1}')
    assert main(["--config", str(cfg), "gop", "dump", "--frames", "3"]) == 3


def test_demo_small(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"forest": {"n_estimators": 5}, "train": {"folds": 3},
                               "synth": {"width": 64, "height": 64}}))
    assert main(["--config", str(cfg), "demo", "--out", str(tmp_path / "demo"),
                 "--sequences", "4", "--frames", "33"]) == 0
    out = capsys.readouterr().out
    assert "Random forest" in out and "GOP compensation" in out
    doc = json.loads((tmp_path / "demo" / "demo_report.json").read_text())
    for rep in doc["rate_control"].values():
        jsonschema.validate(rep, REPORT_SCHEMA)
