import json

import pytest

from affectfusion import training
from affectfusion.cli import main
from affectfusion.config import RunConfig, parse_override
from affectfusion.data import load_features, load_labels_expr
from affectfusion.errors import ConfigError
from affectfusion.objectives import EvalReport


def synth(tmp_path, task="va", n=3, T=32, extra=()):
    out = tmp_path / f"data_{task}"
    dims = "visual=6,audio=3" if task == "va" else "visual=16"
    assert main(["synth", "--task", task, "--out", str(out), "--num-sequences", str(n),
                 "--T", str(T), "--dims", dims, *extra]) == 0
    return out


def write_config(tmp_path, name="cfg.json", **values):
    base = dict(task="va", model="attention", hidden=8, dropout=0.0, epochs=3, seq_len=16,
                stride=16, batch_size=4, lr=3e-3)
    base.update(values)
    path = tmp_path / name
    path.write_text(json.dumps(base))
    return path


# ---------------------------------------------------------------- config

def test_config_defaults():
    cfg = RunConfig()
    assert (cfg.hidden, cfg.dropout, cfg.loss_weight, cfg.grad_clip, cfg.lr) == (256, 0.2, 0.5, 0.8, 1e-3)
    assert (cfg.batch_size, cfg.epochs, cfg.seq_len) == (16, 30, 64)
    assert cfg.views == ["visual", "audio"] and cfg.anchor == "visual"


@pytest.mark.parametrize("bad", [
    {"bogus": 1}, {"hidden": 0}, {"dropout": 1.0}, {"lr": -1.0}, {"task": "pose"},
    {"model": "expr"}, {"hidden": 2.5}, {"epochs": True}, {"align_method": "dtw"},
    {"model": "mfn", "views": ["visual"]}, {"stride": 100}, {"stop_at": 1.5},
])
def test_config_rejects(bad):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(bad)


def test_config_json_round_trip(tmp_path):
    cfg = RunConfig(model="mctn", hidden=12, seed=4)
    (tmp_path / "c.json").write_text(cfg.to_json())
    assert RunConfig.load(tmp_path / "c.json") == cfg


def test_parse_override():
    assert parse_override("lr=0.01") == ("lr", 0.01)
    assert parse_override("views=[\"visual\"]") == ("views", ["visual"])
    assert parse_override("model=mfn") == ("model", "mfn")
    with pytest.raises(ConfigError):
        parse_override("novalue")


# ---------------------------------------------------------------- train / eval

def test_train_artifacts_and_eval_consistency(tmp_path, capsys):
    data = synth(tmp_path)
    cfg = write_config(tmp_path)
    run = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--data", str(data), "--out", str(run)]) == 0
    for name in ("config.json", "metrics.csv", "final.sfck", "best.sfck", "report.txt"):
        assert (run / name).exists()
    lines = (run / "metrics.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_ccc" and len(lines) == 1 + 4
    final_P = float(lines[-1].split(",")[2])

    assert main(["eval", "--checkpoint", str(run / "final.sfck"), "--data", str(data),
                 "--out", str(tmp_path / "eval.txt")]) == 0
    rep = EvalReport.read(tmp_path / "eval.txt")
    assert abs(rep.P - final_P) <= 1e-6  # report file keeps 6 decimals
    cfg_run = RunConfig.load(run / "config.json")
    from affectfusion.fusion import load_checkpoint
    from affectfusion.data import load_sequences
    seqs = load_sequences(data, cfg_run.views, "va")
    exact = training.evaluate(cfg_run, load_checkpoint(run / "final.sfck"), seqs)
    assert abs(exact.P - final_P) <= 1e-9
    assert "P" in capsys.readouterr().out


def test_epochs_zero_gives_baseline(tmp_path):
    data = synth(tmp_path)
    cfg = write_config(tmp_path, epochs=0)
    run = tmp_path / "run0"
    assert main(["train", "--config", str(cfg), "--data", str(data), "--out", str(run)]) == 0
    assert len((run / "metrics.csv").read_text().splitlines()) == 2
    assert (run / "final.sfck").read_bytes() == (run / "best.sfck").read_bytes()


def test_stop_at_ends_training_at_threshold(tmp_path):
    data = synth(tmp_path)
    cfg = RunConfig.from_dict(dict(json.loads(write_config(tmp_path, epochs=200).read_text()),
                                   data_dir=str(data), out_dir=str(tmp_path / "r"), stop_at=0.5))
    hist = training.train(cfg).history
    assert hist[-1]["val_ccc"] >= 0.5 and len(hist) < 201
    assert all(h["val_ccc"] < 0.5 for h in hist[:-1])


def test_train_is_deterministic(tmp_path):
    data = synth(tmp_path)
    cfg = write_config(tmp_path, dropout=0.2, seed=11)
    logs = []
    for name in ("r1", "r2"):
        assert main(["train", "--config", str(cfg), "--data", str(data),
                     "--out", str(tmp_path / name)]) == 0
        logs.append((tmp_path / name / "metrics.csv").read_bytes())
    assert logs[0] == logs[1]
    assert main(["train", "--config", str(cfg), "--data", str(data), "--seed", "12",
                 "--out", str(tmp_path / "r3")]) == 0
    assert (tmp_path / "r3" / "metrics.csv").read_bytes() != logs[0]


def test_config_snapshot_reproduces_run(tmp_path):
    data = synth(tmp_path)
    cfg = write_config(tmp_path, model="mfn", epochs=2)
    assert main(["train", "--config", str(cfg), "--data", str(data), "--out", str(tmp_path / "a")]) == 0
    snap = tmp_path / "a" / "config.json"
    assert main(["train", "--config", str(snap), "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()


def test_synth_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["synth", "--out", str(out), "--num-sequences", "2", "--T", "16"]) == 0
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir()) and len(files) == 6
    assert all((a / f).read_bytes() == (b / f).read_bytes() for f in files)


@pytest.mark.parametrize("model", ["mfn", "mctn"])
def test_train_other_va_models(tmp_path, model):
    data = synth(tmp_path)
    cfg = write_config(tmp_path, model=model, epochs=1, val_fraction=0.34)
    assert main(["train", "--config", str(cfg), "--data", str(data), "--out", str(tmp_path / "r")]) == 0


def test_expr_train_predict_pseudolabel(tmp_path):
    data = synth(tmp_path, "expr", n=2, T=20)
    cfg = write_config(tmp_path, task="expr", model="expr", views=["visual"], encoder_layers=1,
                       num_heads=2, head_dim=4, ffn_dim=8, epochs=2, label_smoothing=0.1)
    run = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--data", str(data), "--out", str(run)]) == 0
    assert (run / "metrics.csv").read_text().startswith("epoch,train_loss,val_f1\n")

    pred = tmp_path / "pred"
    assert main(["predict", "--checkpoint", str(run / "final.sfck"), "--data", str(data),
                 "--out", str(pred)]) == 0
    rows = (pred / "seq000.pred.csv").read_text().splitlines()
    assert rows[0] == "frame,class_id" and len(rows) == 21

    pl = tmp_path / "pl"
    assert main(["pseudolabel", "--checkpoint", str(run / "final.sfck"), "--data", str(data),
                 "--out", str(pl), "--tau", "0"]) == 0
    manifest = json.loads((pl / "pseudo_labels.json").read_text())
    assert manifest["pseudo"] is True and manifest["kept_fraction"] == 1.0
    assert load_labels_expr(pl / "seq000.expr.csv").valid.sum() == 20


def test_predict_va_csv(tmp_path):
    data = synth(tmp_path)
    cfg = write_config(tmp_path, epochs=1)
    run = tmp_path / "run"
    main(["train", "--config", str(cfg), "--data", str(data), "--out", str(run)])
    assert main(["predict", "--checkpoint", str(run / "final.sfck"), "--data", str(data),
                 "--out", str(tmp_path / "p")]) == 0
    rows = (tmp_path / "p" / "seq001.pred.csv").read_text().splitlines()
    assert rows[0] == "frame,valence,arousal" and len(rows) == 33
    assert rows[1].startswith("0,")


def test_align_command(tmp_path, capsys):
    data = synth(tmp_path)
    out = tmp_path / "aligned"
    assert main(["align", str(data / "seq000.audio.mmf"), str(data / "seq000.visual.mmf"),
                 "--anchor", "1", "--method", "pool", "--out", str(out)]) == 0
    assert load_features(out / "seq000.audio.mmf").T == 32
    assert "64 -> 32" in capsys.readouterr().out


# ---------------------------------------------------------------- exit codes

def test_exit_code_config(tmp_path):
    data = synth(tmp_path)
    cfg = write_config(tmp_path)
    assert main(["train", "--config", str(cfg), "--data", str(data), "--set", "bogus=1"]) == 2
    assert main(["train", "--config", str(tmp_path / "missing.json")]) == 2
    bad = write_config(tmp_path, "bad.json", hidden=-1)
    assert main(["train", "--config", str(bad), "--data", str(data)]) == 2


def test_exit_code_format(tmp_path):
    data = synth(tmp_path)
    p = data / "seq000.visual.mmf"
    p.write_bytes(p.read_bytes()[:-7])
    cfg = write_config(tmp_path)
    assert main(["train", "--config", str(cfg), "--data", str(data), "--out", str(tmp_path / "r")]) == 3
    assert main(["train", "--config", str(cfg), "--data", str(tmp_path / "empty"),
                 "--out", str(tmp_path / "r")]) == 3


def test_exit_code_numerical_abort(tmp_path, monkeypatch, capsys):
    data = synth(tmp_path)
    cfg = write_config(tmp_path)
    real = training.batch_loss

    def poisoned(cfg_, params, batch, target, rng=None, training_=False, **kw):
        loss = real(cfg_, params, batch, target, rng, training_)
        return loss * float("nan") if training_ else loss

    monkeypatch.setattr(training, "batch_loss",
                        lambda c, p, b, t, rng=None, training=False: poisoned(c, p, b, t, rng, training))
    assert main(["train", "--config", str(cfg), "--data", str(data), "--out", str(tmp_path / "r")]) == 4
    assert "epoch 1" in capsys.readouterr().err
