import pytest

from mltsfnet import ablation
from mltsfnet.checkpoint import Checkpoint
from mltsfnet.cli import main
from mltsfnet.config import TrainConfig
from mltsfnet.metrics import parse_keyvalue_report

TINY = "scales=4\nchannels=4\nout_channels=6\nvocab_size=5\nepochs=2\nbatch_size=2\n" \
       "synth.max_duration=6\n"


@pytest.fixture
def workspace(tmp_path):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(TINY)
    assert main(["synth", "--config", str(cfg), "--n", "6", "--dev", "3",
                 "--out", str(tmp_path / "data")]) == 0
    return tmp_path, cfg


def test_synth_train_eval_decode(workspace, capsys):
    tmp, cfg = workspace
    data = tmp / "data"
    assert (data / "vocab.txt").read_text().splitlines()[0] == "<blank>"
    assert len(list((data / "train").glob("*.mlts"))) == 6
    ckpt = tmp / "m.mlck"
    assert main(["train", "--config", str(cfg), "--data-dir", str(data), "--out", str(ckpt)]) == 0
    assert Checkpoint.load(ckpt).epoch == 2
    assert (tmp / "m.best.mlck").exists()

    report = tmp / "r.txt"
    assert main(["eval", "--ckpt", str(ckpt), "--data-dir", str(data), "--report", str(report)]) == 0
    out = capsys.readouterr().out
    assert "del/ins" in out
    values = parse_keyvalue_report(report.read_text())
    assert values["sentences"] == 3

    assert main(["decode", "--ckpt", str(ckpt), "--features",
                 str(next((data / "dev").glob("*.mlts")))]) == 0
    line = capsys.readouterr().out.strip()
    assert all(tok.startswith("G") for tok in line.split())


def test_resume_from_cli(workspace):
    tmp, cfg = workspace
    ckpt = tmp / "m.mlck"
    main(["train", "--config", str(cfg), "--data-dir", str(tmp / "data"), "--out", str(ckpt)])
    first = ckpt.read_bytes()
    assert main(["train", "--config", str(cfg), "--data-dir", str(tmp / "data"), "--out", str(ckpt),
                 "--resume", str(ckpt)]) == 0
    # already at the final epoch: nothing left to do
    assert ckpt.read_bytes() == first


def test_vocab_mismatch(workspace, capsys):
    tmp, cfg = workspace
    other = tmp / "other.cfg"
    other.write_text(TINY.replace("vocab_size=5", "vocab_size=7"))
    code = main(["train", "--config", str(other), "--data-dir", str(tmp / "data"),
                 "--out", str(tmp / "x.mlck")])
    assert code == 2
    err = capsys.readouterr().err
    assert "7" in err and "5" in err


def test_bad_config_and_bad_file(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour=blue\n")
    assert main(["gradcheck", "--config", str(bad)]) == 2
    assert "unknown key" in capsys.readouterr().err
    junk = tmp_path / "junk.mlck"
    junk.write_bytes(b"nothing here")
    assert main(["eval", "--ckpt", str(junk), "--data-dir", str(tmp_path)]) == 2


def test_gradcheck_exit_code_follows_report(tmp_path, capsys):
    cfg = tmp_path / "g.cfg"
    cfg.write_text("use_mltsf=false\nlevel1_filters=3,1\nchannels=3\nout_channels=4\nvocab_size=4\n")
    code = main(["gradcheck", "--config", str(cfg), "--frames", "12"])
    out = capsys.readouterr().out
    assert "global max rel. error" in out
    assert code == (0 if "-> PASS" in out else 1)


def test_ablation_suites_are_well_formed():
    for name, variants in ablation.SUITES.items():
        for v in variants:
            TrainConfig().replace(**v.overrides)  # every variant is a valid config
    names = [v.name for v in ablation.SUITES["table4"]]
    assert names[0] == "none" and "k={4,6,8}" in names


def test_ablate_smoke(capsys):
    setup = ablation.BenchmarkSetup(
        train_size=4, dev_size=2,
        base=TrainConfig(epochs=1, channels=4, out_channels=4, vocab_size=5))
    result = ablation.run_suite("table7", setup, seeds=(1,))
    assert [r.variant for r in result.runs] == ["average", "dynamic"]
    assert "median" in result.table()
