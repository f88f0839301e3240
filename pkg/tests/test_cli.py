import shutil
import subprocess
import sys

import numpy as np
import pytest

from viewadapt import checkpoint, cli, formats, synth
from viewadapt import model as va
from viewadapt.skeleton import s_trans

TOY_CONFIG = """\
# tiny run
train_data = data/train.vaskel
test_data = data/test.vaskel
hidden = 6
batch_size = 4
epochs = 3
mode = va-full
"""


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run("synth", "--classes", 2, "--per-class", 6, "--frames", 5, "--joints", 6,
               "--seed", 1, "--out", "data") == 0
    (tmp_path / "run.cfg").write_text(TOY_CONFIG)
    return tmp_path


def test_synth_example(tmp_path):
    out = tmp_path / "d"
    assert run("synth", "--classes", 5, "--per-class", 60, "--frames", 30, "--joints", 15,
               "--seed", 7, "--out", out) == 0
    train = formats.read_native(out / "train.vaskel")
    test = formats.read_native(out / "test.vaskel")
    assert len(train) + len(test) == 300 and train.num_joints == 15
    assert len((out / "views.tsv").read_text().splitlines()) == 301
    again = tmp_path / "e"
    # global flags may also precede the command
    assert run("--seed", 7, "--out", again, "synth", "--classes", 5, "--per-class", 60,
               "--frames", 30, "--joints", 15) == 0
    for name in ("train.vaskel", "test.vaskel", "views.tsv"):
        assert (out / name).read_bytes() == (again / name).read_bytes()


@pytest.mark.parametrize("argv", [
    ["synth", "--classes", "0"],
    ["synth", "--joints", "3"],
    ["synth", "--per-class", "3", "--test-per-class", "3"],
    ["nonsense"],
    ["train"],
])
def test_usage_errors(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    with pytest.raises(SystemExit) as exc:
        code = run(*argv)
        raise SystemExit(code)
    assert exc.value.code == cli.EXIT_USAGE


def test_train_eval_and_determinism(workdir, capsys):
    assert run("train", "--config", "run.cfg", "--out", "r1") == 0
    assert run("train", "--config", "run.cfg", "--out", "r2", "--plot") == 0
    m1 = (workdir / "r1" / "metrics.tsv").read_bytes()
    assert m1 == (workdir / "r2" / "metrics.tsv").read_bytes()
    lines = m1.decode().splitlines()
    assert len(lines) == 3 and all(len(line.split("\t")) == 3 for line in lines)
    assert [line.split("\t")[0] for line in lines] == ["1", "2", "3"]
    ck1 = (workdir / "r1" / "model.vask").read_bytes()
    assert ck1[:4] == b"VASK" and ck1 == (workdir / "r2" / "model.vask").read_bytes()
    assert (workdir / "r2" / "metrics.png").stat().st_size > 0
    assert run("train", "--config", "run.cfg", "--out", "r3", "--seed", 5) == 0
    assert (workdir / "r3" / "model.vask").read_bytes() != ck1

    capsys.readouterr()
    assert run("eval", "r1/model.vask", "data/test.vaskel") == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("accuracy\t")
    rows = [list(map(int, r.split("\t"))) for r in out[1:]]
    assert len(rows) == 2 and all(len(r) == 2 for r in rows)
    assert sum(map(sum, rows)) == len(formats.read_native("data/test.vaskel"))


def test_config_errors(workdir):
    (workdir / "bad.cfg").write_text(TOY_CONFIG + "learning_rate = 0.1\n")
    assert run("train", "--config", "bad.cfg") == cli.EXIT_USAGE
    (workdir / "bad2.cfg").write_text(TOY_CONFIG + "dropout_p = 1.5\n")
    assert run("train", "--config", "bad2.cfg") == cli.EXIT_USAGE
    (workdir / "bad3.cfg").write_text(TOY_CONFIG.replace("data/train", "data/missing"))
    assert run("train", "--config", "bad3.cfg") == cli.EXIT_IO


def test_parse_run_config():
    cfg, run_opts = cli.parse_run_config("lr = 0.01 # comment\nmask_padding = no\n\nout = x\n"
                                         "branch_hidden = none\n")
    assert cfg.lr == 0.01 and cfg.mask_padding is False and cfg.branch_hidden is None
    assert run_opts["out"] == "x"
    for bad in ("nokey\n", "hidden = many\n", "mask_padding = maybe\n"):
        with pytest.raises(cli.UsageError):
            cli.parse_run_config(bad)
    help_text = cli._config_help()
    assert all(k in help_text for k in ("lr = 0.005", "dropout_p = 0.5", "train_data"))


def test_io_errors(workdir):
    assert run("eval", "nope.vask", "data/test.vaskel") == cli.EXIT_IO
    (workdir / "junk.vask").write_bytes(b"VASX" + bytes(20))
    assert run("eval", "junk.vask", "data/test.vaskel") == cli.EXIT_IO
    assert run("train", "--config", "run.cfg", "--out", "r") == 0
    good = (workdir / "r" / "model.vask").read_bytes()
    (workdir / "cut.vask").write_bytes(good[:-10])
    assert run("eval", "cut.vask", "data/test.vaskel") == cli.EXIT_IO
    (workdir / "broken.vaskel").write_text("VASKEL 1 1 1 6\nSEQ 0 2\n0 0 0\n")
    assert run("eval", "r/model.vask", "broken.vaskel") == cli.EXIT_IO


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_exit_code(workdir):
    # one Adam step of size ~1e308 overflows the classifier logits
    (workdir / "div.cfg").write_text(TOY_CONFIG + "lr = 1e308\n")
    assert run("train", "--config", "div.cfg") == cli.EXIT_DIVERGED


def test_gradcheck_command(capsys):
    assert run("gradcheck", "--hidden", 5) == 0
    out = capsys.readouterr().out.splitlines()
    groups = [line.split("\t")[0] for line in out[:-1]]
    model = va.init_model(va.TrainConfig(hidden=5), 5, 3, np.random.default_rng(0))
    assert sorted(groups) == sorted(model.params) and len(groups) == len(set(groups))
    assert out[-1].startswith("PASS")
    assert run("gradcheck", "--hidden", 4, "--corrupt", "main1.Wh") == cli.EXIT_GRADCHECK
    assert capsys.readouterr().out.splitlines()[-1].startswith("FAIL")


def test_transform_dump(workdir):
    # zero-init checkpoint: 0 epochs
    (workdir / "zero.cfg").write_text(TOY_CONFIG.replace("epochs = 3", "epochs = 0"))
    assert run("train", "--config", "zero.cfg", "--out", "z") == 0
    assert run("transform", "z/model.vask", "data/train.vaskel", "--out", "z.tsv",
               "--plot", "z.png", "--plot-count", 2) == 0
    data = formats.read_native("data/train.vaskel")
    lines = (workdir / "z.tsv").read_text().splitlines()
    assert len(lines) == sum(s.num_frames for s in data)
    dumped = cli.read_transform_dump(workdir / "z.tsv")
    for sid, seq in enumerate(data):
        np.testing.assert_allclose(dumped[sid], s_trans(seq).joints, rtol=1e-8, atol=1e-12)
    for line in lines:
        assert all(float(x) == 0 for x in line.split("\t")[2:8])
    assert (workdir / "z.png").stat().st_size > 0


def test_transform_dump_feeds_metric(workdir):
    assert run("train", "--config", "run.cfg", "--out", "r") == 0
    assert run("transform", "r/model.vask", "data/test.vaskel", "--out", "t.tsv") == 0
    model, _ = checkpoint.load_checkpoint(workdir / "r" / "model.vask")
    test = formats.read_native("data/test.vaskel")
    dumped = cli.read_transform_dump(workdir / "t.tsv")
    by_id = {id(s): dumped[i] for i, s in enumerate(test)}
    groups = synth.groups_by_label(test)
    from_dump = synth.view_consistency_metric(groups, lambda s: by_id[id(s)])
    direct = synth.view_consistency_metric(groups, synth.model_transform(model))
    assert from_dump == pytest.approx(direct, rel=1e-7)


def test_bench_command(tmp_path):
    cfg = tmp_path / "b.cfg"
    cfg.write_text("hidden = 4\nepochs = 1\nbatch_size = 50\n")
    # the default benchmark data with a tiny network: checks the wiring, not the numbers
    assert run("bench", "--config", cfg, "--out", tmp_path / "b") == 0
    table = (tmp_path / "b" / "results.tsv").read_text().splitlines()
    assert [r.split("\t")[0] for r in table] == list(synth.ABLATION_MODES)
    assert (tmp_path / "b" / "ablation.png").stat().st_size > 0


@pytest.mark.skipif(shutil.which("viewadapt") is None, reason="console script not installed")
def test_console_script(tmp_path):
    r = subprocess.run(["viewadapt", "synth", "--classes", "0"], capture_output=True, cwd=tmp_path)
    assert r.returncode == 1
    r = subprocess.run([sys.executable, "-m", "viewadapt.cli", "eval", "x.vask", "y"],
                       capture_output=True, cwd=tmp_path)
    assert r.returncode == 2 and b"x.vask" in r.stderr
    r = subprocess.run(["viewadapt", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "lr = 0.005" in r.stdout
