import csv

import pytest

from surrokit.cli import main, parse_batches
from surrokit.datagen import read_dataset
from surrokit.mlp import load_model

WALL_CLOCK = {"wall_seconds", "train_seconds", "eval_seconds", "speedup", "t_original", "t_surrogate"}


def run(out, *args):
    return main([*args, "--out-dir", str(out)])


def numeric_columns(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return [{k: v for k, v in r.items() if k not in WALL_CLOCK} for r in rows]


@pytest.fixture
def newton_dir(tmp_path):
    out = tmp_path / "run"
    assert run(out, "gen", "newton", "--n", "400", "--seed", "3") == 0
    return out


def test_gen_writes_split(newton_dir, capsys):
    train, val = read_dataset(newton_dir / "newton_train.csv"), read_dataset(newton_dir / "newton_val.csv")
    assert len(train) + len(val) == 400
    assert "x0" in train.meta
    cfg = (newton_dir / "gen_config.txt").read_text()
    assert "n=400" in cfg and "seed=3" in cfg


def test_train_eval_bench(newton_dir, capsys):
    assert run(newton_dir, "train", "newton", "--steps", "200", "--seed", "3") == 0
    model_path = newton_dir / "model_newton_3x5x3x1.txt"
    trace = newton_dir / "trace_newton_3x5x3x1.csv"
    assert load_model(model_path).topology.layer_sizes == (3, 5, 3, 1)
    assert [r["step"] for r in numeric_columns(trace)][-1] == "200"
    assert run(newton_dir, "eval", "--model", str(model_path),
               "--dataset", str(newton_dir / "newton_val.csv")) == 0
    assert (newton_dir / "eval.csv").exists()
    assert run(newton_dir, "bench", "newton", "--model", str(model_path), "--batch", "64,128",
               "--repetitions", "3") == 0
    rows = numeric_columns(newton_dir / "bench_newton.csv")
    assert [r["n_calls"] for r in rows] == ["64", "128"]


def test_bench_lj_and_repetition_clamp(tmp_path, caplog):
    out = tmp_path / "lj"
    assert run(out, "gen", "lj", "--n", "300") == 0
    assert run(out, "train", "lj", "--steps", "100") == 0
    model = out / "model_lj_1x3x1.txt"
    assert "relu_tanh" in model.read_text().splitlines()[2]
    assert run(out, "bench", "lj", "--model", str(model), "--atoms", "40", "--repetitions", "1") == 0
    assert "raised to 3" in caplog.text


def test_gen_train_sweep_deterministic(tmp_path):
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert run(out, "gen", "newton", "--n", "300", "--seed", "5") == 0
        assert run(out, "train", "newton", "--steps", "100", "--seed", "5") == 0
        assert run(out, "sweep", "newton", "--topologies", "3x3x1,3x5x1", "--steps", "60",
                   "--seeds", "1,2", "--repetitions", "3") == 0
    a, b = outs
    for name in ("newton_train.csv", "newton_val.csv", "newton_train.csv.norm",
                 "model_newton_3x5x3x1.txt", "model_newton_3x3x1_seed2.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    for name in ("trace_newton_3x5x3x1.csv", "sweep_newton_seed1.csv", "sweep_newton_seed2.csv"):
        assert numeric_columns(a / name) == numeric_columns(b / name), name


def test_config_file_and_override(tmp_path):
    out = tmp_path / "c"
    conf = tmp_path / "conf.txt"
    conf.write_text("# small run\nn=120\nseed=9\n")
    assert main(["gen", "lj", "--config", str(conf), "--out-dir", str(out)]) == 0
    assert "n=120" in (out / "gen_config.txt").read_text()
    assert main(["gen", "lj", "--config", str(conf), "--n", "50", "--out-dir", str(out)]) == 0
    resolved = (out / "gen_config.txt").read_text()
    assert "n=50" in resolved and "seed=9" in resolved


@pytest.mark.parametrize("args", [
    ["train", "newton", "--topology", "3xx1"],
    ["gen", "newton", "--n", "0"],
    ["sweep", "newton", "--topologies", ","],
    ["eval"],
])
def test_usage_errors_exit_2(tmp_path, args, capsys):
    assert run(tmp_path, *args) == 2
    assert "error" in capsys.readouterr().err


def test_bad_config_key_exit_2(tmp_path):
    conf = tmp_path / "conf.txt"
    conf.write_text("bogus=1\n")
    assert main(["gen", "lj", "--config", str(conf), "--out-dir", str(tmp_path)]) == 2


def test_missing_file_exit_1(tmp_path, capsys):
    assert run(tmp_path, "eval", "--model", str(tmp_path / "none.txt"),
               "--dataset", str(tmp_path / "none.csv")) == 1


def test_malformed_model_exit_1(tmp_path, capsys):
    bad = tmp_path / "m.txt"
    bad.write_text("not a model\n")
    (tmp_path / "d.csv").write_text("in_0,out_0\n1,2\n")
    assert run(tmp_path, "eval", "--model", str(bad), "--dataset", str(tmp_path / "d.csv")) == 1
    assert "m.txt:1" in capsys.readouterr().err


def test_argparse_rejects_unknown_region(tmp_path):
    with pytest.raises(SystemExit) as err:
        run(tmp_path, "gen", "heat")
    assert err.value.code == 2


def test_parse_batches():
    assert parse_batches("5120..10240:512") == list(range(5120, 10241, 512))
    assert parse_batches("7,9") == [7, 9]
