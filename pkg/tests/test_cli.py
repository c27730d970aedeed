import csv

import numpy as np
import pytest

from microcnn import dataset as D
from microcnn import model_store as M
from microcnn.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_build_tinynet(capsys):
    code, out, _ = run(capsys, "build", "--arch", "tinynet", "--filters", 4, "--n", 5)
    assert code == 0
    assert "total params        1159" in out


def test_build_baseline(capsys):
    code, out, _ = run(capsys, "build", "--arch", "baseline-cnn")
    assert code == 0 and "total params        930411" in out


def test_build_too_deep(capsys):
    code, _, err = run(capsys, "build", "--arch", "tinynet", "--n", 9)
    assert code == 2 and "spatial extent exhausted" in err


def test_build_from_descriptor(tmp_path, capsys):
    path = tmp_path / "net.txt"
    path.write_text("tiny f=4\nconv 1x1 f=11\ngap\nsoftmax\n")
    code, out, _ = run(capsys, "build", "--arch", path)
    assert code == 0 and "total params        307" in out


def test_usage_errors(capsys):
    assert run(capsys, "build", "--arch", "nonsense")[0] == 2
    assert run(capsys, "frobnicate")[0] == 2
    assert run(capsys, "build")[0] == 2
    assert run(capsys, "bench", "--runs", 1)[0] == 2


def test_train_header_and_determinism(tmp_path, capsys):
    args = ["train", "--arch", "tinynet", "--n", 1, "--synthetic", 2, "--seed", 7, "--epochs", 2]
    code, _, err = run(capsys, *args, "--out", tmp_path / "a.tnet", "--metrics", tmp_path / "a.csv")
    assert code == 0
    assert "lr=0.1 epochs=2 batch=128" in err
    run(capsys, *args, "--out", tmp_path / "b.tnet", "--metrics", tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.tnet").read_bytes() == (tmp_path / "b.tnet").read_bytes()
    rows = list(csv.reader(open(tmp_path / "a.csv")))
    assert rows[0] == ["epoch", "batch", "loss", "accuracy"] and len(rows) == 3


def test_train_defaults_in_header(tmp_path, capsys):
    code, out, err = run(capsys, "train", "--arch", "tinynet", "--n", 1, "--synthetic", 1, "--epochs", 0,
                         "--out", tmp_path / "m.tnet")
    assert code == 0 and "lr=0.1" in err and "batch=128" in err
    assert out.startswith("epoch,batch,loss,accuracy")


def test_train_missing_data_dir(tmp_path, capsys):
    missing = tmp_path / "nowhere"
    code, _, err = run(capsys, "train", "--arch", "tinynet", "--data", missing, "--out", tmp_path / "m.tnet")
    assert code == 2 and str(missing) in err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_divergence_exit_code(tmp_path, capsys):
    root = tmp_path / "data"
    for name, value in (("a", 0), ("b", 200)):
        (root / name).mkdir(parents=True)
        D.write_pgm(root / name / "x.pgm", np.full((96, 96), value, np.uint8))
    # an absurd step overflows the weights after the first update
    code, _, err = run(capsys, "train", "--arch", "tinynet", "--n", 1, "--classes", 2, "--data", root,
                       "--epochs", 3, "--lr", 1e308, "--out", tmp_path / "m.tnet")
    assert code == 3 and "epoch" in err


def _one_image_model(tmp_path, capsys):
    root = tmp_path / "data"
    img = D.synth_generate(1, seed=2).train[4].pixels[0, 0]
    for name in ("c0", "c1", "c2"):
        (root / name).mkdir(parents=True)
    D.write_pgm(root / "c1" / "only.pgm", img)
    D.write_pgm(root / "c0" / "dark.pgm", np.zeros((96, 96), np.uint8))
    D.write_pgm(root / "c2" / "bright.pgm", np.full((96, 96), 200, np.uint8))
    model = tmp_path / "m.tnet"
    code, _, _ = run(capsys, "train", "--arch", "tinynet", "--n", 2, "--classes", 3, "--data", root,
                     "--epochs", 60, "--lr", 0.01, "--batch", 3, "--bn-mode", "channel_axis", "--out", model)
    assert code == 0
    return model, root / "c1" / "only.pgm"


def test_predict_overfit_sample(tmp_path, capsys):
    model, image = _one_image_model(tmp_path, capsys)
    code, out, _ = run(capsys, "predict", "--model", model, "--image", image)
    assert code == 0
    index, probs = out.splitlines()
    p = np.array([float(v) for v in probs.split()])
    assert int(index) == 1 and len(p) == 3
    assert abs(p.sum() - 1) < 1e-6


def test_predict_rejects_wrong_size(tmp_path, capsys):
    from microcnn.architectures import tinynet
    from microcnn.network import Network
    M.save(tinynet(4, 1), Network(tinynet(4, 1)).params, tmp_path / "m.tnet")
    D.write_pgm(tmp_path / "small.pgm", np.zeros((32, 32), np.uint8))
    code, _, err = run(capsys, "predict", "--model", tmp_path / "m.tnet", "--image", tmp_path / "small.pgm")
    assert code == 2 and "small.pgm" in err
    code, _, _ = run(capsys, "predict", "--model", tmp_path / "none.tnet", "--image", tmp_path / "small.pgm")
    assert code == 2


def test_bench_single_run(capsys):
    code, out, _ = run(capsys, "bench", "--arch", "tinynet", "--filters", 4, "--n", 5, "--runs", 1, "--warmup", 0, "--csv")
    assert code == 0
    row = list(csv.DictReader(out.splitlines()))[0]
    assert row["params"] == "1159" and float(row["std_ms"]) == 0


def test_bench_against(tmp_path, capsys):
    ref = tmp_path / "baseline.csv"
    code, out, _ = run(capsys, "bench", "--arch", "tinynet", "--n", 3, "--runs", 2, "--warmup", 0, "--csv")
    ref.write_text(out.replace("tinynet-4-3", "reference"))
    code, out, _ = run(capsys, "bench", "--arch", "tinynet", "--n", 1, "--runs", 2, "--warmup", 0, "--against", ref)
    assert code == 0
    assert "speedup" in out and "reference" in out and "tinynet-4-1" in out
    assert run(capsys, "bench", "--arch", "tinynet", "--runs", 1, "--against", tmp_path / "none.csv")[0] == 2


def test_export_and_import_check(tmp_path, capsys):
    code, out, _ = run(capsys, "export", "--arch", "tinynet", "--n", 1)
    assert code == 0 and out.startswith("name tinynet-4-1")
    model = tmp_path / "m.tnet"
    assert run(capsys, "export", "--arch", "tinynet", "--n", 1, "--out", model)[0] == 0
    code, out, _ = run(capsys, "import-check", "--model", model)
    assert code == 0 and "params 307" in out and "blobs 10" in out
    model.write_bytes(b"XNET" + model.read_bytes()[4:])
    code, _, err = run(capsys, "import-check", "--model", model)
    assert code == 2 and "not a model file" in err


def test_eval_prints_mean_and_std(capsys):
    code, out, _ = run(capsys, "eval", "--arch", "tinynet", "--n", 1, "--synthetic", 2, "--epochs", 1,
                       "--folds", 2, "--batch", 8)
    assert code == 0
    assert "±" in out.splitlines()[-1]
