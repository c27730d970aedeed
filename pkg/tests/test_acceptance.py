"""Acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the
"acceptance criteria" block at the end of the pytest run.
"""

import numpy as np
import pytest
from oracles import naive_conv2d

from microcnn import architectures as A
from microcnn import benchmark as Bm
from microcnn import model_store as M
from microcnn.dataset import synth_generate
from microcnn.layers import conv2d_forward
from microcnn.network import Network
from microcnn.tensor_core import precision
from microcnn.trainer import TrainConfig, evaluate, gradient_check, relative_error, stratified_folds, train

# Training override for the desk-scale run: published optimizer settings,
# per-channel batch norm (the per-column variant stalls near 0.77 on this set).
TRAIN_SEED = 0
TRAIN_CONFIG = TrainConfig(learning_rate=0.1, epochs=30, batch_size=128, seed=TRAIN_SEED, bn_mode="channel_axis")
HEADLINE = [A.tinynet(4, 5), A.smallfirenet(3), A.fire_baseline(), A.baseline_cnn()]


def test_criterion_01_tinynet_counts(record):
    got = {f: [A.count_params(A.tinynet(f, n)).total_params for n in range(1, 6)] for f in (4, 8)}
    want = {4: [307, 571, 787, 979, 1159], 8: [443, 1195, 1899, 2579, 3247]}
    assert record(1, got == want, f"tinynet-4 {got[4]}, tinynet-8 {got[8]}"), got


def test_criterion_02_baseline_count(record):
    total = A.count_params(A.baseline_cnn()).total_params
    assert record(2, total == 930_411, f"baseline-cnn {total}")


def test_criterion_03_smallfirenet_conv_only(record):
    reports = [A.count_params(A.smallfirenet(n)) for n in (1, 2, 3)]
    conv = [r.conv_params for r in reports]
    residual = [r.residual for r in reports]
    flagged = all("unexplained normalization" in r.table() for r in reports)
    ok = conv == [2827, 3235, 3643] and residual == [336, 408, 444] and flagged
    assert record(3, ok, f"conv-only {conv}, residual {residual}, flagged={flagged}")


def test_criterion_04_gradient_check(record):
    worst = {"tinynet": 0.0, "smallfirenet": 0.0}
    checked = 0
    for seed in range(100):
        x = np.random.default_rng(seed).uniform(0, 1, (1, 1, 12, 12))
        label = seed % 11
        t = gradient_check(A.tinynet(4, 1), x, label=label, seed=seed)
        s = gradient_check(A.smallfirenet(1), x, label=label, seed=seed, max_per_param=20)
        worst["tinynet"] = max(worst["tinynet"], t.max_rel_error)
        worst["smallfirenet"] = max(worst["smallfirenet"], s.max_rel_error)
        checked += t.n_checked + s.n_checked
    ok = max(worst.values()) < 1e-4
    detail = f"100 seeds, {checked} coordinates, max rel err " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    assert record(4, ok, detail)


def test_criterion_05_conv_oracle(record):
    rng = np.random.default_rng(2024)
    worst = 0.0
    with precision(np.float64):
        for _ in range(200):
            k = int(rng.choice([1, 3, 5]))
            padding = str(rng.choice(["same", "valid"]))
            h, w = (int(v) for v in rng.integers(k, 11, size=2))
            n, c, o = int(rng.integers(1, 3)), int(rng.integers(1, 5)), int(rng.integers(1, 5))
            x = rng.standard_normal((n, c, h, w))
            wt, b = rng.standard_normal((o, c, k, k)), rng.standard_normal(o)
            err = relative_error(conv2d_forward(x, wt, b, padding), naive_conv2d(x, wt, b, padding)).max()
            worst = max(worst, float(err))
    assert record(5, worst < 1e-5, f"200 cases, max rel err {worst:.1e}")


def test_criterion_06_shape_law(record):
    specs = ([A.tinynet(f, n) for f in (4, 8) for n in range(1, 6)] + [A.smallfirenet(n) for n in range(1, 6)]
             + [A.fire_baseline(), A.baseline_cnn()])
    x = np.random.default_rng(0).uniform(0, 1, (1, 1, 96, 96)).astype(np.float32)
    bad = []
    for spec in specs:
        y = Network(spec).forward(x)
        if y.shape != (1, 11, 1, 1) or abs(float(y.sum(dtype=np.float64)) - 1) > 1e-6:
            bad.append(spec.name)
    assert record(6, not bad, f"{len(specs)} networks" + (f", failing {bad}" if bad else "")), bad


@pytest.mark.xfail(strict=True, reason="fire-baseline needs more FLOPs than baseline-cnn under the stated architectures")
def test_criterion_07_flop_ordering(record):
    f = {s.name: A.count_flops(s).total_flops for s in HEADLINE + [A.smallfirenet(1), A.smallfirenet(2)]}
    chain = f["tinynet-4-5"] < f["smallfirenet-3"] < f["fire-baseline"] < f["baseline-cnn"]
    modules = f["smallfirenet-2"] < f["smallfirenet-1"]
    detail = ", ".join(f"{k} {v / 1e6:.1f}M" for k, v in f.items())
    record(7, chain and modules, f"chain={chain} modules={modules}: {detail}")
    assert modules
    assert chain, detail


@pytest.mark.slow
def test_criterion_08_latency_matches_flops(record):
    reports = [Bm.bench(s, warmup=10, runs=50) for s in HEADLINE]
    by_latency = [r.name for r in sorted(reports, key=lambda r: r.mean)]
    by_flops = [r.name for r in sorted(reports, key=lambda r: r.flops)]
    detail = ", ".join(f"{r.name} {r.mean:.2f} ms" for r in reports)
    assert record(8, by_latency == by_flops, f"latency rank {by_latency}; {detail}")


@pytest.mark.slow
def test_criterion_09_desk_scale_training(record):
    x, y = synth_generate(50, seed=0).arrays("all")
    held_out = stratified_folds(y, 5, seed=0) == 0
    runs = [train(A.tinynet(4, 5), (x[~held_out], y[~held_out]), TRAIN_CONFIG) for _ in range(2)]
    net = runs[0].network
    train_acc, test_acc = evaluate(net, x[~held_out], y[~held_out]), evaluate(net, x[held_out], y[held_out])
    same = runs[0].rows == runs[1].rows and all(
        np.array_equal(net.params[k], runs[1].network.params[k]) for k in net.params)
    ok = train_acc >= 0.90 and test_acc > 2 / 11 and same
    detail = f"train {train_acc:.3f}, held-out {test_acc:.3f}, deterministic={same}"
    assert record(9, ok, detail)


def test_criterion_10_serialization(record, tmp_path):
    rng = np.random.default_rng(10)
    exact = True
    for i in range(30):
        kind = i % 3
        if kind == 0:
            spec = A.tinynet(int(rng.integers(1, 7)), int(rng.integers(1, 4)), int(rng.integers(2, 12)),
                             str(rng.choice(["width_axis", "channel_axis"])), 32)
        elif kind == 1:
            spec = A.smallfirenet(int(rng.integers(1, 4)), int(rng.integers(2, 12)), input_hw=32)
        else:
            spec = A.NetworkSpec([A.Conv(5, int(rng.integers(1, 5)), "valid"), A.ReLU(), A.MaxPool(), A.Flatten(),
                                  A.Dense(int(rng.integers(2, 12))), A.Softmax()], input=(1, 1, 12, 12))
        params = Network(spec, seed=i).params
        for k in params:
            params[k] = rng.standard_normal(params[k].shape).astype(np.float32)
        path = tmp_path / f"m{i}.tnet"
        M.save(spec, params, path)
        spec2, params2 = M.load(path)
        exact &= spec2 == spec and list(params2) == list(params)
        exact &= all(params2[k].tobytes() == params[k].tobytes() for k in params)

    good = (tmp_path / "m0.tnet").read_bytes()
    errors = {}
    for label, data in {"magic": b"XNET" + good[4:], "truncated": good[:-5],
                        "version": good[:4] + (2).to_bytes(4, "little") + good[8:]}.items():
        path = tmp_path / f"bad-{label}.tnet"
        path.write_bytes(data)
        try:
            M.load(path)
            errors[label] = None
        except M.ModelFileError as exc:
            errors[label] = type(exc)
    expected = {"magic": M.BadMagicError, "truncated": M.TruncatedFileError, "version": M.UnsupportedVersionError}
    ok = exact and errors == expected
    names = {k: v.__name__ if v else None for k, v in errors.items()}
    assert record(10, ok, f"30 random models bit-exact={exact}; errors {names}")


def test_criterion_11_speedups(record):
    published = {"reference": 1200.0, "fire-baseline": 600.0, "smallfirenet-3": 61.0,
                 "tinynet-4-5": 42.0, "tinynet-8-5": 110.0}
    reports = [Bm.BenchReport.from_latencies(k, 0, [v], 0, 0) for k, v in published.items()]
    got = {r.name: r.speedup for r in Bm.compare(reports, "reference").reports}
    want = {"fire-baseline": 2.0, "smallfirenet-3": 19.7, "tinynet-4-5": 28.6, "tinynet-8-5": 10.9}
    ok = all(abs(got[k] - v) <= 0.05 for k, v in want.items())
    assert record(11, ok, ", ".join(f"{k} {got[k]:.2f}" for k in want))
