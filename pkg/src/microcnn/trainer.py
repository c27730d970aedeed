"""Cross-entropy training with Adam, k-fold evaluation and gradient checking."""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .graph import BatchNorm, ParamStore
from .layers import softmax
from .network import Network
from .tensor_core import ShapeError, precision

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


class DivergenceError(FloatingPointError):
    def __init__(self, epoch, batch, loss):
        super().__init__(f"training diverged at epoch {epoch}, batch {batch} (loss={loss})")
        self.epoch, self.batch, self.loss = epoch, batch, loss


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 30
    batch_size: int = 128
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    bn_mode: str | None = None  # None keeps the network spec's mode
    recalibrate_bn: bool = True

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("adam betas must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")


@dataclass
class OptimizerState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def for_params(cls, params: ParamStore):
        return cls(
            {k: np.zeros_like(p) for k, p in params.trainable_items()},
            {k: np.zeros_like(p) for k, p in params.trainable_items()},
        )


def cross_entropy(pred, label):
    """Loss and logit-gradient for one probability vector.

    Returns ``(loss, grad)`` with ``grad = pred - onehot(label)``.
    """
    pred = np.asarray(pred).reshape(-1)
    if not 0 <= label < pred.size:
        raise IndexError(f"label {label} out of range for {pred.size} classes")
    loss = -np.log(max(pred[label], PROB_FLOOR))
    grad = pred.copy()
    grad[label] -= 1
    return float(loss), grad


def batch_cross_entropy(probs, labels):
    """Mean loss over a batch of ``(N, c, 1, 1)`` probabilities and the logit gradient."""
    p = probs[:, :, 0, 0]
    n = p.shape[0]
    if np.any(labels < 0) or np.any(labels >= p.shape[1]):
        raise IndexError("label out of range")
    picked = np.maximum(p[np.arange(n), labels], PROB_FLOOR)
    loss = -np.mean(np.log(picked))
    grad = p.copy()
    grad[np.arange(n), labels] -= 1
    return float(loss), (grad / n).reshape(probs.shape).astype(probs.dtype)


def adam_step(params: ParamStore, grads, state: OptimizerState, cfg: TrainConfig):
    """One bias-corrected Adam update, applied in place to ``params``."""
    state.t += 1
    t = state.t
    b1, b2 = cfg.beta1, cfg.beta2
    for name in params.trainable:
        g = grads[name]
        p = params[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        m = state.m[name] = b1 * state.m[name] + (1 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        params[name] = (p - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)).astype(p.dtype)
    return params, state


@dataclass
class TrainResult:
    network: Network
    rows: list = field(default_factory=list)  # (epoch, batch, loss, accuracy)
    epochs: list = field(default_factory=list)  # (epoch, mean loss, accuracy)

    @property
    def final_accuracy(self):
        return self.epochs[-1][2] if self.epochs else float("nan")


def _as_arrays(data):
    if hasattr(data, "arrays"):
        return data.arrays("train")
    x, y = data
    return np.asarray(x), np.asarray(y)


def train(spec, data, cfg: TrainConfig | None = None, on_batch=None) -> TrainResult:
    """Train ``spec`` from a fresh initialization.

    ``data`` is a :class:`~microcnn.dataset.DatasetSplit` (its train part
    is used) or an ``(images, labels)`` pair. ``on_batch`` receives each
    ``(epoch, batch, loss, accuracy)`` row as it is produced.
    """
    cfg = cfg or TrainConfig()
    if cfg.bn_mode and cfg.bn_mode != spec.bn_mode:
        spec = spec.with_bn_mode(cfg.bn_mode)
    x, y = _as_arrays(data)
    if y.size and y.max() >= spec.classes:
        raise ValueError(f"labels reach {y.max()}, network has {spec.classes} classes")
    init_seed, shuffle_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    net = Network(spec, seed=np.random.default_rng(init_seed).integers(2 ** 32))
    x = x.astype(net.dtype, copy=False)
    rng = np.random.default_rng(shuffle_seed)
    state = OptimizerState.for_params(net.params)
    result = TrainResult(net)
    n = len(y)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total_loss = correct = 0.0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            logits = net.logits(x[idx], train=True)
            probs = softmax(logits)
            loss, dlogits = batch_cross_entropy(probs, y[idx])
            if not np.isfinite(loss):
                raise DivergenceError(epoch, b, loss)
            grads, _ = net.backward(dlogits)
            adam_step(net.params, grads, state, cfg)
            acc = float(np.mean(probs[:, :, 0, 0].argmax(axis=1) == y[idx]))
            row = (epoch, b, loss, acc)
            result.rows.append(row)
            if on_batch:
                on_batch(row)
            total_loss += loss * len(idx)
            correct += acc * len(idx)
        result.epochs.append((epoch, total_loss / n, correct / n))
        log.info("epoch %d loss %.4f acc %.4f", epoch, total_loss / n, correct / n)
    if cfg.recalibrate_bn and cfg.epochs:
        recalibrate_batchnorm(net, x, cfg.batch_size)
    return result


def recalibrate_batchnorm(net: Network, x, batch_size=128):
    """Replace running batch-norm statistics by their average over ``x``.

    With a 0.99 momentum and only a few hundred updates the moving
    averages still remember their initial values; one extra pass over the
    training images (train-phase forward, parameters untouched) gives the
    inference phase the statistics it was trained against.
    """
    bns = [node for node in net.graph.walk() if isinstance(node, BatchNorm)]
    if not bns:
        return
    for node in bns:
        node.stat_sink = []
    try:
        for start in range(0, len(x), batch_size):
            net.logits(x[start:start + batch_size], train=True)
        for node in bns:
            sizes = np.array([s[0] for s in node.stat_sink], dtype=np.float64)
            w = sizes / sizes.sum()
            mean = sum(wi * s[1] for wi, s in zip(w, node.stat_sink))
            var = sum(wi * s[2] for wi, s in zip(w, node.stat_sink))
            dtype = net.params[node.names["mean"]].dtype
            net.params[node.names["mean"]] = mean.astype(dtype)
            net.params[node.names["var"]] = var.astype(dtype)
    finally:
        for node in bns:
            node.stat_sink = None


def evaluate(net: Network, x, y, batch_size=256):
    """Inference-phase accuracy."""
    if len(y) == 0:
        return float("nan")
    hits = 0
    for start in range(0, len(y), batch_size):
        hits += int(np.sum(net.predict(x[start:start + batch_size]) == y[start:start + batch_size]))
    return hits / len(y)


def write_metrics(rows, fh):
    """Write ``epoch,batch,loss,accuracy`` rows to an open text file."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["epoch", "batch", "loss", "accuracy"])
    for epoch, batch, loss, acc in rows:
        w.writerow([epoch, batch, repr(float(loss)), repr(float(acc))])


# -- k-fold cross validation ---------------------------------------------------


def stratified_folds(labels, k, seed=0):
    """Fold index per sample; classes are dealt round-robin after a seeded shuffle."""
    labels = np.asarray(labels)
    if len(labels) < k:
        raise ValueError(f"need at least {k} samples for {k}-fold evaluation")
    rng = np.random.default_rng(seed)
    order = np.concatenate([rng.permutation(np.flatnonzero(labels == c)) for c in np.unique(labels)])
    folds = np.empty(len(labels), dtype=int)
    folds[order] = np.arange(len(labels)) % k
    return folds


@dataclass
class KFoldResult:
    accuracies: list

    @property
    def mean(self):
        return float(np.mean(self.accuracies))

    @property
    def std(self):
        return float(np.std(self.accuracies))

    def __str__(self):
        return f"{100 * self.mean:.1f} ± {100 * self.std:.1f} %"


def kfold_evaluate(spec, dataset, k=5, cfg: TrainConfig | None = None, folds=None) -> KFoldResult:
    """Train on k-1 folds, test on the held-out one, for each of the k folds."""
    cfg = cfg or TrainConfig()
    if hasattr(dataset, "arrays"):
        x, y = dataset.arrays("all")
    else:
        x, y = (np.asarray(a) for a in dataset)
    folds = stratified_folds(y, k, cfg.seed) if folds is None else np.asarray(folds)
    classes = set(np.unique(y).tolist())
    accs = []
    for f in range(k):
        test = folds == f
        missing = classes - set(np.unique(y[~test]).tolist())
        if missing:
            warnings.warn(f"fold {f}: classes {sorted(missing)} absent from the training part", stacklevel=2)
        result = train(spec, (x[~test], y[~test]), cfg)
        accs.append(evaluate(result.network, x[test], y[test]))
    return KFoldResult(accs)


# -- gradient checking -----------------------------------------------------------


REL_ERROR_FLOOR = 1e-6
# near-zero entries are judged against this fraction of the tensor's largest gradient
REL_SCALE_FRACTION = 1e-3


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst: str
    per_param: dict
    n_checked: int
    n_kinks: int = 0


def relative_error(a, b, floor=REL_ERROR_FLOOR):
    """|a - b| / max(|a|, |b|, floor), elementwise."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def _same_region(p, q):
    return all(np.array_equal(a, b) for a, b in zip(p, q))


def gradient_check(spec, sample, label=0, h=1e-4, seed=0, input_hw=12, max_per_param=None) -> GradCheckReport:
    """Compare backprop against central differences, in float64, on a shrunken network.

    ``spec`` is re-instantiated on an ``input_hw`` square input; ``sample``
    must match that shape (``(1, C, input_hw, input_hw)`` or ``(N, ...)``).
    Biases and batch-norm scales/offsets are drawn at random so no gradient
    path sits on a symmetric zero. ``max_per_param`` caps the number of
    elements probed per tensor (all of them when ``None``).

    A central difference is only a valid oracle when ``x - h`` and ``x + h``
    lie in the same linear piece as ``x``. Coordinates whose probe flips a
    ReLU mask or a max-pool switch are counted in ``n_kinks`` and excluded
    from the error.

    Relative error uses a denominator floor of ``REL_SCALE_FRACTION`` times
    the largest gradient magnitude in the same tensor, so an entry many orders
    below its neighbours is not judged on the O(h^2) truncation error alone.
    """
    small = spec.with_input(input_hw)
    rng = np.random.default_rng(seed)
    with precision(np.float64):
        net = Network(small, seed=int(rng.integers(2 ** 32)), dtype=np.float64)
        for name in net.params.trainable:
            if name.endswith((".b", ".beta")):
                net.params[name] = rng.normal(0, 0.1, net.params[name].shape)
            elif name.endswith(".gamma"):
                net.params[name] = rng.uniform(0.5, 1.5, net.params[name].shape)
        x = np.asarray(sample, dtype=np.float64)
        labels = np.broadcast_to(np.asarray(label), (x.shape[0],))
        frozen = net.params.copy()

        def loss_at(params):
            net.params = params.copy()
            loss, dlogits = batch_cross_entropy(softmax(net.logits(x, train=True)), labels)
            return loss, dlogits, net.graph.pattern()

        _, dlogits, region = loss_at(frozen)
        grads, _ = net.backward(dlogits)
        per_param, worst, worst_err, n, kinks = {}, "", 0.0, 0, 0
        for name in frozen.trainable:
            flat = frozen[name].reshape(-1)
            idx = np.arange(flat.size)
            if max_per_param is not None and flat.size > max_per_param:
                idx = rng.choice(flat.size, max_per_param, replace=False)
            analytic, numeric = [], []
            for i in idx:
                orig = flat[i]
                flat[i] = orig + h
                up, _, r_up = loss_at(frozen)
                flat[i] = orig - h
                down, _, r_down = loss_at(frozen)
                flat[i] = orig
                if not (_same_region(region, r_up) and _same_region(region, r_down)):
                    kinks += 1
                    continue
                analytic.append(grads[name].reshape(-1)[i])
                numeric.append((up - down) / (2 * h))
            scale = REL_SCALE_FRACTION * float(np.abs(grads[name]).max())
            err = float(relative_error(analytic, numeric, max(REL_ERROR_FLOOR, scale)).max()) if numeric else 0.0
            per_param[name] = err
            n += len(numeric)
            if err >= worst_err:
                worst, worst_err = name, err
    return GradCheckReport(worst_err, worst, per_param, n, kinks)
