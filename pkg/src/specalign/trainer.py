"""Training loop combining classification, adversarial, spectral-alignment,
and neighbor-aware self-training losses, plus evaluation helpers.

Each iteration draws one source and one target batch of equal size
(incomplete epoch tails are dropped), runs one exact backward pass over
the combined objective, takes an SGD step, then refreshes the memory bank
with the batch's pre-step predictions.
"""

from dataclasses import dataclass, field, asdict

import numpy as np

from .data import Dataset, UNLABELED
from .errors import ConfigError, DivergenceError
from .graph import SimilarityMetric, check_laplacian_kind
from .model import (
    LayerParams,
    Network,
    NetworkSpec,
    OptimizerState,
    adv_loss_and_grad,
    ce_loss_and_grad,
    forward,
    grl_backward,
    grl_forward,
    grl_lambda_schedule,
    lr_schedule,
    sgd_step,
    sigmoid,
)
from .nap import MemoryBank, alpha_schedule, knn_vote, memory_update, nap_loss_and_grad
from .numeric import l2_normalize_rows, l2_normalize_rows_backward
from .spectral import GsaConfig, gsa_loss_and_grad

SSDA_SMOOTHING = 0.1
SYNTHETIC_WIDTH_CUTOFF = 32
EVAL_CHUNK = 4096


@dataclass
class TrainConfig:
    """Hyperparameters of one run; defaults follow the reference recipe."""

    max_iters: int = 2000
    batch_size: int = 32
    lr0: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.005
    k: int = 5
    metric: str = "gaussian"
    bandwidth: float | None = None
    laplacian: str = "rwk"
    p: float = 2.0
    beta: float = 0.5
    tau: float = 0.5
    alpha_max: float = 0.2
    gsa_coef: float = 1.0
    enable_adv: bool = True
    enable_gsa: bool = True
    enable_nap: bool = True
    seed: int = 0
    eval_every: int = 100

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.metric not in ("cosine", "gaussian"):
            raise ConfigError(f"unknown metric {self.metric!r}")
        check_laplacian_kind(self.laplacian)
        if not 1 <= self.k <= self.batch_size - 1:
            raise ConfigError("k must satisfy 1 <= k <= batch_size - 1")


@dataclass
class MetricsRecord:
    iteration: int
    loss_cls: float
    loss_adv: float
    loss_gsa: float
    loss_nap: float
    lr: float
    alpha: float
    grl_lambda: float
    target_acc: float | None = None

    def to_dict(self):
        return asdict(self)


class _BatchSampler:
    """Shuffled epoch cycling; incomplete epoch tails are dropped."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        self.n = n
        self.batch_size = batch_size
        self.rng = rng
        self._pool = np.empty(0, dtype=np.int64)

    def next(self) -> np.ndarray:
        if len(self._pool) < self.batch_size:
            self._pool = self.rng.permutation(self.n).astype(np.int64)
        batch = self._pool[: self.batch_size]
        self._pool = self._pool[self.batch_size:]
        return batch


def _zero_grads(layers):
    return [LayerParams(np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in layers]


def _add_grads(acc, grads):
    for a, g in zip(acc, grads):
        a.weights += g.weights
        a.bias += g.bias


def default_spec(d_in: int, num_classes: int) -> NetworkSpec:
    """Synthetic layout for low-dimensional inputs, wide bottleneck layout
    for pre-extracted deep features."""
    if d_in <= SYNTHETIC_WIDTH_CUTOFF:
        return NetworkSpec.synthetic(d_in, num_classes)
    return NetworkSpec.feature_file(d_in, num_classes)


def _infer_num_classes(source: Dataset, ssda_labels=None) -> int:
    c = int(source.labels.max()) + 1
    if ssda_labels is not None and len(ssda_labels):
        c = max(c, int(np.max(ssda_labels)) + 1)
    if c < 2:
        raise ConfigError("need at least 2 classes in the source labels")
    return c


def _softmax_rows(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    return expz / expz.sum(axis=1, keepdims=True)


def warm_up_bank(net: Network, bank: MemoryBank, target: Dataset, chunk: int = 256):
    """One full pass over the target set writing initial predictions and
    features into the bank (first writes bypass the EMA).

    Bank slots are keyed by row position within the target train set, so
    the bank stays dense even when dataset ids are a split's subset.
    """
    for start in range(0, len(target), chunk):
        feats, logits, _ = forward(net, target.features[start : start + chunk])
        probs = _softmax_rows(logits)
        for local in range(len(feats)):
            memory_update(bank, start + local, probs[local], feats[local])


def train(
    cfg: TrainConfig,
    source: Dataset,
    target_train: Dataset,
    ssda_labeled=None,
    eval_ds: Dataset | None = None,
    spec: NetworkSpec | None = None,
):
    """Run the full adaptation loop; returns (network, metrics records).

    ``ssda_labeled`` optionally names target sample ids whose true labels
    may be used with label smoothing (the semi-supervised extension).
    Deterministic for a fixed config seed.
    """
    if len(source) == 0 or len(target_train) == 0:
        raise ConfigError("source and target datasets must be nonempty")
    if not source.is_labeled:
        raise ConfigError("source dataset must be fully labeled")
    if source.features.shape[1] != target_train.features.shape[1]:
        raise ConfigError("source/target feature dimensionality mismatch")
    if len(source) < cfg.batch_size or len(target_train) < cfg.batch_size:
        raise ConfigError("datasets smaller than one batch")

    ssda_ids = None
    if ssda_labeled is not None:
        ssda_ids = set(int(i) for i in np.asarray(ssda_labeled).ravel())
        rowmap = {int(idx): row for row, idx in enumerate(target_train.indices)}
        for i in ssda_ids:
            if i not in rowmap:
                raise ConfigError(f"ssda index {i} not present in target train set")
            if target_train.labels[rowmap[i]] == UNLABELED:
                raise ConfigError(f"ssda index {i} has no label")

    if spec is None:
        ssda_label_vals = None
        if ssda_ids:
            ssda_label_vals = [target_train.labels[rowmap[i]] for i in ssda_ids]
        spec = default_spec(
            source.features.shape[1], _infer_num_classes(source, ssda_label_vals)
        )
    if int(source.labels.max()) >= spec.num_classes:
        raise ConfigError("source labels exceed the network's class count")

    root = np.random.SeedSequence(cfg.seed)
    net_ss, src_ss, tgt_ss = root.spawn(3)
    net = Network(spec, seed=net_ss)
    opt = OptimizerState(lr0=cfg.lr0, momentum=cfg.momentum, weight_decay=cfg.weight_decay)
    src_sampler = _BatchSampler(len(source), cfg.batch_size, np.random.default_rng(src_ss))
    tgt_sampler = _BatchSampler(len(target_train), cfg.batch_size, np.random.default_rng(tgt_ss))

    bank = MemoryBank.create(
        len(target_train), spec.num_classes, spec.bottleneck, cfg.beta, cfg.tau
    )
    if cfg.enable_nap:
        warm_up_bank(net, bank, target_train)

    gsa_cfg = GsaConfig(
        k=cfg.k,
        metric=SimilarityMetric(cfg.metric, cfg.bandwidth),
        laplacian=cfg.laplacian,
        p=cfg.p,
    )

    records = []
    for it in range(cfg.max_iters):
        progress = it / cfg.max_iters
        lr = lr_schedule(progress, cfg.lr0)
        lam = grl_lambda_schedule(progress) if cfg.enable_adv else 0.0
        alpha = alpha_schedule(it, cfg.max_iters, cfg.alpha_max) if cfg.enable_nap else 0.0

        bs = src_sampler.next()
        bt = tgt_sampler.next()
        assert len(bs) == len(bt) == cfg.batch_size
        xs = source.features[bs]
        ys = source.labels[bs]
        xt = target_train.features[bt]
        tgt_ids = target_train.indices[bt]

        feats_s, logits_s, cache_s = forward(net, xs)
        feats_t, logits_t, cache_t = forward(net, xt)

        g_logits_s = np.zeros_like(logits_s)
        g_logits_t = np.zeros_like(logits_t)
        g_feats_s = np.zeros_like(feats_s)
        g_feats_t = np.zeros_like(feats_t)
        disc_acc = _zero_grads(net.disc.params())

        loss_cls, g_cls = ce_loss_and_grad(logits_s, ys)
        g_logits_s += g_cls

        if ssda_ids:
            labeled_rows = np.array(
                [r for r, idx in enumerate(tgt_ids) if int(idx) in ssda_ids], dtype=np.int64
            )
            if len(labeled_rows):
                yt = target_train.labels[bt[labeled_rows]]
                ls_loss, ls_grad = ce_loss_and_grad(
                    logits_t[labeled_rows], yt, SSDA_SMOOTHING
                )
                loss_cls += ls_loss
                g_logits_t[labeled_rows] += ls_grad

        loss_adv = 0.0
        if cfg.enable_adv:
            d_logit_s, dcache_s = net.disc.forward(grl_forward(feats_s))
            d_logit_t, dcache_t = net.disc.forward(grl_forward(feats_t))
            loss_adv, (gds, gdt), _ = adv_loss_and_grad(d_logit_s, d_logit_t, lam)
            dg_s, din_s = net.disc.backward(dcache_s, gds[:, None])
            dg_t, din_t = net.disc.backward(dcache_t, gdt[:, None])
            _add_grads(disc_acc, dg_s)
            _add_grads(disc_acc, dg_t)
            g_feats_s += grl_backward(din_s, lam)
            g_feats_t += grl_backward(din_t, lam)

        loss_gsa = 0.0
        if cfg.enable_gsa:
            # graphs are built on unit-normalized features so the Gaussian
            # bandwidth (and with it the gradient scale) stays size-free
            fs_n = l2_normalize_rows(feats_s)
            ft_n = l2_normalize_rows(feats_t)
            raw, ggs, ggt = gsa_loss_and_grad(fs_n, ft_n, gsa_cfg)
            loss_gsa = cfg.gsa_coef * raw
            g_feats_s += cfg.gsa_coef * l2_normalize_rows_backward(feats_s, ggs)
            g_feats_t += cfg.gsa_coef * l2_normalize_rows_backward(feats_t, ggt)

        loss_nap = 0.0
        if cfg.enable_nap and bank.fully_initialized and alpha > 0.0:
            pl = knn_vote(bank, feats_t, bt, cfg.k)
            loss_nap, g_nap = nap_loss_and_grad(logits_t, pl, alpha)
            g_logits_t += g_nap

        cls_acc = _zero_grads(net.cls.params())
        cg_s, cf_s = net.cls.backward(cache_s["cls"], g_logits_s)
        _add_grads(cls_acc, cg_s)
        g_feats_s += cf_s
        cg_t, cf_t = net.cls.backward(cache_t["cls"], g_logits_t)
        _add_grads(cls_acc, cg_t)
        g_feats_t += cf_t

        feat_acc = _zero_grads(net.feat.params())
        fg_s, _ = net.feat.backward(cache_s["feat"], g_feats_s)
        fg_t, _ = net.feat.backward(cache_t["feat"], g_feats_t)
        _add_grads(feat_acc, fg_s)
        _add_grads(feat_acc, fg_t)

        total = loss_cls + loss_adv + loss_gsa + loss_nap
        if not np.isfinite(total):
            raise DivergenceError(it, f"cls={loss_cls} adv={loss_adv} gsa={loss_gsa} nap={loss_nap}")

        sgd_step(
            net.parameter_groups(),
            {"feat": feat_acc, "cls": cls_acc, "disc": disc_acc},
            opt,
            lr,
        )

        if cfg.enable_nap:
            probs_t = _softmax_rows(logits_t)
            for local, slot in enumerate(bt):
                memory_update(bank, int(slot), probs_t[local], feats_t[local])

        acc = None
        if (
            eval_ds is not None
            and cfg.eval_every > 0
            and (it + 1) % cfg.eval_every == 0
            and eval_ds.is_labeled
        ):
            acc, _ = evaluate(net, eval_ds)
        records.append(
            MetricsRecord(
                iteration=it,
                loss_cls=float(loss_cls),
                loss_adv=float(loss_adv),
                loss_gsa=float(loss_gsa),
                loss_nap=float(loss_nap),
                lr=float(lr),
                alpha=float(alpha),
                grl_lambda=float(lam),
                target_acc=acc,
            )
        )
    return net, records


def extract_features(net: Network, ds: Dataset) -> np.ndarray:
    """Feature-extractor outputs for a whole dataset, in row order."""
    chunks = []
    for start in range(0, len(ds), EVAL_CHUNK):
        feats, _ = net.feat.forward(ds.features[start : start + EVAL_CHUNK])
        chunks.append(feats)
    return np.vstack(chunks)


def predict_logits(net: Network, ds: Dataset) -> np.ndarray:
    chunks = []
    for start in range(0, len(ds), EVAL_CHUNK):
        _, logits, _ = forward(net, ds.features[start : start + EVAL_CHUNK])
        chunks.append(logits)
    return np.vstack(chunks)


def evaluate(net: Network, ds: Dataset):
    """Accuracy and per-class accuracy; classes absent from ds are NaN."""
    if not ds.is_labeled:
        raise ValueError("evaluate requires a fully labeled dataset")
    logits = predict_logits(net, ds)
    preds = np.argmax(logits, axis=1)
    acc = float(np.mean(preds == ds.labels))
    c = net.spec.num_classes
    per_class = np.full(c, np.nan)
    for cls_id in range(c):
        mask = ds.labels == cls_id
        if mask.any():
            per_class[cls_id] = float(np.mean(preds[mask] == cls_id))
    return acc, per_class


def a_distance(feats_s, feats_t, seed: int = 0) -> float:
    """Proxy distribution discrepancy 2 (1 - 2 eps) from a linear domain probe.

    Each domain is split 50/50 into probe train/test; a logistic-regression
    probe is fit by minibatch SGD (500 epochs, lr 0.01) on standardized
    features, and eps is the capped test error.
    """
    a = np.asarray(feats_s, dtype=np.float64)
    b = np.asarray(feats_t, dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("both feature sets must be nonempty")
    rng = np.random.default_rng(seed)

    def _halves(x):
        perm = rng.permutation(len(x))
        half = len(x) // 2
        if half == 0:
            return x, x
        return x[perm[:half]], x[perm[half:]]

    tr_a, te_a = _halves(a)
    tr_b, te_b = _halves(b)
    x_tr = np.vstack([tr_a, tr_b])
    y_tr = np.concatenate([np.zeros(len(tr_a)), np.ones(len(tr_b))])
    x_te = np.vstack([te_a, te_b])
    y_te = np.concatenate([np.zeros(len(te_a)), np.ones(len(te_b))])

    mu = x_tr.mean(axis=0)
    sd = np.maximum(x_tr.std(axis=0), 1e-8)
    x_tr = (x_tr - mu) / sd
    x_te = (x_te - mu) / sd

    w = np.zeros(x_tr.shape[1])
    b0 = 0.0
    n = len(x_tr)
    batch = min(64, n)
    for _ in range(500):
        order = rng.permutation(n)
        for start in range(0, n - batch + 1, batch):
            rows = order[start : start + batch]
            z = x_tr[rows] @ w + b0
            g = sigmoid(z) - y_tr[rows]
            w -= 0.01 * (x_tr[rows].T @ g) / len(rows)
            b0 -= 0.01 * float(g.mean())
    pred = (x_te @ w + b0) >= 0.0
    eps = min(float(np.mean(pred != y_te.astype(bool))), 0.5)
    return 2.0 * (1.0 - 2.0 * eps)
