"""Small feedforward networks with explicit analytic gradients.

Three heads share one layout convention: rectifier between layers, linear
outputs. The feature extractor feeds both the category classifier and a
domain discriminator behind a gradient-reversal boundary (identity
forward, negated and scaled backward).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .numeric import _as_float_matrix


@dataclass
class LayerParams:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)


@dataclass(frozen=True)
class NetworkSpec:
    """Layer widths of the three heads.

    feat runs input -> hidden... -> bottleneck; cls maps bottleneck to
    class logits; disc maps bottleneck to a single domain logit.
    """

    feat_widths: tuple
    cls_widths: tuple
    disc_widths: tuple

    def __post_init__(self):
        if self.feat_widths[-1] != self.cls_widths[0]:
            raise DimensionError("classifier input must match bottleneck width")
        if self.feat_widths[-1] != self.disc_widths[0]:
            raise DimensionError("discriminator input must match bottleneck width")
        if self.disc_widths[-1] != 1:
            raise DimensionError("discriminator must emit a single logit")

    @property
    def num_classes(self) -> int:
        return self.cls_widths[-1]

    @property
    def bottleneck(self) -> int:
        return self.feat_widths[-1]

    @classmethod
    def synthetic(cls, d_in: int, num_classes: int):
        """Smallest layout that separates the synthetic shifts reliably."""
        return cls((d_in, 16, 16), (16, num_classes), (16, 16, 1))

    @classmethod
    def feature_file(cls, d_in: int, num_classes: int):
        """Layout for pre-extracted deep-feature runs (256-wide bottleneck)."""
        return cls((d_in, 1024, 256), (256, num_classes), (256, 1024, 1))


class Mlp:
    """Chain of dense layers, rectifier between layers, linear output."""

    def __init__(self, widths, rng: np.random.Generator):
        self.widths = tuple(widths)
        self.layers = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
            self.layers.append(LayerParams(weights=w, bias=np.zeros(fan_out)))

    def forward(self, x: np.ndarray):
        """Returns (output, cache); the cache retains every pre-activation
        input needed for an exact backward pass."""
        if x.shape[1] != self.widths[0]:
            raise DimensionError(
                f"input width {x.shape[1]} != expected {self.widths[0]}"
            )
        inputs = []
        h = x
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            inputs.append(h)
            z = h @ layer.weights.T + layer.bias
            h = z if i == last else np.maximum(z, 0.0)
        return h, inputs

    def backward(self, cache, grad_out: np.ndarray):
        """Returns (per-layer grads, grad wrt the input batch)."""
        grads = [None] * len(self.layers)
        g = grad_out
        for i in range(len(self.layers) - 1, -1, -1):
            h_in = cache[i]
            if i != len(self.layers) - 1:
                # rectifier mask: recompute this layer's post-activation gate
                z = h_in @ self.layers[i].weights.T + self.layers[i].bias
                g = g * (z > 0.0)
            grads[i] = LayerParams(weights=g.T @ h_in, bias=g.sum(axis=0))
            g = g @ self.layers[i].weights
        return grads, g

    def params(self):
        return self.layers


class Network:
    """Feature extractor + category classifier + domain discriminator."""

    def __init__(self, spec: NetworkSpec, seed=0):
        self.spec = spec
        root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        rngs = [np.random.default_rng(s) for s in root.spawn(3)]
        self.feat = Mlp(spec.feat_widths, rngs[0])
        self.cls = Mlp(spec.cls_widths, rngs[1])
        self.disc = Mlp(spec.disc_widths, rngs[2])

    def parameter_groups(self):
        return {"feat": self.feat.params(), "cls": self.cls.params(), "disc": self.disc.params()}


def forward(net: Network, x):
    """Features and class logits for a batch, plus the backprop cache."""
    xb = _as_float_matrix(x, "x")
    feats, feat_cache = net.feat.forward(xb)
    logits, cls_cache = net.cls.forward(feats)
    return feats, logits, {"feat": feat_cache, "cls": cls_cache}


def _softmax_and_logsoftmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    denom = expz.sum(axis=1, keepdims=True)
    return expz / denom, shifted - np.log(denom)


def ce_loss_and_grad(logits, labels, smoothing: float = 0.0):
    """Mean cross-entropy against (1-eps, eps/(C-1)) smoothed targets."""
    z = _as_float_matrix(logits, "logits")
    y = np.asarray(labels, dtype=np.int64)
    n, c = z.shape
    if np.any(y < 0) or np.any(y >= c):
        raise ValueError("labels out of range")
    if not 0.0 <= smoothing < 1.0:
        raise ValueError(f"smoothing must be in [0, 1), got {smoothing}")
    probs, logp = _softmax_and_logsoftmax(z)
    target = np.full((n, c), smoothing / (c - 1) if c > 1 else 0.0)
    target[np.arange(n), y] = 1.0 - smoothing
    loss = -float(np.sum(target * logp)) / n
    grad = (probs - target) / n
    return loss, grad


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def adv_loss_and_grad(d_logit_s, d_logit_t, grl_lambda: float):
    """Domain-discrimination BCE: source labeled 1, target labeled 0.

    Returns (loss, disc_grads, feat_grads). disc_grads = (gs, gt) are the
    minimizing gradients wrt the two logit vectors, for the discriminator's
    own update. feat_grads = (-grl_lambda * gs, -grl_lambda * gt) implement
    the reversal: backpropagate them through the discriminator and the
    resulting input gradient is the adversarial push on the features.
    """
    if grl_lambda < 0.0:
        raise ValueError("grl_lambda must be >= 0")
    ls = np.asarray(d_logit_s, dtype=np.float64).reshape(-1)
    lt = np.asarray(d_logit_t, dtype=np.float64).reshape(-1)
    n = len(ls) + len(lt)
    ps = sigmoid(ls)
    pt = sigmoid(lt)
    # numerically stable -log sigmoid / -log(1 - sigmoid)
    loss_s = np.logaddexp(0.0, -ls).sum()
    loss_t = np.logaddexp(0.0, lt).sum()
    loss = float(loss_s + loss_t) / n
    gs = (ps - 1.0) / n
    gt = pt / n
    return loss, (gs, gt), (-grl_lambda * gs, -grl_lambda * gt)


def grl_forward(x: np.ndarray) -> np.ndarray:
    """Identity map; the reversal acts only on gradients."""
    return x


def grl_backward(grad: np.ndarray, grl_lambda: float) -> np.ndarray:
    """Negate and scale a gradient crossing back into the feature extractor."""
    return -grl_lambda * grad


def grl_lambda_schedule(progress: float) -> float:
    """Saturating ramp 2 / (1 + exp(-10 p)) - 1 over progress in [0, 1]."""
    if not 0.0 <= progress <= 1.0:
        raise ValueError(f"progress must be in [0, 1], got {progress}")
    return 2.0 / (1.0 + np.exp(-10.0 * progress)) - 1.0


def lr_schedule(progress: float, lr0: float) -> float:
    """Inverse decay lr0 * (1 + 10 p)^(-0.75)."""
    if not 0.0 <= progress <= 1.0:
        raise ValueError(f"progress must be in [0, 1], got {progress}")
    return lr0 * (1.0 + 10.0 * progress) ** (-0.75)


@dataclass
class OptimizerState:
    """SGD with momentum and decoupled-from-nothing L2 weight decay folded
    into the gradient, one buffer per parameter tensor."""

    lr0: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.005
    buffers: dict = field(default_factory=dict)

    def _buffer(self, key, shape):
        if key not in self.buffers:
            self.buffers[key] = np.zeros(shape)
        return self.buffers[key]


def sgd_step(groups: dict, grad_groups: dict, state: OptimizerState, lr: float):
    """buffer <- momentum * buffer + grad + wd * param; param -= lr * buffer."""
    for name, layers in groups.items():
        grads = grad_groups[name]
        for i, (layer, grad) in enumerate(zip(layers, grads)):
            for attr in ("weights", "bias"):
                p = getattr(layer, attr)
                g = getattr(grad, attr)
                if p.shape != g.shape:
                    raise DimensionError(
                        f"grad shape {g.shape} != param shape {p.shape} for {name}[{i}].{attr}"
                    )
                buf = state._buffer((name, i, attr), p.shape)
                buf *= state.momentum
                buf += g + state.weight_decay * p
                p -= lr * buf
