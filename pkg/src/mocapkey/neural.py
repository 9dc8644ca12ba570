"""Feed-forward value network with hand-rolled backprop and Adam.

Two hidden rectifier layers, identity output, 64-bit floats throughout.
The layout is fixed and small enough that explicit reverse accumulation
beats pulling in an autodiff framework.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptCheckpoint, NonFiniteGradient, ShapeMismatch, VersionMismatch

CHECKPOINT_VERSION = 1


@dataclass
class QNetwork:
    """Weights stored per layer as (fan_in, fan_out); forward is x @ W + b."""
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: int = 0

    @property
    def shapes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "QNetwork":
        return QNetwork(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            seed=self.seed,
        )

    def load_from(self, other: "QNetwork") -> None:
        for dst, src in zip(self.parameters(), other.parameters()):
            np.copyto(dst, src)


def init(shapes, seed: int) -> QNetwork:
    """Glorot-uniform weights (bound sqrt(6/(fan_in + fan_out))), zero biases.

    ``shapes`` is [D_in, H1, H2, D_out]; exactly two hidden layers.
    """
    shapes = [int(s) for s in shapes]
    if len(shapes) != 4:
        raise ValueError(f"expected [D_in, H1, H2, D_out], got {shapes}")
    if any(s < 1 for s in shapes):
        raise ValueError(f"layer sizes must be positive: {shapes}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(shapes, shapes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return QNetwork(weights=weights, biases=biases, seed=seed)


def _check_input(net: QNetwork, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != net.input_dim:
        raise ShapeMismatch(
            f"input of shape {x.shape} does not match D_in = {net.input_dim}")
    return x


def forward(net: QNetwork, x) -> np.ndarray:
    """Network output for one input (D,) or a batch (B, D)."""
    x = _check_input(net, x)
    h = x
    last = len(net.weights) - 1
    for li, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if li != last:
            np.maximum(h, 0.0, out=h)
    return h


def _forward_cached(net: QNetwork, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    activations = [x]
    h = x
    last = len(net.weights) - 1
    for li, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if li != last:
            np.maximum(h, 0.0, out=h)
            activations.append(h)
    return h, activations


def huber(pred, target, delta: float = 1.0):
    """Huber loss and its derivative in pred; elementwise.

    Quadratic 0.5 e^2 for |e| <= delta, linear delta(|e| - delta/2) outside.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    e = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    ae = np.abs(e)
    small = ae <= delta
    loss = np.where(small, 0.5 * e * e, delta * (ae - 0.5 * delta))
    grad = np.where(small, e, delta * np.sign(e))
    if loss.ndim == 0:
        return float(loss), float(grad)
    return loss, grad


@dataclass
class AdamState:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_network(cls, net: QNetwork, learning_rate: float,
                    beta1: float = 0.9, beta2: float = 0.999,
                    eps: float = 1e-8) -> "AdamState":
        params = net.parameters()
        return cls(
            learning_rate=learning_rate, beta1=beta1, beta2=beta2, eps=eps,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def adam_step(net: QNetwork, adam: AdamState, grads: list[np.ndarray]) -> None:
    adam.step += 1
    c1 = 1.0 - adam.beta1 ** adam.step
    c2 = 1.0 - adam.beta2 ** adam.step
    for p, g, m, v in zip(net.parameters(), grads, adam.m, adam.v):
        m *= adam.beta1
        m += (1.0 - adam.beta1) * g
        v *= adam.beta2
        v += (1.0 - adam.beta2) * g * g
        p -= adam.learning_rate * (m / c1) / (np.sqrt(v / c2) + adam.eps)


def gradients(net: QNetwork, xs, actions, targets,
              delta: float = 1.0) -> tuple[list[np.ndarray], float]:
    """Gradients of the mean Huber loss on the chosen-action outputs.

    Only the output unit named by each row's action receives loss; all
    other outputs contribute zero gradient.
    """
    xs = _check_input(net, np.atleast_2d(np.asarray(xs, dtype=np.float64)))
    actions = np.asarray(actions, dtype=np.intp)
    targets = np.asarray(targets, dtype=np.float64)
    batch = xs.shape[0]
    if actions.shape != (batch,) or targets.shape != (batch,):
        raise ShapeMismatch("actions and targets must be one value per row")
    out, activations = _forward_cached(net, xs)
    picked = out[np.arange(batch), actions]
    losses, dloss = huber(picked, targets, delta)
    grad_out = np.zeros_like(out)
    grad_out[np.arange(batch), actions] = np.asarray(dloss) / batch

    grads: list[np.ndarray] = []
    delta_h = grad_out
    for li in range(len(net.weights) - 1, -1, -1):
        a_prev = activations[li]
        grads.append(delta_h.sum(axis=0))          # bias
        grads.append(a_prev.T @ delta_h)           # weight
        if li > 0:
            delta_h = (delta_h @ net.weights[li].T) * (activations[li] > 0.0)
    grads.reverse()
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient("non-finite gradient; aborting update")
    return grads, float(np.mean(losses))


def backward_and_step(net: QNetwork, adam: AdamState, xs, actions, targets,
                      delta: float = 1.0) -> tuple[QNetwork, float]:
    """One Adam update of the mean Huber loss over the batch."""
    grads, mean_loss = gradients(net, xs, actions, targets, delta)
    adam_step(net, adam, grads)
    return net, mean_loss


# ---------------------------------------------------------------------------
# Checkpoints: one JSON header line, then raw little-endian float64 blocks
# (network weights and biases in layer order, then Adam m and v moments).
# ---------------------------------------------------------------------------

def checkpoint_save(net: QNetwork, adam: AdamState, path, extra: dict | None = None) -> None:
    header = {
        "format_version": CHECKPOINT_VERSION,
        "shapes": net.shapes,
        "seed": net.seed,
        "adam": {
            "learning_rate": adam.learning_rate,
            "beta1": adam.beta1,
            "beta2": adam.beta2,
            "eps": adam.eps,
            "step": adam.step,
        },
        "extra": extra or {},
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for block in net.parameters() + adam.m + adam.v:
            fh.write(np.ascontiguousarray(block, dtype="<f8").tobytes())


def checkpoint_load(path) -> tuple[QNetwork, AdamState, dict]:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CorruptCheckpoint(f"unreadable header: {exc}") from None
        version = header.get("format_version")
        if version != CHECKPOINT_VERSION:
            raise VersionMismatch(
                f"checkpoint format {version}, expected {CHECKPOINT_VERSION}")
        try:
            shapes = [int(s) for s in header["shapes"]]
            seed = int(header.get("seed", 0))
            ah = header["adam"]
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptCheckpoint(f"malformed header: {exc}") from None
        net = init(shapes, seed)
        adam = AdamState.for_network(
            net, learning_rate=float(ah["learning_rate"]),
            beta1=float(ah["beta1"]), beta2=float(ah["beta2"]),
            eps=float(ah["eps"]))
        adam.step = int(ah["step"])
        for block in net.parameters() + adam.m + adam.v:
            raw = fh.read(block.size * 8)
            if len(raw) != block.size * 8:
                raise CorruptCheckpoint("truncated parameter block")
            np.copyto(block, np.frombuffer(raw, dtype="<f8").reshape(block.shape))
        if fh.read(1):
            raise CorruptCheckpoint("trailing bytes after parameter blocks")
    return net, adam, header.get("extra", {})
