"""Multilayer perceptron: forward pass, backpropagation, losses, SGD.

Activations are row vectors, so a layer computes a = z_prev @ w + b with w
of shape (fan_in, fan_out). The backward pass propagates deltas (loss
gradients with respect to presynaptic activations) through transposed
weight matrices and the activation derivative, which for the pairwise
permutation unit is the recorded swap permutation itself.

Everything is defined per sample; mini-batch training uses equivalent
batched matrix routines (checked against the per-sample path in the test
suite) because that is what makes CPU training of the experiments viable.
"""

from dataclasses import dataclass, field

import numpy as np

from .activations import (
    Oplu,
    activation_name,
    make_activation,
    oplu_backward,
    oplu_forward,
    scalar_derivative,
    scalar_forward,
)
from .errors import NumericError, ShapeError
from .linalg import Rng, random_orthogonal_rect, xavier_init

LOSS_KINDS = ("mse", "softmax_xent")


@dataclass
class DenseLayer:
    w: np.ndarray
    b: np.ndarray
    activation: object  # ActivationKind

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.w.ndim != 2:
            raise ShapeError(f"weight matrix must be 2-D, got shape {self.w.shape}")
        if self.b.shape != (self.w.shape[1],):
            raise ShapeError(f"bias shape {self.b.shape} does not match fan_out {self.w.shape[1]}")
        if isinstance(self.activation, Oplu):
            if self.activation.scheme.width != self.w.shape[1]:
                raise ShapeError(
                    f"oplu pairing covers {self.activation.scheme.width} units "
                    f"but the layer has {self.w.shape[1]}"
                )
        elif self.activation not in ("linear", "relu", "sigmoid", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def fan_in(self) -> int:
        return self.w.shape[0]

    @property
    def fan_out(self) -> int:
        return self.w.shape[1]


class DenseNet:
    """Feedforward stack of dense layers with one loss attached."""

    def __init__(self, layers, loss: str):
        layers = list(layers)
        if not layers:
            raise ValueError("a network needs at least one layer")
        if loss not in LOSS_KINDS:
            raise ValueError(f"unknown loss {loss!r}")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.fan_out != nxt.fan_in:
                raise ShapeError(
                    f"layer widths do not chain: {prev.fan_out} feeds {nxt.fan_in}"
                )
        if loss == "softmax_xent" and layers[-1].activation != "linear":
            raise ValueError("softmax_xent expects a linear final layer producing logits")
        self.layers = layers
        self.loss = loss

    @property
    def input_dim(self) -> int:
        return self.layers[0].fan_in

    @property
    def output_dim(self) -> int:
        return self.layers[-1].fan_out

    def parameters(self) -> list:
        params = []
        for layer in self.layers:
            params.extend((layer.w, layer.b))
        return params

    def named_parameters(self) -> list:
        named = []
        for idx, layer in enumerate(self.layers):
            named.append((f"layer{idx}.w", layer.w))
            named.append((f"layer{idx}.b", layer.b))
        return named


@dataclass
class ForwardTape:
    """Cached activations of one forward pass, consumed by backprop."""

    x: np.ndarray
    presyn: list  # a per layer
    postsyn: list  # z per layer
    masks: list  # swap mask per layer, None for scalar activations


@dataclass
class Gradients:
    """Per-layer parameter gradients plus the backpropagated deltas."""

    dw: list
    db: list
    deltas: list = field(default_factory=list)  # delta per layer (w.r.t. presynaptic)
    input_delta: np.ndarray = None  # loss gradient w.r.t. the network input

    def tensors(self) -> list:
        flat = []
        for w_grad, b_grad in zip(self.dw, self.db):
            flat.extend((w_grad, b_grad))
        return flat


def _apply_activation(layer: DenseLayer, a: np.ndarray):
    if isinstance(layer.activation, Oplu):
        return oplu_forward(a, layer.activation.scheme)
    return scalar_forward(layer.activation, a), None


def _activation_backward(layer: DenseLayer, delta_hat: np.ndarray, a: np.ndarray, mask):
    if isinstance(layer.activation, Oplu):
        return oplu_backward(delta_hat, mask, layer.activation.scheme)
    return delta_hat * scalar_derivative(layer.activation, a)


def dense_forward(net: DenseNet, x: np.ndarray):
    """Run the network on one input vector, returning output and tape."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != net.input_dim:
        raise ShapeError(f"input shape {x.shape} does not match network input width {net.input_dim}")
    presyn, postsyn, masks = [], [], []
    z = x
    for idx, layer in enumerate(net.layers):
        with np.errstate(over="ignore", invalid="ignore"):
            a = z @ layer.w + layer.b
        if not np.all(np.isfinite(a)):
            raise NumericError(f"non-finite presynaptic activation in layer {idx}")
        z, mask = _apply_activation(layer, a)
        presyn.append(a)
        postsyn.append(z)
        masks.append(mask)
    return z, ForwardTape(x, presyn, postsyn, masks)


def _softmax(y: np.ndarray) -> np.ndarray:
    shifted = y - y.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def output_delta(loss: str, y: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Error residual at the output.

    softmax_xent treats y as logits (linear final layer) and returns
    softmax(y) - target, the delta with respect to those logits. mse
    returns y - target, the gradient of 0.5 * ||y - t||^2 with respect to
    the network output; backprop folds in the final activation derivative.
    """
    y = np.asarray(y, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if y.shape != target.shape:
        raise ShapeError(f"output shape {y.shape} does not match target shape {target.shape}")
    if loss == "softmax_xent":
        return _softmax(y) - target
    if loss == "mse":
        return y - target
    raise ValueError(f"unknown loss {loss!r}")


def loss_value(loss: str, y: np.ndarray, target: np.ndarray) -> float:
    y = np.asarray(y, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if y.shape != target.shape:
        raise ShapeError(f"output shape {y.shape} does not match target shape {target.shape}")
    if loss == "softmax_xent":
        shifted = y - y.max(axis=-1, keepdims=True)
        log_softmax = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
        return float(-(target * log_softmax).sum(axis=-1).mean())
    if loss == "mse":
        return float(0.5 * np.square(y - target).sum(axis=-1).mean())
    raise ValueError(f"unknown loss {loss!r}")


def backprop(net: DenseNet, tape: ForwardTape, delta_out: np.ndarray) -> Gradients:
    """Backpropagate one sample's output residual into parameter gradients.

    delta_out is the loss gradient with respect to the network output
    (see output_delta). Returns gradients along with the per-layer deltas
    and the delta propagated all the way to the input, which the
    gradient-flow diagnostics consume.
    """
    delta_hat = np.asarray(delta_out, dtype=np.float64)
    if delta_hat.shape != (net.output_dim,):
        raise ShapeError(
            f"delta shape {delta_hat.shape} does not match network output width {net.output_dim}"
        )
    n_layers = len(net.layers)
    if len(tape.presyn) != n_layers:
        raise ValueError("tape does not match network architecture")
    dw = [None] * n_layers
    db = [None] * n_layers
    deltas = [None] * n_layers
    for n in range(n_layers - 1, -1, -1):
        layer = net.layers[n]
        delta = _activation_backward(layer, delta_hat, tape.presyn[n], tape.masks[n])
        z_prev = tape.postsyn[n - 1] if n > 0 else tape.x
        dw[n] = np.outer(z_prev, delta)
        db[n] = delta.copy()
        deltas[n] = delta
        delta_hat = delta @ layer.w.T
    return Gradients(dw, db, deltas, input_delta=delta_hat)


class SgdMomentum:
    """Classical heavy-ball SGD: v <- mu*v - alpha*g, p <- p + v."""

    def __init__(self, alpha: float, mu: float):
        if alpha <= 0:
            raise ValueError(f"learning rate must be positive, got {alpha}")
        if not 0 <= mu < 1:
            raise ValueError(f"momentum must lie in [0, 1), got {mu}")
        self.alpha = alpha
        self.mu = mu
        self.velocity = None


def sgd_step(opt: SgdMomentum, params: list, grads: list) -> list:
    """One momentum update applied in place to every parameter tensor."""
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameter tensors but {len(grads)} gradients")
    if opt.velocity is None:
        opt.velocity = [np.zeros_like(p) for p in params]
    for p, g, v in zip(params, grads, opt.velocity):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} does not mirror parameter shape {p.shape}")
        v *= opt.mu
        v -= opt.alpha * g
        p += v
    return params


# ---------------------------------------------------------------------------
# Batched internals. Rows are samples. These mirror the per-sample routines
# exactly (tested), and exist so training touches dgemm instead of dgemv.
# ---------------------------------------------------------------------------


@dataclass
class _BatchTape:
    x: np.ndarray
    presyn: list
    postsyn: list
    masks: list


def _forward_batch(net: DenseNet, x_rows: np.ndarray):
    x_rows = np.asarray(x_rows, dtype=np.float64)
    if x_rows.ndim != 2 or x_rows.shape[1] != net.input_dim:
        raise ShapeError(f"batch shape {x_rows.shape} does not match input width {net.input_dim}")
    presyn, postsyn, masks = [], [], []
    z = x_rows
    for idx, layer in enumerate(net.layers):
        with np.errstate(over="ignore", invalid="ignore"):
            a = z @ layer.w + layer.b
        if not np.all(np.isfinite(a)):
            raise NumericError(f"non-finite presynaptic activation in layer {idx}")
        z, mask = _apply_activation(layer, a)
        presyn.append(a)
        postsyn.append(z)
        masks.append(mask)
    return z, _BatchTape(x_rows, presyn, postsyn, masks)


def _backprop_batch(net: DenseNet, tape: _BatchTape, delta_out_rows: np.ndarray) -> Gradients:
    """Batch-averaged gradients; deltas/input_delta are per-row matrices."""
    delta_hat = np.asarray(delta_out_rows, dtype=np.float64)
    batch = delta_hat.shape[0]
    n_layers = len(net.layers)
    dw = [None] * n_layers
    db = [None] * n_layers
    for n in range(n_layers - 1, -1, -1):
        layer = net.layers[n]
        delta = _activation_backward(layer, delta_hat, tape.presyn[n], tape.masks[n])
        z_prev = tape.postsyn[n - 1] if n > 0 else tape.x
        dw[n] = z_prev.T @ delta / batch
        db[n] = delta.mean(axis=0)
        delta_hat = delta @ layer.w.T
    return Gradients(dw, db, deltas=[], input_delta=delta_hat)


def _loss_rows(loss: str, y_rows: np.ndarray, target_rows: np.ndarray) -> np.ndarray:
    if loss == "softmax_xent":
        shifted = y_rows - y_rows.max(axis=1, keepdims=True)
        log_softmax = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        return -(target_rows * log_softmax).sum(axis=1)
    return 0.5 * np.square(y_rows - target_rows).sum(axis=1)


@dataclass
class EpochStats:
    mean_loss: float
    accuracy: float


def evaluate(net: DenseNet, inputs: np.ndarray, targets: np.ndarray, chunk: int = 1024) -> EpochStats:
    """Mean loss and argmax accuracy over a dataset, without training."""
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    n = inputs.shape[0]
    if n == 0:
        raise ValueError("empty dataset")
    total_loss = 0.0
    correct = 0
    for start in range(0, n, chunk):
        x = inputs[start:start + chunk]
        t = targets[start:start + chunk]
        y, _ = _forward_batch(net, x)
        total_loss += float(_loss_rows(net.loss, y, t).sum())
        correct += int((y.argmax(axis=1) == t.argmax(axis=1)).sum())
    return EpochStats(total_loss / n, correct / n)


def train_epoch(net: DenseNet, opt: SgdMomentum, inputs: np.ndarray, targets: np.ndarray,
                batch_size: int, rng: Rng) -> EpochStats:
    """One pass over the dataset in shuffled mini-batches.

    Gradients are averaged within each batch and one optimizer step is
    taken per batch. The returned loss/accuracy are running statistics
    gathered from each batch's forward pass before its update.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    n = inputs.shape[0]
    if n == 0:
        raise ValueError("empty dataset")
    if batch_size < 1:
        raise ValueError(f"batch size must be >= 1, got {batch_size}")
    order = list(range(n))
    rng.shuffle(order)
    total_loss = 0.0
    correct = 0
    params = net.parameters()
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        x = inputs[idx]
        t = targets[idx]
        y, tape = _forward_batch(net, x)
        total_loss += float(_loss_rows(net.loss, y, t).sum())
        correct += int((y.argmax(axis=1) == t.argmax(axis=1)).sum())
        grads = _backprop_batch(net, tape, output_delta(net.loss, y, t))
        sgd_step(opt, params, grads.tensors())
    return EpochStats(total_loss / n, correct / n)


def init_dense(widths, activation: str, loss: str, init: str, rng: Rng) -> DenseNet:
    """Fresh network with the given hidden activation and a linear last layer.

    widths runs input..output; hidden layers get `activation`, the final
    layer is linear. init is "xavier" or "orthogonal" (leading block of a
    random square orthogonal matrix for rectangular shapes). Biases start
    at zero.
    """
    widths = list(widths)
    if len(widths) < 2:
        raise ValueError("need at least input and output widths")
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(widths, widths[1:])):
        last = i == len(widths) - 2
        kind = "linear" if last else make_activation(activation, fan_out)
        if init == "xavier":
            w = xavier_init(fan_in, fan_out, rng)
        elif init == "orthogonal":
            w = random_orthogonal_rect(fan_in, fan_out, rng)
        else:
            raise ValueError(f"unknown init {init!r}")
        layers.append(DenseLayer(w, np.zeros(fan_out), kind))
    return DenseNet(layers, loss)


def architecture_summary(net: DenseNet) -> str:
    widths = [net.input_dim] + [layer.fan_out for layer in net.layers]
    acts = ",".join(activation_name(layer.activation) for layer in net.layers)
    return f"{'-'.join(map(str, widths))} [{acts}] loss={net.loss}"
