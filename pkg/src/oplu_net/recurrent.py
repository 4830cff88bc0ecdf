"""Simple recurrent network with truncated backpropagation through time.

One recurrent hidden layer plus a linear readout taken after the final
timestep. The loss is mean squared error on that final prediction, which
is what the adding task needs. The BPTT delta recursion multiplies by the
transposed recurrent matrix and the hidden activation's derivative each
step; with an orthogonal recurrent matrix and the permutation activation
both factors preserve the delta norm, so gradients neither vanish nor
explode no matter how far back they travel.
"""

from dataclasses import dataclass

import numpy as np

from .activations import Oplu, oplu_backward, oplu_forward, scalar_derivative, scalar_forward
from .errors import NumericError, ShapeError
from .linalg import Rng, l2_norm, random_orthogonal, random_orthogonal_rect, xavier_init


@dataclass
class Srn:
    w_in: np.ndarray  # (input_dim, hidden)
    w_rec: np.ndarray  # (hidden, hidden)
    b_h: np.ndarray  # (hidden,)
    w_out: np.ndarray  # (hidden, output_dim)
    b_out: np.ndarray  # (output_dim,)
    hidden_activation: object
    h0: np.ndarray = None

    def __post_init__(self):
        self.w_in = np.asarray(self.w_in, dtype=np.float64)
        self.w_rec = np.asarray(self.w_rec, dtype=np.float64)
        self.b_h = np.asarray(self.b_h, dtype=np.float64)
        self.w_out = np.asarray(self.w_out, dtype=np.float64)
        self.b_out = np.asarray(self.b_out, dtype=np.float64)
        h = self.w_rec.shape[0]
        if self.w_rec.shape != (h, h):
            raise ShapeError(f"recurrent matrix must be square, got {self.w_rec.shape}")
        if self.w_in.ndim != 2 or self.w_in.shape[1] != h:
            raise ShapeError(f"input matrix shape {self.w_in.shape} does not feed {h} hidden units")
        if self.b_h.shape != (h,):
            raise ShapeError(f"hidden bias shape {self.b_h.shape} does not match {h} units")
        if self.w_out.ndim != 2 or self.w_out.shape[0] != h:
            raise ShapeError(f"output matrix shape {self.w_out.shape} does not read {h} hidden units")
        if self.b_out.shape != (self.w_out.shape[1],):
            raise ShapeError(f"output bias shape {self.b_out.shape} does not match readout")
        if isinstance(self.hidden_activation, Oplu):
            if self.hidden_activation.scheme.width != h:
                raise ShapeError(
                    f"oplu pairing covers {self.hidden_activation.scheme.width} units "
                    f"but the hidden layer has {h}"
                )
        elif self.hidden_activation not in ("linear", "relu", "sigmoid", "tanh"):
            raise ValueError(f"unknown activation {self.hidden_activation!r}")
        if self.h0 is None:
            self.h0 = np.zeros(h)
        else:
            self.h0 = np.asarray(self.h0, dtype=np.float64)
            if self.h0.shape != (h,):
                raise ShapeError(f"initial state shape {self.h0.shape} does not match {h} units")

    @property
    def hidden_dim(self) -> int:
        return self.w_rec.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_in.shape[0]

    @property
    def output_dim(self) -> int:
        return self.w_out.shape[1]

    def parameters(self) -> list:
        return [self.w_in, self.w_rec, self.b_h, self.w_out, self.b_out]

    def named_parameters(self) -> list:
        return list(zip(("w_in", "w_rec", "b_h", "w_out", "b_out"), self.parameters()))


@dataclass
class SequenceSample:
    inputs: np.ndarray  # (T, input_dim)
    target: np.ndarray  # (output_dim,), read at the final step

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.target = np.asarray(self.target, dtype=np.float64)
        if self.inputs.ndim != 2 or self.inputs.shape[0] < 1:
            raise ShapeError(f"inputs must be a (T, input_dim) array with T >= 1, got {self.inputs.shape}")


@dataclass
class BpttConfig:
    horizon: int

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError(f"BPTT horizon must be >= 1, got {self.horizon}")


@dataclass
class SrnTape:
    inputs: np.ndarray  # (T, input_dim)
    presyn: np.ndarray  # (T, hidden)
    hidden: np.ndarray  # (T+1, hidden), row 0 is h0
    masks: object  # (T, pairs) bool for oplu, else None


@dataclass
class SrnGradients:
    dw_in: np.ndarray
    dw_rec: np.ndarray
    db_h: np.ndarray
    dw_out: np.ndarray
    db_out: np.ndarray

    def tensors(self) -> list:
        return [self.dw_in, self.dw_rec, self.db_h, self.dw_out, self.db_out]


def _hidden_step(net: Srn, a: np.ndarray):
    if isinstance(net.hidden_activation, Oplu):
        return oplu_forward(a, net.hidden_activation.scheme)
    return scalar_forward(net.hidden_activation, a), None


def _hidden_backward(net: Srn, delta_hat: np.ndarray, a: np.ndarray, mask):
    if isinstance(net.hidden_activation, Oplu):
        return oplu_backward(delta_hat, mask, net.hidden_activation.scheme)
    return delta_hat * scalar_derivative(net.hidden_activation, a)


def srn_forward(net: Srn, inputs: np.ndarray):
    """Run the recurrence over one sequence and read out the final state."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != net.input_dim:
        raise ShapeError(f"inputs shape {inputs.shape} does not match input width {net.input_dim}")
    steps = inputs.shape[0]
    if steps < 1:
        raise ShapeError("need at least one timestep")
    oplu = isinstance(net.hidden_activation, Oplu)
    presyn = np.empty((steps, net.hidden_dim))
    hidden = np.empty((steps + 1, net.hidden_dim))
    hidden[0] = net.h0
    masks = np.empty((steps, len(net.hidden_activation.scheme.pairs)), dtype=bool) if oplu else None
    h = net.h0
    for t in range(steps):
        with np.errstate(over="ignore", invalid="ignore"):
            a = inputs[t] @ net.w_in + h @ net.w_rec + net.b_h
        if not np.all(np.isfinite(a)):
            raise NumericError(f"non-finite hidden state at timestep {t}")
        h, mask = _hidden_step(net, a)
        presyn[t] = a
        hidden[t + 1] = h
        if oplu:
            masks[t] = mask
    y = h @ net.w_out + net.b_out
    return y, SrnTape(inputs, presyn, hidden, masks)


def bptt(net: Srn, sample: SequenceSample, cfg: BpttConfig):
    """Truncated BPTT gradients of the final-step squared error.

    Unrolls min(T, horizon) steps backward, summing shared-weight
    gradients over timesteps. Also returns the L2 norm of the hidden
    delta at each unrolled step, newest first, for gradient-flow
    diagnostics.
    """
    y, tape = srn_forward(net, sample.inputs)
    target = np.asarray(sample.target, dtype=np.float64)
    if target.shape != (net.output_dim,):
        raise ShapeError(f"target shape {target.shape} does not match output width {net.output_dim}")
    steps = tape.inputs.shape[0]
    unroll = min(steps, cfg.horizon)
    residual = y - target
    grads = SrnGradients(
        dw_in=np.zeros_like(net.w_in),
        dw_rec=np.zeros_like(net.w_rec),
        db_h=np.zeros_like(net.b_h),
        dw_out=np.outer(tape.hidden[steps], residual),
        db_out=residual.copy(),
    )
    delta_hat = residual @ net.w_out.T
    trace = []
    for t in range(steps, steps - unroll, -1):
        mask = tape.masks[t - 1] if tape.masks is not None else None
        delta = _hidden_backward(net, delta_hat, tape.presyn[t - 1], mask)
        trace.append(l2_norm(delta))
        grads.dw_in += np.outer(tape.inputs[t - 1], delta)
        grads.dw_rec += np.outer(tape.hidden[t - 1], delta)
        grads.db_h += delta
        delta_hat = delta @ net.w_rec.T
    return grads, trace


def sequence_loss(net: Srn, sample: SequenceSample) -> float:
    """Final-step squared error 0.5 * ||y - t||^2 for one sequence."""
    y, _ = srn_forward(net, sample.inputs)
    diff = y - np.asarray(sample.target, dtype=np.float64)
    return float(0.5 * np.dot(diff, diff))


# ---------------------------------------------------------------------------
# Batched training path (rows are samples; all sequences share T).
# ---------------------------------------------------------------------------


def _srn_forward_batch(net: Srn, inputs: np.ndarray):
    """inputs shape (batch, T, input_dim) -> (y rows, stacked tape arrays)."""
    inputs = np.asarray(inputs, dtype=np.float64)
    batch, steps = inputs.shape[0], inputs.shape[1]
    oplu = isinstance(net.hidden_activation, Oplu)
    presyn = np.empty((steps, batch, net.hidden_dim))
    hidden = np.empty((steps + 1, batch, net.hidden_dim))
    hidden[0] = net.h0
    masks = (
        np.empty((steps, batch, len(net.hidden_activation.scheme.pairs)), dtype=bool)
        if oplu else None
    )
    h = hidden[0]
    for t in range(steps):
        with np.errstate(over="ignore", invalid="ignore"):
            a = inputs[:, t, :] @ net.w_in + h @ net.w_rec + net.b_h
        if not np.all(np.isfinite(a)):
            raise NumericError(f"non-finite hidden state at timestep {t}")
        if oplu:
            h, mask = oplu_forward(a, net.hidden_activation.scheme)
            masks[t] = mask
        else:
            h = scalar_forward(net.hidden_activation, a)
        presyn[t] = a
        hidden[t + 1] = h
    y = h @ net.w_out + net.b_out
    return y, inputs, presyn, hidden, masks


def _bptt_batch(net: Srn, inputs: np.ndarray, targets: np.ndarray, horizon: int):
    """Batch-averaged truncated BPTT gradients plus the batch mean loss."""
    y, x, presyn, hidden, masks = _srn_forward_batch(net, inputs)
    batch, steps = x.shape[0], x.shape[1]
    unroll = min(steps, horizon)
    residual = y - np.asarray(targets, dtype=np.float64)
    grads = SrnGradients(
        dw_in=np.zeros_like(net.w_in),
        dw_rec=np.zeros_like(net.w_rec),
        db_h=np.zeros_like(net.b_h),
        dw_out=hidden[steps].T @ residual / batch,
        db_out=residual.mean(axis=0),
    )
    delta_hat = residual @ net.w_out.T
    for t in range(steps, steps - unroll, -1):
        if masks is not None:
            delta = oplu_backward(delta_hat, masks[t - 1], net.hidden_activation.scheme)
        else:
            delta = delta_hat * scalar_derivative(net.hidden_activation, presyn[t - 1])
        grads.dw_in += x[:, t - 1, :].T @ delta / batch
        grads.dw_rec += hidden[t - 1].T @ delta / batch
        grads.db_h += delta.mean(axis=0)
        delta_hat = delta @ net.w_rec.T
    mean_loss = float(0.5 * np.square(residual).sum(axis=1).mean())
    return grads, mean_loss


def evaluate_adding(net: Srn, dataset, threshold: float, chunk: int = 512):
    """Mean 0.5*(y - t)^2 and the fraction of predictions within threshold."""
    inputs, targets = dataset.inputs, dataset.targets
    n = inputs.shape[0]
    if n == 0:
        raise ValueError("empty dataset")
    total_sq = 0.0
    hits = 0
    for start in range(0, n, chunk):
        y, *_ = _srn_forward_batch(net, inputs[start:start + chunk])
        err = y - targets[start:start + chunk]
        total_sq += float(0.5 * np.square(err).sum())
        hits += int((np.abs(err) < threshold).all(axis=1).sum())
    return total_sq / n, hits / n


def init_srn(input_dim: int, hidden: int, output_dim: int, activation, init: str, rng: Rng) -> Srn:
    """Fresh SRN with zero biases and zero initial state.

    init "orthogonal" draws every weight matrix from the exponential of a
    random skew-symmetric matrix (rectangles take the leading block);
    "xavier" uses the uniform fan-based fill.
    """
    if init == "orthogonal":
        w_in = random_orthogonal_rect(input_dim, hidden, rng)
        w_rec = random_orthogonal(hidden, rng)
        w_out = random_orthogonal_rect(hidden, output_dim, rng)
    elif init == "xavier":
        w_in = xavier_init(input_dim, hidden, rng)
        w_rec = xavier_init(hidden, hidden, rng)
        w_out = xavier_init(hidden, output_dim, rng)
    else:
        raise ValueError(f"unknown init {init!r}")
    return Srn(w_in, w_rec, np.zeros(hidden), w_out, np.zeros(output_dim), activation)
