"""Minimal feed-forward scalar-output networks with exact manual backprop.

Weights are per-layer ``(fan_out, fan_in)`` float64 matrices.  Forward
evaluation is pure; parameter updates mutate in place.  The inner-product
kernel is written so that per-row results never depend on batch size or on
zero-weight units appended later, which is what makes :func:`forward_batch`
agree bit for bit with looped scalar calls and :func:`widen` preserve the
network function exactly.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ModelFormatError,
    ModelVersionError,
    NumericError,
    ShapeError,
    UnsupportedArchitectureError,
)
from .sampling import SplitMix64

ACTIVATIONS = ("tanh", "relu")
MODEL_FORMAT_VERSION = 1

# Inner products are reduced in fixed 64-wide blocks, each padded to a
# multiple of 8, combined left to right.  numpy then reduces every block with
# the same fixed accumulator structure, so appending zero-weight columns
# (widening) or slicing rows (threaded sweeps) cannot reshuffle any sum.
_BLOCK = 64


@dataclass(frozen=True)
class NetworkArchitecture:
    """Shape of a scalar-output net: input width, hidden widths, activation."""

    input_dim: int
    hidden_layers: tuple[int, ...] = ()
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")
        if any(h < 1 for h in self.hidden_layers):
            raise ValueError(f"hidden widths must be >= 1, got {self.hidden_layers}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")

    @property
    def dims(self) -> tuple[int, ...]:
        """Layer widths from input to the single linear output unit."""
        return (self.input_dim, *self.hidden_layers, 1)

    @property
    def param_count(self) -> int:
        d = self.dims
        return sum((d[i] + 1) * d[i + 1] for i in range(len(d) - 1))


@dataclass
class FeedForwardNet:
    """Parameters of a network; shapes always match ``architecture.dims``."""

    architecture: NetworkArchitecture
    weights: list[np.ndarray] = field(repr=False)
    biases: list[np.ndarray] = field(repr=False)

    def __post_init__(self):
        dims = self.architecture.dims
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ShapeError("layer count does not match architecture")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i + 1], dims[i]) or b.shape != (dims[i + 1],):
                raise ShapeError(
                    f"layer {i}: expected {(dims[i + 1], dims[i])} / {(dims[i + 1],)}, "
                    f"got {w.shape} / {b.shape}"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NumericError(f"layer {i} has non-finite parameters")

    @property
    def param_count(self) -> int:
        return self.architecture.param_count

    def copy(self) -> "FeedForwardNet":
        return FeedForwardNet(
            architecture=self.architecture,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


class GradientBuffer:
    """Accumulator with the same shapes as the owning network's parameters."""

    __slots__ = ("weights", "biases")

    def __init__(self, net: FeedForwardNet):
        self.weights = [np.zeros_like(w) for w in net.weights]
        self.biases = [np.zeros_like(b) for b in net.biases]

    def zero(self) -> None:
        for g in self.weights:
            g.fill(0.0)
        for g in self.biases:
            g.fill(0.0)


def init_network(arch: NetworkArchitecture, seed: int, scale: float) -> FeedForwardNet:
    """Seeded init: weights uniform in ``±scale/sqrt(fan_in)``, biases zero.

    ``scale=0`` gives the exact all-zero network.  Identical arguments give
    bit-identical parameters.
    """
    if scale < 0:
        raise ValueError("scale must be >= 0")
    dims = arch.dims
    rng = SplitMix64(seed)
    weights, biases = [], []
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        if scale == 0.0:
            w = np.zeros((fan_out, fan_in))
        else:
            u = rng.uniform_block(fan_out * fan_in).reshape(fan_out, fan_in)
            w = (2.0 * u - 1.0) * (scale / math.sqrt(fan_in))
        weights.append(w)
        biases.append(np.zeros(fan_out))
    return FeedForwardNet(architecture=arch, weights=weights, biases=biases)


def _affine(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``x @ w.T + b`` with the fixed-structure reduction described above."""
    fan_in = x.shape[1]
    if fan_in <= _BLOCK and fan_in % 8 == 0:
        return (x[:, None, :] * w[None, :, :]).sum(axis=2) + b
    out = np.zeros((x.shape[0], w.shape[0]))
    for k in range(0, fan_in, _BLOCK):
        xc = x[:, k : k + _BLOCK]
        wc = w[:, k : k + _BLOCK]
        pad = (-xc.shape[1]) % 8
        if pad:
            xc = np.pad(xc, ((0, 0), (0, pad)))
            wc = np.pad(wc, ((0, 0), (0, pad)))
        out += (xc[:, None, :] * wc[None, :, :]).sum(axis=2)
    return out + b


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "tanh":
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _activate_grad(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    # relu subgradient at exactly 0 is fixed to 0
    return np.where(z > 0.0, 1.0, 0.0)


def _check_batch(net: FeedForwardNet, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.architecture.input_dim:
        raise ShapeError(
            f"expected inputs of shape (m, {net.architecture.input_dim}), got {x.shape}"
        )
    return x


def _forward_cached(net: FeedForwardNet, x: np.ndarray):
    """All layer activations and pre-activations for a validated batch."""
    acts = [x]
    preacts = []
    a = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = _affine(a, w, b)
        preacts.append(z)
        a = z if i == last else _activate(z, net.architecture.activation)
        acts.append(a)
    return acts, preacts


def forward_batch(net: FeedForwardNet, x: np.ndarray, threads: int = 1) -> np.ndarray:
    """Scores for every row of ``x``; row ``i`` equals ``forward(net, x[i])`` exactly.

    With ``threads > 1`` rows are sharded across threads; per-row results are
    reduction-independent, so the output is identical to the single-threaded run.
    """
    x = _check_batch(net, x)
    m = x.shape[0]
    if m == 0:
        return np.zeros(0)
    if threads > 1 and m >= 2 * threads:
        bounds = [m * i // threads for i in range(threads + 1)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(
                pool.map(lambda k: _forward_cached(net, x[bounds[k] : bounds[k + 1]])[0][-1], range(threads))
            )
        return np.concatenate(parts)[:, 0]
    return _forward_cached(net, x)[0][-1][:, 0]


def forward(net: FeedForwardNet, x: np.ndarray) -> float:
    """Scalar score for one input vector.  Pure and deterministic."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != net.architecture.input_dim:
        raise ShapeError(f"expected input of shape ({net.architecture.input_dim},), got {x.shape}")
    return float(forward_batch(net, x[None, :])[0])


def _backprop_core(net: FeedForwardNet, acts, preacts, upstream: np.ndarray, buf: GradientBuffer) -> None:
    delta = upstream[:, None]
    for i in range(len(net.weights) - 1, -1, -1):
        buf.weights[i] += np.einsum("mo,mh->oh", delta, acts[i])
        buf.biases[i] += delta.sum(axis=0)
        if i > 0:
            back = np.einsum("mo,oh->mh", delta, net.weights[i])
            delta = back * _activate_grad(preacts[i - 1], net.architecture.activation)


def backprop_batch(net: FeedForwardNet, x: np.ndarray, upstream: np.ndarray, buf: GradientBuffer) -> None:
    """Accumulate ``sum_i upstream[i] * d score(x_i) / d theta`` into ``buf``.

    Layers are processed output to input.
    """
    x = _check_batch(net, x)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (x.shape[0],):
        raise ShapeError(f"upstream must have shape ({x.shape[0]},), got {upstream.shape}")
    acts, preacts = _forward_cached(net, x)
    _backprop_core(net, acts, preacts, upstream, buf)


def backprop_scalar(net: FeedForwardNet, x: np.ndarray, upstream: float, buf: GradientBuffer) -> None:
    """Accumulate ``upstream * d forward(net, x) / d theta`` into ``buf``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != net.architecture.input_dim:
        raise ShapeError(f"expected input of shape ({net.architecture.input_dim},), got {x.shape}")
    backprop_batch(net, x[None, :], np.array([float(upstream)]), buf)


def sgd_step(net: FeedForwardNet, buf: GradientBuffer, lr: float) -> None:
    """``theta -= lr * grad`` for every parameter, then zero the buffer."""
    if lr <= 0:
        raise ValueError("lr must be > 0")
    for w, g in zip(net.weights, buf.weights):
        w -= lr * g
    for b, g in zip(net.biases, buf.biases):
        b -= lr * g
    buf.zero()


def widen(net: FeedForwardNet, extra_units: int, seed: int) -> FeedForwardNet:
    """Append ``extra_units`` units to the last hidden layer, preserving the function.

    Incoming weights of the new units are seeded uniform with the unit init
    rule (``±1/sqrt(fan_in)``); their outgoing weights are exactly zero, so
    every output is unchanged bit for bit.
    """
    if extra_units < 1:
        raise ValueError("extra_units must be >= 1")
    arch = net.architecture
    if not arch.hidden_layers:
        raise UnsupportedArchitectureError("cannot widen a network with no hidden layer")
    hidden = list(arch.hidden_layers)
    last = len(hidden) - 1
    fan_in = arch.dims[last]  # input width of the last hidden layer
    new_arch = NetworkArchitecture(arch.input_dim, (*hidden[:-1], hidden[-1] + extra_units), arch.activation)

    rng = SplitMix64(seed)
    u = rng.uniform_block(extra_units * fan_in).reshape(extra_units, fan_in)
    new_rows = (2.0 * u - 1.0) / math.sqrt(fan_in)

    weights = [w.copy() for w in net.weights]
    biases = [b.copy() for b in net.biases]
    weights[last] = np.vstack([weights[last], new_rows])
    biases[last] = np.concatenate([biases[last], np.zeros(extra_units)])
    out = last + 1
    weights[out] = np.hstack([weights[out], np.zeros((weights[out].shape[0], extra_units))])
    return FeedForwardNet(architecture=new_arch, weights=weights, biases=biases)


def _param_views(net: FeedForwardNet):
    for i, w in enumerate(net.weights):
        yield ("w", i, w)
    for i, b in enumerate(net.biases):
        yield ("b", i, b)


def grad_check(net: FeedForwardNet, x: np.ndarray, eps: float) -> float:
    """Max relative error between backprop and central finite differences.

    Relative error is ``|a - n| / max(1e-8, |a| + |n|)``.  For relu nets,
    parameters whose perturbation flips the sign of any pre-activation are
    skipped: the kink makes the finite difference meaningless there.
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")
    x = np.asarray(x, dtype=np.float64)
    buf = GradientBuffer(net)
    backprop_scalar(net, x, 1.0, buf)
    analytic = {("w", i): g for i, g in enumerate(buf.weights)}
    analytic.update({("b", i): g for i, g in enumerate(buf.biases)})

    is_relu = net.architecture.activation == "relu"
    xb = x[None, :]
    worst = 0.0
    for kind, i, arr in _param_views(net):
        grads = analytic[(kind, i)]
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + eps
            acts_p, pre_p = _forward_cached(net, xb)
            arr[idx] = orig - eps
            acts_m, pre_m = _forward_cached(net, xb)
            arr[idx] = orig
            if is_relu and any(
                np.any(np.sign(zp) != np.sign(zm)) for zp, zm in zip(pre_p[:-1], pre_m[:-1])
            ):
                continue
            numeric = (acts_p[-1][0, 0] - acts_m[-1][0, 0]) / (2.0 * eps)
            a = float(grads[idx])
            worst = max(worst, abs(a - numeric) / max(1e-8, abs(a) + abs(numeric)))
    return worst


def net_to_dict(net: FeedForwardNet) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "activation": net.architecture.activation,
        "dims": list(net.architecture.dims),
        "layers": [
            {"w": w.tolist(), "b": b.tolist()} for w, b in zip(net.weights, net.biases)
        ],
    }


def net_from_dict(obj: dict) -> FeedForwardNet:
    if not isinstance(obj, dict):
        raise ModelFormatError(f"model must be a JSON object, got {type(obj).__name__}")
    version = obj.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelVersionError(f"unsupported format_version {version!r}, expected {MODEL_FORMAT_VERSION}")
    for key in ("activation", "dims", "layers"):
        if key not in obj:
            raise ModelFormatError(f"missing field {key!r}")
    dims = obj["dims"]
    if (
        not isinstance(dims, list)
        or len(dims) < 2
        or dims[-1] != 1
        or any(not isinstance(d, int) or d < 1 for d in dims)
    ):
        raise ModelFormatError(f"bad field 'dims': {dims!r}")
    try:
        arch = NetworkArchitecture(dims[0], tuple(dims[1:-1]), obj["activation"])
    except ValueError as exc:
        raise ModelFormatError(f"bad architecture: {exc}") from exc
    layers = obj["layers"]
    if not isinstance(layers, list) or len(layers) != len(dims) - 1:
        raise ModelFormatError(f"field 'layers' must hold {len(dims) - 1} entries")
    weights, biases = [], []
    for i, layer in enumerate(layers):
        if not isinstance(layer, dict) or "w" not in layer or "b" not in layer:
            raise ModelFormatError(f"layer {i} must be an object with fields 'w' and 'b'")
        try:
            w = np.asarray(layer["w"], dtype=np.float64)
            b = np.asarray(layer["b"], dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise ModelFormatError(f"layer {i}: non-numeric entries ({exc})") from exc
        if w.ndim != 2 or w.shape != (dims[i + 1], dims[i]) or b.shape != (dims[i + 1],):
            raise ModelFormatError(
                f"layer {i}: expected shapes {(dims[i + 1], dims[i])} / {(dims[i + 1],)}, "
                f"got {w.shape} / {b.shape}"
            )
        weights.append(w)
        biases.append(b)
    try:
        return FeedForwardNet(architecture=arch, weights=weights, biases=biases)
    except (ShapeError, NumericError) as exc:
        raise ModelFormatError(str(exc)) from exc


def save_model(net: FeedForwardNet, path) -> None:
    """Write the model JSON; floats keep full round-trip precision."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(net_to_dict(net), fh)
        fh.write("\n")


def load_model(path) -> FeedForwardNet:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(
            f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    return net_from_dict(obj)
