"""Layer zoo, network container, MSRA init, gradient checker and checkpoints.

Every tensor is a float64 ``numpy.ndarray``; images travel in NCHW layout.
Each layer caches what its backward pass needs during ``forward`` and
accumulates nothing: ``backward`` overwrites ``layer.grads``.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, InvalidState, ShapeError, FormatError

DTYPE = np.float64

BN_EPS = 1e-5
BN_MOMENTUM = 0.9

LAYER_KINDS = ("conv3x3", "batchnorm", "relu", "maxpool2x2", "fully_connected", "dropout")


def msra_init(fan_in, rng_seed=None, shape=None):
    """Draw zero-mean normal values with std ``sqrt(2 / fan_in)``.

    ``rng_seed`` may be an int or an existing ``numpy.random.Generator``.
    Returns an array of ``shape`` (a scalar draw if ``shape`` is None).
    """
    if fan_in < 1:
        raise InvalidArgument(f"fan_in must be >= 1, got {fan_in}")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    units: int = 0          # output channels (conv) or output units (fc)
    p: float = 0.5          # dropout probability
    eps: float = BN_EPS
    momentum: float = BN_MOMENTUM

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise InvalidArgument(f"unknown layer kind {self.kind!r}")
        if self.kind == "dropout" and not 0.0 < self.p < 1.0:
            raise InvalidArgument(f"dropout probability must be in (0, 1), got {self.p}")
        if self.kind in ("conv3x3", "fully_connected") and self.units < 1:
            raise InvalidArgument(f"{self.kind} needs units >= 1")

    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind in ("conv3x3", "fully_connected"):
            d["units"] = self.units
        elif self.kind == "dropout":
            d["p"] = self.p
        elif self.kind == "batchnorm":
            d["eps"] = self.eps
            d["momentum"] = self.momentum
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


# ---------------------------------------------------------------------------
# kernels
#
# Inside a Network, 4-D activations are kept channel-major, (C, N, H, W), so
# the im2col matmul output needs no transpose. The public functions below take
# and return NCHW; the underscore kernels work channel-major.


def _to_cm(x):
    return np.ascontiguousarray(x.transpose(1, 0, 2, 3))


_from_cm = _to_cm


def _im2col3x3(x):
    """(C, N, H, W) -> (C*9, N*H*W) columns of zero-padded 3x3 neighbourhoods."""
    c, n, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = np.empty((c, 3, 3, n, h, w), dtype=x.dtype)
    for i in range(3):
        for j in range(3):
            cols[:, i, j] = xp[:, :, i:i + h, j:j + w]
    return cols.reshape(c * 9, n * h * w)


def _col2im3x3(cols, shape):
    c, n, h, w = shape
    cols = cols.reshape(c, 3, 3, n, h, w)
    xp = np.zeros((c, n, h + 2, w + 2), dtype=cols.dtype)
    for i in range(3):
        for j in range(3):
            xp[:, :, i:i + h, j:j + w] += cols[:, i, j]
    return xp[:, :, 1:-1, 1:-1]


def _conv_fwd(x, weights, bias):
    f, c = weights.shape[:2]
    if weights.shape[2:] != (3, 3):
        raise ShapeError(f"conv kernel must be 3x3, got {weights.shape[2:]}")
    if x.ndim != 4 or x.shape[0] != c:
        raise ShapeError(f"conv3x3 channel mismatch: input has {x.shape[0] if x.ndim == 4 else x.shape}, "
                         f"weights expect {c}")
    _, n, h, w = x.shape
    cols = _im2col3x3(x)
    out = weights.reshape(f, -1) @ cols
    out += bias[:, None]
    return out.reshape(f, n, h, w), (x.shape, cols, weights)


def _conv_bwd(grad_out, cache):
    shape, cols, weights = cache
    f = weights.shape[0]
    g = grad_out.reshape(f, -1)
    grad_w = (g @ cols.T).reshape(weights.shape)
    grad_b = g.sum(axis=1)
    grad_x = _col2im3x3(weights.reshape(f, -1).T @ g, shape)
    return grad_x, grad_w, grad_b


def conv3x3_forward(x, weights, bias):
    """Stride-1, pad-1 cross-correlation on NCHW input. Returns (output, cache)."""
    if x.ndim != 4:
        raise ShapeError(f"conv3x3 expects NCHW input, got shape {x.shape}")
    if x.shape[1] != weights.shape[1]:
        raise ShapeError(f"conv3x3 channel mismatch: input has {x.shape[1]}, weights expect {weights.shape[1]}")
    out, cache = _conv_fwd(_to_cm(np.asarray(x, dtype=DTYPE)), weights, bias)
    return _from_cm(out), cache


def conv3x3_backward(grad_out, cache):
    """Returns (grad_input, grad_weights, grad_bias), all NCHW-compatible."""
    gx, gw, gb = _conv_bwd(_to_cm(grad_out), cache)
    return _from_cm(gx), gw, gb


def _bn_axes(ndim):
    # channel-major 4-D (C, N, H, W) or (N, D)
    return ((1, 2, 3), (-1, 1, 1, 1)) if ndim == 4 else ((0,), (1, -1))


def _bn_fwd(x, gamma, beta_shift, eps, running_mean, running_var, momentum, train):
    axes, bshape = _bn_axes(x.ndim)
    if train:
        if (x.shape[1] if x.ndim == 4 else x.shape[0]) < 2:
            raise InvalidState("batchnorm in train mode needs a batch of at least 2")
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mean
        running_var *= momentum
        running_var += (1.0 - momentum) * var
    else:
        mean, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean.reshape(bshape)) * inv_std.reshape(bshape)
    out = gamma.reshape(bshape) * xhat + beta_shift.reshape(bshape)
    return out, (xhat, inv_std, gamma, train)


def _bn_bwd(grad_out, cache):
    xhat, inv_std, gamma, train = cache
    axes, bshape = _bn_axes(grad_out.ndim)
    grad_gamma = (grad_out * xhat).sum(axis=axes)
    grad_beta = grad_out.sum(axis=axes)
    scale = (gamma * inv_std).reshape(bshape)
    if not train:
        return grad_out * scale, grad_gamma, grad_beta
    m = grad_out.size // gamma.size
    grad_x = scale / m * (m * grad_out - grad_beta.reshape(bshape) - xhat * grad_gamma.reshape(bshape))
    return grad_x, grad_gamma, grad_beta


def batchnorm_forward(x, gamma, beta_shift, eps, running_mean, running_var, momentum, train):
    """Per-channel normalisation over N*H*W (NCHW) or over N for (N, D) input.

    In train mode the running statistics arrays are updated in place as
    ``running = momentum * running + (1 - momentum) * batch``.
    """
    four = x.ndim == 4
    out, cache = _bn_fwd(_to_cm(x) if four else x, gamma, beta_shift, eps,
                         running_mean, running_var, momentum, train)
    return (_from_cm(out) if four else out), cache


def batchnorm_backward(grad_out, cache):
    """Returns (grad_input, grad_gamma, grad_beta_shift)."""
    if grad_out.ndim == 4:
        gx, gg, gb = _bn_bwd(_to_cm(grad_out), cache)
        return _from_cm(gx), gg, gb
    return _bn_bwd(grad_out, cache)


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(grad_out, mask):
    return grad_out * mask


def maxpool2x2_forward(x):
    """2x2/stride-2 max pool over the last two axes.

    Ties go to the first index in row-major window order. Works for NCHW and
    channel-major layouts alike.
    """
    h, w = x.shape[-2:]
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2x2 needs even spatial extents, got {h}x{w}")
    quads = (x[..., 0::2, 0::2], x[..., 0::2, 1::2], x[..., 1::2, 0::2], x[..., 1::2, 1::2])
    out = np.maximum(np.maximum(quads[0], quads[1]), np.maximum(quads[2], quads[3]))
    taken = np.zeros(out.shape, dtype=bool)
    masks = []
    for q in quads:
        m = (q == out) & ~taken
        taken |= m
        masks.append(m)
    return out, (x.shape, masks)


def maxpool2x2_backward(grad_out, cache):
    shape, masks = cache
    grad = np.empty(shape, dtype=grad_out.dtype)
    for (i, j), m in zip(((0, 0), (0, 1), (1, 0), (1, 1)), masks):
        np.multiply(grad_out, m, out=grad[..., i::2, j::2])
    return grad


def fully_connected_forward(x, weights, bias):
    """Affine map on (N, D); NCHW input is flattened per sample."""
    flat = x.reshape(x.shape[0], -1)
    if flat.shape[1] != weights.shape[0]:
        raise ShapeError(f"fully_connected expects {weights.shape[0]} inputs, got {flat.shape[1]}")
    return flat @ weights + bias, (x.shape, flat, weights)


def fully_connected_backward(grad_out, cache):
    shape, flat, weights = cache
    return (grad_out @ weights.T).reshape(shape), flat.T @ grad_out, grad_out.sum(axis=0)


def dropout_forward(x, p, train, rng):
    """Inverted dropout: survivors are scaled by 1/(1-p) so eval is identity."""
    if not 0.0 < p < 1.0:
        raise InvalidArgument(f"dropout probability must be in (0, 1), got {p}")
    if not train:
        return x, None
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * mask, mask


def dropout_backward(grad_out, mask):
    return grad_out if mask is None else grad_out * mask


# ---------------------------------------------------------------------------
# layer objects


class Layer:
    """A LayerSpec bound to parameters and a forward cache.

    ``forward``/``backward`` take NCHW (or (N, D)) arrays. ``fwd``/``bwd`` are
    the channel-major variants a Network chains together.
    """

    def __init__(self, spec, in_shape):
        self.spec = spec
        self.in_shape = tuple(in_shape)
        self.out_shape = self.in_shape
        self.params = {}
        self.grads = {}
        self.buffers = {}
        self._cache = None

    def fwd(self, x, train):
        raise NotImplementedError

    def bwd(self, grad_out):
        raise NotImplementedError

    def forward(self, x, train=True):
        x = np.asarray(x, dtype=DTYPE)
        out = self.fwd(_to_cm(x) if x.ndim == 4 else x, train)
        return _from_cm(out) if out.ndim == 4 else out

    def backward(self, grad_out):
        g = self.bwd(_to_cm(grad_out) if grad_out.ndim == 4 else grad_out)
        return _from_cm(g) if g.ndim == 4 else g

    def __repr__(self):
        return f"{type(self).__name__}({self.in_shape} -> {self.out_shape})"


class Conv3x3(Layer):
    def __init__(self, spec, in_shape, rng):
        super().__init__(spec, in_shape)
        if len(in_shape) != 3:
            raise ShapeError(f"conv3x3 needs (C, H, W) input, got {in_shape}")
        c, h, w = in_shape
        self.out_shape = (spec.units, h, w)
        self.params = {
            "W": msra_init(c * 9, rng, (spec.units, c, 3, 3)),
            "b": np.zeros(spec.units),
        }

    def fwd(self, x, train):
        out, self._cache = _conv_fwd(x, self.params["W"], self.params["b"])
        return out

    def bwd(self, grad_out):
        gx, self.grads["W"], self.grads["b"] = _conv_bwd(grad_out, self._cache)
        return gx


class BatchNorm(Layer):
    def __init__(self, spec, in_shape, rng=None):
        super().__init__(spec, in_shape)
        c = in_shape[0]
        self.params = {"gamma": np.ones(c), "beta": np.zeros(c)}
        self.buffers = {"running_mean": np.zeros(c), "running_var": np.ones(c)}

    def fwd(self, x, train):
        out, self._cache = _bn_fwd(
            x, self.params["gamma"], self.params["beta"], self.spec.eps,
            self.buffers["running_mean"], self.buffers["running_var"],
            self.spec.momentum, train,
        )
        return out

    def bwd(self, grad_out):
        gx, self.grads["gamma"], self.grads["beta"] = _bn_bwd(grad_out, self._cache)
        return gx


class ReLU(Layer):
    def __init__(self, spec, in_shape, rng=None):
        super().__init__(spec, in_shape)

    def fwd(self, x, train):
        out, self._cache = relu_forward(x)
        return out

    def bwd(self, grad_out):
        return relu_backward(grad_out, self._cache)


class MaxPool2x2(Layer):
    def __init__(self, spec, in_shape, rng=None):
        super().__init__(spec, in_shape)
        if len(in_shape) != 3 or in_shape[1] % 2 or in_shape[2] % 2:
            raise ShapeError(f"maxpool2x2 needs (C, H, W) with even H, W; got {in_shape}")
        c, h, w = in_shape
        self.out_shape = (c, h // 2, w // 2)

    def fwd(self, x, train):
        out, self._cache = maxpool2x2_forward(x)
        return out

    def bwd(self, grad_out):
        return maxpool2x2_backward(grad_out, self._cache)


class FullyConnected(Layer):
    def __init__(self, spec, in_shape, rng):
        super().__init__(spec, in_shape)
        d = int(np.prod(in_shape))
        self.out_shape = (spec.units,)
        self.params = {"W": msra_init(d, rng, (d, spec.units)), "b": np.zeros(spec.units)}

    def fwd(self, x, train):
        # channel-major 4-D input is flattened in NCHW sample order
        self._cm_shape = x.shape if x.ndim == 4 else None
        if x.ndim == 4:
            x = x.transpose(1, 0, 2, 3)
        out, self._cache = fully_connected_forward(x, self.params["W"], self.params["b"])
        return out

    def bwd(self, grad_out):
        gx, self.grads["W"], self.grads["b"] = fully_connected_backward(grad_out, self._cache)
        return _to_cm(gx) if self._cm_shape is not None else gx


class Dropout(Layer):
    def __init__(self, spec, in_shape, rng):
        super().__init__(spec, in_shape)
        # own stream so the mask sequence does not depend on other layers
        self.rng = np.random.default_rng(rng.integers(2**63))

    def fwd(self, x, train):
        out, self._cache = dropout_forward(x, self.spec.p, train, self.rng)
        return out

    def bwd(self, grad_out):
        return dropout_backward(grad_out, self._cache)


_LAYER_TYPES = {
    "conv3x3": Conv3x3,
    "batchnorm": BatchNorm,
    "relu": ReLU,
    "maxpool2x2": MaxPool2x2,
    "fully_connected": FullyConnected,
    "dropout": Dropout,
}

# parameters subject to L2 weight decay
DECAYED = {("conv3x3", "W"), ("fully_connected", "W")}


class Network:
    """Ordered stack of layers built for a fixed per-sample input shape.

    ``mode`` starts unset; call :meth:`train` or :meth:`eval` before running
    a forward pass.
    """

    def __init__(self, specs, input_shape, seed=0):
        self.input_shape = tuple(int(s) for s in input_shape)
        self.seed = int(seed)
        self.mode = None
        rng = np.random.default_rng(self.seed)
        self.layers = []
        shape = self.input_shape
        for spec in specs:
            layer = _LAYER_TYPES[spec.kind](spec, shape, rng)
            self.layers.append(layer)
            shape = layer.out_shape
        self.output_shape = shape

    @property
    def specs(self):
        return [layer.spec for layer in self.layers]

    def train(self):
        self.mode = "train"
        return self

    def eval(self):
        self.mode = "eval"
        return self

    def forward(self, x, upto=None):
        """Run the batch through the layers (all of them, or ``layers[:upto]``)."""
        if self.mode is None:
            raise InvalidState("network mode not set; call train() or eval() first")
        x = np.asarray(x, dtype=DTYPE)
        if x.shape[1:] != self.input_shape:
            raise ShapeError(f"batch sample shape {x.shape[1:]} != network input {self.input_shape}")
        train = self.mode == "train"
        if x.ndim == 4:
            x = _to_cm(x)
        for layer in self.layers[:upto]:
            x = layer.fwd(x, train)
        return _from_cm(x) if x.ndim == 4 else x

    def backward(self, grad_logits):
        """Backpropagate; parameter gradients land in each ``layer.grads``.

        Returns the gradient w.r.t. the network input (NCHW).
        """
        g = np.asarray(grad_logits, dtype=DTYPE)
        if g.ndim == 4:
            g = _to_cm(g)
        for layer in reversed(self.layers):
            g = layer.bwd(g)
        return _from_cm(g) if g.ndim == 4 else g

    def named_params(self):
        for i, layer in enumerate(self.layers):
            for name, value in layer.params.items():
                yield f"{i}.{layer.spec.kind}.{name}", layer, name, value

    def gradients(self):
        return {key: layer.grads[name] for key, layer, name, _ in self.named_params()}

    def snapshot_state(self):
        """Capture mutable non-parameter state (running stats, dropout RNGs)."""
        buffers = [{k: v.copy() for k, v in layer.buffers.items()} for layer in self.layers]
        rngs = [layer.rng.bit_generator.state if isinstance(layer, Dropout) else None
                for layer in self.layers]
        return buffers, rngs

    def restore_state(self, state):
        buffers, rngs = state
        for layer, buf, rs in zip(self.layers, buffers, rngs):
            for k, v in buf.items():
                layer.buffers[k][...] = v
            if rs is not None:
                layer.rng.bit_generator.state = rs

    def __repr__(self):
        body = "\n".join(f"  {i:2d} {layer!r}" for i, layer in enumerate(self.layers))
        return f"Network(input={self.input_shape}, mode={self.mode})\n{body}"


# ---------------------------------------------------------------------------
# finite differences


GRAD_FLOOR = 1e-5


@dataclass
class GradReport:
    """Per-tensor relative errors of analytic vs central-difference gradients.

    The error of element i is ``|a_i - n_i| / max(max|a|, max|n|, GRAD_FLOOR)``,
    i.e. measured against the largest gradient magnitude in the same tensor.
    The floor keeps identically-zero gradients (a conv bias feeding a BN
    layer) from turning roundoff into unit error.
    """
    max_error: dict = field(default_factory=dict)
    mean_error: dict = field(default_factory=dict)
    tolerance: float = 1e-6

    @property
    def worst(self):
        return max(self.max_error.values(), default=0.0)

    @property
    def passed(self):
        return self.worst <= self.tolerance

    def __str__(self):
        lines = [f"{k:32s} max {self.max_error[k]:.3e}  mean {self.mean_error[k]:.3e}"
                 for k in self.max_error]
        lines.append(f"{'PASS' if self.passed else 'FAIL'} (worst {self.worst:.3e}, tol {self.tolerance:g})")
        return "\n".join(lines)


def relative_error(analytic, numeric, mask=None):
    a = np.asarray(analytic, dtype=DTYPE)
    n = np.asarray(numeric, dtype=DTYPE)
    if mask is not None:
        a, n = a[mask], n[mask]
    if a.size == 0:
        return np.zeros(0)
    scale = max(np.abs(a).max(), np.abs(n).max(), GRAD_FLOOR)
    return np.abs(a - n) / scale


def numeric_gradient(f, theta):
    """Central differences of scalar ``f()`` w.r.t. array ``theta`` (mutated in place).

    Step is ``1e-5 * max(1, |theta_i|)``.
    """
    grad = np.zeros_like(theta)
    it = np.nditer(theta, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = theta[i]
        h = 1e-5 * max(1.0, abs(orig))
        theta[i] = orig + h
        fp = f()
        theta[i] = orig - h
        fm = f()
        theta[i] = orig
        grad[i] = (fp - fm) / (2.0 * h)
    return grad


def finite_diff_check(model, x, tolerance=1e-6, loss=None, check_input=True, input_mask=None):
    """Compare analytic gradients of ``model`` with central differences.

    ``model`` is a :class:`Layer` or a :class:`Network`. ``loss`` maps the
    model output to ``(scalar, grad_output)``; the default is a fixed random
    projection ``sum(out * R)``. Dropout masks and BN running statistics are
    replayed so every perturbed forward sees identical stochastic state.
    """
    x = np.array(x, dtype=DTYPE)
    is_net = isinstance(model, Network)
    if is_net and model.mode is None:
        model.train()
    train = (model.mode == "train") if is_net else True

    def run(inp):
        return model.forward(inp) if is_net else model.forward(inp, train)

    if is_net:
        state = model.snapshot_state()
        restore = lambda: model.restore_state(state)  # noqa: E731
    elif isinstance(model, Dropout):
        rs = model.rng.bit_generator.state
        restore = lambda: setattr(model.rng.bit_generator, "state", rs)  # noqa: E731
    else:
        bufs = {k: v.copy() for k, v in model.buffers.items()}

        def restore():
            for k, v in bufs.items():
                model.buffers[k][...] = v

    if loss is None:
        restore()
        out_shape = run(x).shape
        proj = np.random.default_rng(12345).standard_normal(out_shape)

        def loss(out):
            return float(np.sum(out * proj)), proj

    restore()
    _, g_out = loss(run(x))
    g_in = model.backward(g_out)
    analytic = {}
    if is_net:
        for key, layer, name, _ in model.named_params():
            analytic[key] = (layer.params[name], layer.grads[name].copy())
    else:
        for name, value in model.params.items():
            analytic[name] = (value, model.grads[name].copy())

    def scalar(inp=None):
        restore()
        return loss(run(x if inp is None else inp))[0]

    report = GradReport(tolerance=tolerance)
    for key, (theta, a) in analytic.items():
        err = relative_error(a, numeric_gradient(scalar, theta))
        report.max_error[key] = float(err.max(initial=0.0))
        report.mean_error[key] = float(err.mean()) if err.size else 0.0
    if check_input:
        num = numeric_gradient(lambda: scalar(x), x)
        err = relative_error(g_in, num, input_mask)
        report.max_error["input"] = float(err.max(initial=0.0))
        report.mean_error["input"] = float(err.mean()) if err.size else 0.0
    restore()
    return report


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_MAGIC = b"IMBCNNCK"
CHECKPOINT_VERSION = 1


def save_checkpoint(net, path=None, extra=None, extra_arrays=None):
    """Serialise ``net`` to bytes (and to ``path`` if given).

    Layout: magic, uint32 version, uint64 header length, UTF-8 JSON header
    (sorted keys), then every tensor as little-endian float64 in header order.
    """
    tensors = []
    for key, layer, name, value in net.named_params():
        tensors.append((key, value))
    for i, layer in enumerate(net.layers):
        for name, value in layer.buffers.items():
            tensors.append((f"{i}.{layer.spec.kind}.{name}", value))
    for name, value in (extra_arrays or {}).items():
        tensors.append((f"extra.{name}", np.asarray(value, dtype=DTYPE)))
    header = {
        "version": CHECKPOINT_VERSION,
        "input_shape": list(net.input_shape),
        "seed": net.seed,
        "layers": [s.to_dict() for s in net.specs],
        "tensors": [{"name": k, "shape": list(v.shape)} for k, v in tensors],
        "extra": extra or {},
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<IQ", CHECKPOINT_VERSION, len(hbytes)))
    buf.write(hbytes)
    for _, v in tensors:
        buf.write(np.ascontiguousarray(v, dtype="<f8").tobytes())
    data = buf.getvalue()
    if path is not None:
        with open(path, "wb") as fh:
            fh.write(data)
    return data


def load_checkpoint(source):
    """Inverse of :func:`save_checkpoint`. Returns ``(net, extra, extra_arrays)``."""
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    else:
        with open(source, "rb") as fh:
            data = fh.read()
    if data[:8] != CHECKPOINT_MAGIC:
        raise FormatError("not a checkpoint (bad magic)", offset=0)
    if len(data) < 20:
        raise FormatError("truncated checkpoint header", offset=len(data))
    version, hlen = struct.unpack("<IQ", data[8:20])
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=8)
    try:
        header = json.loads(data[20:20 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt checkpoint header: {exc}", offset=20) from exc
    specs = [LayerSpec.from_dict(d) for d in header["layers"]]
    net = Network(specs, header["input_shape"], seed=header["seed"])
    offset = 20 + hlen
    arrays = {}
    for t in header["tensors"]:
        count = int(np.prod(t["shape"]))
        end = offset + 8 * count
        if end > len(data):
            raise FormatError(f"truncated tensor {t['name']}", offset=len(data))
        arrays[t["name"]] = np.frombuffer(data[offset:end], dtype="<f8").astype(DTYPE).reshape(t["shape"])
        offset = end
    for i, layer in enumerate(net.layers):
        for store in (layer.params, layer.buffers):
            for name in store:
                store[name][...] = arrays.pop(f"{i}.{layer.spec.kind}.{name}")
    extra_arrays = {k[len("extra."):]: v for k, v in arrays.items() if k.startswith("extra.")}
    return net, header["extra"], extra_arrays
