"""Feed-forward / recurrent networks with a Gaussian output head.

A network is a chain of nodes. Node 0 is the input, nodes ``1..L`` are the
layers of :class:`NetworkSpec` and the output head reads the last node. Skip
edges ``(s, d)`` add the output of node ``s`` to the output of node ``d``,
through a learned linear projection when the two widths differ.

All weights live in one flat float64 vector; :func:`param_layout` fixes the
order (layers in order, then skip projections in edge order, then the head).
Backpropagation is written out by hand so gradients can be checked against
finite differences.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError, NumericError, SpecError

KINDS = ("dense", "recurrent", "identity")
ACTIVATIONS = ("relu", "tanh", "linear")
VAR_FLOOR = 1e-6
NLL_CONST = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    width: int = 0
    activation: str = "linear"

    def to_dict(self):
        return {"kind": self.kind, "width": self.width, "activation": self.activation}


@dataclass(frozen=True)
class NetworkSpec:
    """Decoded architecture.

    ``skips`` holds ``(source, destination)`` node indices with
    ``0 <= source < destination <= len(layers)``. ``sequence`` marks inputs of
    shape ``(batch, time, input_dim)``; the head then reads the last step.
    """

    layers: tuple = ()
    skips: tuple = ()
    input_dim: int = 1
    output_dim: int = 1
    sequence: bool = False

    def __post_init__(self):
        layers = tuple(
            l if isinstance(l, LayerSpec) else LayerSpec(**l) for l in self.layers
        )
        skips = tuple(sorted({(int(s), int(d)) for s, d in self.skips}))
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "skips", skips)
        self.validate()

    def validate(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise SpecError("input and output dimensions must be positive")
        for i, layer in enumerate(self.layers, start=1):
            if layer.kind not in KINDS:
                raise SpecError(f"layer {i}: unknown kind {layer.kind!r}")
            if layer.activation not in ACTIVATIONS:
                raise SpecError(f"layer {i}: unknown activation {layer.activation!r}")
            if layer.kind != "identity" and layer.width <= 0:
                raise SpecError(f"layer {i}: width must be positive, got {layer.width}")
            if layer.kind == "recurrent" and not self.sequence:
                raise SpecError(f"layer {i}: recurrent cell requires sequence input")
        n_nodes = len(self.layers) + 1
        for s, d in self.skips:
            if not (0 <= s < d < n_nodes):
                raise SpecError(f"skip edge {(s, d)} is not a forward edge between nodes")

    def node_widths(self):
        widths = [self.input_dim]
        for layer in self.layers:
            widths.append(widths[-1] if layer.kind == "identity" else layer.width)
        return widths

    def to_dict(self):
        return {
            "layers": [l.to_dict() for l in self.layers],
            "skips": [list(e) for e in self.skips],
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "sequence": self.sequence,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            layers=tuple(LayerSpec(**l) for l in d["layers"]),
            skips=tuple(tuple(e) for e in d["skips"]),
            input_dim=d["input_dim"],
            output_dim=d["output_dim"],
            sequence=d.get("sequence", False),
        )

    def digest(self):
        """SHA-256 of the canonical JSON form (32 raw bytes)."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).digest()


@dataclass
class GaussianPrediction:
    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.var = np.asarray(self.var, dtype=np.float64)
        if self.mean.shape != self.var.shape:
            raise DomainError(f"mean shape {self.mean.shape} != variance shape {self.var.shape}")

    @property
    def std(self):
        return np.sqrt(self.var)


def param_layout(spec):
    """Ordered ``(name, shape, node)`` triples describing the flat weight vector."""
    widths = spec.node_widths()
    out = []
    for i, layer in enumerate(spec.layers, start=1):
        w_in, w = widths[i - 1], widths[i]
        if layer.kind == "dense":
            out.append((f"L{i}.W", (w_in, w), i))
            out.append((f"L{i}.b", (w,), i))
        elif layer.kind == "recurrent":
            out.append((f"L{i}.Wx", (w_in, 4 * w), i))
            out.append((f"L{i}.Wh", (w, 4 * w), i))
            out.append((f"L{i}.b", (4 * w,), i))
    for s, d in spec.skips:
        if widths[s] != widths[d]:
            out.append((f"P{s}-{d}", (widths[s], widths[d]), d))
    head = len(spec.layers) + 1
    out.append(("head.W", (widths[-1], 2 * spec.output_dim), head))
    out.append(("head.b", (2 * spec.output_dim,), head))
    return out


def count_params(spec):
    return sum(math.prod(shape) for _, shape, _ in param_layout(spec))


class Network:
    """A :class:`NetworkSpec` together with its flat weight vector."""

    def __init__(self, spec, weights):
        weights = np.ascontiguousarray(weights, dtype=np.float64)
        n = count_params(spec)
        if weights.shape != (n,):
            raise SpecError(f"expected {n} weights for this spec, got shape {weights.shape}")
        if not np.all(np.isfinite(weights)):
            raise NumericError("non-finite weights")
        self.spec = spec
        self.weights = weights
        self._layout = param_layout(spec)

    @property
    def n_params(self):
        return self.weights.size

    def params(self, flat=None):
        """Name -> array views into ``flat`` (defaults to the weights)."""
        flat = self.weights if flat is None else flat
        views, offset = {}, 0
        for name, shape, _ in self._layout:
            size = math.prod(shape)
            views[name] = flat[offset : offset + size].reshape(shape)
            offset += size
        return views

    def offsets(self):
        """Name -> (start, stop) slice bounds in the flat vector."""
        out, offset = {}, 0
        for name, shape, _ in self._layout:
            size = math.prod(shape)
            out[name] = (offset, offset + size)
            offset += size
        return out

    def with_weights(self, weights):
        return Network(self.spec, np.array(weights, dtype=np.float64))

    def copy(self):
        return Network(self.spec, self.weights.copy())

    def __call__(self, x):
        return forward_gaussian(self, x)


def build_network(spec, seed):
    """Initialise weights deterministically from ``seed``.

    Dense, projection and head matrices are drawn from
    ``U(-a, a)`` with ``a = sqrt(6 / (fan_in + fan_out))``; recurrent
    matrices use the same scaling with ``fan_out = 4 * hidden``. Biases start
    at zero except the LSTM forget gate, which starts at one.
    """
    rng = np.random.default_rng(seed)
    net = Network(spec, np.zeros(count_params(spec)))
    views = net.params()
    for name, shape, _ in net._layout:
        if len(shape) == 2:
            limit = math.sqrt(6.0 / (shape[0] + shape[1]))
            views[name][...] = rng.uniform(-limit, limit, size=shape)
    for i, layer in enumerate(spec.layers, start=1):
        if layer.kind == "recurrent":
            h = layer.width
            views[f"L{i}.b"][h : 2 * h] = 1.0
    return net


# -- activations -------------------------------------------------------------


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softplus(z):
    return np.logaddexp(0.0, z)


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _act_grad(name, z, a, upstream):
    if name == "relu":
        return upstream * (z > 0)
    if name == "tanh":
        return upstream * (1.0 - a * a)
    return upstream


# -- LSTM --------------------------------------------------------------------


def _lstm_forward(x, Wx, Wh, b):
    B, T, _ = x.shape
    H = Wh.shape[0]
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    hs = np.empty((B, T, H))
    steps = []
    for t in range(T):
        a = x[:, t] @ Wx + h @ Wh + b
        i = _sigmoid(a[:, :H])
        f = _sigmoid(a[:, H : 2 * H])
        o = _sigmoid(a[:, 2 * H : 3 * H])
        g = np.tanh(a[:, 3 * H :])
        c_prev, h_prev = c, h
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        hs[:, t] = h
        steps.append((i, f, o, g, c_prev, tc, h_prev))
    return hs, steps


def _lstm_backward(dhs, x, Wx, Wh, steps):
    B, T, _ = x.shape
    H = Wh.shape[0]
    dWx = np.zeros_like(Wx)
    dWh = np.zeros_like(Wh)
    db = np.zeros(4 * H)
    dx = np.empty_like(x)
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        i, f, o, g, c_prev, tc, h_prev = steps[t]
        dh = dhs[:, t] + dh_next
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_next
        da = np.concatenate(
            [dc * g * i * (1.0 - i), dc * c_prev * f * (1.0 - f), do * o * (1.0 - o), dc * i * (1.0 - g * g)],
            axis=1,
        )
        dc_next = dc * f
        dWx += x[:, t].T @ da
        dWh += h_prev.T @ da
        db += da.sum(axis=0)
        dx[:, t] = da @ Wx.T
        dh_next = da @ Wh.T
    return dx, dWx, dWh, db


# -- forward / backward ------------------------------------------------------


def _flat2(a):
    return a.reshape(-1, a.shape[-1])


def _check_input(spec, x):
    x = np.asarray(x, dtype=np.float64)
    want = 3 if spec.sequence else 2
    if x.ndim == want - 1:
        x = x[None]
    if x.ndim != want or x.shape[-1] != spec.input_dim:
        raise DomainError(
            f"input shape {x.shape} does not match input_dim={spec.input_dim}"
            f" ({'sequence' if spec.sequence else 'flat'} mode)"
        )
    return x


def _forward(net, x):
    spec = net.spec
    p = net.params()
    x = _check_input(spec, x)
    incoming = {}
    for s, d in spec.skips:
        incoming.setdefault(d, []).append(s)
    outs = [x]
    cache = []
    for i, layer in enumerate(spec.layers, start=1):
        inp = outs[-1]
        if layer.kind == "dense":
            z = inp @ p[f"L{i}.W"] + p[f"L{i}.b"]
            a = _act(layer.activation, z)
            cache.append((z, a))
        elif layer.kind == "recurrent":
            a, steps = _lstm_forward(inp, p[f"L{i}.Wx"], p[f"L{i}.Wh"], p[f"L{i}.b"])
            cache.append(steps)
        else:
            a = inp
            cache.append(None)
        out = a
        for s in incoming.get(i, ()):
            proj = p.get(f"P{s}-{i}")
            out = out + (outs[s] if proj is None else outs[s] @ proj)
        if not np.all(np.isfinite(out)):
            raise NumericError(f"non-finite activations at node {i}", layer=i)
        outs.append(out)
    last = outs[-1][:, -1, :] if spec.sequence else outs[-1]
    raw = last @ p["head.W"] + p["head.b"]
    head = len(spec.layers) + 1
    if not np.all(np.isfinite(raw)):
        raise NumericError("non-finite activations at output head", layer=head)
    m = spec.output_dim
    mean = raw[:, :m]
    var = softplus(raw[:, m:]) + VAR_FLOOR
    return mean, var, (outs, cache, raw, incoming)


def forward_gaussian(net, x):
    """Predict a Gaussian (mean, variance) per output for a batch ``x``."""
    mean, var, _ = _forward(net, x)
    return GaussianPrediction(mean, var)


def nll_loss(pred, y):
    """Mean Gaussian negative log-likelihood over batch and outputs.

    Includes the constant ``0.5 * log(2 pi)`` so the value is a true
    negative log-density.
    """
    y = np.asarray(y, dtype=np.float64)
    mean, var = pred.mean, pred.var
    if mean.shape != y.shape:
        y = y.reshape(mean.shape)
    if np.any(var <= 0):
        raise DomainError("variance must be strictly positive")
    return float(np.mean(0.5 * np.log(var) + (y - mean) ** 2 / (2.0 * var)) + NLL_CONST)


def loss_and_grad(net, x, y):
    """Mean NLL over the batch and its gradient in flat weight layout."""
    spec = net.spec
    mean, var, (outs, cache, raw, incoming) = _forward(net, x)
    y = np.asarray(y, dtype=np.float64).reshape(mean.shape)
    resid = y - mean
    n = mean.size
    loss = float(np.mean(0.5 * np.log(var) + resid**2 / (2.0 * var)) + NLL_CONST)

    m = spec.output_dim
    d_mean = -resid / var / n
    d_var = (0.5 / var - resid**2 / (2.0 * var**2)) / n
    d_raw = np.concatenate([d_mean, d_var * _sigmoid(raw[:, m:])], axis=1)

    p = net.params()
    g_flat = np.zeros_like(net.weights)
    g = net.params(g_flat)

    last = outs[-1][:, -1, :] if spec.sequence else outs[-1]
    g["head.W"][...] = last.T @ d_raw
    g["head.b"][...] = d_raw.sum(axis=0)
    d_last = d_raw @ p["head.W"].T
    d_outs = [np.zeros_like(o) for o in outs]
    if spec.sequence:
        d_outs[-1][:, -1, :] = d_last
    else:
        d_outs[-1] = d_last

    for i in range(len(spec.layers), 0, -1):
        layer = spec.layers[i - 1]
        d_out = d_outs[i]
        for s in incoming.get(i, ()):
            key = f"P{s}-{i}"
            if key in p:
                g[key][...] += _flat2(outs[s]).T @ _flat2(d_out)
                d_outs[s] = d_outs[s] + d_out @ p[key].T
            else:
                d_outs[s] = d_outs[s] + d_out
        inp = outs[i - 1]
        if layer.kind == "dense":
            z, a = cache[i - 1]
            dz = _act_grad(layer.activation, z, a, d_out)
            g[f"L{i}.W"][...] = _flat2(inp).T @ _flat2(dz)
            g[f"L{i}.b"][...] = _flat2(dz).sum(axis=0)
            d_in = dz @ p[f"L{i}.W"].T
        elif layer.kind == "recurrent":
            d_in, dWx, dWh, db = _lstm_backward(d_out, inp, p[f"L{i}.Wx"], p[f"L{i}.Wh"], cache[i - 1])
            g[f"L{i}.Wx"][...] = dWx
            g[f"L{i}.Wh"][...] = dWh
            g[f"L{i}.b"][...] = db
        else:
            d_in = d_out
        d_outs[i - 1] = d_outs[i - 1] + d_in

    if not np.all(np.isfinite(g_flat)):
        for name, _, node in net._layout:
            if not np.all(np.isfinite(g[name])):
                raise NumericError(f"non-finite gradient in {name}", layer=node)
    return loss, g_flat


def grad(net, x, y):
    """Gradient of the mean NLL with respect to every weight."""
    return loss_and_grad(net, x, y)[1]
