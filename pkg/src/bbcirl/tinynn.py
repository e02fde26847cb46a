"""Small ReLU feed-forward networks with hand-written gradients.

All parameters of a network live in one flat float64 vector. Layer ``l`` with
``n_in`` inputs and ``n_out`` outputs contributes its weight matrix
(``n_out x n_in``, row-major, one row per output unit) followed by its bias
vector, and layers are concatenated in order. The last-layer view therefore
is ``W_last.ravel()`` followed by ``b_last``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import ConfigError, UsageError

Head = Literal["softmax", "linear"]


@dataclass(frozen=True)
class NetSpec:
    layer_sizes: tuple[int, ...]
    head: Head = "softmax"
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(n) for n in self.layer_sizes))

    def validate(self) -> None:
        sizes = self.layer_sizes
        if len(sizes) < 2:
            raise ConfigError("layer_sizes needs at least an input and an output size")
        if any(n < 1 for n in sizes):
            raise ConfigError(f"layer_sizes must be positive, got {sizes}")
        if self.head == "softmax" and sizes[-1] != 3:
            raise ConfigError("policy nets (softmax head) must have 3 outputs")
        if self.head == "linear" and sizes[-1] != 1:
            raise ConfigError("reward nets (linear head) must have 1 output")
        if self.head not in ("softmax", "linear"):
            raise ConfigError(f"unknown head {self.head!r}")

    @property
    def n_params(self) -> int:
        s = self.layer_sizes
        return sum((s[i] + 1) * s[i + 1] for i in range(len(s) - 1))

    def layer_slices(self) -> list[tuple[slice, slice]]:
        """(weight slice, bias slice) per layer into the flat vector."""
        out, off = [], 0
        s = self.layer_sizes
        for i in range(len(s) - 1):
            nw = s[i] * s[i + 1]
            out.append((slice(off, off + nw), slice(off + nw, off + nw + s[i + 1])))
            off += nw + s[i + 1]
        return out

    def last_layer_slice(self) -> slice:
        w, b = self.layer_slices()[-1]
        return slice(w.start, b.stop)


class Network:
    """A spec plus its flat parameter vector."""

    __slots__ = ("spec", "params")

    def __init__(self, spec: NetSpec, params: np.ndarray):
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (spec.n_params,):
            raise UsageError(f"expected {spec.n_params} parameters, got shape {params.shape}")
        self.spec = spec
        self.params = params

    def copy(self) -> "Network":
        return Network(self.spec, self.params.copy())

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """(W, b) views; W has shape (n_out, n_in)."""
        s = self.spec.layer_sizes
        return [(self.params[w].reshape(s[i + 1], s[i]), self.params[b])
                for i, (w, b) in enumerate(self.spec.layer_slices())]

    @property
    def sizes(self) -> np.ndarray:
        return np.asarray(self.spec.layer_sizes, dtype=np.int64)

    def __eq__(self, other):
        return (isinstance(other, Network) and self.spec == other.spec
                and np.array_equal(self.params, other.params))

    def __repr__(self):
        return f"Network({self.spec.layer_sizes}, head={self.spec.head!r})"


def mlp_new(spec: NetSpec) -> Network:
    """Each layer's weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    spec.validate()
    rng = np.random.default_rng(spec.init_seed)
    chunks = []
    s = spec.layer_sizes
    for i in range(len(s) - 1):
        bound = 1.0 / np.sqrt(s[i])
        chunks.append(rng.uniform(-bound, bound, size=s[i] * s[i + 1]))
        chunks.append(rng.uniform(-bound, bound, size=s[i + 1]))
    return Network(spec, np.concatenate(chunks))


def zeros_like_spec(spec: NetSpec) -> Network:
    spec.validate()
    return Network(spec, np.zeros(spec.n_params))


def _forward(net: Network, x: np.ndarray):
    """Output pre-activation plus per-layer (input, pre-activation) cache."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.spec.layer_sizes[0],):
        raise UsageError(f"feature length {x.shape} does not match input size {net.spec.layer_sizes[0]}")
    cache = []
    h = x
    layers = net.layers()
    for i, (W, b) in enumerate(layers):
        z = W @ h + b
        cache.append((h, z))
        h = np.maximum(z, 0.0) if i < len(layers) - 1 else z
    return h, cache


def _backward(net: Network, cache, d_out: np.ndarray) -> np.ndarray:
    grad = np.zeros_like(net.params)
    layers = net.layers()
    delta = d_out
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        h_in, _ = cache[i]
        ws, bs = net.spec.layer_slices()[i]
        grad[ws] = np.outer(delta, h_in).ravel()
        grad[bs] = delta
        if i > 0:
            delta = (W.T @ delta) * (cache[i - 1][1] > 0)
    return grad


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def policy_forward(net: Network, x: np.ndarray) -> np.ndarray:
    """Action distribution of a softmax-head network at features ``x``."""
    if net.spec.head != "softmax":
        raise UsageError("policy_forward needs a softmax-head network")
    z, _ = _forward(net, x)
    return softmax(z)


def value(net: Network, x: np.ndarray) -> float:
    """Scalar output of a linear-head network."""
    if net.spec.head != "linear":
        raise UsageError("value needs a linear-head network")
    z, _ = _forward(net, x)
    return float(z[0])


def value_grad(net: Network, x: np.ndarray) -> np.ndarray:
    if net.spec.head != "linear":
        raise UsageError("value_grad needs a linear-head network")
    _, cache = _forward(net, x)
    return _backward(net, cache, np.ones(1))


def grad_log_prob(net: Network, x: np.ndarray, action: int,
                  mode: Literal["log", "plain"] = "log") -> np.ndarray:
    """Gradient of ln pi(action | x) (``mode="log"``) or of pi(action | x)
    (``mode="plain"``) with respect to every parameter."""
    if net.spec.head != "softmax":
        raise UsageError("grad_log_prob needs a softmax-head network")
    n_out = net.spec.layer_sizes[-1]
    if not 0 <= action < n_out:
        raise UsageError(f"action {action} out of range")
    if mode not in ("log", "plain"):
        raise UsageError(f"unknown gradient mode {mode!r}")
    z, cache = _forward(net, x)
    p = softmax(z)
    d = -p
    d[action] += 1.0
    if mode == "plain":
        d = p[action] * d
    return _backward(net, cache, d)


def sgd_step(net: Network, gradient: np.ndarray, step_size: float,
             direction: Literal["ascend", "descend"] = "descend") -> Network:
    gradient = np.asarray(gradient, dtype=np.float64)
    if gradient.shape != net.params.shape:
        raise UsageError(f"gradient shape {gradient.shape} != parameter shape {net.params.shape}")
    if direction == "ascend":
        return Network(net.spec, net.params + step_size * gradient)
    if direction == "descend":
        return Network(net.spec, net.params - step_size * gradient)
    raise UsageError(f"direction must be 'ascend' or 'descend', got {direction!r}")


def last_layer(net: Network) -> np.ndarray:
    """Copy of the final layer's weights (row-major by output unit) then biases."""
    return net.params[net.spec.last_layer_slice()].copy()


def set_last_layer(net: Network, view: np.ndarray) -> Network:
    sl = net.spec.last_layer_slice()
    view = np.asarray(view, dtype=np.float64)
    if view.shape != (sl.stop - sl.start,):
        raise UsageError(f"last-layer view must have length {sl.stop - sl.start}")
    params = net.params.copy()
    params[sl] = view
    return Network(net.spec, params)


def policy_table(net: Network) -> np.ndarray:
    """Action distributions at every one-hot state, shape (n_states, 3)."""
    z = _onehot_outputs(net)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def value_table(net: Network) -> np.ndarray:
    """Scalar outputs at every one-hot state."""
    return _onehot_outputs(net)[:, 0].copy()


def _onehot_outputs(net: Network) -> np.ndarray:
    W, b = net.layers()[-1]
    return last_hidden_table(net) @ W.T + b


def last_hidden_table(net: Network) -> np.ndarray:
    """Input to the final layer at every one-hot state, shape (n_states, n_in_last).
    For a single-layer network this is the identity (the one-hot inputs)."""
    layers = net.layers()
    if len(layers) == 1:
        return np.eye(net.spec.layer_sizes[0])
    W0, b0 = layers[0]
    h = np.maximum(W0.T + b0, 0.0)  # row s: first hidden layer at one-hot state s
    for W, b in layers[1:-1]:
        h = np.maximum(h @ W.T + b, 0.0)
    return h


# -- snapshot files ---------------------------------------------------------

def dumps(net: Network, extra_header: dict | None = None) -> str:
    s = net.spec.layer_sizes
    lines = [f"# {k}={v}" for k, v in (extra_header or {}).items()]
    lines.append(f"# head={net.spec.head}")
    lines.append(f"# init_seed={net.spec.init_seed}")
    lines += [f"# layer={s[i]}x{s[i + 1]}" for i in range(len(s) - 1)]
    lines += [repr(float(v)) for v in net.params]
    return "\n".join(lines) + "\n"


def loads(text: str) -> Network:
    head, seed, dims, values = "softmax", 0, [], []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            if key == "layer":
                a, b = val.split("x")
                if dims and dims[-1] != int(a):
                    raise UsageError(f"layer chain broken at {val}")
                dims = dims or [int(a)]
                dims.append(int(b))
            elif key == "head":
                head = val
            elif key == "init_seed":
                seed = int(val)
            continue
        values.append(float(line))
    if len(dims) < 2:
        raise UsageError("snapshot has no '# layer=' header")
    return Network(NetSpec(tuple(dims), head, seed), np.array(values))


def save(net: Network, path: str | os.PathLike, extra_header: dict | None = None) -> None:
    from .artifacts import atomic_write_text
    atomic_write_text(path, dumps(net, extra_header))


def load(path: str | os.PathLike) -> Network:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
