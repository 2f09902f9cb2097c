"""Dense networks with hand-written backprop, Gumbel-Softmax sampling,
Adam, soft target updates and a small binary checkpoint format.

Checkpoint layout (little-endian)::

    b"HBNN"            magic
    uint16 version      currently 1
    uint16 n_nets
    per net:
        uint16 name_len, name (utf-8)
        uint16 n_sizes, uint32 sizes[n_sizes]     input, hidden..., output
        float64 params                             per layer: W row-major (fan_in x fan_out), then b
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, ShapeError, TrainingDivergenceError, UsageError

CHECKPOINT_MAGIC = b"HBNN"
CHECKPOINT_VERSION = 1


class DenseNet:
    """Fully connected net: ReLU hidden layers, identity output."""

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator | None = None):
        if len(sizes) < 2:
            raise ShapeError("a network needs at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        self.W: list[np.ndarray] = []
        self.b: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            if rng is None:
                self.W.append(np.zeros((fan_in, fan_out)))
                self.b.append(np.zeros(fan_out))
            else:
                bound = 1.0 / np.sqrt(fan_in)
                self.W.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
                self.b.append(rng.uniform(-bound, bound, size=fan_out))
        self._cache: list[np.ndarray] | None = None

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.W, self.b))

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.W, self.b):
            out += [w, b]
        return out

    def copy(self) -> "DenseNet":
        net = DenseNet(self.sizes)
        net.W = [w.copy() for w in self.W]
        net.b = [b.copy() for b in self.b]
        return net

    def forward(self, x: np.ndarray, keep: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.shape[1] != self.sizes[0]:
            raise ShapeError(f"input has {h.shape[1]} features, network expects {self.sizes[0]}")
        acts = [h]
        last = len(self.W) - 1
        for k, (w, b) in enumerate(zip(self.W, self.b)):
            z = h @ w + b
            h = z if k == last else np.maximum(z, 0.0)
            acts.append(h)
        self._cache = acts if keep else None
        return h[0] if single else h

    __call__ = forward

    def backward(self, grad_out: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Gradients of ``sum(grad_out * output)`` for the last cached forward pass.

        Returns ``(param_grads, input_grad)`` with ``param_grads`` ordered like
        :meth:`parameters`.
        """
        if self._cache is None:
            raise UsageError("backward called without a cached forward pass")
        acts = self._cache
        g = np.asarray(grad_out, dtype=float)
        single = g.ndim == 1
        if single:
            g = g[None, :]
        if g.shape != acts[-1].shape:
            raise ShapeError(f"upstream gradient shape {g.shape} != output shape {acts[-1].shape}")
        grads: list[np.ndarray] = [None] * (2 * len(self.W))  # type: ignore[list-item]
        for k in range(len(self.W) - 1, -1, -1):
            if k < len(self.W) - 1:
                g = g * (acts[k + 1] > 0)
            grads[2 * k] = acts[k].T @ g
            grads[2 * k + 1] = g.sum(axis=0)
            g = g @ self.W[k].T
        return grads, (g[0] if single else g)


def sample_gumbel(shape, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(shape)
    # keep u strictly inside (0, 1)
    u = np.clip(u, np.finfo(float).tiny, 1.0 - np.finfo(float).eps)
    return -np.log(-np.log(u))


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def gumbel_softmax(logits: np.ndarray, temperature: float = 1.0, rng: np.random.Generator | None = None,
                   noise: np.ndarray | None = None) -> np.ndarray:
    """softmax((logits + g) / temperature). Without ``rng`` or ``noise`` the draw is noiseless."""
    if not temperature > 0:
        raise ConfigurationError(f"temperature must be positive, got {temperature}")
    logits = np.asarray(logits, dtype=float)
    if noise is None and rng is not None:
        noise = sample_gumbel(logits.shape, rng)
    z = logits if noise is None else logits + noise
    return softmax(z / temperature)


def softmax_backward(y: np.ndarray, grad_y: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Gradient w.r.t. the logits of ``y = softmax((logits + g) / temperature)``."""
    return y * (grad_y - (grad_y * y).sum(axis=-1, keepdims=True)) / temperature


def one_hot_argmax(v: np.ndarray) -> np.ndarray:
    """One-hot of the first maximal entry along the last axis."""
    v = np.asarray(v, dtype=float)
    if v.size == 0 or v.shape[-1] == 0:
        raise UsageError("one_hot_argmax of an empty vector")
    out = np.zeros_like(v)
    idx = np.argmax(v, axis=-1)
    np.put_along_axis(out, np.expand_dims(idx, -1), 1.0, axis=-1)
    return out


def soft_update(target: DenseNet, source: DenseNet, rho: float) -> DenseNet:
    if not 0 < rho <= 1:
        raise ConfigurationError(f"rho must lie in (0, 1], got {rho}")
    if target.sizes != source.sizes:
        raise ShapeError(f"cannot blend {source.sizes} into {target.sizes}")
    for t, s in zip(target.parameters(), source.parameters()):
        t *= 1.0 - rho
        t += rho * s
    return target


class Adam:
    def __init__(self, params: Sequence[np.ndarray], lr: float = 8e-5, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        """In-place descent step on ``params``."""
        if len(params) != len(self.m):
            raise ShapeError("parameter list does not match optimizer state")
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise TrainingDivergenceError("non-finite gradient")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if g.shape != p.shape:
                raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def save_checkpoint(nets: Mapping[str, DenseNet], path: str | Path) -> None:
    chunks = [CHECKPOINT_MAGIC, struct.pack("<HH", CHECKPOINT_VERSION, len(nets))]
    for name, net in nets.items():
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)) + raw)
        chunks.append(struct.pack(f"<H{len(net.sizes)}I", len(net.sizes), *net.sizes))
        for p in net.parameters():
            chunks.append(np.ascontiguousarray(p, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path: str | Path) -> dict[str, DenseNet]:
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ShapeError(f"{path}: not a network checkpoint")
    version, n_nets = struct.unpack_from("<HH", data, 4)
    if version != CHECKPOINT_VERSION:
        raise ShapeError(f"{path}: unsupported checkpoint version {version}")
    pos = 8
    nets = {}
    for _ in range(n_nets):
        (name_len,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (n_sizes,) = struct.unpack_from("<H", data, pos)
        pos += 2
        sizes = struct.unpack_from(f"<{n_sizes}I", data, pos)
        pos += 4 * n_sizes
        net = DenseNet(sizes)
        for p in net.parameters():
            n = p.size
            p[...] = np.frombuffer(data, dtype="<f8", count=n, offset=pos).reshape(p.shape)
            pos += 8 * n
        nets[name] = net
    if pos != len(data):
        raise ShapeError(f"{path}: {len(data) - pos} trailing bytes")
    return nets
