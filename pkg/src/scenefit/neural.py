"""Self-contained numpy neural toolkit: MLPs with manual backprop, policy
heads, embedding tables, Adam, checkpoints, and finite-difference gradient
checking."""

from __future__ import annotations

import json
import math

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)


class ShapeMismatchError(ValueError):
    """Checkpoint/tensor shapes do not match the network definition."""


class StaleCacheError(RuntimeError):
    """backward() called without a matching forward() pass."""


def orthogonal(rng: np.random.Generator, n_in: int, n_out: int, gain: float = 1.0) -> np.ndarray:
    a = rng.standard_normal((max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))  # fix sign so the factorization is unique
    if n_in < n_out:
        q = q.T
    return np.ascontiguousarray(gain * q[:n_in, :n_out])


class Mlp:
    """Fully connected net, tanh hidden layers, linear output.

    forward() caches activations; backward() consumes the cache and stores
    parameter gradients on the instance.
    """

    def __init__(self, sizes, rng: np.random.Generator, final_scale: float = 1.0,
                 activation: str = "tanh"):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if activation not in ("tanh", "relu"):
            raise ValueError(f"unsupported activation {activation!r}")
        self.sizes = list(int(s) for s in sizes)
        self.activation = activation
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        n_layers = len(self.sizes) - 1
        for k in range(n_layers):
            gain = final_scale if k == n_layers - 1 else math.sqrt(2.0)
            self.weights.append(orthogonal(rng, self.sizes[k], self.sizes[k + 1], gain))
            self.biases.append(np.zeros(self.sizes[k + 1]))
        self.grad_w = [np.zeros_like(w) for w in self.weights]
        self.grad_b = [np.zeros_like(b) for b in self.biases]
        self._cache = None

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def _act(self, z):
        if self.activation == "tanh":
            return np.tanh(z)
        return np.maximum(z, 0.0)

    def _act_grad(self, z, a):
        if self.activation == "tanh":
            return 1.0 - a * a
        return (z > 0.0).astype(z.dtype)

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.sizes[0]:
            raise ValueError(f"input dim {x.shape[1]} != expected {self.sizes[0]}")
        acts = [x]
        pres = []
        h = x
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            pres.append(z)
            h = z if k == last else self._act(z)
            acts.append(h)
        self._cache = (acts, pres)
        return h

    def infer(self, x: np.ndarray) -> np.ndarray:
        """forward() without touching the backprop cache."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.sizes[0]:
            raise ValueError(f"input dim {x.shape[1]} != expected {self.sizes[0]}")
        h = x
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = z if k == last else self._act(z)
        return h

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        """Accumulates exact reverse-mode gradients into grad_w/grad_b.

        Returns the gradient with respect to the input batch.
        """
        if self._cache is None:
            raise StaleCacheError("backward() without a cached forward()")
        acts, pres = self._cache
        self._cache = None
        g = np.atleast_2d(np.asarray(grad_out, dtype=np.float64))
        if g.shape != acts[-1].shape:
            raise ValueError(f"grad shape {g.shape} != output shape {acts[-1].shape}")
        last = len(self.weights) - 1
        for k in range(last, -1, -1):
            if k != last:
                g = g * self._act_grad(pres[k], acts[k + 1])
            self.grad_w[k] = acts[k].T @ g
            self.grad_b[k] = g.sum(axis=0)
            g = g @ self.weights[k].T
        return g

    def zero_grads(self) -> None:
        for g in self.grad_w:
            g[...] = 0.0
        for g in self.grad_b:
            g[...] = 0.0

    def tensors(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {}
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}w{k}"] = w
            out[f"{prefix}b{k}"] = b
        return out

    def load_tensors(self, tensors: dict[str, np.ndarray], prefix: str = "") -> None:
        for k in range(len(self.weights)):
            for name, dst in ((f"{prefix}w{k}", self.weights), (f"{prefix}b{k}", self.biases)):
                if name not in tensors:
                    raise ShapeMismatchError(f"missing tensor {name}")
                src = np.asarray(tensors[name], dtype=np.float64)
                if src.shape != dst[k].shape:
                    raise ShapeMismatchError(
                        f"tensor {name}: shape {src.shape} != expected {dst[k].shape}")
                dst[k] = src.copy()


class Adam:
    """Adam over one Mlp; beta1=0.9, beta2=0.999, eps=1e-8."""

    def __init__(self, net: Mlp, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.net = net
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m_w = [np.zeros_like(w) for w in net.weights]
        self.v_w = [np.zeros_like(w) for w in net.weights]
        self.m_b = [np.zeros_like(b) for b in net.biases]
        self.v_b = [np.zeros_like(b) for b in net.biases]

    def step(self) -> None:
        """Applies the net's accumulated gradients and zeroes them."""
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for params, grads, ms, vs in (
            (self.net.weights, self.net.grad_w, self.m_w, self.v_w),
            (self.net.biases, self.net.grad_b, self.m_b, self.v_b),
        ):
            for p, g, m, v in zip(params, grads, ms, vs):
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * (g * g)
                p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
        self.net.zero_grads()


class GaussianHead:
    """Diagonal Gaussian with a fixed (not learned) std vector."""

    def __init__(self, std):
        self.std = np.atleast_1d(np.asarray(std, dtype=np.float64))
        if np.any(self.std <= 0.0):
            raise ValueError("std must be positive")
        self._var = self.std ** 2
        self._log_norm = 0.5 * self.std.size * LOG_2PI + np.log(self.std).sum()

    @property
    def dim(self) -> int:
        return self.std.size

    def sample(self, mean: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        mean = np.asarray(mean, dtype=np.float64)
        return mean + self.std * rng.standard_normal(mean.shape)

    def log_prob(self, mean: np.ndarray, x: np.ndarray) -> np.ndarray:
        d = (np.asarray(x) - np.asarray(mean)) / self.std
        return -0.5 * (d * d).sum(axis=-1) - self._log_norm

    def entropy(self) -> float:
        return 0.5 * self.dim * (1.0 + LOG_2PI) + float(np.log(self.std).sum())

    def dlogp_dmean(self, mean: np.ndarray, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x) - np.asarray(mean)) / self._var


class CategoricalHead:
    """Softmax over logits."""

    @staticmethod
    def probs(logits: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
        z = z - z.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)

    @classmethod
    def sample(cls, logits: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        p = cls.probs(logits)
        u = rng.random(p.shape[0])
        cdf = np.cumsum(p, axis=-1)
        return (u[:, None] > cdf).sum(axis=-1)

    @classmethod
    def log_prob(cls, logits: np.ndarray, idx: np.ndarray) -> np.ndarray:
        p = cls.probs(logits)
        idx = np.atleast_1d(idx)
        return np.log(p[np.arange(p.shape[0]), idx])

    @classmethod
    def entropy(cls, logits: np.ndarray) -> np.ndarray:
        p = cls.probs(logits)
        return -(p * np.log(np.clip(p, 1e-300, None))).sum(axis=-1)

    @classmethod
    def dlogp_dlogits(cls, logits: np.ndarray, idx: np.ndarray) -> np.ndarray:
        p = cls.probs(logits)
        g = -p
        g[np.arange(p.shape[0]), np.atleast_1d(idx)] += 1.0
        return g

    @classmethod
    def dentropy_dlogits(cls, logits: np.ndarray) -> np.ndarray:
        # H = -sum p log p; dH/dz_k = -p_k (log p_k + H)
        p = cls.probs(logits)
        logp = np.log(np.clip(p, 1e-300, None))
        h = -(p * logp).sum(axis=-1, keepdims=True)
        return -p * (logp + h)


class EmbeddingTable:
    """Fixed random lookup table (rows x width), seeded for reproducibility."""

    def __init__(self, rows: int, width: int, rng: np.random.Generator, scale: float = 1.0):
        if rows < 1 or width < 1:
            raise ValueError("rows and width must be positive")
        self.table = scale * rng.standard_normal((rows, width)) / math.sqrt(width)

    @property
    def rows(self) -> int:
        return self.table.shape[0]

    @property
    def width(self) -> int:
        return self.table.shape[1]

    def lookup(self, i: int) -> np.ndarray:
        if not 0 <= i < self.rows:
            raise ValueError(f"embedding index {i} out of range [0, {self.rows})")
        return self.table[i]


def gradient_check(net: Mlp, x: np.ndarray, loss_fn, h: float = 1e-5) -> float:
    """Max relative error between backprop and central finite differences.

    loss_fn maps the net output to (scalar loss, dloss/doutput).
    """
    out = net.forward(x)
    _, grad_out = loss_fn(out)
    net.zero_grads()
    net.backward(grad_out)
    analytic = [g.copy() for g in net.grad_w] + [g.copy() for g in net.grad_b]
    params = list(net.weights) + list(net.biases)
    max_rel = 0.0
    for p, g in zip(params, analytic):
        flat_g = g.reshape(-1)
        for i in range(p.size):
            orig = p.flat[i]
            p.flat[i] = orig + h
            lp, _ = loss_fn(net.infer(x))
            p.flat[i] = orig - h
            lm, _ = loss_fn(net.infer(x))
            p.flat[i] = orig
            fd = (lp - lm) / (2.0 * h)
            denom = max(abs(fd) + abs(flat_g[i]), 1e-8)
            max_rel = max(max_rel, abs(fd - flat_g[i]) / denom)
    return max_rel


CHECKPOINT_VERSION = 1


def save_checkpoint(path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    doc = {
        "version": CHECKPOINT_VERSION,
        "meta": meta or {},
        "tensors": {
            name: {"shape": list(t.shape), "data": np.asarray(t, dtype=np.float64).reshape(-1).tolist()}
            for name, t in tensors.items()
        },
    }
    with open(path, "w") as f:
        json.dump(doc, f)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ShapeMismatchError(f"unsupported checkpoint version {doc.get('version')!r}")
    tensors = {}
    for name, rec in doc["tensors"].items():
        arr = np.asarray(rec["data"], dtype=np.float64)
        shape = tuple(rec["shape"])
        expected = int(np.prod(shape)) if shape else 1
        if arr.size != expected:
            raise ShapeMismatchError(f"tensor {name}: data length does not match shape {shape}")
        tensors[name] = arr.reshape(shape)
    return tensors, doc.get("meta", {})
