"""Dense ReLU networks with hand-written backprop, Adam, and a binary checkpoint format.

Checkpoint layout (all integers little-endian)::

    magic      8 bytes   b"ARTNAVCK"
    version    uint32
    hdr_len    uint32
    header     hdr_len bytes of UTF-8 JSON: metadata plus a list of
               {"name", "dtype", "shape"} entries in payload order
    payload    raw little-endian array bytes, concatenated
    crc32      uint32 over header + payload
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

CHECKPOINT_MAGIC = b"ARTNAVCK"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


class StaleCacheError(RuntimeError):
    pass


class NonFiniteGradientError(FloatingPointError):
    pass


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)
    return np.maximum(p, 1e-30)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass
class ForwardCache:
    net_version: int
    inputs: list
    preacts: list
    output: np.ndarray


class Mlp:
    """``sizes[0] -> ... -> sizes[-1]``; ReLU between layers, linear or softmax head."""

    def __init__(self, sizes: Sequence[int], head: str = "linear", rng: np.random.Generator | None = None,
                 dtype=np.float32):
        if head not in ("linear", "softmax"):
            raise ValueError("head must be 'linear' or 'softmax'")
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        self.head = head
        self.dtype = np.dtype(dtype)
        rng = rng if rng is not None else np.random.default_rng(0)
        self._allocate()
        for w, b in zip(self.weights, self.biases):
            bound = 1.0 / np.sqrt(w.shape[0])
            w[...] = rng.uniform(-bound, bound, w.shape)
            b[...] = rng.uniform(-bound, bound, b.shape)
        self._version = 0

    def _allocate(self):
        """All parameters live in one flat vector; weights and biases are views into it."""
        shapes = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            shapes += [(fan_in, fan_out), (fan_out,)]
        self.flat = np.zeros(sum(int(np.prod(s)) for s in shapes), dtype=self.dtype)
        views, off = [], 0
        for shp in shapes:
            n = int(np.prod(shp))
            views.append(self.flat[off:off + n].reshape(shp))
            off += n
        self.weights, self.biases = views[0::2], views[1::2]

    # parameters are exposed flat as [W0, b0, W1, b1, ...]
    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def set_params(self, params: Sequence[np.ndarray]):
        if len(params) != 2 * len(self.weights):
            raise ValueError("parameter count mismatch")
        for i, p in enumerate(params):
            target = self.weights[i // 2] if i % 2 == 0 else self.biases[i // 2]
            if p.shape != target.shape:
                raise ValueError(f"shape mismatch for parameter {i}: {p.shape} vs {target.shape}")
            target[...] = p
        self.touch()

    def touch(self):
        """Invalidate forward caches after an in-place parameter change."""
        self._version += 1

    def copy(self) -> "Mlp":
        other = Mlp.__new__(Mlp)
        other.sizes, other.head, other.dtype = self.sizes, self.head, self.dtype
        other._allocate()
        other.flat[...] = self.flat
        other._version = 0
        return other

    def logits(self, x: np.ndarray) -> np.ndarray:
        h = np.asarray(x, dtype=self.dtype)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0)
        return h

    def __call__(self, x: np.ndarray) -> np.ndarray:
        z = self.logits(x)
        return softmax(z) if self.head == "softmax" else z

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
        """Output and cache for :meth:`backward`. For a softmax head the cache stores logits."""
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[-1] != self.sizes[0]:
            raise ValueError(f"input width {x.shape[-1]} != {self.sizes[0]}")
        inputs, pre = [], []
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = h @ w + b
            pre.append(z)
            h = np.maximum(z, 0) if i < last else z
        out = softmax(h) if self.head == "softmax" else h
        return out, ForwardCache(self._version, inputs, pre, out)

    def backward(self, cache: ForwardCache, grad_out: np.ndarray, wrt_logits: bool = False) -> list[np.ndarray]:
        """Gradients of a scalar loss given ``dL/d(output)``.

        With a softmax head, ``grad_out`` is taken w.r.t. the probabilities
        unless ``wrt_logits`` is set.
        """
        if cache.net_version != self._version:
            raise StaleCacheError("forward cache predates a parameter update")
        g = np.asarray(grad_out, dtype=self.dtype)
        if self.head == "softmax" and not wrt_logits:
            p = cache.output
            g = p * (g - (g * p).sum(axis=-1, keepdims=True))
        grads: list[np.ndarray] = [None] * (2 * len(self.weights))
        for i in range(len(self.weights) - 1, -1, -1):
            h = cache.inputs[i]
            if h.ndim == 1:
                grads[2 * i] = np.outer(h, g)
                grads[2 * i + 1] = g.copy()
            else:
                grads[2 * i] = h.T @ g
                grads[2 * i + 1] = g.sum(axis=0, dtype=np.float64).astype(self.dtype)
            if i > 0:
                g = (g @ self.weights[i].T) * (cache.preacts[i - 1] > 0)
        return grads

    def flatten(self, grads: Sequence[np.ndarray]) -> np.ndarray:
        """Pack per-layer gradients in the order of :attr:`flat`."""
        return np.concatenate([g.ravel() for g in grads])


@dataclass
class AdamState:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, **kw) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], **kw)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState) -> None:
    """In-place bias-corrected Adam update."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state differ in length")
    if not all(np.isfinite(g).all() for g in grads):
        raise NonFiniteGradientError("non-finite gradient")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)


# --- checkpoints -------------------------------------------------------------

def _le(a: np.ndarray) -> np.ndarray:
    return a.astype(a.dtype.newbyteorder("<"), copy=False)


def write_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict) -> Path:
    """Store named arrays plus JSON metadata losslessly."""
    entries = []
    chunks = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        le = _le(arr)
        entries.append({"name": name, "dtype": le.dtype.str, "shape": list(arr.shape)})
        chunks.append(le.tobytes())
    header = json.dumps({"meta": meta, "arrays": entries}, sort_keys=True).encode()
    payload = b"".join(chunks)
    crc = zlib.crc32(header + payload)
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
        fh.write(header)
        fh.write(payload)
        fh.write(struct.pack("<I", crc))
    tmp.replace(path)
    return path


def read_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:8] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic or truncated)")
    version, hlen = struct.unpack_from("<II", data, 8)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version} (supported: {CHECKPOINT_VERSION})")
    start = 16
    if len(data) < start + hlen + 4:
        raise CheckpointError(f"{path}: corrupt checkpoint (truncated header)")
    try:
        header = json.loads(data[start:start + hlen])
    except ValueError:
        raise CheckpointError(f"{path}: corrupt checkpoint (unreadable header)") from None
    off = start + hlen
    sizes = [np.dtype(e["dtype"]).itemsize * int(np.prod(e["shape"], dtype=np.int64)) for e in header["arrays"]]
    if len(data) != off + sum(sizes) + 4:
        raise CheckpointError(f"{path}: corrupt checkpoint (expected {off + sum(sizes) + 4} bytes, got {len(data)})")
    (crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[start:len(data) - 4]) != crc:
        raise CheckpointError(f"{path}: corrupt checkpoint (checksum mismatch)")
    arrays = {}
    for e, n in zip(header["arrays"], sizes):
        arr = np.frombuffer(data, dtype=np.dtype(e["dtype"]), count=n // np.dtype(e["dtype"]).itemsize, offset=off)
        arrays[e["name"]] = arr.reshape(e["shape"]).astype(np.dtype(e["dtype"]).newbyteorder("="))
        off += n
    return arrays, header["meta"]


def mlp_arrays(prefix: str, net: Mlp) -> dict[str, np.ndarray]:
    return {f"{prefix}.p{i}": p for i, p in enumerate(net.params)}


def adam_arrays(prefix: str, st: AdamState) -> dict[str, np.ndarray]:
    out = {f"{prefix}.m{i}": m for i, m in enumerate(st.m)}
    out.update({f"{prefix}.v{i}": v for i, v in enumerate(st.v)})
    return out


def save_checkpoint(path, nets: dict[str, Mlp], optimizers: dict[str, AdamState], meta: dict) -> Path:
    """Networks, optimizer moments and metadata in one file."""
    arrays: dict[str, np.ndarray] = {}
    meta = dict(meta)
    meta["networks"] = {k: {"sizes": list(n.sizes), "head": n.head, "dtype": n.dtype.str} for k, n in nets.items()}
    meta["optimizers"] = {k: {"lr": o.lr, "beta1": o.beta1, "beta2": o.beta2, "eps": o.eps, "step": o.step,
                              "n": len(o.m)} for k, o in optimizers.items()}
    for k, n in nets.items():
        arrays.update(mlp_arrays(k, n))
    for k, o in optimizers.items():
        arrays.update(adam_arrays(k, o))
    return write_checkpoint(path, arrays, meta)


def load_checkpoint(path, layout_version: int | None = None):
    """Returns ``(nets, optimizers, meta)``; refuses a mismatched observation layout."""
    arrays, meta = read_checkpoint(path)
    if layout_version is not None and meta.get("layout_version") != layout_version:
        raise CheckpointError(
            f"{path}: checkpoint was written for observation layout version {meta.get('layout_version')}, "
            f"this featurizer uses version {layout_version}")
    nets = {}
    for k, spec in meta["networks"].items():
        net = Mlp(spec["sizes"], spec["head"], dtype=np.dtype(spec["dtype"]))
        net.set_params([arrays[f"{k}.p{i}"] for i in range(2 * (len(spec["sizes"]) - 1))])
        nets[k] = net
    opts = {}
    for k, o in meta["optimizers"].items():
        st = AdamState(o["lr"], o["beta1"], o["beta2"], o["eps"], o["step"])
        st.m = [arrays[f"{k}.m{i}"].copy() for i in range(o["n"])]
        st.v = [arrays[f"{k}.v{i}"].copy() for i in range(o["n"])]
        opts[k] = st
    return nets, opts, meta
