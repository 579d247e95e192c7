"""Parameter storage, Adam, and the checkpoint archive format."""
from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError, ContractError
from .tensor import Tensor, ones_param, xavier_init, zeros_param

FORMAT_VERSION = 1


def _sub_seed(seed, name):
    # stable across processes, unlike hash()
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode())])


class ParamStore:
    """Ordered map from dotted path to a trainable Tensor."""

    def __init__(self, seed=0):
        self.seed = seed
        self._params: dict[str, Tensor] = {}

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self):
        return list(self._params)

    def add(self, name, tensor):
        if name in self._params:
            raise ContractError(f"parameter {name!r} registered twice")
        tensor.requires_grad = True
        tensor.name = name
        self._params[name] = tensor
        return tensor

    def weight(self, name, shape):
        return self.add(name, xavier_init(shape, _sub_seed(self.seed, name)))

    def bias(self, name, shape):
        return self.add(name, zeros_param(shape))

    def ones(self, name, shape):
        return self.add(name, ones_param(shape))

    def zero_grad(self):
        for p in self._params.values():
            p.zero_grad()

    def clear_grad(self):
        for p in self._params.values():
            p.grad = None

    def snapshot(self):
        return {k: p.data.copy() for k, p in self._params.items()}

    def restore(self, arrays):
        for k, p in self._params.items():
            p.data = np.array(arrays[k], dtype=np.float64)

    def num_parameters(self):
        return sum(p.data.size for p in self._params.values())


@dataclass
class AdamState:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state, params):
    """Bias-corrected Adam update in place, then clear gradients."""
    missing = [name for name, p in params.items() if p.grad is None]
    if missing:
        raise ContractError(f"no gradient for parameter(s): {', '.join(missing[:5])}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = p.grad
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
        p.grad = None


# ---------------------------------------------------------------------------
# checkpoint archive: npz of little-endian float64 arrays plus a JSON header

def save_checkpoint(path, params, meta, adam=None):
    arrays = {"format_version": np.array(FORMAT_VERSION, dtype="<i8"),
              "meta": np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)}
    for name, p in params.items():
        arrays[f"param/{name}"] = p.data.astype("<f8")
    if adam is not None:
        arrays["adam/hyper"] = np.array(
            [adam.learning_rate, adam.beta1, adam.beta2, adam.epsilon, adam.t], dtype="<f8")
        for name in adam.m:
            arrays[f"adam_m/{name}"] = adam.m[name].astype("<f8")
            arrays[f"adam_v/{name}"] = adam.v[name].astype("<f8")
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def read_checkpoint(path):
    """Return (meta, {name: array}, AdamState | None) without building a model."""
    try:
        with np.load(path, allow_pickle=False) as z:
            files = {k: z[k] for k in z.files}
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    version = int(files.get("format_version", -1))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version}")
    meta = json.loads(files["meta"].tobytes().decode())
    arrays = {k[len("param/"):]: v for k, v in files.items() if k.startswith("param/")}
    adam = None
    if "adam/hyper" in files:
        lr, b1, b2, eps, t = files["adam/hyper"].tolist()
        adam = AdamState(learning_rate=lr, beta1=b1, beta2=b2, epsilon=eps, t=int(t))
        for k, v in files.items():
            if k.startswith("adam_m/"):
                adam.m[k[7:]] = v.astype(np.float64)
            elif k.startswith("adam_v/"):
                adam.v[k[7:]] = v.astype(np.float64)
    return meta, arrays, adam


def load_params(params, arrays):
    """Copy checkpoint arrays into ``params``; names and shapes must match exactly."""
    unknown = sorted(set(arrays) - set(params.names()))
    if unknown:
        raise CheckpointError(f"unknown parameter(s) in checkpoint: {', '.join(unknown[:5])}")
    missing = sorted(set(params.names()) - set(arrays))
    if missing:
        raise CheckpointError(f"checkpoint lacks parameter(s): {', '.join(missing[:5])}")
    for name, p in params.items():
        a = arrays[name]
        if a.shape != p.shape:
            raise CheckpointError(f"shape mismatch for {name}: checkpoint {a.shape} vs model {p.shape}")
        p.data = np.array(a, dtype=np.float64)
