"""Named trainable parameters, Adam, and checkpoint IO.

A ``ParamStore`` owns the leaf ``Node`` for every trainable array. Model
code asks for parameters by name; repeated requests return the *same* node,
so one store can back any number of forward graphs. Checkpoints are npz
containers holding parameter values, Adam moment buffers, the store's rng
seed, and a format tag.
"""

from __future__ import annotations

import json

import numpy as np

from ..errors import CheckpointError, GradientError, ShapeMismatchError
from .graph import Node, as_array

CHECKPOINT_FORMAT = "flowmimic-ckpt-1"

ADAM_LR = 1e-3
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


class ParamStore:
    """Registry of trainable parameters plus optimizer state."""

    def __init__(self, seed=0):
        self.seed = int(seed)
        self.rng = np.random.default_rng(self.seed)
        self._params = {}          # name -> Node (trainable leaf)
        self._m = {}               # Adam first moments
        self._v = {}               # Adam second moments
        self.step_count = 0

    def __contains__(self, name):
        return name in self._params

    def names(self):
        return sorted(self._params)

    def param(self, name, shape=None, init="he"):
        """Return the node for ``name``, creating it on first request.

        ``init`` is "he", "xavier", "zeros", "embed", or an explicit array.
        """
        if name in self._params:
            node = self._params[name]
            if shape is not None and tuple(shape) != node.shape:
                raise ShapeMismatchError("param:" + name, node.shape, shape)
            return node
        if shape is None:
            raise KeyError(f"unknown parameter '{name}'")
        shape = tuple(shape)
        if isinstance(init, str):
            if init == "zeros":
                value = np.zeros(shape)
            elif init == "embed":
                value = self.rng.normal(0.0, 0.02, size=shape)
            else:
                fan_in = shape[0] if len(shape) > 1 else max(shape[0], 1)
                scale = np.sqrt(2.0 / fan_in) if init == "he" \
                    else np.sqrt(1.0 / fan_in)
                value = self.rng.normal(0.0, scale, size=shape)
        else:
            value = as_array(init)
            if value.shape != shape:
                raise ShapeMismatchError("param:" + name, value.shape, shape)
        node = Node(value, op="param", trainable=True, name=name)
        self._params[name] = node
        self._m[name] = np.zeros(shape)
        self._v[name] = np.zeros(shape)
        return node

    def zero_grad(self):
        for node in self._params.values():
            node.grad = None

    def adam_step(self, lr=ADAM_LR, betas=ADAM_BETAS, eps=ADAM_EPS):
        """One Adam update over all parameters; missing grads count as zero.

        Raises GradientError naming the parameter if its gradient is not
        finite. Parameter iteration order is sorted by name so runs are
        reproducible regardless of creation order.
        """
        b1, b2 = betas
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - b1 ** t
        bc2 = 1.0 - b2 ** t
        for name in sorted(self._params):
            node = self._params[name]
            g = node.grad
            if g is None:
                g = 0.0
            elif not np.all(np.isfinite(g)):
                raise GradientError(name)
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g if isinstance(g, np.ndarray) else 0.0)
            node.value -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)

    # -- checkpoint IO ------------------------------------------------------

    def save(self, path, meta=None):
        arrays = {}
        for name, node in self._params.items():
            arrays["p:" + name] = node.value
            arrays["m:" + name] = self._m[name]
            arrays["v:" + name] = self._v[name]
        header = {
            "format": CHECKPOINT_FORMAT,
            "seed": self.seed,
            "step_count": self.step_count,
            "meta": meta or {},
        }
        arrays["__header__"] = np.frombuffer(
            json.dumps(header).encode("utf-8"), dtype=np.uint8)
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path):
        """Restore a store from ``save`` output; returns (store, meta)."""
        try:
            data = np.load(path, allow_pickle=False)
        except (OSError, ValueError) as exc:
            raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
        if "__header__" not in data:
            raise CheckpointError(f"{path}: missing checkpoint header")
        header = json.loads(bytes(data["__header__"]).decode("utf-8"))
        if header.get("format") != CHECKPOINT_FORMAT:
            raise CheckpointError(
                f"{path}: unsupported format {header.get('format')!r}")
        store = cls(seed=header["seed"])
        store.step_count = int(header["step_count"])
        for key in data.files:
            if key.startswith("p:"):
                name = key[2:]
                value = np.asarray(data[key], dtype=np.float64)
                node = Node(value, op="param", trainable=True, name=name)
                store._params[name] = node
                store._m[name] = np.asarray(data["m:" + name], dtype=np.float64)
                store._v[name] = np.asarray(data["v:" + name], dtype=np.float64)
        return store, header.get("meta", {})
