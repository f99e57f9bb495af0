"""Named parameter collection with Adam state."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor, Tape, grad


class ParamStore:
    """Uniquely named parameter tensors plus optimizer moment buffers.

    Shapes are fixed at creation; loading a state dict writes into the
    existing arrays so live network references stay valid.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._trainable: dict[str, bool] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def create(self, name: str, data, trainable: bool = True) -> Tensor:
        if name in self._params:
            raise ValueError(f"parameter {name!r} already exists")
        t = Tensor(np.array(data, dtype=np.float64))
        self._params[name] = t
        self._trainable[name] = trainable
        return t

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def names(self) -> list[str]:
        return list(self._params)

    def trainable_names(self) -> list[str]:
        return [n for n, tr in self._trainable.items() if tr]

    def n_parameters(self) -> int:
        return sum(t.size for t in self._params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if strict and (missing or extra):
            raise ValueError(f"state dict mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, arr in state.items():
            if name not in self._params:
                continue
            t = self._params[name]
            if t.data.shape != arr.shape:
                raise ValueError(f"parameter {name!r}: shape {arr.shape} != expected {t.data.shape}")
            t.data[...] = arr

    def zero_all(self) -> None:
        for t in self._params.values():
            t.data[...] = 0.0


def backward(loss: Tensor, store: ParamStore, tape: Tape) -> dict[str, np.ndarray]:
    """Gradient map name -> array for every trainable parameter.

    Parameters not reachable from the loss get zero gradients.
    """
    names = store.trainable_names()
    gs = grad(loss, [store[n] for n in names], tape)
    return dict(zip(names, gs))


def adam_step(
    store: ParamStore,
    grads: dict[str, np.ndarray],
    lr: float = 2e-4,
    beta1: float = 0.8,
    beta2: float = 0.99,
    eps: float = 1e-8,
) -> None:
    """Standard Adam update with bias correction over all trainable params."""
    store.step_count += 1
    t = store.step_count
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name in store.trainable_names():
        if name not in grads:
            raise ValueError(f"adam_step: missing gradient for trainable parameter {name!r} (detached graph?)")
        g = grads[name]
        p = store[name]
        m = store._m.get(name)
        if m is None:
            m = store._m[name] = np.zeros_like(p.data)
        v = store._v.get(name)
        if v is None:
            v = store._v[name] = np.zeros_like(p.data)
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
