"""Central finite-difference gradient checking, the independent oracle for
every backward rule in the package."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .store import ParamStore, backward
from .tensor import Tape, Tensor


def finite_diff_check(
    loss_fn: Callable[[], Tensor],
    store: ParamStore,
    names: Sequence[str] | None = None,
    h: float = 1e-5,
    max_coords_per_param: int | None = None,
    coord_rng: np.random.Generator | None = None,
) -> float:
    """Worst relative error between reverse-mode and central-difference
    gradients over the selected parameters.

    ``loss_fn`` must rebuild the forward pass from the store's current
    values and be deterministic (dropout off or with a fixed mask). A
    nondeterministic loss is rejected. Relative errors use denominators
    floored at 1e-8. ``max_coords_per_param`` caps the per-tensor work by
    probing a seeded random coordinate subset.
    """
    probe_a = float(loss_fn().data)
    probe_b = float(loss_fn().data)
    if probe_a != probe_b:
        raise ValueError(
            "finite_diff_check: loss function is not deterministic "
            f"({probe_a!r} vs {probe_b!r}); fix the seed or disable dropout"
        )

    with Tape() as tape:
        loss = loss_fn()
    grads = backward(loss, store, tape)

    if names is None:
        names = store.trainable_names()
    worst = 0.0
    for name in names:
        flat = store[name].data.ravel()
        gflat = grads[name].ravel()
        coords = np.arange(flat.size)
        if max_coords_per_param is not None and flat.size > max_coords_per_param:
            if coord_rng is None:
                coord_rng = np.random.default_rng(0)
            coords = coord_rng.choice(flat.size, size=max_coords_per_param, replace=False)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            lp = float(loss_fn().data)
            flat[i] = orig - h
            lm = float(loss_fn().data)
            flat[i] = orig
            fd = (lp - lm) / (2.0 * h)
            ad = gflat[i]
            rel = abs(ad - fd) / max(abs(ad), abs(fd), 1e-8)
            worst = max(worst, rel)
    return worst
