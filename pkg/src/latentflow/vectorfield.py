"""Trainable velocity estimator: a stack of dilated depthwise-separable
convolution blocks with a sinusoidal time embedding injected per block."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .exceptions import ValidationError

# angular frequencies span [1, 1000] geometrically
_OMEGA_LO = 1.0
_OMEGA_HI = 1000.0


def time_frequencies(dim: int) -> np.ndarray:
    if dim < 2 or dim % 2:
        raise ValidationError(f"time embedding dim must be even and >= 2, got {dim}")
    n = dim // 2
    if n == 1:
        return np.array([_OMEGA_LO])
    return np.exp(np.linspace(np.log(_OMEGA_LO), np.log(_OMEGA_HI), n))


def time_embedding(t: float, dim: int) -> np.ndarray:
    """[sin(t*w_k), cos(t*w_k)] for geometrically spaced w_k; t in [0, 1]."""
    if not 0.0 <= float(t) <= 1.0:
        raise ValidationError(f"time embedding: t must lie in [0, 1], got {t}")
    w = time_frequencies(dim)
    return np.concatenate([np.sin(t * w), np.cos(t * w)])


def time_embedding_batch(ts: np.ndarray, dim: int) -> np.ndarray:
    ts = np.atleast_1d(np.asarray(ts, dtype=np.float64))
    if ts.min() < 0.0 or ts.max() > 1.0:
        raise ValidationError("time embedding: all t values must lie in [0, 1]")
    w = time_frequencies(dim)
    arg = ts[:, None] * w[None, :]
    return np.concatenate([np.sin(arg), np.cos(arg)], axis=1)


@dataclass
class VectorFieldConfig:
    latent_channels: int = 8
    hidden: int = 32
    num_blocks: int = 4
    kernel_size: int = 3
    dilations: tuple = (3, 5, 7, 9)
    dropout_p: float = 0.1
    time_embed_dim: int = 16
    cond_channels: int = 4  # 0 = endpoint-only conditioning

    def validate(self) -> "VectorFieldConfig":
        if len(self.dilations) != self.num_blocks:
            raise ValidationError(
                f"vector field: {len(self.dilations)} dilations for {self.num_blocks} blocks"
            )
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValidationError(f"vector field: dropout must be in [0, 1), got {self.dropout_p}")
        return self

    def receptive_radius(self) -> int:
        return sum((self.kernel_size - 1) // 2 * d for d in self.dilations)


class VelocityField:
    """v(z_t, t[, cond]) with shape-preserving convolutions.

    The final 1x1 projection is zero-initialized so the induced flow starts
    as the identity.
    """

    def __init__(self, cfg: VectorFieldConfig, store: ad.ParamStore, rng: np.random.Generator, prefix: str = "vf."):
        self.cfg = cfg.validate()
        self.store = store
        self.prefix = prefix
        c, h, k = cfg.latent_channels, cfg.hidden, cfg.kernel_size
        cin = c + cfg.cond_channels

        def mk(name, shape, scale=None):
            if scale is None:
                fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else shape[0]
                scale = 1.0 / np.sqrt(max(fan_in, 1))
            return store.create(prefix + name, rng.standard_normal(shape) * scale)

        self.pre_w = mk("pre.w", (h, cin, 1))
        self.pre_b = store.create(prefix + "pre.b", np.zeros(h))
        self.blocks = []
        for i, d in enumerate(cfg.dilations):
            blk = {
                "time_w": mk(f"block{i}.time.w", (cfg.time_embed_dim, h)),
                "dw_w": mk(f"block{i}.dw.w", (h, 1, k)),
                "dw_b": store.create(prefix + f"block{i}.dw.b", np.zeros(h)),
                "pw_w": mk(f"block{i}.pw.w", (h, h, 1)),
                "pw_b": store.create(prefix + f"block{i}.pw.b", np.zeros(h)),
                "dilation": d,
            }
            self.blocks.append(blk)
        self.out_w = store.create(prefix + "out.w", np.zeros((c, h, 1)))
        self.out_b = store.create(prefix + "out.b", np.zeros(c))

    def __call__(self, z, t, cond=None, train: bool = False, rng: np.random.Generator | None = None):
        """Velocity with the same shape as ``z``.

        ``z`` is [C, T] or [B, C, T]; ``t`` a scalar or per-batch vector in
        [0, 1]; ``cond`` optional [cond_channels, T] / [B, cond_channels, T].
        """
        cfg = self.cfg
        zv = z.data if isinstance(z, ad.Tensor) else np.asarray(z, dtype=np.float64)
        squeeze = zv.ndim == 2
        if squeeze:
            z = ad.reshape(z, (1,) + zv.shape) if isinstance(z, ad.Tensor) else zv[None]
            if cond is not None:
                cond = np.asarray(cond, dtype=np.float64)[None]
        zv3 = z.data if isinstance(z, ad.Tensor) else z
        B, C, T = zv3.shape
        if C != cfg.latent_channels:
            raise ValidationError(f"vector field: expected {cfg.latent_channels} channels, got {C}")
        if cfg.cond_channels > 0:
            if cond is None:
                raise ValidationError("vector field: conditioning required but not provided")
            cond = np.asarray(cond, dtype=np.float64)
            if cond.shape != (B, cfg.cond_channels, T):
                raise ValidationError(
                    f"vector field: conditioning shape {cond.shape} != {(B, cfg.cond_channels, T)}"
                )
            x = ad.concat([z, ad.Tensor(cond)], axis=1) if isinstance(z, ad.Tensor) else np.concatenate([zv3, cond], axis=1)
        else:
            x = z

        te = time_embedding_batch(np.full(B, t) if np.ndim(t) == 0 else t, cfg.time_embed_dim)
        if te.shape[0] != B:
            raise ValidationError(f"vector field: {te.shape[0]} time values for batch {B}")

        h = ad.conv1d(x, self.pre_w, self.pre_b)
        for blk in self.blocks:
            tb = ad.reshape(ad.matmul(te, blk["time_w"]), (B, cfg.hidden, 1))
            xi = ad.add_frame_bias(h, tb)
            y = ad.conv1d(xi, blk["dw_w"], blk["dw_b"], dilation=blk["dilation"], groups=cfg.hidden)
            y = ad.conv1d(y, blk["pw_w"], blk["pw_b"])
            y = ad.leaky_relu(y, 0.1)
            y = ad.dropout(y, cfg.dropout_p, rng=rng, training=train)
            h = ad.add(xi, y)
        v = ad.conv1d(h, self.out_w, self.out_b)
        if squeeze:
            v = ad.reshape(v, (C, T))
        return v
