"""Flow-matching training machinery: the straight-line probability path,
its target velocity, the regression loss, a training loop, and the
closed-form Gaussian transport oracle used for verification."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .exceptions import NumericalError, ValidationError
from .vectorfield import VectorFieldConfig, VelocityField


def _pair_shapes(op: str, a, b) -> None:
    ash = a.data.shape if isinstance(a, ad.Tensor) else np.shape(a)
    bsh = b.data.shape if isinstance(b, ad.Tensor) else np.shape(b)
    if ash != bsh:
        raise ValidationError(f"{op}: endpoint shapes {ash} and {bsh} differ")


def _tspread(t, like: np.ndarray):
    """Broadcast a scalar or per-batch t over sample axes."""
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 0:
        return t
    return t.reshape((t.shape[0],) + (1,) * (like.ndim - 1))


def interpolate(z_p, z_q, t):
    """Point on the straight-line path: (1 - t) * z_p + t * z_q.

    Accepts ndarrays or Tensors (Tensors keep gradients); ``t`` is a scalar
    or one draw per leading batch element, all in [0, 1].
    """
    _pair_shapes("interpolate", z_p, z_q)
    tv = np.asarray(t, dtype=np.float64)
    if tv.min() < 0.0 or tv.max() > 1.0:
        raise ValidationError(f"interpolate: t must lie in [0, 1], got {t}")
    if isinstance(z_p, ad.Tensor) or isinstance(z_q, ad.Tensor):
        ts = _tspread(tv, z_p.data if isinstance(z_p, ad.Tensor) else np.asarray(z_p))
        return ad.add(ad.mul(z_p, 1.0 - ts), ad.mul(z_q, ts))
    ts = _tspread(tv, np.asarray(z_p))
    return (1.0 - ts) * np.asarray(z_p, dtype=np.float64) + ts * np.asarray(z_q, dtype=np.float64)


def target_velocity(z_p, z_q):
    """Constant velocity of the straight-line path: z_q - z_p."""
    _pair_shapes("target_velocity", z_p, z_q)
    if isinstance(z_p, ad.Tensor) or isinstance(z_q, ad.Tensor):
        return ad.sub(z_q, z_p)
    return np.asarray(z_q, dtype=np.float64) - np.asarray(z_p, dtype=np.float64)


def cfm_loss(field: VelocityField, z_p, z_q, t, cond=None, train: bool = True, rng=None) -> ad.Tensor:
    """Mean squared regression of the field onto the target velocity.

    Endpoints are taken as constants (detached) unless passed as Tensors,
    so by default the loss differentiates with respect to field parameters
    only.
    """
    z_t = interpolate(z_p, z_q, t)
    u = target_velocity(z_p, z_q)
    v = field(z_t, t, cond=cond, train=train, rng=rng)
    return ad.mean(ad.square(ad.sub(v, u)))


@dataclass
class OptimizerConfig:
    lr: float = 2e-4
    beta1: float = 0.8
    beta2: float = 0.99
    eps: float = 1e-8
    lr_final: float | None = None  # if set, cosine-decay lr -> lr_final

    def lr_at(self, step: int, total: int) -> float:
        if self.lr_final is None or total <= 1:
            return self.lr
        return self.lr_final + 0.5 * (self.lr - self.lr_final) * (1.0 + np.cos(np.pi * step / total))


def train_cfm(
    sampler,
    field: VelocityField,
    store: ad.ParamStore,
    steps: int,
    batch_size: int,
    opt: OptimizerConfig | None = None,
    rng: np.random.Generator | None = None,
) -> list[float]:
    """Adam-train a velocity field on endpoint pairs from ``sampler``.

    ``sampler(rng, n)`` returns (z_p, z_q, cond-or-None) with z batches
    shaped [n, C, T]. One t ~ U[0, 1] is drawn per batch element. Returns
    the per-step loss curve; aborts on NaN with the offending step index.
    """
    opt = opt or OptimizerConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    losses: list[float] = []
    for step in range(steps):
        z_p, z_q, cond = sampler(rng, batch_size)
        t = rng.random(len(z_p))
        with ad.Tape() as tape:
            loss = cfm_loss(field, z_p, z_q, t, cond=cond, train=True, rng=rng)
        value = loss.item()
        if not np.isfinite(value):
            raise NumericalError(f"train_cfm: non-finite loss at step {step}")
        grads = ad.backward(loss, store, tape)
        ad.adam_step(store, grads, lr=opt.lr_at(step, steps), beta1=opt.beta1, beta2=opt.beta2, eps=opt.eps)
        losses.append(value)
    return losses


@dataclass
class GaussianTransportSpec:
    """Independent diagonal-Gaussian endpoints, per coordinate:
    prior N(a, s^2) and posterior N(b, r^2). Verification oracle for the
    straight-line path."""

    a: float = 0.0
    s: float = 1.0
    b: float = 3.0
    r: float = 0.5

    def validate(self) -> "GaussianTransportSpec":
        if self.s <= 0 or self.r <= 0:
            raise ValidationError(f"gaussian transport: stds must be positive, got s={self.s}, r={self.r}")
        return self

    def path_mean(self, t):
        return (1.0 - t) * self.a + t * self.b

    def path_var(self, t):
        return (1.0 - t) ** 2 * self.s**2 + t**2 * self.r**2

    def conditional_velocity_variance(self, t):
        """Var(z_q - z_p | z_t) per coordinate; its average over t is the
        irreducible floor of the flow-matching loss."""
        cov = t * self.r**2 - (1.0 - t) * self.s**2
        return (self.s**2 + self.r**2) - cov**2 / self.path_var(t)

    def loss_floor(self, n_grid: int = 10001) -> float:
        ts = np.linspace(0.0, 1.0, n_grid)
        return float(np.trapezoid(self.conditional_velocity_variance(ts), ts))

    def sample_pair(self, rng: np.random.Generator, n: int, dim: int):
        z_p = self.a + self.s * rng.standard_normal((n, dim, 1))
        z_q = self.b + self.r * rng.standard_normal((n, dim, 1))
        return z_p, z_q


def gaussian_oracle_velocity(spec: GaussianTransportSpec, t, z):
    """Minimizer of the flow-matching regression under independent Gaussian
    endpoints: the conditional expectation E[z_q - z_p | z_t = z],

        v*(z, t) = (b - a) + [(t r^2 - (1-t) s^2) / ((1-t)^2 s^2 + t^2 r^2)]
                   * (z - mu_t),  mu_t = (1-t) a + t b.
    """
    spec.validate()
    t = np.asarray(t, dtype=np.float64)
    denom = spec.path_var(t)
    if np.any(denom == 0.0):
        raise ValidationError("gaussian oracle: degenerate path variance (s = r = 0)")
    coeff = (t * spec.r**2 - (1.0 - t) * spec.s**2) / denom
    z = np.asarray(z, dtype=np.float64)
    return (spec.b - spec.a) + coeff * (z - spec.path_mean(t))


def gaussian_flow_map(spec: GaussianTransportSpec, z0, t):
    """Exact flow of the oracle field: quantiles of the prior map to the
    same quantiles of the time-t path marginal."""
    sig0 = spec.s
    sig_t = np.sqrt(spec.path_var(t))
    return spec.path_mean(t) + (sig_t / sig0) * (np.asarray(z0) - spec.a)


def wasserstein1_sorted(a: np.ndarray, b: np.ndarray) -> float:
    """1-Wasserstein distance between two equal-size 1-D samples."""
    a = np.sort(np.asarray(a).ravel())
    b = np.sort(np.asarray(b).ravel())
    if a.shape != b.shape:
        raise ValidationError(f"wasserstein1: sample sizes {a.shape} and {b.shape} differ")
    return float(np.mean(np.abs(a - b)))
