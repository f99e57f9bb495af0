"""Training losses: least-squares adversarial terms, feature matching,
mel reconstruction, DSP consistency, auxiliary prediction, duration, and
the weighted composite objective.

All norms are mean-reduced over elements so the weights keep their
meaning across model scales.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .exceptions import ValidationError
from .signals import MelConfig, mel_transform, mel_transform_t


@dataclass
class LossWeights:
    lambda_fm: float = 2.0
    lambda_mel: float = 45.0
    lambda_dsp: float = 45.0
    lambda_cfm: float = 1.0

    def validate(self) -> "LossWeights":
        if min(self.lambda_fm, self.lambda_mel, self.lambda_dsp, self.lambda_cfm) < 0:
            raise ValidationError("loss weights must be >= 0")
        return self


@dataclass
class LossReport:
    """Itemized per-step loss values; total must reproduce the weighted sum."""

    terms: dict = field(default_factory=dict)
    total: float = 0.0

    def rows(self, step: int):
        yield from ((step, name, value) for name, value in self.terms.items())
        yield (step, "total", self.total)


def _as_tensor(x) -> ad.Tensor:
    return x if isinstance(x, ad.Tensor) else ad.Tensor(np.asarray(x, dtype=np.float64))


def _mean_sq(x) -> ad.Tensor:
    return ad.mean(ad.square(x))


def adv_generator(fake_scores: list) -> ad.Tensor:
    """Least-squares generator objective: sum_k mean((D_k(fake) - 1)^2)."""
    if not fake_scores:
        raise ValidationError("adv_generator: empty discriminator suite")
    loss = None
    for s in fake_scores:
        term = _mean_sq(ad.sub(_as_tensor(s), 1.0))
        loss = term if loss is None else ad.add(loss, term)
    return loss


def adv_discriminator(real_scores: list, fake_scores: list) -> ad.Tensor:
    """Least-squares discriminator objective:
    sum_k [mean((D_k(real) - 1)^2) + mean(D_k(fake)^2)]."""
    if len(real_scores) != len(fake_scores):
        raise ValidationError(
            f"adv_discriminator: {len(real_scores)} real vs {len(fake_scores)} fake score sets"
        )
    if not real_scores:
        raise ValidationError("adv_discriminator: empty discriminator suite")
    loss = None
    for r, f in zip(real_scores, fake_scores):
        term = ad.add(_mean_sq(ad.sub(_as_tensor(r), 1.0)), _mean_sq(_as_tensor(f)))
        loss = term if loss is None else ad.add(loss, term)
    return loss


def feature_matching(real_features: list, fake_features: list) -> ad.Tensor:
    """Per-layer normalized L1 between real and generated activations:
    sum_k sum_l (1/N_kl) ||real - fake||_1. Real activations are treated
    as constants."""
    if len(real_features) != len(fake_features):
        raise ValidationError(
            f"feature_matching: {len(real_features)} real vs {len(fake_features)} fake feature lists"
        )
    loss = None
    for reals, fakes in zip(real_features, fake_features):
        if len(reals) != len(fakes):
            raise ValidationError(
                f"feature_matching: layer count mismatch ({len(reals)} vs {len(fakes)})"
            )
        for r, f in zip(reals, fakes):
            rv = r.data if isinstance(r, ad.Tensor) else np.asarray(r)
            fv = f.data if isinstance(f, ad.Tensor) else np.asarray(f)
            if rv.shape != fv.shape:
                raise ValidationError(f"feature_matching: feature shapes {rv.shape} vs {fv.shape}")
            term = ad.mean(ad.absolute(ad.sub(_as_tensor(f), rv)))
            loss = term if loss is None else ad.add(loss, term)
    if loss is None:
        raise ValidationError("feature_matching: no feature maps")
    return loss


def _mel_of(y, cfg: MelConfig):
    if isinstance(y, ad.Tensor):
        return mel_transform_t(y, cfg)
    return ad.Tensor(mel_transform(np.asarray(y, dtype=np.float64), cfg).values)


def mel_reconstruction(y_ref, y_gen, cfg: MelConfig) -> ad.Tensor:
    """Mean L1 between the log-mel transforms of two equal-length
    waveforms."""
    ref_len = (y_ref.data if isinstance(y_ref, ad.Tensor) else np.asarray(y_ref)).shape[-1]
    gen_len = (y_gen.data if isinstance(y_gen, ad.Tensor) else np.asarray(y_gen)).shape[-1]
    if ref_len != gen_len:
        raise ValidationError(f"mel_reconstruction: lengths {ref_len} and {gen_len} differ")
    return ad.mean(ad.absolute(ad.sub(_mel_of(y_gen, cfg), _mel_of(y_ref, cfg).data)))


def dsp_consistency(y_dsp, y_ref, cfg: MelConfig, lambda_dsp: float = 45.0) -> ad.Tensor:
    """Weighted mel L1 anchoring the signal-processing branch to the
    target; carries its weight internally."""
    loss = mel_reconstruction(y_ref, y_dsp, cfg)
    return ad.mul(loss, float(lambda_dsp))


def aux_prediction(true_log_f0, true_mel, pred_log_f0, pred_mel) -> ad.Tensor:
    """MSE on log-f0 plus mean L1 on the mel prediction."""
    tf0 = np.asarray(true_log_f0, dtype=np.float64)
    tmel = np.asarray(true_mel, dtype=np.float64)
    pf0 = _as_tensor(pred_log_f0)
    pmel = _as_tensor(pred_mel)
    if pf0.shape != tf0.shape:
        raise ValidationError(f"aux_prediction: f0 shapes {pf0.shape} and {tf0.shape} differ")
    if pmel.shape != tmel.shape:
        raise ValidationError(f"aux_prediction: mel shapes {pmel.shape} and {tmel.shape} differ")
    return ad.add(_mean_sq(ad.sub(pf0, tf0)), ad.mean(ad.absolute(ad.sub(pmel, tmel))))


_COMPOSITE_PARTS = ("adv", "fm", "mel", "kl", "dsp", "dur", "aux", "cfm")


def generator_composite(parts: dict, weights: LossWeights | None = None):
    """Weighted sum of all generator terms.

    total = adv + lambda_fm * fm + lambda_mel * mel + kl + dsp + dur + aux
            + lambda_cfm * cfm
    where the dsp part already carries its own weight. Returns the total
    (Tensor if any part is) and an itemized LossReport.
    """
    weights = (weights or LossWeights()).validate()
    missing = [name for name in _COMPOSITE_PARTS if name not in parts]
    if missing:
        raise ValidationError(f"generator_composite: missing loss part(s): {', '.join(missing)}")
    lam = {
        "adv": 1.0,
        "fm": weights.lambda_fm,
        "mel": weights.lambda_mel,
        "kl": 1.0,
        "dsp": 1.0,
        "dur": 1.0,
        "aux": 1.0,
        "cfm": weights.lambda_cfm,
    }
    tensor_mode = any(isinstance(parts[n], ad.Tensor) for n in _COMPOSITE_PARTS)
    report = LossReport()
    total_value = 0.0
    total_tensor = None
    for name in _COMPOSITE_PARTS:
        part = parts[name]
        value = float(part.data) if isinstance(part, ad.Tensor) else float(part)
        report.terms[name] = value
        total_value += lam[name] * value
        if tensor_mode:
            scaled = ad.mul(part if isinstance(part, ad.Tensor) else ad.Tensor(np.asarray(value)), lam[name])
            total_tensor = scaled if total_tensor is None else ad.add(total_tensor, scaled)
    report.total = total_value
    return (total_tensor if tensor_mode else total_value), report
