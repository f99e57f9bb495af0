"""Waveform decoder (transposed-conv upsampling with residual refinement)
and the period / scale / spectrogram discriminator suite, plus 16-bit PCM
WAV I/O."""
from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .exceptions import ValidationError
from .signals import MelConfig, stft_magnitude_t


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.samples)


def write_wav(path, samples: np.ndarray, sample_rate: int) -> None:
    """Mono 16-bit PCM RIFF output; samples are clipped to [-1, 1]."""
    pcm = np.round(np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0) * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(int(sample_rate))
        f.writeframes(pcm.tobytes())


def read_wav(path) -> Waveform:
    with wave.open(str(path), "rb") as f:
        if f.getnchannels() != 1 or f.getsampwidth() != 2:
            raise ValidationError(f"{path}: expected mono 16-bit PCM")
        sr = f.getframerate()
        raw = f.readframes(f.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32767.0
    return Waveform(samples, sr)


@dataclass
class DecoderConfig:
    latent_channels: int = 8
    hidden: int = 16
    upsample_rates: tuple = (4, 4)
    upsample_kernels: tuple = (8, 8)
    resblock_kernel: int = 3
    resblock_dilations: tuple = (1, 3)

    def validate(self) -> "DecoderConfig":
        if len(self.upsample_rates) != len(self.upsample_kernels):
            raise ValidationError("decoder: one kernel per upsample rate required")
        for r, k in zip(self.upsample_rates, self.upsample_kernels):
            if k < r:
                raise ValidationError(f"decoder: kernel {k} smaller than rate {r}")
            if (k - r) % 2:
                raise ValidationError(f"decoder: kernel {k} minus rate {r} must be even")
        return self

    @property
    def hop(self) -> int:
        return int(np.prod(self.upsample_rates))


def normalized_log_f0(f0_hz: np.ndarray) -> np.ndarray:
    """Octaves relative to 220 Hz; zero/negative f0 maps well below range."""
    return np.log2(np.maximum(np.asarray(f0_hz, dtype=np.float64), 1.0) / 220.0)


class WaveDecoder:
    """Latent [C, T] plus a per-frame pitch channel -> waveform of exactly
    T * prod(upsample_rates) samples, bounded by a final tanh."""

    def __init__(self, cfg: DecoderConfig, store: ad.ParamStore, rng: np.random.Generator, prefix: str = "dec."):
        self.cfg = cfg.validate()
        h = cfg.hidden
        cin = cfg.latent_channels + 1
        self.pre_w = store.create(prefix + "pre.w", rng.standard_normal((h, cin, 3)) / np.sqrt(3 * cin))
        self.pre_b = store.create(prefix + "pre.b", np.zeros(h))
        self.stages = []
        ch = h
        for i, (rate, kernel) in enumerate(zip(cfg.upsample_rates, cfg.upsample_kernels)):
            out_ch = max(2, ch // 2)
            up_w = store.create(
                prefix + f"up{i}.w", rng.standard_normal((ch, out_ch, kernel)) / np.sqrt(kernel * ch)
            )
            up_b = store.create(prefix + f"up{i}.b", np.zeros(out_ch))
            res = []
            for j, d in enumerate(cfg.resblock_dilations):
                rw = store.create(
                    prefix + f"up{i}.res{j}.w",
                    rng.standard_normal((out_ch, out_ch, cfg.resblock_kernel))
                    / np.sqrt(cfg.resblock_kernel * out_ch),
                )
                rb = store.create(prefix + f"up{i}.res{j}.b", np.zeros(out_ch))
                res.append((rw, rb, d))
            self.stages.append((up_w, up_b, rate, res))
            ch = out_ch
        self.post_w = store.create(prefix + "post.w", rng.standard_normal((1, ch, 3)) / np.sqrt(3 * ch))
        self.post_b = store.create(prefix + "post.b", np.zeros(1))

    def __call__(self, z, f0_hz: np.ndarray):
        zv = z.data if isinstance(z, ad.Tensor) else np.asarray(z, dtype=np.float64)
        if zv.ndim != 2 or zv.shape[0] != self.cfg.latent_channels:
            raise ValidationError(f"decoder: expected [{self.cfg.latent_channels}, T] latent, got {zv.shape}")
        t_frames = zv.shape[1]
        f0_hz = np.asarray(f0_hz, dtype=np.float64)
        if f0_hz.shape != (t_frames,):
            raise ValidationError(f"decoder: pitch contour shape {f0_hz.shape} != ({t_frames},)")
        pitch = normalized_log_f0(f0_hz)[None, :]
        zt = z if isinstance(z, ad.Tensor) else ad.Tensor(zv)
        x = ad.concat([zt, ad.Tensor(pitch)], axis=0)
        x = ad.reshape(x, (1, self.cfg.latent_channels + 1, t_frames))
        x = ad.conv1d(x, self.pre_w, self.pre_b)
        for up_w, up_b, rate, res in self.stages:
            x = ad.leaky_relu(x, 0.1)
            x = ad.conv_transpose1d(x, up_w, up_b, stride=rate)
            for rw, rb, d in res:
                y = ad.leaky_relu(x, 0.1)
                y = ad.conv1d(y, rw, rb, dilation=d)
                x = ad.add(x, y)
        x = ad.leaky_relu(x, 0.1)
        x = ad.conv1d(x, self.post_w, self.post_b)
        wave_out = ad.tanh(ad.reshape(x, (t_frames * self.cfg.hop,)))
        return wave_out


@dataclass
class DiscriminatorConfig:
    periods: tuple = (2, 3)
    scales: tuple = (1, 2)
    stft_sizes: tuple = (64, 128)
    stft_hops: tuple = (16, 32)
    channels: int = 8

    def validate(self) -> "DiscriminatorConfig":
        if len(self.stft_sizes) != len(self.stft_hops):
            raise ValidationError("discriminators: one hop per stft size required")
        if not (self.periods or self.scales or self.stft_sizes):
            raise ValidationError("discriminators: empty suite")
        return self

    @property
    def min_length(self) -> int:
        return max(self.stft_sizes) if self.stft_sizes else max(self.periods, default=1)


class _ConvStack:
    """Strided conv tower returning (score_map, intermediate activations)."""

    def __init__(self, store, prefix, cin, channels, specs, rng):
        # specs: list of (kernel, stride, dilation)
        self.layers = []
        ch = cin
        for i, (k, s, d) in enumerate(specs):
            out = channels * (2 if i else 1)
            w = store.create(prefix + f"c{i}.w", rng.standard_normal((out, ch, k)) / np.sqrt(k * ch))
            b = store.create(prefix + f"c{i}.b", np.zeros(out))
            self.layers.append((w, b, s, d))
            ch = out
        self.score_w = store.create(prefix + "score.w", rng.standard_normal((1, ch, 3)) / np.sqrt(3 * ch))
        self.score_b = store.create(prefix + "score.b", np.zeros(1))

    def __call__(self, x):
        features = []
        for w, b, s, d in self.layers:
            pad = (w.shape[2] - 1) * d // 2
            x = ad.leaky_relu(ad.conv1d(x, w, b, stride=s, dilation=d, padding=pad), 0.1)
            features.append(x)
        score = ad.conv1d(x, self.score_w, self.score_b)
        return score, features


class DiscriminatorSuite:
    """Period, scale, and spectrogram discriminators; every sub returns a
    score map and its ordered intermediate feature maps."""

    def __init__(self, cfg: DiscriminatorConfig, mel_cfg: MelConfig, store: ad.ParamStore,
                 rng: np.random.Generator, prefix: str = "disc."):
        self.cfg = cfg.validate()
        self.mel_cfg = mel_cfg
        ch = cfg.channels
        conv_specs = [(5, 3, 1), (5, 3, 1)]
        self.period_stacks = [
            _ConvStack(store, f"{prefix}period{p}.", 1, ch, conv_specs, rng) for p in cfg.periods
        ]
        scale_specs = [(15, 2, 1), (15, 2, 1)]
        self.scale_stacks = [
            _ConvStack(store, f"{prefix}scale{s}.", 1, ch, scale_specs, rng) for s in cfg.scales
        ]
        spec_specs = [(3, 1, 1), (3, 1, 2)]
        self.spec_stacks = [
            _ConvStack(store, f"{prefix}spec{n}.", n // 2 + 1, ch, spec_specs, rng)
            for n in cfg.stft_sizes
        ]

    def discriminate(self, y):
        """y: waveform Tensor or ndarray [L] -> list of (name, score,
        features) across all sub-discriminators."""
        yv = y.data if isinstance(y, ad.Tensor) else np.asarray(y, dtype=np.float64)
        if yv.ndim != 1:
            raise ValidationError(f"discriminate: expected 1-D waveform, got shape {yv.shape}")
        L = yv.shape[0]
        if L < self.cfg.min_length:
            raise ValidationError(
                f"discriminate: waveform of {L} samples shorter than analysis window {self.cfg.min_length}"
            )
        yt = y if isinstance(y, ad.Tensor) else ad.Tensor(yv)
        out = []
        for p, stack in zip(self.cfg.periods, self.period_stacks):
            rem = (-L) % p
            xp = ad.pad_last(yt, 0, rem) if rem else yt
            blocks = (L + rem) // p
            x = ad.reshape(xp, (blocks, p))
            x = ad.transpose(x, (1, 0))
            x = ad.reshape(x, (p, 1, blocks))
            score, feats = stack(x)
            out.append((f"period{p}", score, feats))
        for s, stack in zip(self.cfg.scales, self.scale_stacks):
            x = ad.reshape(yt, (1, 1, L))
            if s > 1:
                pool_w = np.full((1, 1, s), 1.0 / s)
                x = ad.conv1d(x, pool_w, stride=s, padding=0)
            score, feats = stack(x)
            out.append((f"scale{s}", score, feats))
        for n, hop, stack in zip(self.cfg.stft_sizes, self.cfg.stft_hops, self.spec_stacks):
            scfg = MelConfig(
                sample_rate=self.mel_cfg.sample_rate, fft_size=n, window_size=n, hop_size=hop,
                mel_bands=1, fmin=0.0, fmax=self.mel_cfg.sample_rate / 2,
            )
            mag = stft_magnitude_t(yt, scfg)
            x = ad.reshape(mag, (1,) + mag.shape)
            score, feats = stack(x)
            out.append((f"spec{n}", score, feats))
        return out
