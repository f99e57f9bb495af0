"""Mel analysis, a toy harmonic-plus-noise synthesizer, synthetic singing
data with controlled vibrato, autocorrelation f0 extraction, and the
MCD / F0-RMSE evaluation metrics."""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.fft import dct

from . import autodiff as ad
from .exceptions import ValidationError

MCD_SCALE = 10.0 * np.sqrt(2.0) / np.log(10.0)  # dB per unit cepstral distance


@dataclass(frozen=True)
class MelConfig:
    sample_rate: int = 22050
    fft_size: int = 1024
    window_size: int = 1024
    hop_size: int = 256
    mel_bands: int = 80
    fmin: float = 0.0
    fmax: float = 11025.0
    log_floor: float = 1e-5

    def validate(self) -> "MelConfig":
        if self.fmax > self.sample_rate / 2:
            raise ValidationError(f"mel: fmax {self.fmax} exceeds Nyquist {self.sample_rate / 2}")
        if self.window_size > self.fft_size:
            raise ValidationError(f"mel: window {self.window_size} exceeds fft size {self.fft_size}")
        if self.hop_size <= 0 or self.window_size <= 0:
            raise ValidationError("mel: hop and window must be positive")
        return self

    def frame_count(self, n_samples: int) -> int:
        if n_samples < self.window_size:
            raise ValidationError(
                f"mel: signal of {n_samples} samples shorter than window {self.window_size}"
            )
        return 1 + (n_samples - self.window_size) // self.hop_size


def desk_pipeline_mel() -> MelConfig:
    """Pipeline analysis settings sized for CPU-seconds training runs.

    window == hop keeps every frame-count law consistent end to end:
    a waveform of T*hop samples analyzes to exactly T frames, matching
    the decoder's T -> T*hop upsampling.
    """
    return MelConfig(sample_rate=4000, fft_size=64, window_size=16, hop_size=16,
                     mel_bands=16, fmin=0.0, fmax=2000.0)


def paper_scale_mel() -> MelConfig:
    """Analysis preset whose hop matches the full-scale decoder upsampling
    product 8*8*4*2 = 512."""
    return MelConfig(sample_rate=22050, fft_size=2048, window_size=2048, hop_size=512,
                     mel_bands=80, fmin=0.0, fmax=11025.0)


@dataclass
class MelSpectrogram:
    """Natural-log magnitude-mel values, [bands, frames], floored at
    log(config floor)."""

    values: np.ndarray

    @property
    def bands(self) -> int:
        return self.values.shape[0]

    @property
    def frames(self) -> int:
        return self.values.shape[1]


def _hz_to_mel(f):
    """Slaney mel scale: linear below 1 kHz, logarithmic above."""
    f = np.asarray(f, dtype=np.float64)
    mel = 3.0 * f / 200.0
    log_region = f >= 1000.0
    mel = np.where(log_region, 15.0 + np.log(np.maximum(f, 1e-12) / 1000.0) / (np.log(6.4) / 27.0), mel)
    return mel


def _mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    f = 200.0 * m / 3.0
    log_region = m >= 15.0
    return np.where(log_region, 1000.0 * np.exp((np.log(6.4) / 27.0) * (m - 15.0)), f)


def mel_band_centers(cfg: MelConfig) -> np.ndarray:
    edges = _mel_to_hz(np.linspace(_hz_to_mel(cfg.fmin), _hz_to_mel(cfg.fmax), cfg.mel_bands + 2))
    return edges[1:-1]


def mel_filterbank(cfg: MelConfig) -> np.ndarray:
    """Triangular area-normalized (Slaney-style) filterbank
    [mel_bands, fft_size//2 + 1]."""
    n_bins = cfg.fft_size // 2 + 1
    fft_freqs = np.arange(n_bins) * cfg.sample_rate / cfg.fft_size
    edges = _mel_to_hz(np.linspace(_hz_to_mel(cfg.fmin), _hz_to_mel(cfg.fmax), cfg.mel_bands + 2))
    fb = np.zeros((cfg.mel_bands, n_bins))
    for m in range(cfg.mel_bands):
        lo, center, hi = edges[m], edges[m + 1], edges[m + 2]
        up = (fft_freqs - lo) / max(center - lo, 1e-12)
        down = (hi - fft_freqs) / max(hi - center, 1e-12)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
        fb[m] *= 2.0 / (hi - lo)  # area normalization
    return fb


def periodic_hann(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def dft_matrices(cfg: MelConfig) -> tuple[np.ndarray, np.ndarray]:
    """Real/imag DFT bases mapping a zero-padded frame [fft_size] to
    one-sided bins."""
    n_bins = cfg.fft_size // 2 + 1
    n = np.arange(cfg.fft_size)[:, None]
    k = np.arange(n_bins)[None, :]
    ang = 2.0 * np.pi * n * k / cfg.fft_size
    return np.cos(ang), -np.sin(ang)


def stft_magnitude(y: np.ndarray, cfg: MelConfig) -> np.ndarray:
    """[bins, frames] magnitudes; frame count follows
    1 + (len - window)//hop with no centering."""
    cfg.validate()
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise ValidationError(f"stft: expected 1-D signal, got shape {y.shape}")
    n_frames = cfg.frame_count(len(y))
    idx = np.arange(cfg.window_size)[None, :] + cfg.hop_size * np.arange(n_frames)[:, None]
    frames = y[idx] * periodic_hann(cfg.window_size)[None, :]
    spec = np.fft.rfft(frames, n=cfg.fft_size, axis=1)
    return np.abs(spec).T


def mel_transform(y: np.ndarray, cfg: MelConfig) -> MelSpectrogram:
    """Hann STFT magnitude -> area-normalized mel filterbank -> natural log
    with floor."""
    mag = stft_magnitude(y, cfg)
    mel = mel_filterbank(cfg) @ mag
    return MelSpectrogram(np.log(np.maximum(mel, cfg.log_floor)))


_MAG_EPS = 1e-30  # keeps sqrt differentiable at silent bins


def stft_magnitude_t(y: ad.Tensor, cfg: MelConfig) -> ad.Tensor:
    """Differentiable twin of stft_magnitude, [bins, frames]."""
    cfg.validate()
    frames = ad.frame_signal(y, cfg.window_size, cfg.hop_size)
    windowed = ad.mul(frames, periodic_hann(cfg.window_size)[None, :])
    cos_m, sin_m = dft_matrices(cfg)
    re = ad.matmul(windowed, cos_m[: cfg.window_size])
    im = ad.matmul(windowed, sin_m[: cfg.window_size])
    mag = ad.sqrt(ad.add(ad.add(ad.square(re), ad.square(im)), _MAG_EPS))
    return ad.transpose(mag, (1, 0))


def mel_transform_t(y: ad.Tensor, cfg: MelConfig) -> ad.Tensor:
    """Differentiable twin of mel_transform; log-mel values [bands, frames]."""
    mag = stft_magnitude_t(y, cfg)
    fbt = mel_filterbank(cfg).T
    mel = ad.transpose(ad.matmul(ad.transpose(mag, (1, 0)), fbt), (1, 0))
    return ad.log(ad.clamp(mel, lo=cfg.log_floor))


# ---------------------------------------------------------------------------
# toy DSP synthesizer and synthetic singing data


def midi_to_hz(m) -> np.ndarray:
    return 440.0 * 2.0 ** ((np.asarray(m, dtype=np.float64) - 69.0) / 12.0)


def dsp_synthesize(
    f0_frames: np.ndarray,
    harmonic_amps: np.ndarray,
    noise_env,
    cfg: MelConfig,
    rng: np.random.Generator | None = None,
    n_samples: int | None = None,
) -> np.ndarray:
    """Harmonic-plus-noise rendering of a per-frame f0 contour.

    Harmonic k gets amplitude harmonic_amps[k-1]; phase accumulates from a
    sample-interpolated f0. Enveloped white noise is added and the result
    is peak-normalized to 0.9. Any harmonic at or above the analysis fmax
    is rejected as aliasing.
    """
    cfg.validate()
    f0_frames = np.asarray(f0_frames, dtype=np.float64)
    harmonic_amps = np.atleast_1d(np.asarray(harmonic_amps, dtype=np.float64))
    n_harm = len(harmonic_amps)
    if n_harm and f0_frames.size and float(f0_frames.max()) * n_harm >= cfg.fmax:
        raise ValidationError(
            f"dsp_synthesize: harmonic {n_harm} of max f0 {f0_frames.max():.1f} Hz aliases above fmax {cfg.fmax}"
        )
    L = int(n_samples) if n_samples is not None else len(f0_frames) * cfg.hop_size
    anchors = np.arange(len(f0_frames)) * cfg.hop_size
    f0_samples = np.interp(np.arange(L), anchors, f0_frames)
    phase_cycles = np.cumsum(f0_samples) / cfg.sample_rate
    y = np.zeros(L)
    for k, a in enumerate(harmonic_amps, start=1):
        if a != 0.0:
            y += a * np.sin(2.0 * np.pi * k * phase_cycles)
    env = np.asarray(noise_env, dtype=np.float64)
    if env.ndim == 0:
        noise_gain = np.full(L, float(env))
    else:
        noise_gain = np.interp(np.arange(L), anchors, env)
    if np.any(noise_gain != 0.0):
        if rng is None:
            rng = np.random.default_rng(0)
        y += noise_gain * rng.standard_normal(L)
    peak = np.max(np.abs(y))
    if peak > 0:
        y *= 0.9 / peak
    return y


@dataclass
class SingingSpec:
    """One synthetic utterance: a note sequence plus vibrato and timbre
    controls. Each note carries (midi pitch, duration in frames, token id)."""

    notes: list  # [(midi, frames, token_id), ...]
    vibrato_rate_hz: float = 5.0
    vibrato_depth_cents: float = 60.0
    vibrato_phase: float = 0.0
    harmonic_amps: tuple = (1.0, 0.5, 0.25)
    noise_level: float = 0.01

    def validate(self) -> "SingingSpec":
        if self.vibrato_rate_hz < 0 or self.vibrato_depth_cents < 0:
            raise ValidationError("singing spec: vibrato rate/depth must be >= 0")
        if not self.notes or any(d < 1 for _, d, _ in self.notes):
            raise ValidationError("singing spec: need notes with durations >= 1 frame")
        return self

    @property
    def total_frames(self) -> int:
        return sum(d for _, d, _ in self.notes)


def singing_f0_contour(spec: SingingSpec, cfg: MelConfig) -> np.ndarray:
    """Per-frame f0 (Hz): note pitches modulated by sinusoidal vibrato."""
    spec.validate()
    pitches = np.concatenate([np.full(d, midi_to_hz(m)) for m, d, _ in spec.notes])
    t_sec = np.arange(len(pitches)) * cfg.hop_size / cfg.sample_rate
    cents = spec.vibrato_depth_cents * np.sin(2.0 * np.pi * spec.vibrato_rate_hz * t_sec + spec.vibrato_phase)
    return pitches * 2.0 ** (cents / 1200.0)


# ---------------------------------------------------------------------------
# f0 extraction


@dataclass
class F0ExtractConfig:
    fmin_search: float = 60.0
    fmax_search: float = 1000.0
    voicing_threshold: float = 0.5
    frame_size: int | None = None  # default: 2 periods of fmin_search
    hop_size: int | None = None  # default: the mel hop


def f0_extract(y: np.ndarray, cfg: MelConfig, xcfg: F0ExtractConfig | None = None):
    """Per-frame autocorrelation pitch in [fmin_search, fmax_search] Hz.

    Returns (f0_hz, voiced); a frame is voiced when its normalized
    autocorrelation peak reaches the voicing threshold. Frames of silence
    or noise fall below it.
    """
    xcfg = xcfg or F0ExtractConfig()
    y = np.asarray(y, dtype=np.float64)
    sr = cfg.sample_rate
    frame = xcfg.frame_size or int(np.ceil(2.0 * sr / xcfg.fmin_search))
    hop = xcfg.hop_size or cfg.hop_size
    if frame < 2.0 * sr / xcfg.fmin_search:
        raise ValidationError(
            f"f0_extract: frame of {frame} samples < 2 periods of {xcfg.fmin_search} Hz"
        )
    if len(y) < frame:
        raise ValidationError(f"f0_extract: signal of {len(y)} samples shorter than frame {frame}")
    lag_min = max(2, int(np.floor(sr / xcfg.fmax_search)))
    lag_max = min(frame - 1, int(np.ceil(sr / xcfg.fmin_search)))
    n_frames = 1 + (len(y) - frame) // hop
    f0 = np.zeros(n_frames)
    voiced = np.zeros(n_frames, dtype=bool)
    for i in range(n_frames):
        seg = y[i * hop : i * hop + frame]
        seg = seg - seg.mean()
        energy = float(seg @ seg)
        if energy <= 0.0:
            continue
        # normalized autocorrelation over the lag window
        best_lag, best_val = 0, 0.0
        corr = np.empty(lag_max - lag_min + 1)
        for j, lag in enumerate(range(lag_min, lag_max + 1)):
            a, b = seg[:-lag], seg[lag:]
            denom = np.sqrt(float(a @ a) * float(b @ b))
            corr[j] = float(a @ b) / denom if denom > 0 else 0.0
        j = int(np.argmax(corr))
        best_val = corr[j]
        best_lag = lag_min + j
        if best_val >= xcfg.voicing_threshold:
            lag = float(best_lag)
            if 0 < j < len(corr) - 1:  # parabolic peak interpolation
                denom = corr[j - 1] - 2.0 * corr[j] + corr[j + 1]
                if denom != 0.0:
                    lag += 0.5 * (corr[j - 1] - corr[j + 1]) / denom
            f0[i] = sr / lag
            voiced[i] = True
    return f0, voiced


# ---------------------------------------------------------------------------
# metrics


def mel_cepstra(mel: MelSpectrogram, n_coeffs: int) -> np.ndarray:
    """Coefficients 1..n of the orthonormal type-II DCT of log-mel per
    frame (coefficient 0 carries overall level and is excluded)."""
    c = dct(mel.values, type=2, norm="ortho", axis=0)
    if n_coeffs >= c.shape[0]:
        raise ValidationError(f"mcd: {n_coeffs} coefficients requested from {c.shape[0]} bands")
    return c[1 : n_coeffs + 1]


def mcd(x_ref: MelSpectrogram, x_syn: MelSpectrogram, n_coeffs: int = 13) -> float:
    """Mel-cepstral distortion in dB over frame-aligned inputs."""
    if x_ref.values.shape != x_syn.values.shape:
        raise ValidationError(
            f"mcd: frame-aligned inputs required, got {x_ref.values.shape} vs {x_syn.values.shape}"
        )
    c_ref = mel_cepstra(x_ref, n_coeffs)
    c_syn = mel_cepstra(x_syn, n_coeffs)
    dist = np.sqrt(np.sum((c_ref - c_syn) ** 2, axis=0))
    return float(MCD_SCALE * dist.mean())


def f0_rmse(f0_ref, voiced_ref, f0_syn, voiced_syn) -> tuple[float, float, int]:
    """(RMSE in cents, RMSE in Hz, #frames) over mutually voiced frames."""
    f0_ref = np.asarray(f0_ref, dtype=np.float64)
    f0_syn = np.asarray(f0_syn, dtype=np.float64)
    if f0_ref.shape != f0_syn.shape:
        raise ValidationError(f"f0_rmse: frame counts differ, {f0_ref.shape} vs {f0_syn.shape}")
    both = np.asarray(voiced_ref, dtype=bool) & np.asarray(voiced_syn, dtype=bool)
    if not both.any():
        raise ValidationError("f0_rmse: no mutually voiced frames")
    r, s = f0_ref[both], f0_syn[both]
    cents = 1200.0 * np.log2(s / r)
    rmse_cents = float(np.sqrt(np.mean(cents**2)))
    rmse_hz = float(np.sqrt(np.mean((s - r) ** 2)))
    return rmse_cents, rmse_hz, int(both.sum())
