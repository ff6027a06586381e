"""Frame-level fundamental-frequency estimation with voiced/unvoiced decisions.

The estimator is a cumulative-mean-normalized difference function (YIN
family): per frame, d'(tau) is searched over lags [sr/fmax, sr/fmin], the
first local dip below the harmonicity threshold wins (falling back to the
global minimum), and the lag is refined by parabolic interpolation.
Frames whose normalized minimum stays above the threshold are unvoiced and
carry f0 = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import FrameSpec, Waveform
from .errors import ConfigError, FormatError, IoError, TooShortError


@dataclass(frozen=True)
class PitchConfig:
    fmin: float = 50.0
    fmax: float = 1100.0
    harmonicity_threshold: float = 0.1
    frame_period_s: float = 0.02

    def __post_init__(self):
        if not (0 < self.fmin < self.fmax):
            raise ConfigError(f"need 0 < fmin < fmax, got ({self.fmin}, {self.fmax})")
        if not (0.0 < self.harmonicity_threshold < 1.0):
            raise ConfigError("harmonicity_threshold must lie in (0, 1)")
        if self.frame_period_s <= 0:
            raise ConfigError("frame_period_s must be positive")

    def validate_rate(self, sample_rate: int) -> None:
        if self.fmax > sample_rate / 2:
            raise ConfigError(
                f"fmax {self.fmax} exceeds Nyquist for sample rate {sample_rate}")


@dataclass
class F0Contour:
    """Per-frame f0 in Hz with a voiced mask; f0 > 0 iff voiced."""

    f0_hz: np.ndarray
    voiced: np.ndarray
    frame_spec: FrameSpec

    def __post_init__(self):
        f0 = np.asarray(self.f0_hz, dtype=np.float64).reshape(-1)
        voiced = np.asarray(self.voiced, dtype=bool).reshape(-1)
        if f0.shape != voiced.shape:
            raise ConfigError("f0 and voiced mask must have equal length")
        if np.any(f0 < 0) or not np.all(np.isfinite(f0)):
            raise ConfigError("f0 values must be finite and non-negative")
        if np.any((f0 > 0) != voiced):
            raise ConfigError("invariant violated: f0 > 0 must hold exactly on voiced frames")
        if np.any(f0 >= self.frame_spec.sample_rate / 2):
            raise ConfigError("f0 at or above Nyquist")
        self.f0_hz = f0
        self.voiced = voiced

    def __len__(self) -> int:
        return int(self.f0_hz.size)


def _difference_function(frames: np.ndarray, tau_max: int) -> np.ndarray:
    """d_t(tau) for tau in [0, tau_max], via FFT autocorrelation per frame.

    frames has shape (T, W + tau_max); the inner window length is W.
    """
    n_total = frames.shape[1]
    w = n_total - tau_max
    fft_len = 1 << int(np.ceil(np.log2(2 * n_total)))
    head = np.fft.rfft(frames[:, :w], n=fft_len, axis=1)
    full = np.fft.rfft(frames, n=fft_len, axis=1)
    # c(tau) = sum_{j < W} x[j] x[j + tau], via cross-correlation
    acf = np.fft.irfft(head.conj() * full, n=fft_len, axis=1)[:, :tau_max + 1]
    sq = frames ** 2
    csum = np.concatenate([np.zeros((frames.shape[0], 1)), np.cumsum(sq, axis=1)], axis=1)
    energy_head = csum[:, w]                       # sum_{j<W} x[j]^2
    taus = np.arange(tau_max + 1)
    energy_shift = csum[:, w + taus] - csum[:, taus]   # sum_{j<W} x[j+tau]^2
    d = energy_head[:, None] + energy_shift - 2.0 * acf
    return np.maximum(d, 0.0)


def _cmnd(d: np.ndarray) -> np.ndarray:
    """Cumulative-mean-normalized difference; d'(0) = 1 by definition."""
    taus = np.arange(1, d.shape[1])
    cum = np.cumsum(d[:, 1:], axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        norm = d[:, 1:] * taus[None, :] / cum
    norm = np.where(cum > 0, norm, 1.0)
    return np.concatenate([np.ones((d.shape[0], 1)), norm], axis=1)


def estimate_f0(w: Waveform, cfg: PitchConfig = PitchConfig()) -> F0Contour:
    """YIN-style f0 contour on the 20 ms (configurable) frame grid."""
    cfg.validate_rate(w.sample_rate)
    sr = w.sample_rate
    hop = int(round(sr * cfg.frame_period_s))
    tau_max = int(np.ceil(sr / cfg.fmin))
    tau_min = max(2, int(np.floor(sr / cfg.fmax)))
    if tau_min >= tau_max:
        raise ConfigError("fmin/fmax leave an empty lag range at this sample rate")
    window = 2 * tau_max
    block = window + tau_max
    min_len = int(np.ceil(4 * sr / cfg.fmin))
    if len(w) < min_len:
        raise TooShortError(
            f"need at least {min_len} samples for fmin={cfg.fmin} Hz, got {len(w)}")

    n_frames = max(1, (len(w) - hop) // hop + 1)
    x = w.samples.astype(np.float64)
    starts = np.minimum(np.arange(n_frames) * hop, len(w) - block)
    frames = x[starts[:, None] + np.arange(block)[None, :]]

    d = _difference_function(frames, tau_max)
    nd = _cmnd(d)

    f0 = np.zeros(n_frames)
    voiced = np.zeros(n_frames, dtype=bool)
    lo, hi = tau_min, tau_max
    for t in range(n_frames):
        seg = nd[t, lo:hi + 1]
        tau = _pick_lag(seg, cfg.harmonicity_threshold)
        if tau is None:
            continue
        tau += lo
        tau_ref = _parabolic_refine(nd[t], tau)
        hz = sr / tau_ref
        hz = float(np.clip(hz, cfg.fmin, cfg.fmax))
        f0[t] = hz
        voiced[t] = True

    spec = FrameSpec(hop_samples=hop, win_samples=max(hop, window), sample_rate=sr)
    return F0Contour(f0_hz=f0, voiced=voiced, frame_spec=spec)


def _pick_lag(seg: np.ndarray, threshold: float):
    """First local dip below threshold, else global min if it clears it."""
    below = np.flatnonzero(seg < threshold)
    if below.size:
        i = int(below[0])
        while i + 1 < seg.size and seg[i + 1] < seg[i]:
            i += 1
        return i
    i = int(np.argmin(seg))
    if seg[i] > threshold:
        return None
    return i


def _parabolic_refine(row: np.ndarray, tau: int) -> float:
    if tau <= 0 or tau >= row.size - 1:
        return float(tau)
    left, center, right = row[tau - 1], row[tau], row[tau + 1]
    denom = left - 2.0 * center + right
    if abs(denom) < 1e-12:
        return float(tau)
    delta = 0.5 * (left - right) / denom
    return float(tau + np.clip(delta, -0.5, 0.5))


def align_f0(c: F0Contour, target_frames: int) -> F0Contour:
    """Nearest-frame resampling of f0 and voiced mask to target_frames."""
    if target_frames < 1:
        raise ConfigError("target_frames must be >= 1")
    n = len(c)
    if n == target_frames:
        idx = np.arange(n)
    else:
        idx = np.minimum((np.arange(target_frames) * n + n // 2) // target_frames, n - 1)
    return F0Contour(f0_hz=c.f0_hz[idx], voiced=c.voiced[idx], frame_spec=c.frame_spec)


def is_valid_f0(c: F0Contour) -> bool:
    """True iff the contour has at least one voiced frame."""
    return bool(np.any(c.voiced))


def log_f0(c: F0Contour) -> np.ndarray:
    """ln(f0) on voiced frames, 0.0 sentinel on unvoiced (mask in c.voiced)."""
    out = np.zeros(len(c))
    out[c.voiced] = np.log(c.f0_hz[c.voiced])
    return out


# ---------------------------------------------------------------------------
# Sidecar ingest for externally computed contours
# ---------------------------------------------------------------------------

def write_f0_file(c: F0Contour, path) -> None:
    """One line per frame: "frame_index<TAB>f0_hz"."""
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for i, hz in enumerate(c.f0_hz):
                fh.write(f"{i}\t{hz:.6f}\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_f0_file(path, frame_spec: FrameSpec) -> F0Contour:
    """Parse a sidecar contour; unvoiced frames are rows with f0 = 0."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    f0 = []
    for lineno, ln in enumerate(lines):
        parts = ln.split("\t")
        if len(parts) != 2:
            raise FormatError(f"{path}:{lineno + 1}: expected 'index<TAB>f0_hz'")
        try:
            idx, hz = int(parts[0]), float(parts[1])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno + 1}: {exc}") from exc
        if idx != lineno:
            raise FormatError(f"{path}:{lineno + 1}: frame indices must be consecutive")
        if hz < 0 or not np.isfinite(hz):
            raise FormatError(f"{path}:{lineno + 1}: f0 must be finite and >= 0")
        f0.append(hz)
    if not f0:
        raise FormatError(f"{path}: empty contour")
    arr = np.asarray(f0)
    return F0Contour(f0_hz=arr, voiced=arr > 0, frame_spec=frame_spec)
