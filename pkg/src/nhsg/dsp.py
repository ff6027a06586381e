"""Signal-processing primitives and WAV file I/O.

Conventions used throughout the pipeline:

* Audio is mono float32 in [-1, 1].
* Analysis frames advance by ``hop_samples``; frame ``t`` summarises the
  hop interval starting at ``t * hop``.  STFT windows are centered on
  that interval via reflection padding of ``win // 2`` on the left and
  ``max(0, win - hop - win // 2)`` on the right, which makes the frame
  count of a hop-aligned signal exactly ``len // hop``.
* Windows are periodic Hann; FFT sizes are powers of two >= win.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError, IoError, TooShortError, UnsupportedError

LOG_MEL_FLOOR = 1e-5


@dataclass(frozen=True)
class Waveform:
    """Mono sample sequence plus its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float32).reshape(-1)
        if samples.size < 1:
            raise ConfigError("waveform must contain at least one sample")
        if not np.all(np.isfinite(samples)):
            raise ConfigError("waveform samples must be finite")
        if self.sample_rate <= 0:
            raise ConfigError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class FrameSpec:
    """Frame grid: hop/window sizes in samples at a given rate."""

    hop_samples: int
    win_samples: int
    sample_rate: int

    def __post_init__(self):
        if self.hop_samples <= 0:
            raise ConfigError("hop_samples must be positive")
        if self.win_samples < self.hop_samples:
            raise ConfigError("win_samples must be >= hop_samples")
        if self.sample_rate <= 0:
            raise ConfigError("sample_rate must be positive")

    @property
    def frame_period_s(self) -> float:
        return self.hop_samples / self.sample_rate

    def n_frames(self, n_samples: int) -> int:
        """Frame count for a signal of the given length (see module notes)."""
        if n_samples < self.hop_samples:
            return 0
        return (n_samples - self.hop_samples) // self.hop_samples + 1


@dataclass
class Spectrogram:
    """T x B non-negative matrix with the frame grid that produced it."""

    frames: np.ndarray
    kind: str  # linear | mel | log-mel | subband
    frame_spec: FrameSpec
    metadata: dict = field(default_factory=dict)

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def n_bins(self) -> int:
        return int(self.frames.shape[1])


def default_frame_spec(sample_rate: int = 16000, frame_period_s: float = 0.02,
                       win_samples: int = 1024) -> FrameSpec:
    hop = int(round(sample_rate * frame_period_s))
    return FrameSpec(hop_samples=hop, win_samples=win_samples, sample_rate=sample_rate)


# ---------------------------------------------------------------------------
# WAV I/O
# ---------------------------------------------------------------------------

_WAVE_FORMAT_PCM = 1
_WAVE_FORMAT_IEEE_FLOAT = 3


def read_wav(path) -> Waveform:
    """Read a RIFF/WAVE file (16-bit PCM or 32-bit float) as mono float32.

    Multichannel input is averaged to mono.  Raises FormatError for a
    malformed container, UnsupportedError for encodings outside the two
    supported ones, IoError if the path cannot be read.
    """
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc

    if len(blob) < 12 or blob[:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise FormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    offset = 12
    while offset + 8 <= len(blob):
        chunk_id = blob[offset:offset + 4]
        (chunk_size,) = struct.unpack_from("<I", blob, offset + 4)
        body = blob[offset + 8:offset + 8 + chunk_size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise FormatError(f"{path}: truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            if len(body) < chunk_size:
                raise FormatError(f"{path}: data chunk shorter than declared")
            data = body
        offset += 8 + chunk_size + (chunk_size & 1)

    if fmt is None or data is None:
        raise FormatError(f"{path}: missing fmt or data chunk")

    audio_format, n_channels, sample_rate, _, _, bits = fmt
    if n_channels < 1 or sample_rate <= 0:
        raise FormatError(f"{path}: nonsensical fmt fields")

    if audio_format == _WAVE_FORMAT_PCM and bits == 16:
        raw = np.frombuffer(data, dtype="<i2")
        samples = raw.astype(np.float32) / 32768.0
    elif audio_format == _WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        samples = np.frombuffer(data, dtype="<f4").astype(np.float32)
    else:
        raise UnsupportedError(
            f"{path}: unsupported encoding (format={audio_format}, bits={bits}); "
            "only 16-bit PCM and 32-bit float are handled")

    if n_channels > 1:
        usable = (samples.size // n_channels) * n_channels
        samples = samples[:usable].reshape(-1, n_channels).mean(axis=1)
    if samples.size == 0:
        raise FormatError(f"{path}: empty data chunk")
    return Waveform(samples=samples, sample_rate=int(sample_rate))


def write_wav(w: Waveform, path) -> None:
    """Write 16-bit PCM little-endian mono WAV, clipping to [-1, 1 - 2^-15]."""
    clipped = np.clip(w.samples.astype(np.float64), -1.0, 1.0 - 2.0 ** -15)
    pcm = np.round(clipped * 32768.0).astype("<i2")
    payload = pcm.tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, _WAVE_FORMAT_PCM, 1,
                                    w.sample_rate, w.sample_rate * 2, 2, 16)
    header += b"data" + struct.pack("<I", len(payload))
    try:
        with open(path, "wb") as fh:
            fh.write(header + payload)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# STFT / mel
# ---------------------------------------------------------------------------

def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return (0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)).astype(np.float64)


def stft_padding(spec: FrameSpec) -> tuple[int, int]:
    """(left, right) reflection padding placing frame t on hop interval t."""
    left = spec.win_samples // 2
    right = max(0, spec.win_samples - spec.hop_samples - left)
    return left, right


def frame_signal(x: np.ndarray, spec: FrameSpec) -> np.ndarray:
    """Reflection-padded frames, shape (T, win)."""
    left, right = stft_padding(spec)
    if x.size <= max(left, right):
        raise TooShortError(
            f"signal of {x.size} samples is too short for win={spec.win_samples} "
            f"(needs > {max(left, right)})")
    padded = np.pad(x.astype(np.float64), (left, right), mode="reflect")
    n_frames = (padded.size - spec.win_samples) // spec.hop_samples + 1
    if n_frames < 1:
        raise TooShortError("signal shorter than one analysis window")
    stride = padded.strides[0]
    frames = np.lib.stride_tricks.as_strided(
        padded, shape=(n_frames, spec.win_samples),
        strides=(stride * spec.hop_samples, stride))
    return frames.copy()


def stft_magnitude(w: Waveform, spec: FrameSpec, fft_size: int) -> Spectrogram:
    """Magnitude STFT with periodic Hann window, shape T x (fft_size/2 + 1)."""
    if fft_size < spec.win_samples:
        raise ConfigError(f"fft_size {fft_size} < win_samples {spec.win_samples}")
    if fft_size & (fft_size - 1):
        raise ConfigError(f"fft_size must be a power of two, got {fft_size}")
    frames = frame_signal(w.samples, spec) * hann_window(spec.win_samples)
    mags = np.abs(np.fft.rfft(frames, n=fft_size, axis=1)).astype(np.float32)
    left, right = stft_padding(spec)
    return Spectrogram(frames=mags, kind="linear", frame_spec=spec,
                       metadata={"fft_size": fft_size, "pad": (left, right),
                                 "window": "hann-periodic", "pad_mode": "reflect"})


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(sample_rate: int, fft_size: int, n_mels: int,
                   fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Peak-normalized triangular filters on the HTK mel scale.

    Returns an (n_mels, fft_size//2 + 1) matrix.
    """
    nyquist = sample_rate / 2.0
    if fmax is None:
        fmax = nyquist
    if fmax > nyquist:
        raise ConfigError(f"fmax {fmax} above Nyquist {nyquist}")
    if not (0 <= fmin < fmax):
        raise ConfigError(f"need 0 <= fmin < fmax, got ({fmin}, {fmax})")
    if n_mels < 1:
        raise ConfigError("n_mels must be >= 1")

    n_bins = fft_size // 2 + 1
    bin_freqs = np.arange(n_bins) * sample_rate / fft_size
    anchors = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    bank = np.zeros((n_mels, n_bins), dtype=np.float64)
    for i in range(n_mels):
        lo, center, hi = anchors[i], anchors[i + 1], anchors[i + 2]
        up = (bin_freqs - lo) / max(center - lo, 1e-12)
        down = (hi - bin_freqs) / max(hi - center, 1e-12)
        tri = np.maximum(0.0, np.minimum(up, down))
        peak = tri.max()
        if peak <= 0.0:
            raise ConfigError(
                f"mel filter {i} covers no FFT bin; lower n_mels or raise fft_size")
        bank[i] = tri / peak
    return bank.astype(np.float32)


def log_mel(w: Waveform, spec: FrameSpec, fft_size: int, n_mels: int,
            fmin: float = 0.0, fmax: float | None = None,
            mode: str = "power", floor: float = LOG_MEL_FLOOR) -> Spectrogram:
    """log(max(mel energy, floor)); `mode` selects power or magnitude input."""
    if mode not in ("power", "magnitude"):
        raise ConfigError(f"unknown log_mel mode {mode!r}")
    lin = stft_magnitude(w, spec, fft_size)
    energy = lin.frames.astype(np.float64)
    if mode == "power":
        energy = energy ** 2
    bank = mel_filterbank(w.sample_rate, fft_size, n_mels, fmin, fmax)
    mel = energy @ bank.T.astype(np.float64)
    out = np.log(np.maximum(mel, floor)).astype(np.float32)
    meta = dict(lin.metadata, n_mels=n_mels, fmin=fmin, fmax=fmax, mode=mode,
                floor=floor)
    return Spectrogram(frames=out, kind="log-mel", frame_spec=spec, metadata=meta)


def subband_edges(n_bins: int, n_bands: int) -> np.ndarray:
    """Log-spaced band edges over FFT bins; band 0 absorbs the DC bin."""
    if n_bands < 1:
        raise ConfigError("n_bands must be >= 1")
    if n_bands > n_bins:
        raise ConfigError(f"n_bands {n_bands} exceeds bin count {n_bins}")
    raw = np.geomspace(1.0, float(n_bins), n_bands + 1)
    edges = np.rint(raw).astype(int)
    edges[0] = 0
    edges[-1] = n_bins
    # enforce at least one bin per band after rounding
    for i in range(1, n_bands + 1):
        edges[i] = max(edges[i], edges[i - 1] + 1)
    if edges[-1] != n_bins:
        edges = np.minimum(edges, n_bins)
        for i in range(n_bands, 0, -1):
            edges[i - 1] = min(edges[i - 1], edges[i] - 1)
        edges[0] = 0
    return edges


def subband_decompose(s: Spectrogram, n_bands: int) -> list[Spectrogram]:
    """Partition a spectrogram into log-spaced frequency bands."""
    edges = subband_edges(s.n_bins, n_bands)
    bands = []
    for i in range(n_bands):
        lo, hi = int(edges[i]), int(edges[i + 1])
        meta = dict(s.metadata, band=(lo, hi), band_index=i, n_bands=n_bands)
        bands.append(Spectrogram(frames=s.frames[:, lo:hi], kind="subband",
                                 frame_spec=s.frame_spec, metadata=meta))
    return bands


def decimate_by_averaging(w: Waveform, factor: int) -> Waveform:
    """Integer-factor decimation by block averaging (pseudo-SSL front end)."""
    if factor < 1:
        raise ConfigError("decimation factor must be >= 1")
    if factor == 1:
        return w
    usable = (len(w) // factor) * factor
    if usable == 0:
        raise TooShortError(f"cannot decimate {len(w)} samples by {factor}")
    blocks = w.samples[:usable].reshape(-1, factor)
    return Waveform(samples=blocks.mean(axis=1), sample_rate=w.sample_rate // factor)
