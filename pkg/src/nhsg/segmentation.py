"""Energy-based silence detection with recursive refinement.

Long recordings are split at the midpoints of detected silent intervals.
Pieces still longer than the re-segmentation trigger are re-analyzed with
progressively relaxed parameters (threshold up, minimum silence down) for
a bounded number of passes; whatever still exceeds the clip ceiling is
discarded.  Segments that never voice a single frame are filtered out
before training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import Waveform
from .errors import ConfigError, TooShortError
from .pitch import PitchConfig, estimate_f0, is_valid_f0

RMS_WINDOW_S = 0.010  # energy is measured over 10 ms blocks


@dataclass(frozen=True)
class SegmentationConfig:
    silence_threshold_db: float = -40.0
    min_silence_ms: int = 300
    max_clip_s: float = 30.0
    resegment_above_s: float = 15.0
    max_iterations: int = 3
    threshold_step_db: float = 5.0
    min_silence_step_ms: int = -100

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if self.resegment_above_s >= self.max_clip_s:
            raise ConfigError("resegment_above_s must be below max_clip_s")

    def params_at(self, iteration: int) -> tuple[float, int]:
        """(threshold_db, min_silence_ms) for pass `iteration` (1-based)."""
        thr = self.silence_threshold_db + (iteration - 1) * self.threshold_step_db
        sil = self.min_silence_ms + (iteration - 1) * self.min_silence_step_ms
        return thr, max(RMS_WINDOW_S * 1000.0, sil)


@dataclass
class Segment:
    source_id: str
    start_sample: int
    end_sample: int
    waveform: Waveform

    def __post_init__(self):
        if not (0 <= self.start_sample < self.end_sample):
            raise ConfigError("segment bounds must satisfy 0 <= start < end")
        if self.end_sample - self.start_sample != len(self.waveform):
            raise ConfigError("segment bounds disagree with waveform length")

    @property
    def duration_s(self) -> float:
        return self.waveform.duration_s


def detect_silence(w: Waveform, threshold_db: float, min_silence_ms: float):
    """Silent (start, end) sample intervals: 10 ms RMS windows below threshold
    for at least min_silence_ms, adjacent runs merged."""
    block = max(1, int(round(w.sample_rate * RMS_WINDOW_S)))
    n_blocks = len(w) // block
    if n_blocks == 0:
        rms = np.array([np.sqrt(np.mean(w.samples.astype(np.float64) ** 2))])
        n_blocks = 1
    else:
        trimmed = w.samples[:n_blocks * block].astype(np.float64)
        rms = np.sqrt(np.mean(trimmed.reshape(n_blocks, block) ** 2, axis=1))
    db = 20.0 * np.log10(np.maximum(rms, 1e-10))
    quiet = db < threshold_db

    min_blocks = max(1, int(round(min_silence_ms / (RMS_WINDOW_S * 1000.0))))
    intervals = []
    run_start = None
    for i in range(n_blocks + 1):
        inside = i < n_blocks and quiet[i]
        if inside and run_start is None:
            run_start = i
        elif not inside and run_start is not None:
            if i - run_start >= min_blocks:
                start = run_start * block
                end = len(w) if i == n_blocks else i * block
                intervals.append((start, end))
            run_start = None
    return intervals


def _split_at_midpoints(start: int, end: int, intervals) -> list[tuple[int, int]]:
    cuts = [start]
    for lo, hi in intervals:
        mid = (lo + hi) // 2
        if cuts[-1] < mid < end:
            cuts.append(mid)
    cuts.append(end)
    return [(a, b) for a, b in zip(cuts, cuts[1:]) if b > a]


def segment_recording(w: Waveform, cfg: SegmentationConfig = SegmentationConfig(),
                      source_id: str = "rec") -> list[Segment]:
    """Recursive silence-split; emits ordered segments of at most max_clip_s."""
    sr = w.sample_rate
    resegment_samples = int(cfg.resegment_above_s * sr)
    max_samples = int(cfg.max_clip_s * sr)

    pieces = [(0, len(w), 1)]  # (start, end, next detection pass)
    done: list[tuple[int, int]] = []
    while pieces:
        start, end, iteration = pieces.pop(0)
        if iteration > cfg.max_iterations:
            done.append((start, end))
            continue
        # the first pass analyzes everything; later passes only long pieces
        if iteration > 1 and end - start <= resegment_samples:
            done.append((start, end))
            continue
        thr, sil = cfg.params_at(iteration)
        sub = Waveform(samples=w.samples[start:end], sample_rate=sr)
        intervals = detect_silence(sub, thr, sil)
        parts = _split_at_midpoints(start, end, [(start + a, start + b) for a, b in intervals])
        if len(parts) == 1:
            if end - start <= resegment_samples:
                done.append((start, end))
            else:
                pieces.insert(0, (start, end, iteration + 1))
            continue
        for a, b in reversed(parts):
            pieces.insert(0, (a, b, iteration + 1))

    done.sort()
    out = []
    for a, b in done:
        if b - a > max_samples:
            continue  # still too long after every pass: discard
        out.append(Segment(source_id=source_id, start_sample=a, end_sample=b,
                           waveform=Waveform(samples=w.samples[a:b], sample_rate=sr)))
    return out


def filter_by_f0(segments: list[Segment],
                 cfg: PitchConfig = PitchConfig()) -> list[Segment]:
    """Keep only segments with at least one voiced frame (valid f0)."""
    kept = []
    for seg in segments:
        try:
            contour = estimate_f0(seg.waveform, cfg)
        except TooShortError:
            continue  # too short to even analyze: treat as invalid
        if is_valid_f0(contour):
            kept.append(seg)
    return kept
