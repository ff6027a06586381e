"""Corpus preparation: recursive silence splitting plus the f0 validity filter.

Run from the repository root:  python3 demos/02_segmentation.py
"""

import numpy as np

from nhsg.dsp import Waveform
from nhsg.pitch import PitchConfig
from nhsg.segmentation import (Segment, SegmentationConfig, detect_silence,
                               filter_by_f0, segment_recording)

SR = 16000
rng = np.random.default_rng(0)


def tone(seconds, freq):
    t = np.arange(int(seconds * SR)) / SR
    return 0.5 * np.sin(2 * np.pi * freq * t)


print("== A 26 s 'recording': three phrases separated by silence ==")
recording = Waveform(samples=np.concatenate([
    tone(8.0, 220), np.zeros(SR // 2),
    tone(9.0, 262), np.zeros(SR // 2),
    tone(7.0, 330),
]).astype(np.float32), sample_rate=SR)
print(f"{recording.duration_s:.1f} s total")

silences = detect_silence(recording, -40.0, 300)
print(f"detect_silence finds {len(silences)} gaps:",
      [(round(a / SR, 2), round(b / SR, 2)) for a, b in silences])

cfg = SegmentationConfig()
segments = segment_recording(recording, cfg, source_id="demo")
print(f"segment_recording -> {len(segments)} clips:",
      [f"{s.duration_s:.1f}s" for s in segments])

print("\n== The recursive schedule ==")
print(f"pieces longer than {cfg.resegment_above_s:.0f} s re-enter detection with "
      f"the threshold raised {cfg.threshold_step_db:+.0f} dB and the minimum "
      f"silence shortened {cfg.min_silence_step_ms:+d} ms, up to "
      f"{cfg.max_iterations} passes; anything still over {cfg.max_clip_s:.0f} s "
      "is discarded")
long_tone = Waveform(samples=tone(40.0, 220).astype(np.float32), sample_rate=SR)
print(f"a 40 s tone with no silence at all -> "
      f"{len(segment_recording(long_tone, cfg))} clips kept (discard rule)")

print("\n== F0 validity filter ==")
noisy = segments[:1] + [
    Segment(source_id="noise", start_sample=0, end_sample=2 * SR,
            waveform=Waveform(samples=rng.uniform(-0.4, 0.4, 2 * SR)
                              .astype(np.float32), sample_rate=SR))
]
kept = filter_by_f0(noisy, PitchConfig())
print(f"{len(noisy)} candidate clips -> {len(kept)} kept "
      "(the all-unvoiced noise clip is dropped)")
