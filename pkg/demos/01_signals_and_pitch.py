"""Walk through the signal layer: WAV I/O, spectrograms, and f0 tracking.

Run from the repository root:  python3 demos/01_signals_and_pitch.py
"""

import tempfile
from pathlib import Path

import numpy as np

from nhsg.dsp import (FrameSpec, Waveform, log_mel, read_wav, stft_magnitude,
                      subband_decompose, write_wav)
from nhsg.pitch import PitchConfig, estimate_f0, log_f0

SR = 16000
spec = FrameSpec(hop_samples=320, win_samples=1024, sample_rate=SR)

print("== A synthetic 'voice': 220 Hz with a little vibrato ==")
t = np.arange(SR) / SR
inst = 220.0 * (1.0 + 0.01 * np.sin(2 * np.pi * 5.0 * t))
phase = np.cumsum(inst) / SR
wave = Waveform(samples=(0.5 * np.sin(2 * np.pi * phase)).astype(np.float32),
                sample_rate=SR)
print(f"{len(wave)} samples at {wave.sample_rate} Hz = {wave.duration_s:.2f} s")

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "tone.wav"
    write_wav(wave, path)
    back = read_wav(path)
    err = np.max(np.abs(back.samples - wave.samples))
    print(f"16-bit WAV round trip: max sample error {err:.2e} (one LSB is "
          f"{2 ** -15:.2e})")

print("\n== Spectrogram on the 20 ms grid ==")
mag = stft_magnitude(wave, spec, fft_size=1024)
print(f"stft_magnitude: {mag.n_frames} frames x {mag.n_bins} bins "
      f"(1 s at hop 320 -> exactly {len(wave) // 320} frames)")
mel = log_mel(wave, spec, fft_size=1024, n_mels=80)
peak_bin = mag.frames[mag.n_frames // 2].argmax()
print(f"energy peaks at bin {peak_bin} = {peak_bin * SR / 1024:.0f} Hz")

bands = subband_decompose(mag, 4)
print("log-spaced sub-bands (the spectral discriminator's view):",
      [b.n_bins for b in bands], "bins per band")

print("\n== Fundamental frequency ==")
contour = estimate_f0(wave, PitchConfig())
voiced_pct = 100.0 * np.mean(contour.voiced)
median_f0 = np.median(contour.f0_hz[contour.voiced])
print(f"{len(contour)} frames, {voiced_pct:.0f}% voiced, median f0 "
      f"{median_f0:.1f} Hz (target 220)")
lf = log_f0(contour)
print(f"log-f0 on voiced frames: mean {lf[contour.voiced].mean():.3f} "
      f"(ln 220 = {np.log(220):.3f})")

noise = Waveform(samples=np.random.default_rng(0).uniform(-0.5, 0.5, SR)
                 .astype(np.float32), sample_rate=SR)
noise_contour = estimate_f0(noise)
print(f"white noise for comparison: {100 * np.mean(~noise_contour.voiced):.0f}% "
      f"unvoiced at the default harmonicity threshold")
