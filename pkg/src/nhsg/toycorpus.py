"""Bundled synthetic corpus: seeded sines, sawtooths, and filtered noise
with generated scores, so the whole pipeline (and its acceptance suite)
runs without downloading anything.

Three timbre families with distinct spectral envelopes:

* human-ish: sawtooth voice with per-phoneme one-pole brightness and a
  touch of vibrato, driven by a generated score;
* instrumental: odd-harmonic sustained tones with slow attacks;
* bird-ish: fast frequency trills around 600-1000 Hz (kept inside the
  default pitch range so the validity filter passes).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .dsp import Waveform, write_wav
from .manifest import ManifestRow, write_manifest
from .seeding import stream
from .stage1 import PhonemeVocab, Score, write_score

DEFAULT_PHONEMES = ("SP", "a", "i", "u", "e", "o", "ka", "ki", "ku", "se", "so", "ta")

# per-phoneme (brightness pole, noise mix); SP is near-silence
_PHONEME_COLOR = {
    "a": (0.15, 0.00), "i": (0.75, 0.00), "u": (0.55, 0.00),
    "e": (0.35, 0.00), "o": (0.25, 0.00),
    "ka": (0.45, 0.25), "ki": (0.80, 0.25), "ku": (0.60, 0.20),
    "se": (0.50, 0.45), "so": (0.30, 0.40), "ta": (0.40, 0.35),
}


def midi_to_hz(note: int) -> float:
    return 440.0 * 2.0 ** ((note - 69) / 12.0)


def _sawtooth(freq: float, n: int, sr: int, vibrato_hz: float = 5.0,
              vibrato_depth: float = 0.004) -> np.ndarray:
    t = np.arange(n) / sr
    inst = freq * (1.0 + vibrato_depth * np.sin(2 * np.pi * vibrato_hz * t))
    phase = np.cumsum(inst) / sr
    return 2.0 * (phase % 1.0) - 1.0


def _envelope(n: int, sr: int, attack_s: float = 0.01, release_s: float = 0.02):
    env = np.ones(n)
    a = min(n, max(1, int(attack_s * sr)))
    r = min(n, max(1, int(release_s * sr)))
    env[:a] = np.linspace(0.0, 1.0, a)
    env[n - r:] = np.linspace(1.0, 0.0, r)
    return env


def render_score(score: Score, vocab: PhonemeVocab, sr: int, hop: int,
                 rng) -> Waveform:
    """Sawtooth voice following a score; one segment per score entry."""
    pieces = []
    for phoneme_id, midi, dur in score.entries:
        n = dur * hop
        symbol = vocab.symbols[phoneme_id]
        if symbol == "SP" or midi < 0:
            pieces.append(1e-4 * rng.standard_normal(n))
            continue
        pole, noise_mix = _PHONEME_COLOR.get(symbol, (0.4, 0.1))
        voiced = _sawtooth(midi_to_hz(midi), n, sr)
        colored = lfilter([1.0 - pole], [1.0, -pole], voiced)
        if noise_mix > 0:
            colored = (1 - noise_mix) * colored + noise_mix * lfilter(
                [1.0 - pole], [1.0, -pole], rng.standard_normal(n) * 0.5)
        pieces.append(colored * _envelope(n, sr))
    x = np.concatenate(pieces)
    peak = np.max(np.abs(x))
    if peak > 1e-9:
        x = 0.5 * x / peak
    return Waveform(samples=x.astype(np.float32), sample_rate=sr)


def render_instrumental(midi: int, seconds: float, sr: int, rng) -> Waveform:
    """Odd-harmonic sustained tone with a slow attack."""
    n = int(seconds * sr)
    t = np.arange(n) / sr
    freq = midi_to_hz(midi)
    x = np.zeros(n)
    for k in (1, 3, 5, 7):
        if freq * k < sr / 2:
            x += np.sin(2 * np.pi * freq * k * t + rng.uniform(0, 2 * np.pi)) / k
    x *= _envelope(n, sr, attack_s=0.15, release_s=0.1)
    return Waveform(samples=(0.5 * x / np.max(np.abs(x))).astype(np.float32),
                    sample_rate=sr)


def render_bird(seconds: float, sr: int, rng) -> Waveform:
    """Trilled chirps: carrier 600-1000 Hz with fast frequency modulation."""
    n = int(seconds * sr)
    t = np.arange(n) / sr
    carrier = rng.uniform(600.0, 950.0)
    depth = rng.uniform(60.0, 140.0)
    rate = rng.uniform(8.0, 14.0)
    inst = carrier + depth * np.sin(2 * np.pi * rate * t)
    phase = np.cumsum(inst) / sr
    x = np.sin(2 * np.pi * phase)
    gate = (np.sin(2 * np.pi * rng.uniform(2.0, 3.5) * t) > -0.4).astype(float)
    gate = lfilter([0.01], [1.0, -0.99], gate)
    x *= gate
    return Waveform(samples=(0.5 * x / np.max(np.abs(x))).astype(np.float32),
                    sample_rate=sr)


def random_score(rng, vocab: PhonemeVocab, n_entries=(4, 8),
                 duration_frames=(4, 12), midi_range=(55, 72)) -> Score:
    entries = []
    voiced_symbols = [i for i, s in enumerate(vocab.symbols) if s != "SP"]
    for i in range(int(rng.integers(n_entries[0], n_entries[1] + 1))):
        dur = int(rng.integers(duration_frames[0], duration_frames[1] + 1))
        if i > 0 and rng.random() < 0.15:
            entries.append((vocab.index("SP"), -1, max(2, dur // 2)))
        else:
            entries.append((int(rng.choice(voiced_symbols)),
                            int(rng.integers(midi_range[0], midi_range[1] + 1)), dur))
    return Score(entries=tuple(entries), phoneme_vocab_size=len(vocab))


@dataclass
class ToyCorpus:
    root: Path
    rows: list
    vocab: PhonemeVocab

    @property
    def manifest_path(self) -> Path:
        return self.root / "manifest.jsonl"


def build_toy_corpus(root, n_human: int = 10, n_instrumental: int = 5,
                     n_bird: int = 5, sr: int = 16000, hop: int = 320,
                     seed: int = 0,
                     phonemes: tuple = DEFAULT_PHONEMES) -> ToyCorpus:
    """Materialize WAVs, scores, and a manifest under `root`."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    vocab = PhonemeVocab(symbols=tuple(phonemes))
    rng = stream(seed, "toy-corpus")
    rows = []

    for i in range(n_human):
        score = random_score(rng, vocab)
        wave = render_score(score, vocab, sr, hop, rng)
        wav_path = root / f"human{i:02d}.wav"
        score_path = root / f"human{i:02d}.score"
        write_wav(wave, wav_path)
        write_score(score, vocab, score_path)
        split = "test" if i >= n_human - 2 and n_human > 4 else "train"
        rows.append(ManifestRow(id=f"h{i:02d}", audio_path=str(wav_path),
                                domain="human", annotated=True,
                                score_path=str(score_path), split=split))

    for i in range(n_instrumental):
        wave = render_instrumental(int(rng.integers(48, 72)),
                                   float(rng.uniform(1.0, 1.8)), sr, rng)
        wav_path = root / f"instr{i:02d}.wav"
        write_wav(wave, wav_path)
        rows.append(ManifestRow(id=f"i{i:02d}", audio_path=str(wav_path),
                                domain="instrumental", annotated=False))

    for i in range(n_bird):
        wave = render_bird(float(rng.uniform(1.0, 1.8)), sr, rng)
        wav_path = root / f"bird{i:02d}.wav"
        write_wav(wave, wav_path)
        rows.append(ManifestRow(id=f"b{i:02d}", audio_path=str(wav_path),
                                domain="bird", annotated=False))

    corpus = ToyCorpus(root=root, rows=rows, vocab=vocab)
    write_manifest(rows, corpus.manifest_path)
    return corpus
