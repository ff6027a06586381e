"""The unified representation: content tokens, f0, and timbre embeddings.

Run from the repository root:  python3 demos/03_tokens_and_timbre.py
"""

import numpy as np

from nhsg.dsp import Waveform
from nhsg.representation import (BuiltinSpectralEmbedder, PseudoSslExtractor,
                                 build_representation, cosine,
                                 extract_content_features, fit_kmeans, quantize)

SR = 16000
rng = np.random.default_rng(0)


def sawtooth(freq, seconds=1.0):
    t = np.arange(int(seconds * SR)) / SR
    return Waveform(samples=(0.4 * (2 * ((t * freq) % 1.0) - 1.0)).astype(np.float32),
                    sample_rate=SR)


def harmonic(freq, seconds=1.0):
    t = np.arange(int(seconds * SR)) / SR
    x = sum(np.sin(2 * np.pi * freq * k * t) / k for k in (1, 3, 5))
    return Waveform(samples=(0.4 * x / np.max(np.abs(x))).astype(np.float32),
                    sample_rate=SR)


print("== Content features from the built-in deterministic extractor ==")
extractor = PseudoSslExtractor()
clips = [sawtooth(f) for f in (196.0, 262.0, 330.0)]
features = [extract_content_features(c, extractor) for c in clips]
f = features[0]
print(f"layers {list(f.layer_ids)}, {f.n_frames} frames, "
      f"{f.layers[f.layer_ids[0]].shape[1]} dims per layer")
again = extract_content_features(clips[0], extractor)
print("extraction is deterministic:",
      all(np.array_equal(again.layers[l], f.layers[l]) for l in f.layer_ids))

print("\n== Per-layer k-means codebooks and quantization ==")
codebook = fit_kmeans(features, k=16, seed=0)
for l in codebook.layer_ids:
    print(f"  layer {l}: K={codebook.vocab_size(l)}, "
          f"{codebook.iterations[l]} Lloyd passes, "
          f"final inertia {codebook.inertia[l]:.1f}")
tokens = quantize(features[0], codebook)
first = tokens.tokens[tokens.layer_ids[0]]
print(f"layer {tokens.layer_ids[0]} token stream (first 20): {first[:20].tolist()}")

print("\n== Z = (tokens, f0) ==")
z = build_representation(clips[1], codebook, extractor=extractor)
print(f"tokens.T == f0.T == {z.n_frames}; "
      f"{100 * np.mean(z.f0.voiced):.0f}% voiced, median f0 "
      f"{np.median(z.f0.f0_hz[z.f0.voiced]):.1f} Hz (a 262 Hz sawtooth)")

print("\n== Timbre embeddings (192-dim spectral summary) ==")
embedder = BuiltinSpectralEmbedder()
saw = embedder.embed(sawtooth(220.0), "saw")
saw_higher = embedder.embed(sawtooth(311.0), "saw-high")
odd = embedder.embed(harmonic(220.0), "odd-harmonic")
noise = embedder.embed(Waveform(samples=rng.uniform(-0.4, 0.4, SR)
                                .astype(np.float32), sample_rate=SR), "noise")
print(f"cos(saw @220, saw @311)      = {cosine(saw, saw_higher):+.3f}  "
      "(same family, different pitch)")
print(f"cos(saw @220, odd-harmonic)  = {cosine(saw, odd):+.3f}")
print(f"cos(saw @220, white noise)   = {cosine(saw, noise):+.3f}")
