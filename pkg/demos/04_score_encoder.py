"""Stage 1 in miniature: overfit the score encoder on three toy scores and
inspect what it predicts.

Run from the repository root:  python3 demos/04_score_encoder.py
(takes about a minute on one CPU core)
"""

import tempfile
from pathlib import Path

import numpy as np

from nhsg import stage1
from nhsg.dsp import read_wav
from nhsg.manifest import select
from nhsg.representation import (PseudoSslExtractor, build_representation,
                                 extract_content_features, fit_kmeans)
from nhsg.toycorpus import build_toy_corpus

with tempfile.TemporaryDirectory() as tmp:
    print("== Generating three scored clips and their representations ==")
    corpus = build_toy_corpus(Path(tmp), n_human=3, n_instrumental=0, n_bird=0,
                              seed=11)
    extractor = PseudoSslExtractor()
    rows = select(corpus.rows, annotated=True)
    features = [extract_content_features(read_wav(r.audio_path), extractor)
                for r in rows]
    codebook = fit_kmeans(features, k=16, seed=0)
    samples = []
    for row in rows:
        score = stage1.read_score(row.score_path, corpus.vocab)
        z = build_representation(read_wav(row.audio_path), codebook,
                                 extractor=extractor)
        samples.append((score, z))
        print(f"  {row.id}: {score.n_phonemes} phonemes -> "
              f"{score.total_frames} frames")

    cfg = stage1.Stage1Config(
        phoneme_vocab_size=len(corpus.vocab),
        token_vocab_sizes=tuple((l, 16) for l in (1, 2, 3, 4)),
        encoder_layers=2, decoder_layers=2, attention_dim=64, heads=2,
        ffn_hidden=128, predictor_hidden=64)

    print("\n== Overfitting (teacher-forced, multi-task loss) ==")
    params, history = stage1.train_stage1(samples, cfg, seed=1, epochs=150,
                                          learning_rate=1e-3)
    for point in (0, len(history) // 2, len(history) - 1):
        h = history[point]
        print(f"  step {point:4d}: total {h['total']:.3f} "
              f"(tokens {h['out']:.3f}, durations {h['dur']:.3f}, "
              f"pitch {h['pitch']:.3f})")

    print("\n== Free-running inference on the first score ==")
    score, z_ref = samples[0]
    z_hat = stage1.infer_stage1(score, params, cfg, z_ref.f0.frame_spec)
    print(f"predicted {z_hat.n_frames} frames (ground truth "
          f"{z_ref.n_frames}; durations are predicted at inference)")
    t = min(z_hat.n_frames, z_ref.n_frames)
    layer = cfg.layer_ids[0]
    match = np.mean(z_hat.tokens.tokens[layer][:t] == z_ref.tokens.tokens[layer][:t])
    print(f"layer-{layer} token match over the overlap: {100 * match:.0f}%")
    voiced = z_hat.f0.voiced[:t] & z_ref.f0.voiced[:t]
    if voiced.any():
        l1 = np.mean(np.abs(np.log(z_hat.f0.f0_hz[:t][voiced])
                            - np.log(z_ref.f0.f0_hz[:t][voiced])))
        print(f"log-f0 L1 on co-voiced frames: {l1:.3f}")
