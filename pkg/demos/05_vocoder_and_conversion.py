"""Stage 2 in miniature: a short adversarial run, then reconstruction,
timbre conversion, and the objective report.

Run from the repository root:  python3 demos/05_vocoder_and_conversion.py
(a few minutes on one CPU core; the training is deliberately short, so
expect a rough but structured output rather than clean audio)
"""

import tempfile
from pathlib import Path

import numpy as np

from nhsg import evaluation, stage2
from nhsg.dsp import Waveform, read_wav, write_wav
from nhsg.manifest import select
from nhsg.representation import (BuiltinSpectralEmbedder, PseudoSslExtractor,
                                 build_representation, cosine,
                                 extract_content_features, fit_kmeans)
from nhsg.toycorpus import build_toy_corpus

SR = 16000
HOP = 320

with tempfile.TemporaryDirectory() as tmp:
    root = Path(tmp)
    print("== Toy corpus: 3 'voices' + 2 instrumental + 2 bird clips ==")
    corpus = build_toy_corpus(root, n_human=3, n_instrumental=2, n_bird=2, seed=9)
    extractor = PseudoSslExtractor()
    embedder = BuiltinSpectralEmbedder()
    human_rows = select(corpus.rows, annotated=True)
    codebook = fit_kmeans([extract_content_features(read_wav(r.audio_path), extractor)
                           for r in human_rows], k=16, seed=0)

    samples = []
    for row in corpus.rows:
        wave = read_wav(row.audio_path)
        z = build_representation(wave, codebook, extractor=extractor)
        clip = Waveform(samples=wave.samples[:z.n_frames * HOP], sample_rate=SR)
        samples.append(stage2.VocoderSample(
            waveform=clip, z=z, embedding=embedder.embed(clip, row.id),
            domain=row.domain, sample_id=row.id))
    print(f"{len(samples)} training clips, hop {HOP} "
          f"(generator upsampling 8*5*4*2 = {8 * 5 * 4 * 2})")

    gcfg = stage2.GeneratorConfig(token_vocab_sizes=tuple((l, 16)
                                                          for l in (1, 2, 3, 4)))
    dcfg = stage2.DiscriminatorConfig()
    print(f"generator: {stage2.generator_param_count(gcfg)} parameters; "
          f"discriminator: {stage2.discriminator_param_count(dcfg)} parameters "
          f"across {dcfg.n_branches} branches")

    print("\n== 200 adversarial steps (weights: adv 1.0, fm 2.0, mel 15.0) ==")
    mels = []
    tcfg = stage2.Stage2TrainConfig(steps=200, crop_frames=8, learning_rate=2e-4)
    gparams, dparams, history = stage2.train_stage2(
        samples, gcfg, dcfg, tcfg, seed=0,
        callback=lambda s, st: mels.append(st["mel"]))
    print(f"mel reconstruction term: {np.mean(mels[:20]):.2f} (first 20 steps) "
          f"-> {np.mean(mels[-20:]):.2f} (last 20)")

    print("\n== Reconstruction and conversion ==")
    human = samples[0]
    bird = [s for s in samples if s.domain == "bird"][0]
    recon = stage2.vocode(human.z, human.embedding, gparams, gcfg, SR)
    converted = stage2.vocode(human.z, bird.embedding, gparams, gcfg, SR)
    print(f"reconstruction: {len(recon)} samples = {human.z.n_frames} frames x {HOP}")
    print(f"conversion keeps content frames, swaps the timbre embedding")
    sim_self = cosine(embedder.embed(converted), bird.embedding)
    sim_src = cosine(embedder.embed(converted), human.embedding)
    print(f"converted output: SIM to target timbre {sim_self:+.3f}, "
          f"to source timbre {sim_src:+.3f} (longer training separates these)")

    out_dir = root / "out"
    out_dir.mkdir()
    write_wav(recon, out_dir / "recon.wav")
    write_wav(converted, out_dir / "converted.wav")

    print("\n== Objective report ==")
    rows = [{"id": "recon", "hyp_path": str(out_dir / "recon.wav"),
             "ref_path": corpus.rows[0].audio_path,
             "metrics": ["lf0_rmse", "vuv", "sim", "mcd"]}]
    report = evaluation.evaluate_manifest(rows)
    rec = report.records[0]
    print(f"lf0_rmse {rec.lf0_rmse}, vuv {rec.vuv_pct:.1f}%, "
          f"sim {rec.sim:+.3f}, mcd {rec.mcd:.2f} dB "
          f"(f0_nan={rec.f0_nan}; a 200-step vocoder is still very rough)")
