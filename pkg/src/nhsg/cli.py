"""Command-line entry points for the full pipeline.

Subcommands: make-toy-corpus, segment, train-kmeans, extract, train-stage1,
train-stage2, finetune, synthesize (score -> audio), convert
(audio -> audio), evaluate, inspect.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerics
error.  The NHSG_SEED environment variable overrides the configured seed.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import evaluation, stage1, stage2
from .config import PipelineConfig, default_config_text, load_config
from .dsp import FrameSpec, read_wav, write_wav
from .errors import (ConfigError, DataError, FormatError, InvalidSegmentError,
                     IoError, NhsgError, NumericsError, TooShortError)
from .finetune import build_predictor_params, finetune
from .manifest import ManifestRow, read_manifest, select, write_manifest
from .numerics.store import load_params
from .representation import (BuiltinSpectralEmbedder, PseudoSslExtractor,
                             build_representation, extract_content_features,
                             fit_kmeans, read_codebook, read_embedding_file,
                             read_representation, write_codebook,
                             write_embedding_file, write_representation)
from .seeding import resolve_seed
from .segmentation import filter_by_f0, segment_recording
from .stage2 import VocoderSample, build_generator_params, vocode
from .toycorpus import build_toy_corpus

USAGE_EXIT = 1
DATA_EXIT = 2
NUMERICS_EXIT = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_EXIT)


def _config_from_args(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    for item in getattr(args, "set", None) or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        dotted, value = item.split("=", 1)
        section, key = dotted.split(".", 1)
        cfg.set(section.strip(), key.strip(), value.strip())
    return cfg


def _frame_spec(cfg: PipelineConfig) -> FrameSpec:
    return FrameSpec(hop_samples=cfg.hop_samples,
                     win_samples=cfg.get("audio", "win_samples"),
                     sample_rate=cfg.sample_rate)


def _timbre_embedding(path: str, source_id: str = "target"):
    if str(path).endswith(".nhte"):
        return read_embedding_file(path)
    return BuiltinSpectralEmbedder().embed(read_wav(path), source_id=source_id)


def _load_vocoder_samples(rows, cache_dir: Path, quiet=False):
    samples = []
    for row in rows:
        z_path = cache_dir / f"{row.id}.nhrc"
        e_path = cache_dir / f"{row.id}.nhte"
        if not z_path.exists() or not e_path.exists():
            if not quiet:
                print(f"  [skip] {row.id}: no cache entry (was it filtered?)")
            continue
        samples.append(VocoderSample(
            waveform=read_wav(row.audio_path),
            z=read_representation(z_path),
            embedding=read_embedding_file(e_path),
            domain=row.domain, sample_id=row.id))
    if not samples:
        raise DataError(f"no usable cache entries under {cache_dir}")
    return samples


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_make_toy_corpus(args):
    cfg = _config_from_args(args)
    seed = resolve_seed(cfg.seed if args.seed is None else args.seed)
    corpus = build_toy_corpus(args.out_dir, n_human=args.human,
                              n_instrumental=args.instrumental, n_bird=args.bird,
                              sr=cfg.sample_rate, hop=cfg.hop_samples, seed=seed)
    config_path = Path(args.out_dir) / "config.ini"
    config_path.write_text(default_config_text(), encoding="utf-8")
    print(f"wrote {len(corpus.rows)} clips, {corpus.manifest_path}, {config_path}")
    return 0


def cmd_segment(args):
    cfg = _config_from_args(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seg_cfg = cfg.segmentation_config()
    pitch_cfg = cfg.pitch_config()
    rows = []
    for audio in args.audio:
        source_id = Path(audio).stem
        wave = read_wav(audio)
        segments = segment_recording(wave, seg_cfg, source_id=source_id)
        kept = filter_by_f0(segments, pitch_cfg) if not args.no_f0_filter else segments
        print(f"{source_id}: {len(segments)} segments, {len(kept)} after f0 filter")
        for seg in kept:
            name = f"{seg.source_id}_{seg.start_sample}.wav"
            write_wav(seg.waveform, out_dir / name)
            rows.append(ManifestRow(id=f"{seg.source_id}_{seg.start_sample}",
                                    audio_path=str(out_dir / name),
                                    domain=args.domain, annotated=False))
    write_manifest(rows, out_dir / "segments.jsonl")
    print(f"wrote {len(rows)} segments and {out_dir / 'segments.jsonl'}")
    return 0


def cmd_train_kmeans(args):
    cfg = _config_from_args(args)
    rows = select(read_manifest(args.manifest), annotated=True, human=True)
    if not rows:
        raise DataError("no annotated human rows in the manifest")
    extractor = PseudoSslExtractor(cfg.pseudo_ssl_config())
    features = [extract_content_features(read_wav(row.audio_path), extractor)
                for row in rows]
    codebook = fit_kmeans(features, k=cfg.get("representation", "kmeans_k"),
                          max_iter=cfg.get("representation", "kmeans_max_iter"),
                          seed=resolve_seed(cfg.seed))
    write_codebook(codebook, args.out)
    inertia = {l: round(v, 3) for l, v in codebook.inertia.items()}
    print(f"fitted codebook on {len(rows)} clips; inertia per layer: {inertia}")
    return 0


def cmd_extract(args):
    cfg = _config_from_args(args)
    rows = read_manifest(args.manifest)
    codebook = read_codebook(args.codebook)
    extractor = PseudoSslExtractor(cfg.pseudo_ssl_config())
    embedder = BuiltinSpectralEmbedder()
    pitch_cfg = cfg.pitch_config()
    cache = Path(args.out_dir)
    cache.mkdir(parents=True, exist_ok=True)
    done = skipped = 0
    for row in rows:
        wave = read_wav(row.audio_path)
        try:
            z = build_representation(wave, codebook, pitch_cfg, extractor)
        except (InvalidSegmentError, TooShortError) as exc:
            print(f"  [skip] {row.id}: {exc}")
            skipped += 1
            continue
        write_representation(z, cache / f"{row.id}.nhrc")
        if row.embedding_path:
            emb = read_embedding_file(row.embedding_path)
        else:
            emb = embedder.embed(wave, source_id=row.id)
        write_embedding_file(emb, cache / f"{row.id}.nhte")
        done += 1
    print(f"cached {done} representations ({skipped} skipped) under {cache}")
    if done == 0:
        raise DataError("no representation could be extracted")
    return 0


def cmd_train_stage1(args):
    cfg = _config_from_args(args)
    s1cfg = cfg.stage1_config()
    vocab = cfg.phoneme_vocab()
    cache = Path(args.cache)
    rows = select(read_manifest(args.manifest), annotated=True, split="train")
    samples = []
    for row in rows:
        z_path = cache / f"{row.id}.nhrc"
        if not z_path.exists():
            print(f"  [skip] {row.id}: no cache entry")
            continue
        score = stage1.read_score(row.score_path, vocab)
        z = read_representation(z_path)
        if score.total_frames != z.n_frames:
            print(f"  [skip] {row.id}: score frames {score.total_frames} != "
                  f"representation frames {z.n_frames}")
            continue
        samples.append((score, z))
    if not samples:
        raise DataError("no trainable (score, representation) pairs")
    epochs = args.epochs if args.epochs is not None else cfg.get("stage1", "epochs")
    params, history = stage1.train_stage1(
        samples, s1cfg, seed=resolve_seed(cfg.seed), epochs=epochs,
        learning_rate=cfg.get("stage1", "learning_rate"),
        grad_clip=cfg.get("stage1", "grad_clip"),
        log_path=args.loss_log, checkpoint_path=args.out)
    print(f"trained on {len(samples)} scores for {epochs} epochs; "
          f"final loss {history[-1]['total']:.4f}; checkpoint {args.out}")
    return 0


def cmd_train_stage2(args):
    cfg = _config_from_args(args)
    gcfg = cfg.generator_config()
    dcfg = cfg.discriminator_config()
    tcfg = cfg.stage2_train_config()
    if args.steps is not None:
        from dataclasses import replace
        tcfg = replace(tcfg, steps=args.steps)
    rows = select(read_manifest(args.manifest), split="train")
    samples = _load_vocoder_samples(rows, Path(args.cache))
    _, _, history = stage2.train_stage2(
        samples, gcfg, dcfg, tcfg, weights=cfg.gan_loss_weights(),
        seed=resolve_seed(cfg.seed), log_path=args.loss_log,
        checkpoint_path=args.out)
    print(f"trained {tcfg.steps} steps on {len(samples)} clips; "
          f"final mel {history[-1]['mel']:.4f}; checkpoint {args.out}")
    return 0


def cmd_finetune(args):
    cfg = _config_from_args(args)
    gcfg = cfg.generator_config()
    dcfg = cfg.discriminator_config()
    pcfg = cfg.predictor_config()
    fcfg = cfg.finetune_config()
    if args.steps is not None:
        from dataclasses import replace
        fcfg = replace(fcfg, steps=args.steps)
    rows = read_manifest(args.manifest)
    humans = select(rows, human=True, split="train")
    if args.domain:
        nonhumans = select(rows, domain=args.domain, split="train")
    else:
        nonhumans = select(rows, human=False, split="train")
    cache = Path(args.cache)
    human_samples = _load_vocoder_samples(humans, cache)
    nonhuman_samples = _load_vocoder_samples(nonhumans, cache)
    gparams = load_params(args.ckpt)
    from .numerics.store import validate_structure
    validate_structure(gparams, stage2.generator_param_shapes(gcfg))
    _, _, _, history, info = finetune(
        gparams, human_samples, nonhuman_samples, gcfg, dcfg, pcfg, fcfg,
        weights=cfg.gan_loss_weights(), seed=resolve_seed(cfg.seed),
        log_path=args.loss_log, checkpoint_path=args.out)
    ratio = info["nonhuman_draws"] / max(1, info["human_draws"])
    print(f"finetuned {fcfg.steps} steps "
          f"(non-human:human draw ratio {ratio:.2f}); checkpoint {args.out}")
    return 0


def cmd_synthesize(args):
    cfg = _config_from_args(args)
    s1cfg = cfg.stage1_config()
    gcfg = cfg.generator_config()
    vocab = cfg.phoneme_vocab()
    score = stage1.read_score(args.score, vocab)
    s1_params = stage1.load_stage1_checkpoint(args.stage1_ckpt, s1cfg)
    z = stage1.infer_stage1(score, s1_params, s1cfg, _frame_spec(cfg))
    emb = _timbre_embedding(args.timbre)
    gparams = load_params(args.ckpt)
    from .numerics.store import validate_structure
    validate_structure(gparams, stage2.generator_param_shapes(gcfg))
    wave = vocode(z, emb, gparams, gcfg, cfg.sample_rate)
    write_wav(wave, args.out)
    print(f"synthesized {len(wave)} samples ({wave.duration_s:.2f} s) -> {args.out}")
    return 0


def cmd_convert(args):
    cfg = _config_from_args(args)
    gcfg = cfg.generator_config()
    source = read_wav(args.source)
    codebook = read_codebook(args.codebook)
    extractor = PseudoSslExtractor(cfg.pseudo_ssl_config())
    z = build_representation(source, codebook, cfg.pitch_config(), extractor)
    emb = _timbre_embedding(args.timbre)
    gparams = load_params(args.ckpt)
    from .numerics.store import validate_structure
    validate_structure(gparams, stage2.generator_param_shapes(gcfg))
    wave = vocode(z, emb, gparams, gcfg, cfg.sample_rate)
    write_wav(wave, args.out)
    print(f"converted {args.source} -> {args.out} "
          f"({z.n_frames} frames, {len(wave)} samples)")
    return 0


def cmd_evaluate(args):
    cfg = _config_from_args(args)
    rows = evaluation.read_pairs_manifest(args.pairs)
    report = evaluation.evaluate_manifest(rows, pitch_cfg=cfg.pitch_config())
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    evaluation.write_report_csv(report, out_dir / "report.csv")
    evaluation.write_report_json(report, out_dir / "report.json")
    agg = report.aggregates
    print(f"evaluated {agg['count']} pairs ({agg['failed']} failed)")
    for key in ("lf0_rmse_mean", "vuv_pct_mean", "sim_mean", "mcd_mean", "f0_nan_pct"):
        if agg.get(key) is not None:
            print(f"  {key}: {agg[key]:.4f}")
    return 0 if report.n_failed == 0 else DATA_EXIT


def cmd_inspect(args):
    path = Path(args.path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == b"NHRC":
        z = read_representation(path)
        print(f"representation cache entry: {z.n_frames} frames")
        for l in z.tokens.layer_ids:
            toks = z.tokens.tokens[l]
            print(f"  layer {l}: K={z.tokens.vocab_sizes[l]}, "
                  f"{len(np.unique(toks))} distinct tokens, first 10: {toks[:10].tolist()}")
        voiced_pct = 100.0 * np.mean(z.f0.voiced)
        f0v = z.f0.f0_hz[z.f0.voiced]
        rng_txt = f"{f0v.min():.1f}..{f0v.max():.1f} Hz" if f0v.size else "n/a"
        print(f"  f0: {voiced_pct:.1f}% voiced, range {rng_txt}")
    elif magic == b"NHCB":
        cb = read_codebook(path)
        print(f"codebook: layers {list(cb.layer_ids)}, seed {cb.seed}")
        for l in cb.layer_ids:
            k, d = cb.centroids[l].shape
            print(f"  layer {l}: K={k}, dim={d}, inertia={cb.inertia.get(l)}")
    elif magic == b"NHCK":
        store = load_params(path)
        print(f"checkpoint: {len(store)} tensors, {store.n_values()} values, "
              f"step {store.step}")
        for name, t in list(store.items())[:12]:
            print(f"  {name}: {tuple(t.data.shape)}")
        if len(store) > 12:
            print(f"  ... and {len(store) - 12} more")
    elif magic == b"NHTE":
        emb = read_embedding_file(path)
        print(f"timbre embedding: dim {emb.dim}, "
              f"norm {float(np.linalg.norm(emb.vector)):.4f}")
    else:
        raise FormatError(f"{path}: unrecognized magic {magic!r}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="nhsg",
                     description="Two-stage singing generation for non-human "
                                 "timbres: data prep, training, synthesis, "
                                 "conversion, and objective evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI config file (defaults used if omitted)")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override a config value (repeatable)")

    p = sub.add_parser("make-toy-corpus", help="generate the bundled synthetic corpus")
    common(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--human", type=int, default=10)
    p.add_argument("--instrumental", type=int, default=5)
    p.add_argument("--bird", type=int, default=5)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_make_toy_corpus)

    p = sub.add_parser("segment", help="silence-split recordings into clips")
    common(p)
    p.add_argument("--audio", nargs="+", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--domain", default="general")
    p.add_argument("--no-f0-filter", action="store_true")
    p.set_defaults(fn=cmd_segment)

    p = sub.add_parser("train-kmeans", help="fit per-layer codebooks on "
                                            "annotated human rows")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train_kmeans)

    p = sub.add_parser("extract", help="cache representations and embeddings")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("train-stage1", help="train the score encoder")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--cache", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--loss-log", default=None)
    p.set_defaults(fn=cmd_train_stage1)

    p = sub.add_parser("train-stage2", help="pretrain the vocoder (GAN)")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--cache", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--loss-log", default=None)
    p.set_defaults(fn=cmd_train_stage2)

    p = sub.add_parser("finetune", help="domain finetuning with unpaired timbres")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--cache", required=True)
    p.add_argument("--ckpt", required=True, help="pretrained stage-2 checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--domain", default=None, help="restrict non-human rows")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--loss-log", default=None)
    p.set_defaults(fn=cmd_finetune)

    p = sub.add_parser("synthesize", help="score + timbre -> audio")
    common(p)
    p.add_argument("--score", required=True)
    p.add_argument("--timbre", required=True, help="reference WAV or .nhte file")
    p.add_argument("--stage1-ckpt", required=True)
    p.add_argument("--ckpt", required=True, help="vocoder checkpoint")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synthesize)

    p = sub.add_parser("convert", help="source audio + timbre -> audio")
    common(p)
    p.add_argument("--source", required=True)
    p.add_argument("--timbre", required=True, help="reference WAV or .nhte file")
    p.add_argument("--codebook", required=True)
    p.add_argument("--ckpt", required=True, help="vocoder checkpoint")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_convert)

    p = sub.add_parser("evaluate", help="objective metrics over a pairs manifest")
    common(p)
    p.add_argument("--pairs", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("inspect", help="dump a cache/codebook/checkpoint/embedding")
    p.add_argument("path")
    p.set_defaults(fn=cmd_inspect)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else USAGE_EXIT
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except NumericsError as exc:
        print(f"numerics error: {exc}", file=sys.stderr)
        return NUMERICS_EXIT
    except (DataError, FormatError, IoError, NhsgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())
