"""Domain adaptation with unpaired timbre conditioning.

Each step draws a batch oversampled toward the non-human domain, runs the
usual paired (self-timbre) adversarial update, then re-pairs the batch's
timbre embeddings by a seeded permutation and generates audio whose only
supervision is three representation-prediction losses computed by a shared
convolutional predictor: token cross-entropy, voiced-masked log-F0 MSE,
and 1 - cosine against the conditioning embedding.

The predictor itself is trained jointly from scratch on the batch's real
audio (where ground-truth tokens, f0, and the source's own embedding are
known); the unpaired generations update the generator only.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dsp import Waveform
from .errors import ConfigError, DataError, ShapeError, TooShortError
from .numerics import (OptimizerState, ParameterStore, Tensor, adamw_step, backward)
from .numerics import tensor as tops
from .numerics.store import save_params
from .representation import FrameRepresentation, TimbreEmbedding
from .seeding import stream
from .stage2 import (DiscriminatorConfig, GanLossWeights, GeneratorConfig,
                     VocoderSample, build_discriminator_params,
                     default_mel_scales, draw_crop, gan_discriminator_phase,
                     gan_generator_backward, generate_t)


# ---------------------------------------------------------------------------
# Predictor network
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PredictorConfig:
    kernel_sizes: tuple = (10, 3, 3, 3, 3, 2, 2)
    strides: tuple = (7, 7, 3, 3, 2, 1, 1)
    paddings: tuple = (4, 1, 1, 1, 1, 1, 1)
    channels: int = 512
    leaky_slope: float = 0.1
    token_vocab_sizes: tuple = ((5, 1024), (8, 1024), (9, 1024), (12, 1024))
    timbre_dim: int = 192
    hop_samples: int = 882

    def __post_init__(self):
        if not (len(self.kernel_sizes) == len(self.strides) == len(self.paddings)):
            raise ConfigError("kernel/stride/padding lists must have equal length")
        if int(np.prod(self.strides)) != self.hop_samples:
            raise ConfigError(
                f"predictor total stride {int(np.prod(self.strides))} "
                f"must equal the representation hop {self.hop_samples}")

    @property
    def layer_ids(self):
        return tuple(l for l, _ in self.token_vocab_sizes)

    def vocab_of(self, layer_id) -> int:
        for l, k in self.token_vocab_sizes:
            if l == layer_id:
                return k
        raise ConfigError(f"no vocab for layer {layer_id}")

    def conv_frames(self, n_samples: int) -> int:
        """Frame count of the raw conv stack (before the trailing trim)."""
        t = n_samples
        for k, s, p in zip(self.kernel_sizes, self.strides, self.paddings):
            t = (t + 2 * p - k) // s + 1
            if t < 1:
                return 0
        return t

    def output_frames(self, n_samples: int) -> int:
        """One prediction per hop interval: len // hop (padding overhang
        from the conv stack is trimmed from the tail)."""
        return n_samples // self.hop_samples


def toy_predictor_config(**overrides) -> PredictorConfig:
    """Desk-scale predictor: stride product re-fitted to the 16 kHz hop."""
    base = dict(strides=(5, 4, 4, 2, 2, 1, 1), paddings=(4, 1, 1, 1, 1, 1, 0),
                channels=64, hop_samples=320,
                token_vocab_sizes=((1, 64), (2, 64), (3, 64), (4, 64)))
    base.update(overrides)
    return PredictorConfig(**base)


def build_predictor_params(pcfg: PredictorConfig, seed: int = 0) -> ParameterStore:
    rng = stream(seed, "predictor-init")
    store = ParameterStore()

    def init(*shape, scale=None):
        scale = scale if scale is not None else 1.0 / np.sqrt(np.prod(shape[1:]))
        return (rng.standard_normal(shape) * scale).astype(np.float32)

    prev = 1
    for i, k in enumerate(pcfg.kernel_sizes):
        store.add(f"conv{i}.v", init(pcfg.channels, prev, k))
        store.add(f"conv{i}.g", np.ones(pcfg.channels, np.float32))
        store.add(f"conv{i}.b", np.zeros(pcfg.channels, np.float32))
        prev = pcfg.channels
    store.add("f0_head.w", init(1, pcfg.channels))
    store.add("f0_head.b", np.zeros(1, np.float32))
    n_token_out = sum(pcfg.vocab_of(l) + 1 for l in pcfg.layer_ids)
    store.add("token_head.w", init(n_token_out, pcfg.channels))
    store.add("token_head.b", np.zeros(n_token_out, np.float32))
    store.add("timbre_head.w", init(pcfg.timbre_dim, pcfg.channels))
    store.add("timbre_head.b", np.zeros(pcfg.timbre_dim, np.float32))
    return store


def predictor_param_shapes(pcfg: PredictorConfig) -> dict:
    return build_predictor_params(pcfg, seed=0).shapes()


def predictor_forward(w, params: ParameterStore, pcfg: PredictorConfig):
    """(f0_pred (T,), token_logits {layer: (T, K+1)}, timbre_pred (D,)).

    T = len(w) // hop; the weight-normalized conv stack runs at the stated
    strides and any padding-induced extra tail frames are trimmed.
    """
    if isinstance(w, Waveform):
        x = Tensor(w.samples)
    elif isinstance(w, Tensor):
        x = w
    else:
        raise ShapeError("predictor expects a Waveform or 1-D Tensor")
    n = x.shape[0]
    t_out = pcfg.output_frames(n)
    if t_out < 1:
        raise TooShortError(f"need at least {pcfg.hop_samples} samples, got {n}")
    t_conv = pcfg.conv_frames(n)
    if t_conv < t_out:
        raise TooShortError(
            f"conv stack yields {t_conv} frames for {n} samples, expected {t_out}")

    h = tops.reshape(x, (1, 1, n))
    for i, (k, s, p) in enumerate(zip(pcfg.kernel_sizes, pcfg.strides, pcfg.paddings)):
        wgt = tops.weight_norm(params[f"conv{i}.v"], params[f"conv{i}.g"])
        h = tops.conv1d(h, wgt, params[f"conv{i}.b"], stride=s, padding=p)
        h = tops.leaky_relu(h, pcfg.leaky_slope)
    if t_conv > t_out:
        h = tops.slice_axis(h, 0, t_out, axis=2)
    frames = tops.transpose(tops.reshape(h, (pcfg.channels, t_out)), (1, 0))

    f0_pred = tops.reshape(tops.linear(frames, params["f0_head.w"],
                                       params["f0_head.b"]), (t_out,))
    token_flat = tops.linear(frames, params["token_head.w"], params["token_head.b"])
    token_logits = {}
    offset = 0
    for l in pcfg.layer_ids:
        width = pcfg.vocab_of(l) + 1
        token_logits[l] = tops.slice_axis(token_flat, offset, offset + width, axis=1)
        offset += width
    pooled = tops.reshape(tops.mean(frames, axis=0), (1, pcfg.channels))
    timbre_pred = tops.reshape(tops.linear(pooled, params["timbre_head.w"],
                                           params["timbre_head.b"]),
                               (pcfg.timbre_dim,))
    return f0_pred, token_logits, timbre_pred


# ---------------------------------------------------------------------------
# Unpaired batches and auxiliary losses
# ---------------------------------------------------------------------------

def unpaired_batch(batch: list, rng, mode: str = "uniform"):
    """Re-pair each (z, waveform, embedding) item with a target embedding.

    Returns (pairs, assignment) where pairs[i] = (z_i, e_assignment[i]).
    `uniform` draws a random permutation (self-pairing possible by chance),
    `derangement` rejects permutations with fixed points, `self` keeps
    every item's own embedding and consumes no randomness.
    """
    n = len(batch)
    if n == 0:
        raise ConfigError("empty batch")
    if mode not in ("uniform", "derangement", "self"):
        raise ConfigError(f"unknown pairing mode {mode!r}")
    if mode == "self":
        assignment = np.arange(n)
    elif n == 1:
        assignment = np.zeros(1, dtype=np.int64)  # fall back to self-pairing
    elif mode == "uniform":
        assignment = rng.permutation(n)
    else:
        while True:
            assignment = rng.permutation(n)
            if not np.any(assignment == np.arange(n)):
                break
    pairs = [(batch[i][0], batch[int(assignment[i])][2]) for i in range(n)]
    return pairs, assignment


def auxiliary_losses(generated, z: FrameRepresentation, e_tgt: TimbreEmbedding,
                     predictor_params: ParameterStore, pcfg: PredictorConfig):
    """(L_token, L_F0, L_timbre) tensors plus a components dict.

    L_token sums per-layer cross-entropy (padding class excluded from the
    softmax) and averages over frames; L_F0 is MSE on log-F0 over voiced
    frames; L_timbre = 1 - cos(e_tgt, prediction).
    """
    f0_pred, token_logits, timbre_pred = predictor_forward(
        generated, predictor_params, pcfg)
    t_pred = f0_pred.shape[0]
    t_ref = z.n_frames
    if abs(t_pred - t_ref) > 1:
        raise ShapeError(f"predictor frames {t_pred} vs representation {t_ref}")
    idx = None
    if t_pred != t_ref:  # off-by-one from file-ingested grids: nearest frame
        idx = np.minimum((np.arange(t_ref) * t_pred + t_pred // 2) // t_ref,
                         t_pred - 1)

    token_loss = None
    for l in pcfg.layer_ids:
        logits = token_logits[l]
        logits = tops.slice_axis(logits, 0, pcfg.vocab_of(l), axis=1)
        if idx is not None:
            logits = tops.embedding_lookup(
                tops.reshape(logits, (t_pred, pcfg.vocab_of(l))), idx)
        piece = tops.cross_entropy(logits, z.tokens.tokens[l])
        token_loss = piece if token_loss is None else tops.add(token_loss, piece)

    f0_col = tops.reshape(f0_pred, (t_pred, 1))
    if idx is not None:
        f0_col = tops.embedding_lookup(f0_col, idx)
    voiced_idx = np.flatnonzero(z.f0.voiced)
    if voiced_idx.size == 0:
        f0_loss = Tensor(np.float32(0.0))
        f0_flagged = True
    else:
        pred_v = tops.embedding_lookup(f0_col, voiced_idx)
        target = np.log(z.f0.f0_hz[voiced_idx]).astype(np.float32).reshape(-1, 1)
        f0_loss = tops.mse_loss(pred_v, Tensor(target))
        f0_flagged = False

    cos = tops.cosine_similarity(Tensor(e_tgt.vector), timbre_pred)
    timbre_loss = tops.add(Tensor(np.float32(1.0)), -cos)

    comps = {"token": token_loss.item(), "f0": f0_loss.item(),
             "timbre": timbre_loss.item(), "f0_unvoiced_flag": f0_flagged}
    return token_loss, f0_loss, timbre_loss, comps


# ---------------------------------------------------------------------------
# Finetuning loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FinetuneConfig:
    oversampling_ratio: float = 0.9       # non-human : human
    sampling: str = "oversample"          # or "uniform" over the merged corpus
    pairing: str = "uniform"              # unpaired_batch mode
    steps: int = 500
    batch_size: int = 2
    crop_frames: int = 8
    learning_rate: float = 1e-4
    predictor_learning_rate: float = 2e-4
    warmup_steps: int = 0
    clip_norm: float = 100.0
    unpaired_weight: float = 1.0
    w_token: float = 1.0
    w_f0: float = 1.0
    w_timbre: float = 1.0
    checkpoint_every: int = 1000
    mel_scales: tuple | None = None

    def __post_init__(self):
        if self.oversampling_ratio <= 0:
            raise ConfigError("oversampling_ratio must be positive")
        if min(self.w_token, self.w_f0, self.w_timbre, self.unpaired_weight) < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.sampling not in ("oversample", "uniform"):
            raise ConfigError(f"unknown sampling mode {self.sampling!r}")


def _draw_sample(human, nonhuman, merged, fcfg, rng):
    if fcfg.sampling == "uniform":
        sample = merged[int(rng.integers(len(merged)))]
        return sample, sample.domain != "human"
    p_nonhuman = fcfg.oversampling_ratio / (1.0 + fcfg.oversampling_ratio)
    if rng.random() < p_nonhuman:
        return nonhuman[int(rng.integers(len(nonhuman)))], True
    return human[int(rng.integers(len(human)))], False


def finetune(gparams: ParameterStore, human_samples: list, nonhuman_samples: list,
             gcfg: GeneratorConfig, dcfg: DiscriminatorConfig,
             pcfg: PredictorConfig, fcfg: FinetuneConfig = FinetuneConfig(),
             weights: GanLossWeights = GanLossWeights(), seed: int = 0,
             dparams: ParameterStore | None = None,
             pparams: ParameterStore | None = None,
             log_path=None, checkpoint_path=None, callback=None):
    """Adapt a pretrained generator to a non-human domain.

    Paired (self-timbre) samples keep the full adversarial + mel objective;
    the unpaired re-pairings contribute only the three representation
    prediction losses, scaled by `unpaired_weight`.  Returns
    (gparams, dparams, pparams, history, info).
    """
    if not nonhuman_samples:
        raise ConfigError("non-human sample list is empty")
    if not human_samples:
        raise ConfigError("human sample list is empty")
    for s in human_samples + nonhuman_samples:
        if not isinstance(s, VocoderSample):
            raise DataError("samples must be VocoderSample instances")

    sr = human_samples[0].waveform.sample_rate
    hop = gcfg.hop_samples
    if pcfg.hop_samples != hop:
        raise ConfigError(
            f"predictor hop {pcfg.hop_samples} != generator hop {hop}")
    merged = list(human_samples) + list(nonhuman_samples)
    if dparams is None:
        dparams = build_discriminator_params(dcfg, seed)
    if pparams is None:
        pparams = build_predictor_params(pcfg, seed)

    gopt = OptimizerState(kind="adamw", learning_rate=fcfg.learning_rate,
                          warmup_steps=fcfg.warmup_steps, clip_norm=fcfg.clip_norm)
    dopt = OptimizerState(kind="adamw", learning_rate=fcfg.learning_rate,
                          warmup_steps=fcfg.warmup_steps, clip_norm=fcfg.clip_norm)
    popt = OptimizerState(kind="adamw", learning_rate=fcfg.predictor_learning_rate,
                          clip_norm=fcfg.clip_norm)

    data_rng = stream(seed, "stage2-data")
    pair_rng = stream(seed, "unpaired-timbre")
    mel_scales = fcfg.mel_scales if fcfg.mel_scales is not None else default_mel_scales(sr)
    history = []
    info = {"human_draws": 0, "nonhuman_draws": 0, "skipped_crops": 0,
            "self_pairs": 0, "unpaired_generations": 0}

    for step in range(fcfg.steps):
        batch = []
        while len(batch) < fcfg.batch_size:
            sample, is_nonhuman = _draw_sample(human_samples, nonhuman_samples,
                                               merged, fcfg, data_rng)
            crop = draw_crop(sample, fcfg.crop_frames, data_rng, hop)
            if crop is None:
                info["skipped_crops"] += 1
                if info["skipped_crops"] > 100 * (len(merged) + 1):
                    raise DataError("every sample is shorter than the crop length")
                continue
            z, wave = crop
            batch.append((z, wave, sample.embedding))
            info["nonhuman_draws" if is_nonhuman else "human_draws"] += 1

        # paired adversarial update (self-reconstruction), same path as
        # vocoder pretraining
        fakes, adv_d = gan_discriminator_phase(batch, gparams, dparams, gcfg,
                                               dcfg, dopt, sr)
        gparams.zero_grad()
        dparams.zero_grad()
        stats = gan_generator_backward(batch, fakes, gparams, dparams, dcfg,
                                       weights, sr, mel_scales)
        stats["adv_d"] = adv_d

        # predictor learns on real audio with known targets
        pparams.zero_grad()
        p_comps = {"token": 0.0, "f0": 0.0, "timbre": 0.0}
        for z, wave, emb in batch:
            lt, lf, lc, comps = auxiliary_losses(wave, z, emb, pparams, pcfg)
            loss_p = tops.add(tops.add(lt * fcfg.w_token, lf * fcfg.w_f0),
                              lc * fcfg.w_timbre)
            backward(loss_p / float(len(batch)))
            for key in p_comps:
                p_comps[key] += comps[key] / len(batch)
        adamw_step(pparams, popt)

        # unpaired conditioning: only the auxiliary losses reach the generator
        aux_comps = {"token": 0.0, "f0": 0.0, "timbre": 0.0}
        if fcfg.unpaired_weight > 0.0:
            pairs, assignment = unpaired_batch(batch, pair_rng, fcfg.pairing)
            info["self_pairs"] += int(np.sum(assignment == np.arange(len(batch))))
            pparams.zero_grad()
            for z, e_tgt in pairs:
                fake = generate_t(z, e_tgt, gparams, gcfg)
                lt, lf, lc, comps = auxiliary_losses(fake, z, e_tgt, pparams, pcfg)
                aux = tops.add(tops.add(lt * fcfg.w_token, lf * fcfg.w_f0),
                               lc * fcfg.w_timbre)
                backward((aux * fcfg.unpaired_weight) / float(len(pairs)))
                info["unpaired_generations"] += 1
                for key in aux_comps:
                    aux_comps[key] += comps[key] / len(pairs)
            pparams.zero_grad()  # generator-side pass must not move the predictor

        adamw_step(gparams, gopt)

        row = dict(stats)
        row.update({"step": step, "token": aux_comps["token"], "f0": aux_comps["f0"],
                    "timbre": aux_comps["timbre"], "pred_token": p_comps["token"],
                    "pred_f0": p_comps["f0"], "pred_timbre": p_comps["timbre"]})
        history.append(row)
        if callback is not None:
            callback(step, row)
        if checkpoint_path is not None and (step + 1) % fcfg.checkpoint_every == 0:
            save_params(gparams, checkpoint_path)

    if checkpoint_path is not None:
        save_params(gparams, checkpoint_path)
    if log_path is not None:
        with open(log_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "adv_g", "adv_d", "fm", "mel",
                             "token", "f0", "timbre"])
            for row in history:
                writer.writerow([row["step"], row["adv_g"], row["adv_d"], row["fm"],
                                 row["mel"], row["token"], row["f0"], row["timbre"]])
    return gparams, dparams, pparams, history, info
