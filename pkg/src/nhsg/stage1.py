"""Score encoder: symbolic (phoneme, note, duration) tuples to frame-level
content tokens and log-F0.

Architecture: phoneme+note embeddings feed a Transformer encoder whose
self-attention carries a learned relative-position bias and whose
feed-forward blocks are 1-D convolutions.  A feed-forward head predicts
per-phoneme log-durations; a length regulator repeats encoder states to
the frame level; a second head predicts frame-level log-F0, which is
projected and added before a Transformer decoder and per-layer linear
projections produce token logits.

Training is teacher-forced with ground-truth durations.  The multi-task
loss is cross-entropy on tokens (an L1-against-one-hot mode exists behind
a config flag), L1 on log-durations, and L1 on log-F0 over voiced frames.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .dsp import FrameSpec
from .errors import ConfigError, DataError, FormatError, IoError, VocabError
from .numerics import (OptimizerState, ParameterStore, Tensor, adamw_step,
                       backward, concat)
from .numerics import tensor as tops
from .numerics.store import load_params, save_params, validate_structure
from .pitch import F0Contour
from .representation import ContentTokens, FrameRepresentation
from .seeding import stream

REST_MIDI = -1
REST_PHONEME = "SP"
MIDI_VOCAB = 129  # 0..127 plus the rest sentinel mapped to index 128


@dataclass(frozen=True)
class Score:
    """Sequence of (phoneme_id, midi_note, duration_frames)."""

    entries: tuple
    phoneme_vocab_size: int

    def __post_init__(self):
        if not self.entries:
            raise ConfigError("score must be non-empty")
        for p, n, d in self.entries:
            if d < 1:
                raise ConfigError("durations must be >= 1 frame")
            if not (n == REST_MIDI or 0 <= n <= 127):
                raise ConfigError(f"midi note {n} outside 0..127 (or -1 for rest)")
            if not (0 <= p < self.phoneme_vocab_size):
                raise VocabError(f"phoneme id {p} outside vocab of {self.phoneme_vocab_size}")

    @property
    def n_phonemes(self) -> int:
        return len(self.entries)

    @property
    def total_frames(self) -> int:
        return sum(d for _, _, d in self.entries)

    def phoneme_ids(self) -> np.ndarray:
        return np.array([p for p, _, _ in self.entries], dtype=np.int64)

    def midi_indices(self) -> np.ndarray:
        return np.array([128 if n == REST_MIDI else n for _, n, _ in self.entries],
                        dtype=np.int64)

    def durations(self) -> np.ndarray:
        return np.array([d for _, _, d in self.entries], dtype=np.int64)


@dataclass(frozen=True)
class PhonemeVocab:
    symbols: tuple

    def __post_init__(self):
        if REST_PHONEME not in self.symbols:
            raise ConfigError(f"phoneme vocab must contain the rest symbol {REST_PHONEME!r}")
        if len(set(self.symbols)) != len(self.symbols):
            raise ConfigError("duplicate phoneme symbols")

    def index(self, symbol: str) -> int:
        try:
            return self.symbols.index(symbol)
        except ValueError:
            raise VocabError(f"unknown phoneme {symbol!r}") from None

    def __len__(self):
        return len(self.symbols)


def read_score(path, vocab: PhonemeVocab) -> Score:
    """Text score: one "phoneme<TAB>midi<TAB>duration_frames" row per entry."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    entries = []
    for i, ln in enumerate(lines):
        parts = ln.split("\t")
        if len(parts) != 3:
            raise FormatError(f"{path}:{i + 1}: expected 'phoneme<TAB>midi<TAB>frames'")
        try:
            midi, dur = int(parts[1]), int(parts[2])
        except ValueError as exc:
            raise FormatError(f"{path}:{i + 1}: {exc}") from exc
        entries.append((vocab.index(parts[0]), midi, dur))
    if not entries:
        raise FormatError(f"{path}: empty score")
    return Score(entries=tuple(entries), phoneme_vocab_size=len(vocab))


def write_score(score: Score, vocab: PhonemeVocab, path) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for p, n, d in score.entries:
                fh.write(f"{vocab.symbols[p]}\t{n}\t{d}\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


@dataclass(frozen=True)
class Stage1Config:
    phoneme_vocab_size: int = 16
    token_vocab_sizes: tuple = ((1, 64), (2, 64), (3, 64), (4, 64))  # (layer, K)
    encoder_layers: int = 2
    decoder_layers: int = 2
    attention_dim: int = 64
    heads: int = 2
    ffn_hidden: int = 128
    ffn_kernel: int = 3
    predictor_hidden: int = 64
    rel_attn_radius: int = 8
    lambda_out: float = 1.0
    lambda_dur: float = 1.0
    lambda_pitch: float = 1.0
    token_loss: str = "cross_entropy"  # or "l1_onehot"
    leaky_slope: float = 0.1
    # inference-time voicing rule
    f0_floor_hz: float = 20.0
    silence_tokens: tuple = ()

    def __post_init__(self):
        if self.attention_dim % self.heads:
            raise ConfigError("attention_dim must divide evenly into heads")
        if self.token_loss not in ("cross_entropy", "l1_onehot"):
            raise ConfigError(f"unknown token_loss mode {self.token_loss!r}")
        if min(l for _, l in self.token_vocab_sizes) < 1:
            raise ConfigError("token vocab sizes must be >= 1")

    @property
    def layer_ids(self):
        return tuple(l for l, _ in self.token_vocab_sizes)

    def vocab_of(self, layer_id) -> int:
        for l, k in self.token_vocab_sizes:
            if l == layer_id:
                return k
        raise ConfigError(f"no vocab size for layer {layer_id}")


def full_scale_stage1_config(**overrides) -> Stage1Config:
    """Full-scale configuration (6+6 layers, width 384, K=1024)."""
    base = dict(token_vocab_sizes=((5, 1024), (8, 1024), (9, 1024), (12, 1024)),
                encoder_layers=6, decoder_layers=6, attention_dim=384, heads=2,
                ffn_hidden=1536, predictor_hidden=256)
    base.update(overrides)
    return Stage1Config(**base)


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

def _init(rng, *shape, scale=None):
    scale = scale if scale is not None else 1.0 / np.sqrt(shape[-1])
    return (rng.standard_normal(shape) * scale).astype(np.float32)


def _add_block(store, rng, prefix, cfg):
    d, h = cfg.attention_dim, cfg.ffn_hidden
    r = cfg.rel_attn_radius
    for name in ("wq", "wk", "wv", "wo"):
        store.add(f"{prefix}.attn.{name}", _init(rng, d, d))
    store.add(f"{prefix}.attn.rel", _init(rng, 2 * r + 1, cfg.heads, scale=0.02))
    store.add(f"{prefix}.ln1.g", np.ones(d, np.float32))
    store.add(f"{prefix}.ln1.b", np.zeros(d, np.float32))
    store.add(f"{prefix}.ffn.w1", _init(rng, h, d, cfg.ffn_kernel))
    store.add(f"{prefix}.ffn.b1", np.zeros(h, np.float32))
    store.add(f"{prefix}.ffn.w2", _init(rng, d, h, cfg.ffn_kernel))
    store.add(f"{prefix}.ffn.b2", np.zeros(d, np.float32))
    store.add(f"{prefix}.ln2.g", np.ones(d, np.float32))
    store.add(f"{prefix}.ln2.b", np.zeros(d, np.float32))


def build_stage1_params(cfg: Stage1Config, seed: int = 0) -> ParameterStore:
    rng = stream(seed, "stage1-init")
    store = ParameterStore()
    d, h = cfg.attention_dim, cfg.predictor_hidden
    store.add("emb.phoneme", _init(rng, cfg.phoneme_vocab_size, d, scale=0.1))
    store.add("emb.midi", _init(rng, MIDI_VOCAB, d, scale=0.1))
    for i in range(cfg.encoder_layers):
        _add_block(store, rng, f"enc{i}", cfg)
    store.add("dur.w1", _init(rng, h, d))
    store.add("dur.b1", np.zeros(h, np.float32))
    store.add("dur.w2", _init(rng, 1, h))
    store.add("dur.b2", np.zeros(1, np.float32))
    store.add("pitch.w1", _init(rng, h, d))
    store.add("pitch.b1", np.zeros(h, np.float32))
    store.add("pitch.w2", _init(rng, 1, h))
    store.add("pitch.b2", np.zeros(1, np.float32))
    store.add("pitch_proj.w", _init(rng, d, 1, scale=0.1))
    store.add("pitch_proj.b", np.zeros(d, np.float32))
    for i in range(cfg.decoder_layers):
        _add_block(store, rng, f"dec{i}", cfg)
    for l in cfg.layer_ids:
        store.add(f"head{l}.w", _init(rng, cfg.vocab_of(l) + 1, d))
        store.add(f"head{l}.b", np.zeros(cfg.vocab_of(l) + 1, np.float32))
    return store


def stage1_param_shapes(cfg: Stage1Config) -> dict:
    return build_stage1_params(cfg, seed=0).shapes()


# ---------------------------------------------------------------------------
# Forward pieces
# ---------------------------------------------------------------------------

def _rel_bias(params, prefix, n, cfg) -> Tensor:
    r = cfg.rel_attn_radius
    rel = params[f"{prefix}.attn.rel"]  # (2r+1, heads)
    idx = np.clip(np.arange(n)[None, :] - np.arange(n)[:, None], -r, r) + r
    flat = tops.embedding_lookup(rel, idx.reshape(-1))        # (n*n, heads)
    return tops.transpose(tops.reshape(flat, (n, n, cfg.heads)), (2, 0, 1))


def _attention(x: Tensor, params, prefix, cfg) -> Tensor:
    n, d = x.shape
    heads, dh = cfg.heads, d // cfg.heads

    def split(t):
        return tops.transpose(tops.reshape(t, (n, heads, dh)), (1, 0, 2))

    q = split(tops.linear(x, params[f"{prefix}.attn.wq"]))
    k = split(tops.linear(x, params[f"{prefix}.attn.wk"]))
    v = split(tops.linear(x, params[f"{prefix}.attn.wv"]))
    bias = _rel_bias(params, prefix, n, cfg)
    mixed = tops.scaled_dot_attention(q, k, v, bias)
    merged = tops.reshape(tops.transpose(mixed, (1, 0, 2)), (n, d))
    return tops.linear(merged, params[f"{prefix}.attn.wo"])


def _conv_ffn(x: Tensor, params, prefix, cfg) -> Tensor:
    n, d = x.shape
    pad = cfg.ffn_kernel // 2
    seq = tops.reshape(tops.transpose(x, (1, 0)), (1, d, n))
    h = tops.conv1d(seq, params[f"{prefix}.ffn.w1"], params[f"{prefix}.ffn.b1"],
                    stride=1, padding=pad)
    h = tops.leaky_relu(h, cfg.leaky_slope)
    h = tops.conv1d(h, params[f"{prefix}.ffn.w2"], params[f"{prefix}.ffn.b2"],
                    stride=1, padding=pad)
    return tops.transpose(tops.reshape(h, (d, n)), (1, 0))


def _block(x: Tensor, params, prefix, cfg) -> Tensor:
    attn = _attention(x, params, prefix, cfg)
    x = tops.layer_norm(tops.add(x, attn), params[f"{prefix}.ln1.g"],
                        params[f"{prefix}.ln1.b"])
    ffn = _conv_ffn(x, params, prefix, cfg)
    return tops.layer_norm(tops.add(x, ffn), params[f"{prefix}.ln2.g"],
                           params[f"{prefix}.ln2.b"])


def encode(score: Score, params: ParameterStore, cfg: Stage1Config) -> Tensor:
    """Phoneme-level hidden states, shape (N, attention_dim)."""
    if score.phoneme_ids().max(initial=0) >= cfg.phoneme_vocab_size:
        raise VocabError("phoneme id outside the configured vocabulary")
    x = tops.add(tops.embedding_lookup(params["emb.phoneme"], score.phoneme_ids()),
                 tops.embedding_lookup(params["emb.midi"], score.midi_indices()))
    for i in range(cfg.encoder_layers):
        x = _block(x, params, f"enc{i}", cfg)
    return x


def _ffn_head(x: Tensor, params, prefix, cfg) -> Tensor:
    h = tops.leaky_relu(tops.linear(x, params[f"{prefix}.w1"], params[f"{prefix}.b1"]),
                        cfg.leaky_slope)
    return tops.linear(h, params[f"{prefix}.w2"], params[f"{prefix}.b2"])


def predict_durations(hidden: Tensor, params, cfg: Stage1Config) -> Tensor:
    """Per-phoneme log-durations, shape (N,)."""
    return tops.reshape(_ffn_head(hidden, params, "dur", cfg), (hidden.shape[0],))


def length_regulate(hidden: Tensor, durations) -> Tensor:
    """Repeat state i durations[i] times -> (sum(durations), d)."""
    durations = np.asarray(durations, dtype=np.int64)
    if np.any(durations < 1):
        raise ConfigError("length regulator needs durations >= 1")
    idx = np.repeat(np.arange(hidden.shape[0]), durations)
    return tops.embedding_lookup(hidden, idx)


def predict_pitch(frame_states: Tensor, params, cfg: Stage1Config) -> Tensor:
    """Frame-level log-F0, shape (T,)."""
    return tops.reshape(_ffn_head(frame_states, params, "pitch", cfg),
                        (frame_states.shape[0],))


def decode_tokens(frame_states: Tensor, log_f0: Tensor, params,
                  cfg: Stage1Config) -> dict:
    """Per-layer token logits, each (T, K_l + 1)."""
    t = frame_states.shape[0]
    pitch_emb = tops.linear(tops.reshape(log_f0, (t, 1)),
                            params["pitch_proj.w"], params["pitch_proj.b"])
    x = tops.add(frame_states, pitch_emb)
    for i in range(cfg.decoder_layers):
        x = _block(x, params, f"dec{i}", cfg)
    return {l: tops.linear(x, params[f"head{l}.w"], params[f"head{l}.b"])
            for l in cfg.layer_ids}


@dataclass
class Stage1Output:
    token_logits: dict           # layer_id -> Tensor (T, K_l + 1)
    log_f0_pred: Tensor          # (T,)
    log_durations_pred: Tensor   # (N,)


def forward_teacher_forced(score: Score, params, cfg: Stage1Config) -> Stage1Output:
    hidden = encode(score, params, cfg)
    log_dur = predict_durations(hidden, params, cfg)
    frames = length_regulate(hidden, score.durations())
    log_f0 = predict_pitch(frames, params, cfg)
    logits = decode_tokens(frames, log_f0, params, cfg)
    return Stage1Output(token_logits=logits, log_f0_pred=log_f0,
                        log_durations_pred=log_dur)


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------

def _gather_rows(vec: Tensor, idx: np.ndarray) -> Tensor:
    return tops.embedding_lookup(tops.reshape(vec, (vec.shape[0], 1)), idx)


def stage1_loss(out: Stage1Output, target: FrameRepresentation,
                durations, cfg: Stage1Config):
    """Weighted multi-task loss; returns (total Tensor, components dict)."""
    durations = np.asarray(durations, dtype=np.int64)
    t_frames = int(durations.sum())
    if target.n_frames != t_frames:
        raise DataError(
            f"teacher-forced frames {t_frames} != representation frames {target.n_frames}")

    layer_losses = []
    for l in cfg.layer_ids:
        logits = out.token_logits[l]
        tokens = target.tokens.tokens[l]
        if cfg.token_loss == "cross_entropy":
            layer_losses.append(tops.cross_entropy(logits, tokens,
                                                   ignore_index=cfg.vocab_of(l)))
        else:
            onehot = np.zeros(logits.shape, dtype=np.float32)
            onehot[np.arange(tokens.size), tokens] = 1.0
            layer_losses.append(tops.l1_loss(logits, Tensor(onehot)))
    out_loss = layer_losses[0]
    for extra in layer_losses[1:]:
        out_loss = tops.add(out_loss, extra)
    out_loss = out_loss / float(len(layer_losses))

    dur_loss = tops.l1_loss(out.log_durations_pred,
                            Tensor(np.log(durations.astype(np.float32))))

    voiced_idx = np.flatnonzero(target.f0.voiced)
    pitch_flagged = voiced_idx.size == 0
    if pitch_flagged:
        pitch_loss = Tensor(np.float32(0.0))
    else:
        pred_v = _gather_rows(out.log_f0_pred, voiced_idx)
        ref_v = np.log(target.f0.f0_hz[voiced_idx]).astype(np.float32).reshape(-1, 1)
        pitch_loss = tops.l1_loss(pred_v, Tensor(ref_v))

    total = tops.add(tops.add(out_loss * cfg.lambda_out, dur_loss * cfg.lambda_dur),
                     pitch_loss * cfg.lambda_pitch)
    components = {"out": out_loss.item(), "dur": dur_loss.item(),
                  "pitch": pitch_loss.item(), "total": total.item(),
                  "pitch_unvoiced_flag": pitch_flagged}
    return total, components


# ---------------------------------------------------------------------------
# Training / inference
# ---------------------------------------------------------------------------

def train_stage1(samples: list, cfg: Stage1Config, seed: int = 0,
                 epochs: int = 10, learning_rate: float = 5e-4,
                 grad_clip: float = 1.0, params: ParameterStore | None = None,
                 log_path=None, checkpoint_path=None,
                 callback=None) -> tuple[ParameterStore, list]:
    """Teacher-forced training over (score, representation) pairs.

    Returns the parameter store and the per-step loss history.  `samples`
    rows are (Score, FrameRepresentation); the representation frame count
    must equal the score's total duration.
    """
    if not samples:
        raise DataError("no training samples")
    for score, z in samples:
        if score.total_frames != z.n_frames:
            raise DataError("score durations disagree with representation frames")
    if params is None:
        params = build_stage1_params(cfg, seed)
    opt = OptimizerState(kind="adam", learning_rate=learning_rate,
                         decay_gamma=1.0, clip_norm=grad_clip)
    order_rng = stream(seed, "stage1-data")
    history = []
    log_rows = []
    for epoch in range(epochs):
        order = order_rng.permutation(len(samples))
        for idx in order:
            score, z = samples[int(idx)]
            params.zero_grad()
            out = forward_teacher_forced(score, params, cfg)
            loss, comps = stage1_loss(out, z, score.durations(), cfg)
            backward(loss)
            adamw_step(params, opt)
            history.append(comps)
            log_rows.append([epoch, opt.step_count, comps["total"], comps["out"],
                             comps["dur"], comps["pitch"]])
        if checkpoint_path is not None:
            save_params(params, checkpoint_path)
        if callback is not None:
            callback(epoch, history)
    if log_path is not None:
        with open(log_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "step", "total", "out", "dur", "pitch"])
            writer.writerows(log_rows)
    if checkpoint_path is not None:
        save_params(params, checkpoint_path)
    return params, history


def infer_stage1(score: Score, params: ParameterStore, cfg: Stage1Config,
                 frame_spec: FrameSpec) -> FrameRepresentation:
    """Representation from predicted durations, tokens, and f0."""
    validate_structure(params, stage1_param_shapes(cfg))
    hidden = encode(score, params, cfg)
    log_dur = predict_durations(hidden, params, cfg)
    durations = np.maximum(1, np.round(np.exp(log_dur.data)).astype(np.int64))
    frames = length_regulate(hidden, durations)
    log_f0 = predict_pitch(frames, params, cfg)
    logits = decode_tokens(frames, log_f0, params, cfg)

    tokens = {}
    vocab = {}
    for l in cfg.layer_ids:
        # argmax over real classes; the trailing padding class never wins
        tokens[l] = np.argmax(logits[l].data[:, :cfg.vocab_of(l)], axis=1).astype(np.int64)
        vocab[l] = cfg.vocab_of(l)
    ct = ContentTokens(tokens=tokens, vocab_sizes=vocab, layer_ids=cfg.layer_ids)

    f0 = np.exp(log_f0.data.astype(np.float64))
    first_layer = cfg.layer_ids[0]
    voiced = f0 >= cfg.f0_floor_hz
    if cfg.silence_tokens:
        voiced &= ~np.isin(tokens[first_layer], np.asarray(cfg.silence_tokens))
    nyquist = frame_spec.sample_rate / 2.0
    f0 = np.clip(f0, 0.0, nyquist - 1.0)
    f0[~voiced] = 0.0
    voiced = f0 > 0
    contour = F0Contour(f0_hz=f0, voiced=voiced, frame_spec=frame_spec)
    return FrameRepresentation(tokens=ct, f0=contour)


def load_stage1_checkpoint(path, cfg: Stage1Config) -> ParameterStore:
    store = load_params(path)
    validate_structure(store, stage1_param_shapes(cfg))
    return store
