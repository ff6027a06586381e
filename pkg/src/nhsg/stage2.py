"""Timbre-aware GAN vocoder: (tokens, f0, timbre embedding) -> waveform.

Generator: per-layer token embeddings combined by a softmax-normalized
learned layer weighting, concatenated with a projected (log-f0, voiced)
pair, plus a broadcast timbre projection; then transposed-conv upsampling
stages (product of factors = hop size) interleaved with multi-kernel
residual blocks using snake-beta activations, and a final tanh.

Discriminators: a multi-period branch (samples folded into period-phase
grids, shared conv stacks over time) and a multi-scale sub-band spectral
branch (log-spaced band slices of STFT magnitudes at several FFT sizes).
Losses are least-squares GAN, feature matching over all pre-activation
discriminator maps, and a multi-scale log-mel reconstruction term.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .dsp import (FrameSpec, Waveform, hann_window, mel_filterbank, stft_padding,
                  subband_edges)
from .errors import ConfigError, DataError, ShapeError, TooShortError
from .numerics import (OptimizerState, ParameterStore, Tensor, adamw_step, backward)
from .numerics import tensor as tops
from .numerics.store import save_params
from .representation import (FrameRepresentation, TimbreEmbedding,
                             slice_representation)
from .seeding import stream


# ---------------------------------------------------------------------------
# Configs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorConfig:
    token_vocab_sizes: tuple = ((1, 64), (2, 64), (3, 64), (4, 64))
    token_embed_dim: int = 48
    f0_embed_dim: int = 16
    timbre_dim: int = 192
    timbre_proj_dim: int | None = None  # None: token_embed_dim + f0_embed_dim
    upsample_factors: tuple = (8, 5, 4, 2)
    residual_kernels: tuple = (3, 7, 11)
    residual_dilations: tuple = (1, 3, 5)
    base_channels: int = 32
    pre_kernel: int = 7

    def __post_init__(self):
        if self.timbre_proj_dim is not None and self.timbre_proj_dim != self.cond_dim:
            raise ConfigError(
                f"timbre projection dim {self.timbre_proj_dim} must equal "
                f"content+pitch dim {self.cond_dim} (it is added to them)")
        if min(self.upsample_factors) < 1:
            raise ConfigError("upsample factors must be >= 1")
        if self.channels()[-1] < 1:
            raise ConfigError("base_channels too small for this many stages")

    @property
    def layer_ids(self):
        return tuple(l for l, _ in self.token_vocab_sizes)

    def vocab_of(self, layer_id) -> int:
        for l, k in self.token_vocab_sizes:
            if l == layer_id:
                return k
        raise ConfigError(f"no vocab for layer {layer_id}")

    @property
    def cond_dim(self) -> int:
        return self.token_embed_dim + self.f0_embed_dim

    @property
    def hop_samples(self) -> int:
        return int(np.prod(self.upsample_factors))

    def channels(self) -> tuple:
        c = [self.base_channels]
        for _ in self.upsample_factors:
            c.append(max(2, c[-1] // 2))
        return tuple(c)

    @staticmethod
    def up_kernel(factor: int) -> tuple[int, int]:
        """(kernel, padding) giving exactly factor x upsampling."""
        if factor % 2 == 0:
            return 2 * factor, factor // 2
        return 3 * factor, factor


def full_scale_generator_config(**overrides) -> GeneratorConfig:
    """44.1 kHz configuration: hop 882, K=1024 on four encoder layers."""
    base = dict(token_vocab_sizes=((5, 1024), (8, 1024), (9, 1024), (12, 1024)),
                token_embed_dim=192, f0_embed_dim=64,
                upsample_factors=(7, 7, 6, 3), base_channels=512)
    base.update(overrides)
    return GeneratorConfig(**base)


@dataclass(frozen=True)
class DiscriminatorConfig:
    periods: tuple = (2, 3, 5, 7, 11)
    mpd_channels: tuple = (8, 32, 128)
    mpd_kernel: int = 5
    mpd_stride: int = 3
    spectral_ffts: tuple = (256, 512, 1024)
    n_bands: int = 3
    band_channels: tuple = (16, 32)
    leaky_slope: float = 0.1

    def __post_init__(self):
        if len(set(self.periods)) != len(self.periods):
            raise ConfigError("periods must be distinct")
        for p in self.periods:
            if p < 2 or any(p % q == 0 for q in range(2, p)):
                raise ConfigError(f"period {p} is not prime")

    @property
    def n_branches(self) -> int:
        return len(self.periods) + len(self.spectral_ffts) * self.n_bands


@dataclass(frozen=True)
class GanLossWeights:
    adv: float = 1.0
    feat_match: float = 2.0
    aux_mel: float = 15.0

    def __post_init__(self):
        if min(self.adv, self.feat_match, self.aux_mel) < 0:
            raise ConfigError("loss weights must be non-negative")


@dataclass(frozen=True)
class MelScale:
    fft_size: int
    hop: int
    win: int
    n_mels: int


def default_mel_scales(sample_rate: int = 16000) -> tuple:
    if sample_rate > 24000:
        return (MelScale(512, 128, 512, 40), MelScale(1024, 256, 1024, 80),
                MelScale(2048, 512, 2048, 120))
    return (MelScale(256, 64, 256, 20), MelScale(512, 128, 512, 40),
            MelScale(1024, 320, 1024, 80))


# ---------------------------------------------------------------------------
# Differentiable STFT / log-mel (mirrors dsp.stft_magnitude framing)
# ---------------------------------------------------------------------------

_STFT_BASIS_CACHE: dict = {}
_MEL_BANK_CACHE: dict = {}


def _stft_basis(fft_size: int, win: int) -> tuple[Tensor, Tensor]:
    key = (fft_size, win)
    if key not in _STFT_BASIS_CACHE:
        n = np.arange(win)
        k = np.arange(fft_size // 2 + 1)[:, None]
        window = hann_window(win)
        cos = (window * np.cos(2 * np.pi * k * n / fft_size)).astype(np.float32)
        sin = (window * np.sin(2 * np.pi * k * n / fft_size)).astype(np.float32)
        _STFT_BASIS_CACHE[key] = (Tensor(cos[:, None, :]), Tensor(sin[:, None, :]))
    return _STFT_BASIS_CACHE[key]


def _mel_bank(sample_rate: int, fft_size: int, n_mels: int) -> Tensor:
    key = (sample_rate, fft_size, n_mels)
    if key not in _MEL_BANK_CACHE:
        _MEL_BANK_CACHE[key] = Tensor(mel_filterbank(sample_rate, fft_size, n_mels))
    return _MEL_BANK_CACHE[key]


def stft_power_t(x: Tensor, spec: FrameSpec, fft_size: int) -> Tensor:
    """Differentiable power spectrogram, shape (1, bins, T)."""
    left, right = stft_padding(spec)
    padded = tops.reflect_pad_1d(x, left, right)
    frames_in = tops.reshape(padded, (1, 1, padded.shape[0]))
    cos, sin = _stft_basis(fft_size, spec.win_samples)
    re = tops.conv1d(frames_in, cos, stride=spec.hop_samples)
    im = tops.conv1d(frames_in, sin, stride=spec.hop_samples)
    return tops.add(tops.mul(re, re), tops.mul(im, im))


def log_mel_t(x: Tensor, sample_rate: int, scale: MelScale) -> Tensor:
    """Differentiable log-mel (T, n_mels) on the same grid as dsp.log_mel."""
    spec = FrameSpec(hop_samples=scale.hop, win_samples=scale.win,
                     sample_rate=sample_rate)
    power = stft_power_t(x, spec, scale.fft_size)          # (1, bins, T)
    tp = tops.transpose(tops.reshape(power, power.shape[1:]), (1, 0))
    mel = tops.linear(tp, _mel_bank(sample_rate, scale.fft_size, scale.n_mels))
    return tops.log(tops.clamp_min(mel, 1e-5))


# ---------------------------------------------------------------------------
# Generator
# ---------------------------------------------------------------------------

def build_generator_params(cfg: GeneratorConfig, seed: int = 0) -> ParameterStore:
    rng = stream(seed, "g-init")
    store = ParameterStore()

    def init(*shape, scale=None):
        scale = scale if scale is not None else 1.0 / np.sqrt(np.prod(shape[1:]))
        return (rng.standard_normal(shape) * scale).astype(np.float32)

    for l in cfg.layer_ids:
        store.add(f"emb{l}", init(cfg.vocab_of(l) + 1, cfg.token_embed_dim, scale=0.1))
    store.add("layer_logits", np.zeros(len(cfg.layer_ids), np.float32))
    store.add("f0_in.w", init(cfg.f0_embed_dim, 2, scale=0.5))
    store.add("f0_in.b", np.zeros(cfg.f0_embed_dim, np.float32))
    store.add("timbre.w", init(cfg.cond_dim, cfg.timbre_dim, scale=0.05))
    store.add("timbre.b", np.zeros(cfg.cond_dim, np.float32))

    chans = cfg.channels()
    store.add("pre.w", init(chans[0], cfg.cond_dim, cfg.pre_kernel))
    store.add("pre.b", np.zeros(chans[0], np.float32))
    for i, factor in enumerate(cfg.upsample_factors):
        kernel, _ = cfg.up_kernel(factor)
        store.add(f"up{i}.w", init(chans[i], chans[i + 1], kernel))
        store.add(f"up{i}.b", np.zeros(chans[i + 1], np.float32))
        c = chans[i + 1]
        for j, k in enumerate(cfg.residual_kernels):
            for m in range(len(cfg.residual_dilations)):
                base = f"res{i}.{j}.{m}"
                store.add(f"{base}.a1", np.zeros(c, np.float32))
                store.add(f"{base}.b1", np.zeros(c, np.float32))
                store.add(f"{base}.c1.w", init(c, c, k))
                store.add(f"{base}.c1.b", np.zeros(c, np.float32))
                store.add(f"{base}.a2", np.zeros(c, np.float32))
                store.add(f"{base}.b2", np.zeros(c, np.float32))
                store.add(f"{base}.c2.w", init(c, c, k))
                store.add(f"{base}.c2.b", np.zeros(c, np.float32))
    store.add("post.a", np.zeros(chans[-1], np.float32))
    store.add("post.b", np.zeros(chans[-1], np.float32))
    # small output conv keeps the untrained generator quiet and the final
    # tanh away from float32 saturation
    store.add("post.w", init(1, chans[-1], cfg.pre_kernel, scale=0.01))
    store.add("post.bias", np.zeros(1, np.float32))
    return store


def generator_param_count(cfg: GeneratorConfig) -> int:
    """Closed-form parameter count implied by the config (drift guard)."""
    e, f = cfg.token_embed_dim, cfg.f0_embed_dim
    cond = e + f
    total = sum((cfg.vocab_of(l) + 1) * e for l in cfg.layer_ids)
    total += len(cfg.layer_ids)                 # layer weights
    total += f * 2 + f                          # f0 projection
    total += cond * cfg.timbre_dim + cond       # timbre projection
    chans = cfg.channels()
    total += chans[0] * cond * cfg.pre_kernel + chans[0]
    for i, factor in enumerate(cfg.upsample_factors):
        kernel, _ = cfg.up_kernel(factor)
        total += chans[i] * chans[i + 1] * kernel + chans[i + 1]
        c = chans[i + 1]
        per_conv = c * c
        for k in cfg.residual_kernels:
            total += len(cfg.residual_dilations) * (2 * (per_conv * k + c) + 4 * c)
    total += 2 * chans[-1]                      # post snake
    total += chans[-1] * cfg.pre_kernel + 1     # post conv
    return total


def generator_param_shapes(cfg: GeneratorConfig) -> dict:
    return build_generator_params(cfg, seed=0).shapes()


def condition(z: FrameRepresentation, e: TimbreEmbedding, params: ParameterStore,
              cfg: GeneratorConfig) -> Tensor:
    """Frame-level conditioning tensor, shape (T, cond_dim)."""
    if e.dim != cfg.timbre_dim:
        raise ShapeError(f"timbre dim {e.dim} != configured {cfg.timbre_dim}")
    if tuple(z.tokens.layer_ids) != cfg.layer_ids:
        raise ShapeError(f"layer ids {z.tokens.layer_ids} != config {cfg.layer_ids}")
    weights = tops.softmax(params["layer_logits"], axis=0)
    content = None
    for i, l in enumerate(cfg.layer_ids):
        emb = tops.embedding_lookup(params[f"emb{l}"], z.tokens.tokens[l])
        w_l = tops.slice_axis(weights, i, i + 1, axis=0)
        piece = tops.mul(emb, w_l)
        content = piece if content is None else tops.add(content, piece)

    t = z.n_frames
    f0_feat = np.zeros((t, 2), dtype=np.float32)
    voiced = z.f0.voiced
    f0_feat[voiced, 0] = np.log(z.f0.f0_hz[voiced]).astype(np.float32)
    f0_feat[:, 1] = voiced.astype(np.float32)
    pitch = tops.linear(Tensor(f0_feat), params["f0_in.w"], params["f0_in.b"])

    cond = tops.concat([content, pitch], axis=1)
    timbre = tops.linear(tops.reshape(Tensor(e.vector), (1, cfg.timbre_dim)),
                         params["timbre.w"], params["timbre.b"])
    return tops.add(cond, timbre)


def _resblock(x: Tensor, params, prefix: str, kernel: int, dilations) -> Tensor:
    for m, d in enumerate(dilations):
        base = f"{prefix}.{m}"
        t = tops.snake_beta(x, params[f"{base}.a1"], params[f"{base}.b1"])
        t = tops.conv1d(t, params[f"{base}.c1.w"], params[f"{base}.c1.b"],
                        stride=1, padding=d * (kernel - 1) // 2, dilation=d)
        t = tops.snake_beta(t, params[f"{base}.a2"], params[f"{base}.b2"])
        t = tops.conv1d(t, params[f"{base}.c2.w"], params[f"{base}.c2.b"],
                        stride=1, padding=(kernel - 1) // 2)
        x = tops.add(x, t)
    return x


def generate_t(z: FrameRepresentation, e: TimbreEmbedding, params: ParameterStore,
               cfg: GeneratorConfig) -> Tensor:
    """Differentiable waveform tensor of length exactly T * hop."""
    cond = condition(z, e, params, cfg)
    x = tops.reshape(tops.transpose(cond, (1, 0)), (1, cfg.cond_dim, z.n_frames))
    x = tops.conv1d(x, params["pre.w"], params["pre.b"], stride=1,
                    padding=cfg.pre_kernel // 2)
    for i, factor in enumerate(cfg.upsample_factors):
        kernel, pad = cfg.up_kernel(factor)
        x = tops.transposed_conv1d(x, params[f"up{i}.w"], params[f"up{i}.b"],
                                   stride=factor, padding=pad)
        acc = None
        for j, k in enumerate(cfg.residual_kernels):
            y = _resblock(x, params, f"res{i}.{j}", k, cfg.residual_dilations)
            acc = y if acc is None else tops.add(acc, y)
        x = acc / float(len(cfg.residual_kernels))
    x = tops.snake_beta(x, params["post.a"], params["post.b"])
    x = tops.conv1d(x, params["post.w"], params["post.bias"], stride=1,
                    padding=cfg.pre_kernel // 2)
    x = tops.tanh(x)
    return tops.reshape(x, (x.shape[2],))


def generate(z: FrameRepresentation, e: TimbreEmbedding, params: ParameterStore,
             cfg: GeneratorConfig, sample_rate: int) -> Waveform:
    wave = generate_t(z, e, params, cfg)
    # float32 tanh can round to exactly +-1; keep the contract open-interval
    limit = 1.0 - 2.0 ** -15
    return Waveform(samples=np.clip(wave.data, -limit, limit), sample_rate=sample_rate)


def vocode(z: FrameRepresentation, e: TimbreEmbedding, params: ParameterStore,
           cfg: GeneratorConfig, sample_rate: int | None = None) -> Waveform:
    """Inference entry for reconstruction, synthesis, and conversion."""
    sr = sample_rate if sample_rate is not None else z.f0.frame_spec.sample_rate
    return generate(z, e, params, cfg, sr)


# ---------------------------------------------------------------------------
# Discriminators
# ---------------------------------------------------------------------------

def build_discriminator_params(dcfg: DiscriminatorConfig,
                               seed: int = 0) -> ParameterStore:
    rng = stream(seed, "d-init")
    store = ParameterStore()

    def init(*shape):
        scale = 1.0 / np.sqrt(np.prod(shape[1:]))
        return (rng.standard_normal(shape) * scale).astype(np.float32)

    for p in dcfg.periods:
        prev = 1
        for i, c in enumerate(dcfg.mpd_channels):
            store.add(f"mpd{p}.c{i}.w", init(c, prev, dcfg.mpd_kernel))
            store.add(f"mpd{p}.c{i}.b", np.zeros(c, np.float32))
            prev = c
        store.add(f"mpd{p}.out.w", init(1, prev, 3))
        store.add(f"mpd{p}.out.b", np.zeros(1, np.float32))

    for fft in dcfg.spectral_ffts:
        edges = subband_edges(fft // 2 + 1, dcfg.n_bands)
        for b in range(dcfg.n_bands):
            width = int(edges[b + 1] - edges[b])
            prev = width
            for i, c in enumerate(dcfg.band_channels):
                store.add(f"spec{fft}.band{b}.c{i}.w", init(c, prev, 3))
                store.add(f"spec{fft}.band{b}.c{i}.b", np.zeros(c, np.float32))
                prev = c
            store.add(f"spec{fft}.band{b}.out.w", init(1, prev, 3))
            store.add(f"spec{fft}.band{b}.out.b", np.zeros(1, np.float32))
    return store


def discriminator_param_count(dcfg: DiscriminatorConfig) -> int:
    total = 0
    for _ in dcfg.periods:
        prev = 1
        for c in dcfg.mpd_channels:
            total += c * prev * dcfg.mpd_kernel + c
            prev = c
        total += prev * 3 + 1
    for fft in dcfg.spectral_ffts:
        edges = subband_edges(fft // 2 + 1, dcfg.n_bands)
        for b in range(dcfg.n_bands):
            prev = int(edges[b + 1] - edges[b])
            for c in dcfg.band_channels:
                total += c * prev * 3 + c
                prev = c
            total += prev * 3 + 1
    return total


def _as_wave_tensor(w) -> Tensor:
    if isinstance(w, Tensor):
        return w
    if isinstance(w, Waveform):
        return Tensor(w.samples)
    raise ShapeError("expected a Waveform or a 1-D Tensor")


def _mpd_branch(x: Tensor, params, period: int, dcfg) -> tuple[Tensor, list]:
    n = x.shape[0]
    frames = int(np.ceil(n / period))
    padded = tops.pad_end(x, frames * period - n, axis=0) if frames * period != n else x
    grid = tops.transpose(tops.reshape(padded, (frames, period)), (1, 0))
    h = tops.reshape(grid, (period, 1, frames))
    feats = []
    for i in range(len(dcfg.mpd_channels)):
        h = tops.conv1d(h, params[f"mpd{period}.c{i}.w"], params[f"mpd{period}.c{i}.b"],
                        stride=dcfg.mpd_stride, padding=dcfg.mpd_kernel // 2)
        feats.append(h)
        h = tops.leaky_relu(h, dcfg.leaky_slope)
    score = tops.conv1d(h, params[f"mpd{period}.out.w"], params[f"mpd{period}.out.b"],
                        stride=1, padding=1)
    feats.append(score)
    return score, feats


def _spectral_branches(x: Tensor, params, dcfg, sample_rate: int):
    out = []
    for fft in dcfg.spectral_ffts:
        spec = FrameSpec(hop_samples=max(1, fft // 4), win_samples=fft,
                         sample_rate=sample_rate)
        power = stft_power_t(x, spec, fft)                    # (1, bins, T)
        mag = tops.sqrt(tops.add(power, Tensor(np.float32(1e-9))))
        mag = tops.log(tops.add(mag, Tensor(np.float32(1.0))))  # compress dynamics
        edges = subband_edges(fft // 2 + 1, dcfg.n_bands)
        for b in range(dcfg.n_bands):
            h = tops.slice_axis(mag, int(edges[b]), int(edges[b + 1]), axis=1)
            feats = []
            for i in range(len(dcfg.band_channels)):
                h = tops.conv1d(h, params[f"spec{fft}.band{b}.c{i}.w"],
                                params[f"spec{fft}.band{b}.c{i}.b"],
                                stride=1, padding=1)
                feats.append(h)
                h = tops.leaky_relu(h, dcfg.leaky_slope)
            score = tops.conv1d(h, params[f"spec{fft}.band{b}.out.w"],
                                params[f"spec{fft}.band{b}.out.b"],
                                stride=1, padding=1)
            feats.append(score)
            out.append((score, feats))
    return out


def discriminate(w, dcfg: DiscriminatorConfig, params: ParameterStore,
                 sample_rate: int):
    """All discriminator branches: list of (score tensor, feature maps)."""
    x = _as_wave_tensor(w)
    min_len = max(dcfg.periods)
    if dcfg.spectral_ffts:
        min_len = max(min_len, max(dcfg.spectral_ffts) // 2 + 1)
    if x.shape[0] < min_len:
        raise TooShortError(f"need at least {min_len} samples, got {x.shape[0]}")
    branches = [
        _mpd_branch(x, params, p, dcfg) for p in dcfg.periods
    ]
    branches.extend(_spectral_branches(x, params, dcfg, sample_rate))
    return branches


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def _lsgan_to(score: Tensor, target: float) -> Tensor:
    return tops.mse_loss(score, Tensor(np.full(score.shape, target, np.float32)))


def gan_losses(real, fake, dcfg: DiscriminatorConfig, dparams: ParameterStore,
               weights: GanLossWeights, sample_rate: int,
               mel_scales=None):
    """(gen_loss, disc_loss, components) for a real/fake pair.

    `fake` may be a live generator output tensor (gradients then reach the
    generator through gen_loss) or a plain Waveform.  disc_loss always
    treats the fake as a constant input.
    """
    real_t = _as_wave_tensor(real)
    fake_t = _as_wave_tensor(fake)
    if real_t.shape != fake_t.shape:
        raise ShapeError(f"length mismatch: real {real_t.shape} vs fake {fake_t.shape}")
    if mel_scales is None:
        mel_scales = default_mel_scales(sample_rate)

    real_branches = discriminate(real_t, dcfg, dparams, sample_rate)
    fake_live = discriminate(fake_t, dcfg, dparams, sample_rate)
    fake_frozen = discriminate(Tensor(fake_t.data.copy()), dcfg, dparams, sample_rate)

    disc_loss = None
    for (score_r, _), (score_f, _) in zip(real_branches, fake_frozen):
        piece = tops.add(_lsgan_to(score_r, 1.0), _lsgan_to(score_f, 0.0))
        disc_loss = piece if disc_loss is None else tops.add(disc_loss, piece)

    adv = None
    fm = None
    n_maps = 0
    for (_, feats_r), (score_f, feats_f) in zip(real_branches, fake_live):
        a = _lsgan_to(score_f, 1.0)
        adv = a if adv is None else tops.add(adv, a)
        for fr, ff in zip(feats_r, feats_f):
            piece = tops.l1_loss(ff, Tensor(fr.data.copy()))
            fm = piece if fm is None else tops.add(fm, piece)
            n_maps += 1
    fm = fm / float(n_maps)

    mel = None
    for scale in mel_scales:
        piece = tops.l1_loss(log_mel_t(fake_t, sample_rate, scale),
                             tops.Tensor(log_mel_t(Tensor(real_t.data), sample_rate,
                                                   scale).data))
        mel = piece if mel is None else tops.add(mel, piece)

    gen_loss = tops.add(tops.add(adv * weights.adv, fm * weights.feat_match),
                        mel * weights.aux_mel)
    components = {"adv_g": adv.item(), "adv_d": disc_loss.item(),
                  "fm": fm.item(), "mel": mel.item()}
    return gen_loss, disc_loss, components


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class VocoderSample:
    """One training item: audio, its representation, its own timbre embedding."""
    waveform: Waveform
    z: FrameRepresentation
    embedding: TimbreEmbedding
    domain: str = "human"
    sample_id: str = ""


@dataclass(frozen=True)
class Stage2TrainConfig:
    steps: int = 2000
    batch_size: int = 1
    crop_frames: int = 8                  # crop length = crop_frames * hop samples
    learning_rate: float = 1e-4
    warmup_steps: int = 0
    clip_norm: float = 100.0
    checkpoint_every: int = 1000
    log_every: int = 1
    mel_scales: tuple | None = None       # None: default_mel_scales(sample_rate)


def draw_crop(sample: VocoderSample, crop_frames: int, rng,
              hop: int) -> tuple[FrameRepresentation, Waveform] | None:
    """Aligned (z, waveform) crop of exactly crop_frames frames, or None."""
    t = sample.z.n_frames
    usable = min(t, len(sample.waveform) // hop)
    if usable < crop_frames:
        return None
    t0 = int(rng.integers(0, usable - crop_frames + 1))
    z = slice_representation(sample.z, t0, t0 + crop_frames)
    wave = Waveform(samples=sample.waveform.samples[t0 * hop:(t0 + crop_frames) * hop],
                    sample_rate=sample.waveform.sample_rate)
    return z, wave


def generator_losses(real: Waveform, fake: Tensor, dcfg, dparams, weights,
                     sample_rate, mel_scales=None):
    """Generator-side losses against the current discriminator.

    Real-side features and mels are constants here; gradients flow through
    `fake` only (plus discriminator parameters, which the caller zeroes).
    """
    if mel_scales is None:
        mel_scales = default_mel_scales(sample_rate)
    real_branches = discriminate(Tensor(real.samples), dcfg, dparams, sample_rate)
    fake_branches = discriminate(fake, dcfg, dparams, sample_rate)
    adv, fm, n_maps = None, None, 0
    for (_, feats_r), (score_f, feats_f) in zip(real_branches, fake_branches):
        a = _lsgan_to(score_f, 1.0)
        adv = a if adv is None else tops.add(adv, a)
        for fr, ff in zip(feats_r, feats_f):
            piece = tops.l1_loss(ff, Tensor(fr.data.copy()))
            fm = piece if fm is None else tops.add(fm, piece)
            n_maps += 1
    fm = fm / float(n_maps)
    mel = None
    for scale in mel_scales:
        real_mel = log_mel_t(Tensor(real.samples), sample_rate, scale)
        piece = tops.l1_loss(log_mel_t(fake, sample_rate, scale),
                             Tensor(real_mel.data))
        mel = piece if mel is None else tops.add(mel, piece)
    gen_loss = tops.add(tops.add(adv * weights.adv, fm * weights.feat_match),
                        mel * weights.aux_mel)
    return gen_loss, {"adv_g": adv.item(), "fm": fm.item(), "mel": mel.item()}


def discriminator_loss(real: Waveform, fake_data: np.ndarray, dcfg, dparams,
                       sample_rate):
    """Least-squares D loss with the fake treated as a constant."""
    real_branches = discriminate(Tensor(real.samples), dcfg, dparams, sample_rate)
    fake_branches = discriminate(Tensor(fake_data), dcfg, dparams, sample_rate)
    loss = None
    for (score_r, _), (score_f, _) in zip(real_branches, fake_branches):
        piece = tops.add(_lsgan_to(score_r, 1.0), _lsgan_to(score_f, 0.0))
        loss = piece if loss is None else tops.add(loss, piece)
    return loss


def gan_discriminator_phase(batch, gparams, dparams, gcfg, dcfg, dopt,
                            sample_rate):
    """Generate fakes, update D against them; returns (fakes, adv_d)."""
    stats_d = 0.0
    fakes = []
    dparams.zero_grad()
    for z, wave, emb in batch:
        fake = generate_t(z, emb, gparams, gcfg)
        fakes.append(fake)
        disc_loss = discriminator_loss(wave, fake.data.copy(), dcfg, dparams,
                                       sample_rate)
        backward(disc_loss / float(len(batch)))
        stats_d += disc_loss.item() / len(batch)
    adamw_step(dparams, dopt)
    return fakes, stats_d


def gan_generator_backward(batch, fakes, gparams, dparams, dcfg, weights,
                           sample_rate, mel_scales=None):
    """Accumulate generator gradients from the GAN losses (no step)."""
    stats = {"adv_g": 0.0, "fm": 0.0, "mel": 0.0}
    for (z, wave, emb), fake in zip(batch, fakes):
        gen_loss, comps = generator_losses(wave, fake, dcfg, dparams, weights,
                                           sample_rate, mel_scales)
        backward(gen_loss / float(len(batch)))
        for key, value in comps.items():
            stats[key] += value / len(batch)
    dparams.zero_grad()  # generator losses must not update D
    return stats


def gan_training_step(batch, gparams, dparams, gcfg, dcfg, weights,
                      gopt, dopt, sample_rate, mel_scales=None):
    """One alternating D/G update over (z, wave, embedding) triples."""
    fakes, adv_d = gan_discriminator_phase(batch, gparams, dparams, gcfg, dcfg,
                                           dopt, sample_rate)
    gparams.zero_grad()
    dparams.zero_grad()
    stats = gan_generator_backward(batch, fakes, gparams, dparams, dcfg, weights,
                                   sample_rate, mel_scales)
    stats["adv_d"] = adv_d
    adamw_step(gparams, gopt)
    return stats


def train_stage2(samples: list, gcfg: GeneratorConfig, dcfg: DiscriminatorConfig,
                 tcfg: Stage2TrainConfig = Stage2TrainConfig(),
                 weights: GanLossWeights = GanLossWeights(), seed: int = 0,
                 gparams: ParameterStore | None = None,
                 dparams: ParameterStore | None = None,
                 log_path=None, checkpoint_path=None,
                 callback=None):
    """Self-reconstruction GAN pretraining on random fixed-length crops.

    Every sample is conditioned on its own timbre embedding.  Returns
    (gparams, dparams, history); history rows mirror the CSV loss log
    (step, adv_g, adv_d, fm, mel).
    """
    if not samples:
        raise DataError("no training samples")
    sr = samples[0].waveform.sample_rate
    hop = gcfg.hop_samples
    if gparams is None:
        gparams = build_generator_params(gcfg, seed)
    if dparams is None:
        dparams = build_discriminator_params(dcfg, seed)
    gopt = OptimizerState(kind="adamw", learning_rate=tcfg.learning_rate,
                          warmup_steps=tcfg.warmup_steps, clip_norm=tcfg.clip_norm)
    dopt = OptimizerState(kind="adamw", learning_rate=tcfg.learning_rate,
                          warmup_steps=tcfg.warmup_steps, clip_norm=tcfg.clip_norm)
    rng = stream(seed, "stage2-data")
    mel_scales = tcfg.mel_scales if tcfg.mel_scales is not None else default_mel_scales(sr)
    history = []
    skipped = 0
    for step in range(tcfg.steps):
        batch = []
        while len(batch) < tcfg.batch_size:
            sample = samples[int(rng.integers(len(samples)))]
            crop = draw_crop(sample, tcfg.crop_frames, rng, hop)
            if crop is None:
                skipped += 1
                if skipped > 100 * (len(samples) + 1):
                    raise DataError("every sample is shorter than the crop length")
                continue
            z, wave = crop
            batch.append((z, wave, sample.embedding))
        stats = gan_training_step(batch, gparams, dparams, gcfg, dcfg, weights,
                                  gopt, dopt, sr, mel_scales)
        stats["step"] = step
        history.append(stats)
        if callback is not None:
            callback(step, stats)
        if checkpoint_path is not None and (step + 1) % tcfg.checkpoint_every == 0:
            save_params(gparams, checkpoint_path)
    if checkpoint_path is not None:
        save_params(gparams, checkpoint_path)
    if log_path is not None:
        with open(log_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "adv_g", "adv_d", "fm", "mel"])
            for row in history:
                writer.writerow([row["step"], row["adv_g"], row["adv_d"],
                                 row["fm"], row["mel"]])
    return gparams, dparams, history
