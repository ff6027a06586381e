"""Unified frame-level representation: content tokens plus an f0 contour.

Content features come from a pluggable extractor.  The built-in
"pseudo-SSL" backend needs no external model weights: audio is decimated
to roughly 16 kHz, converted to log-mel frames on the 20 ms grid, and
pushed through a fixed-seed stack of random affine+tanh maps whose
intermediate activations stand in for the layers of a self-supervised
encoder.  Real encoder features enter through the feature-file ingest
path with the same interface.

Per-layer k-means codebooks are fitted on pooled features and tokens are
the exact nearest-centroid indices (ties to the lowest index).  Token id
K_l is reserved for padding and never produced by quantization.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .dsp import (FrameSpec, Waveform, decimate_by_averaging, default_frame_spec,
                  log_mel)
from .errors import (ConfigError, FormatError, InvalidEmbeddingError,
                     InvalidSegmentError, IoError, ShapeError)
from .pitch import F0Contour, PitchConfig, align_f0, estimate_f0, is_valid_f0
from .seeding import stream

CODEBOOK_MAGIC = b"NHCB"
FEATURE_MAGIC = b"NHFT"
EMBEDDING_MAGIC = b"NHTE"
CACHE_MAGIC = b"NHRC"
FORMAT_VERSION = 1

TIMBRE_DIM = 192
_EMBEDDER_SEED = 193_001  # constant: embeddings must agree across runs/configs


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass
class ContentFeatures:
    layers: dict  # layer_id -> (T, D_l) float32 matrix
    layer_ids: tuple
    frame_spec: FrameSpec

    def __post_init__(self):
        self.layer_ids = tuple(self.layer_ids)
        frames = {self.layers[l].shape[0] for l in self.layer_ids}
        if len(frames) != 1:
            raise FormatError(f"layers disagree on frame count: {sorted(frames)}")
        for l in self.layer_ids:
            if not np.all(np.isfinite(self.layers[l])):
                raise FormatError(f"layer {l} contains non-finite features")

    @property
    def n_frames(self) -> int:
        return int(self.layers[self.layer_ids[0]].shape[0])


@dataclass
class Codebook:
    centroids: dict  # layer_id -> (K_l, D_l) float32
    layer_ids: tuple
    seed: int = 0
    iterations: dict = field(default_factory=dict)   # layer_id -> Lloyd passes
    inertia: dict = field(default_factory=dict)      # layer_id -> final inertia
    inertia_history: dict = field(default_factory=dict)

    def __post_init__(self):
        self.layer_ids = tuple(self.layer_ids)
        if len(set(self.layer_ids)) != len(self.layer_ids):
            raise ConfigError("duplicate layer ids in codebook")
        for l in self.layer_ids:
            c = self.centroids[l]
            if c.shape[0] < 1 or not np.all(np.isfinite(c)):
                raise ConfigError(f"layer {l}: centroids must be finite, K >= 1")

    def vocab_size(self, layer_id) -> int:
        return int(self.centroids[layer_id].shape[0])


@dataclass
class ContentTokens:
    tokens: dict  # layer_id -> (T,) int64 array
    vocab_sizes: dict  # layer_id -> K_l
    layer_ids: tuple

    def __post_init__(self):
        self.layer_ids = tuple(self.layer_ids)
        lengths = {self.tokens[l].shape[0] for l in self.layer_ids}
        if len(lengths) != 1:
            raise ShapeError("token layers disagree on frame count")
        for l in self.layer_ids:
            t = self.tokens[l]
            k = self.vocab_sizes[l]
            if t.size and (t.min() < 0 or t.max() >= k):
                raise ShapeError(f"layer {l}: token outside [0, {k})")

    @property
    def n_frames(self) -> int:
        return int(self.tokens[self.layer_ids[0]].shape[0])


@dataclass
class FrameRepresentation:
    tokens: ContentTokens
    f0: F0Contour

    def __post_init__(self):
        if self.tokens.n_frames != len(self.f0):
            raise ShapeError(
                f"tokens have {self.tokens.n_frames} frames but f0 has {len(self.f0)}")

    @property
    def n_frames(self) -> int:
        return self.tokens.n_frames


@dataclass
class TimbreEmbedding:
    vector: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float32).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise InvalidEmbeddingError("embedding contains non-finite values")
        if float(np.linalg.norm(v)) < 1e-8:
            raise InvalidEmbeddingError("embedding has (near-)zero norm")
        self.vector = v

    @property
    def dim(self) -> int:
        return int(self.vector.size)


# ---------------------------------------------------------------------------
# Content extractors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PseudoSslConfig:
    layer_ids: tuple = (1, 2, 3, 4)
    feature_dim: int = 64
    n_mels: int = 64
    target_rate: int = 16000
    frame_period_s: float = 0.02
    seed: int = 20_240_001

    def __post_init__(self):
        if min(self.layer_ids) < 1:
            raise ConfigError("layer ids are 1-based")
        if self.feature_dim < 1 or self.n_mels < 1:
            raise ConfigError("feature_dim and n_mels must be positive")


class PseudoSslExtractor:
    """Deterministic stand-in for a multi-layer self-supervised encoder."""

    def __init__(self, config: PseudoSslConfig = PseudoSslConfig()):
        self.config = config
        self.layer_ids = tuple(config.layer_ids)
        rng = stream(config.seed, "pseudo-ssl-weights")
        self._maps = []
        prev = config.n_mels
        for _ in range(max(self.layer_ids)):
            w = rng.standard_normal((config.feature_dim, prev)).astype(np.float32)
            w *= 1.5 / np.sqrt(prev)
            b = (0.1 * rng.standard_normal(config.feature_dim)).astype(np.float32)
            self._maps.append((w, b))
            prev = config.feature_dim

    def extract(self, w: Waveform) -> ContentFeatures:
        cfg = self.config
        factor = max(1, int(round(w.sample_rate / cfg.target_rate)))
        hop = int(round(w.sample_rate * cfg.frame_period_s))
        if hop % factor != 0:
            raise ConfigError(
                f"hop {hop} not divisible by decimation factor {factor}")
        dec = decimate_by_averaging(w, factor)
        spec = default_frame_spec(dec.sample_rate, cfg.frame_period_s, win_samples=1024)
        mel = log_mel(dec, spec, fft_size=1024, n_mels=cfg.n_mels)
        h = (mel.frames - mel.frames.mean()) / (mel.frames.std() + 1e-6)
        layers = {}
        for depth, (wgt, b) in enumerate(self._maps, start=1):
            h = np.tanh(h @ wgt.T + b)
            if depth in self.layer_ids:
                layers[depth] = h.astype(np.float32)
        out_spec = FrameSpec(hop_samples=hop, win_samples=max(hop, 1024 * factor),
                             sample_rate=w.sample_rate)
        return ContentFeatures(layers=layers, layer_ids=self.layer_ids,
                               frame_spec=out_spec)


class FileContentExtractor:
    """Ingests per-layer matrices precomputed by an external encoder."""

    def __init__(self, path, frame_spec: FrameSpec):
        self.path = path
        self.frame_spec = frame_spec
        self.layer_ids = None  # known after reading

    def extract(self, w: Waveform) -> ContentFeatures:
        feats = read_feature_file(self.path, self.frame_spec)
        self.layer_ids = feats.layer_ids
        return feats


def extract_content_features(w: Waveform, extractor) -> ContentFeatures:
    """Run any content extractor (built-in pseudo-SSL or file ingest)."""
    return extractor.extract(w)


# ---------------------------------------------------------------------------
# K-means
# ---------------------------------------------------------------------------

def _kmeans_plus_plus(x: np.ndarray, k: int, rng) -> np.ndarray:
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]), dtype=np.float64)
    centroids[0] = x[rng.integers(n)]
    d2 = np.sum((x - centroids[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[i] = x[rng.integers(n)]
            continue
        probs = d2 / total
        centroids[i] = x[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, np.sum((x - centroids[i]) ** 2, axis=1))
    return centroids


def _assign(x: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(labels, squared distances to the assigned centroid)."""
    x2 = np.sum(x ** 2, axis=1, keepdims=True)
    c2 = np.sum(centroids ** 2, axis=1)
    d2 = np.maximum(x2 + c2 - 2.0 * (x @ centroids.T), 0.0)
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(x.shape[0]), labels]


def _fit_layer(x: np.ndarray, k: int, max_iter: int, tol: float, rng):
    if x.shape[0] < k:
        raise ConfigError(f"{x.shape[0]} vectors cannot support K={k}")
    centroids = _kmeans_plus_plus(x, k, rng)
    history = []
    iterations = 0
    for _ in range(max_iter):
        labels, dist = _assign(x, centroids)
        history.append(float(dist.sum()))
        new = np.empty_like(centroids)
        for j in range(k):
            members = x[labels == j]
            if members.shape[0] == 0:
                new[j] = x[int(np.argmax(dist))]  # reseed to the farthest point
            else:
                new[j] = members.mean(axis=0)
        iterations += 1
        shift = float(np.sqrt(np.sum((new - centroids) ** 2, axis=1)).max())
        centroids = new
        if shift < tol:
            break
    _, dist = _assign(x, centroids)
    history.append(float(dist.sum()))
    return centroids.astype(np.float32), iterations, history


def fit_kmeans(features: list[ContentFeatures], k, max_iter: int = 100,
               seed: int = 0, tol: float = 1e-4) -> Codebook:
    """Per-layer k-means (k-means++ init, Lloyd updates) over pooled features.

    `k` is either an int applied to all layers or a {layer_id: K} map.
    """
    if not features:
        raise ConfigError("no features to fit")
    layer_ids = features[0].layer_ids
    for f in features:
        if f.layer_ids != layer_ids:
            raise ConfigError("feature sets disagree on layer ids")
    centroids, iterations, inertia, hist = {}, {}, {}, {}
    for l in layer_ids:
        pooled = np.concatenate([f.layers[l] for f in features]).astype(np.float64)
        k_l = k[l] if isinstance(k, dict) else int(k)
        rng = stream(seed, f"kmeans-layer-{l}")
        c, it, h = _fit_layer(pooled, k_l, max_iter, tol, rng)
        centroids[l] = c
        iterations[l] = it
        inertia[l] = h[-1]
        hist[l] = h
    return Codebook(centroids=centroids, layer_ids=layer_ids, seed=seed,
                    iterations=iterations, inertia=inertia, inertia_history=hist)


def quantize(features: ContentFeatures, cb: Codebook) -> ContentTokens:
    """Exact nearest-centroid token per frame and layer; ties take the
    lowest centroid index.  Distances use the plain (x - c)^2 sum so the
    result is bit-for-bit reproducible by a brute-force scan."""
    if tuple(features.layer_ids) != tuple(cb.layer_ids):
        raise ShapeError(
            f"layer ids differ: features {features.layer_ids} vs codebook {cb.layer_ids}")
    tokens = {}
    vocab = {}
    for l in features.layer_ids:
        x = features.layers[l]
        c = cb.centroids[l]
        if x.shape[1] != c.shape[1]:
            raise ShapeError(
                f"layer {l}: feature dim {x.shape[1]} != centroid dim {c.shape[1]}")
        out = np.empty(x.shape[0], dtype=np.int64)
        chunk = max(1, (1 << 22) // max(1, c.shape[0] * c.shape[1]))
        for lo in range(0, x.shape[0], chunk):
            block = x[lo:lo + chunk]
            d2 = np.sum((block[:, None, :] - c[None, :, :]) ** 2, axis=2)
            out[lo:lo + block.shape[0]] = np.argmin(d2, axis=1)
        tokens[l] = out
        vocab[l] = c.shape[0]
    return ContentTokens(tokens=tokens, vocab_sizes=vocab, layer_ids=features.layer_ids)


def slice_representation(z: FrameRepresentation, start: int, stop: int) -> FrameRepresentation:
    """Frame-range view [start, stop) of tokens and f0 (copies)."""
    if not (0 <= start < stop <= z.n_frames):
        raise ShapeError(f"slice [{start}, {stop}) outside 0..{z.n_frames}")
    tokens = {l: z.tokens.tokens[l][start:stop].copy() for l in z.tokens.layer_ids}
    ct = ContentTokens(tokens=tokens, vocab_sizes=dict(z.tokens.vocab_sizes),
                       layer_ids=z.tokens.layer_ids)
    contour = F0Contour(f0_hz=z.f0.f0_hz[start:stop].copy(),
                        voiced=z.f0.voiced[start:stop].copy(),
                        frame_spec=z.f0.frame_spec)
    return FrameRepresentation(tokens=ct, f0=contour)


def build_representation(w: Waveform, cb: Codebook,
                         pitch_cfg: PitchConfig = PitchConfig(),
                         extractor=None) -> FrameRepresentation:
    """Tokens from extract+quantize, f0 aligned to the token frame count."""
    if extractor is None:
        extractor = PseudoSslExtractor()
    feats = extract_content_features(w, extractor)
    tokens = quantize(feats, cb)
    contour = estimate_f0(w, pitch_cfg)
    if not is_valid_f0(contour):
        raise InvalidSegmentError("segment has no voiced frames (all-zero f0)")
    contour = align_f0(contour, tokens.n_frames)
    return FrameRepresentation(tokens=tokens, f0=contour)


# ---------------------------------------------------------------------------
# Timbre embeddings
# ---------------------------------------------------------------------------

class BuiltinSpectralEmbedder:
    """Per-band log-mel mean/std over time (96 bands -> 192 dims), then a
    fixed orthonormal rotation.  Deterministic; first-order pitch-invariant."""

    kind = "builtin-spectral"
    n_bands = TIMBRE_DIM // 2

    def __init__(self):
        rng = stream(_EMBEDDER_SEED, "timbre-rotation")
        gauss = rng.standard_normal((TIMBRE_DIM, TIMBRE_DIM))
        q, r = np.linalg.qr(gauss)
        self._rotation = (q * np.sign(np.diag(r))).astype(np.float32)

    def embed(self, w: Waveform, source_id: str = "") -> TimbreEmbedding:
        win = 1024 if w.sample_rate <= 24000 else 2048
        spec = default_frame_spec(w.sample_rate, 0.02, win_samples=win)
        mel = log_mel(w, spec, fft_size=win, n_mels=self.n_bands)
        mu = mel.frames.mean(axis=0)
        sd = mel.frames.std(axis=0)
        raw = np.concatenate([mu, sd]).astype(np.float32)
        return TimbreEmbedding(vector=self._rotation @ raw, source_id=source_id)


class FileTimbreEmbedder:
    """Ingests an externally computed embedding vector."""

    kind = "file-ingest"

    def __init__(self, path, expected_dim: int = TIMBRE_DIM):
        self.path = path
        self.expected_dim = expected_dim

    def embed(self, w: Waveform = None, source_id: str = "") -> TimbreEmbedding:
        emb = read_embedding_file(self.path, self.expected_dim)
        if source_id:
            emb.source_id = source_id
        return emb


def embed_timbre(w: Waveform, embedder, source_id: str = "") -> TimbreEmbedding:
    return embedder.embed(w, source_id=source_id)


def cosine(a: TimbreEmbedding, b: TimbreEmbedding) -> float:
    va, vb = a.vector.astype(np.float64), b.vector.astype(np.float64)
    return float(va @ vb / (np.linalg.norm(va) * np.linalg.norm(vb)))


# ---------------------------------------------------------------------------
# Binary file formats (NHCB / NHFT / NHTE / NHRC)
# ---------------------------------------------------------------------------

def _read_exact(blob: bytes, offset: int, n: int, path) -> bytes:
    piece = blob[offset:offset + n]
    if len(piece) != n:
        raise FormatError(f"{path}: truncated ({offset + n} > {len(blob)} bytes)")
    return piece


def write_codebook(cb: Codebook, path) -> None:
    """NHCB: header {magic, version, n_layers, per-layer (id, K, D)}, then
    centroid matrices row-major float32 LE, then a JSON metadata trailer."""
    out = bytearray()
    out += CODEBOOK_MAGIC + struct.pack("<II", FORMAT_VERSION, len(cb.layer_ids))
    for l in cb.layer_ids:
        k, d = cb.centroids[l].shape
        out += struct.pack("<III", int(l), k, d)
    for l in cb.layer_ids:
        out += np.ascontiguousarray(cb.centroids[l], dtype="<f4").tobytes()
    meta = json.dumps({"seed": cb.seed,
                       "iterations": {str(k): v for k, v in cb.iterations.items()},
                       "inertia": {str(k): v for k, v in cb.inertia.items()},
                       "inertia_history": {str(k): v for k, v in cb.inertia_history.items()},
                       }, sort_keys=True).encode("utf-8")
    out += struct.pack("<I", len(meta)) + meta
    try:
        with open(path, "wb") as fh:
            fh.write(bytes(out))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_codebook(path) -> Codebook:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if blob[:4] != CODEBOOK_MAGIC:
        raise FormatError(f"{path}: bad magic for a codebook file")
    version, n_layers = struct.unpack_from("<II", _read_exact(blob, 4, 8, path), 0)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported codebook version {version}")
    offset = 12
    headers = []
    for _ in range(n_layers):
        headers.append(struct.unpack_from("<III", _read_exact(blob, offset, 12, path)))
        offset += 12
    centroids = {}
    for layer_id, k, d in headers:
        raw = _read_exact(blob, offset, 4 * k * d, path)
        centroids[layer_id] = np.frombuffer(raw, dtype="<f4").reshape(k, d).copy()
        offset += 4 * k * d
    meta = {}
    if offset + 4 <= len(blob):
        (meta_len,) = struct.unpack_from("<I", blob, offset)
        meta = json.loads(_read_exact(blob, offset + 4, meta_len, path))
    return Codebook(
        centroids=centroids, layer_ids=tuple(h[0] for h in headers),
        seed=meta.get("seed", 0),
        iterations={int(k): v for k, v in meta.get("iterations", {}).items()},
        inertia={int(k): v for k, v in meta.get("inertia", {}).items()},
        inertia_history={int(k): v for k, v in meta.get("inertia_history", {}).items()})


def write_feature_file(feats: ContentFeatures, path) -> None:
    """NHFT: header {magic, version, n_layers, per-layer (id, T, D)}, data."""
    out = bytearray()
    out += FEATURE_MAGIC + struct.pack("<II", FORMAT_VERSION, len(feats.layer_ids))
    for l in feats.layer_ids:
        t, d = feats.layers[l].shape
        out += struct.pack("<III", int(l), t, d)
    for l in feats.layer_ids:
        out += np.ascontiguousarray(feats.layers[l], dtype="<f4").tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(bytes(out))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_feature_file(path, frame_spec: FrameSpec) -> ContentFeatures:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if blob[:4] != FEATURE_MAGIC:
        raise FormatError(f"{path}: bad magic for a feature file")
    version, n_layers = struct.unpack_from("<II", _read_exact(blob, 4, 8, path), 0)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported feature version {version}")
    offset = 12
    headers = []
    for _ in range(n_layers):
        headers.append(struct.unpack_from("<III", _read_exact(blob, offset, 12, path)))
        offset += 12
    if len({t for _, t, _ in headers}) > 1:
        raise FormatError(f"{path}: layers disagree on frame count")
    layers = {}
    for layer_id, t, d in headers:
        raw = _read_exact(blob, offset, 4 * t * d, path)
        layers[layer_id] = np.frombuffer(raw, dtype="<f4").reshape(t, d).copy()
        offset += 4 * t * d
    return ContentFeatures(layers=layers, layer_ids=tuple(h[0] for h in headers),
                           frame_spec=frame_spec)


def write_embedding_file(emb: TimbreEmbedding, path) -> None:
    """NHTE: header {magic, version, dim}, then float32 LE data."""
    out = EMBEDDING_MAGIC + struct.pack("<II", FORMAT_VERSION, emb.dim)
    out += np.ascontiguousarray(emb.vector, dtype="<f4").tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(out)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_embedding_file(path, expected_dim: int = TIMBRE_DIM) -> TimbreEmbedding:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if blob[:4] != EMBEDDING_MAGIC:
        raise FormatError(f"{path}: bad magic for an embedding file")
    version, dim = struct.unpack_from("<II", _read_exact(blob, 4, 8, path), 0)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported embedding version {version}")
    if dim != expected_dim:
        raise FormatError(f"{path}: embedding dim {dim}, expected {expected_dim}")
    raw = _read_exact(blob, 12, 4 * dim, path)
    return TimbreEmbedding(vector=np.frombuffer(raw, dtype="<f4").copy(),
                           source_id=str(path))


def write_representation(z: FrameRepresentation, path) -> None:
    """NHRC cache entry: tokens (u32 per layer) + f0 (f32) + voiced (u8)."""
    t = z.n_frames
    out = bytearray()
    out += CACHE_MAGIC + struct.pack("<III", FORMAT_VERSION, len(z.tokens.layer_ids), t)
    for l in z.tokens.layer_ids:
        out += struct.pack("<II", int(l), z.tokens.vocab_sizes[l])
    for l in z.tokens.layer_ids:
        out += z.tokens.tokens[l].astype("<u4").tobytes()
    out += z.f0.f0_hz.astype("<f4").tobytes()
    out += z.f0.voiced.astype("u1").tobytes()
    out += struct.pack("<III", z.f0.frame_spec.hop_samples,
                       z.f0.frame_spec.win_samples, z.f0.frame_spec.sample_rate)
    try:
        with open(path, "wb") as fh:
            fh.write(bytes(out))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_representation(path) -> FrameRepresentation:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if blob[:4] != CACHE_MAGIC:
        raise FormatError(f"{path}: bad magic for a representation cache entry")
    version, n_layers, t = struct.unpack_from("<III", _read_exact(blob, 4, 12, path), 0)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported cache version {version}")
    offset = 16
    headers = []
    for _ in range(n_layers):
        headers.append(struct.unpack_from("<II", _read_exact(blob, offset, 8, path)))
        offset += 8
    tokens, vocab = {}, {}
    for layer_id, k in headers:
        raw = _read_exact(blob, offset, 4 * t, path)
        tokens[layer_id] = np.frombuffer(raw, dtype="<u4").astype(np.int64)
        vocab[layer_id] = int(k)
        offset += 4 * t
    f0 = np.frombuffer(_read_exact(blob, offset, 4 * t, path), dtype="<f4").astype(np.float64)
    offset += 4 * t
    voiced = np.frombuffer(_read_exact(blob, offset, t, path), dtype="u1").astype(bool)
    offset += t
    hop, win, sr = struct.unpack_from("<III", _read_exact(blob, offset, 12, path))
    spec = FrameSpec(hop_samples=hop, win_samples=win, sample_rate=sr)
    ct = ContentTokens(tokens=tokens, vocab_sizes=vocab,
                       layer_ids=tuple(h[0] for h in headers))
    contour = F0Contour(f0_hz=f0, voiced=voiced, frame_spec=spec)
    return FrameRepresentation(tokens=ct, f0=contour)
