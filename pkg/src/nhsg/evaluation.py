"""Objective evaluation: log-F0 RMSE, voiced/unvoiced error, timbre
similarity, mel-cepstral distortion, and the manifest-driven report.

All metrics run in float64.  LF0 RMSE is computed over frames voiced in
both contours; a pair with no co-voiced frames (or an entirely unvoiced
hypothesis) yields NaN and feeds the corpus F0-NaN rate instead of the
RMSE aggregate.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct

from .dsp import Waveform, default_frame_spec, log_mel, read_wav
from .errors import InvalidEmbeddingError, IoError, TooShortError
from .pitch import F0Contour, PitchConfig, align_f0, estimate_f0
from .representation import (BuiltinSpectralEmbedder, TimbreEmbedding,
                             read_embedding_file)

MCD_COEFFS = 24       # cepstral coefficients 1..24; c0 excluded
MCD_N_MELS = 40
MCD_CONST = (10.0 / math.log(10.0)) * math.sqrt(2.0)


def lf0_rmse(ref: F0Contour, hyp: F0Contour) -> float:
    """RMSE of ln(f0) over co-voiced frames; NaN when none exist."""
    t = min(len(ref), len(hyp))
    ref = align_f0(ref, t)
    hyp = align_f0(hyp, t)
    both = ref.voiced & hyp.voiced
    if not np.any(hyp.voiced) or not np.any(both):
        return float("nan")
    diff = np.log(ref.f0_hz[both]) - np.log(hyp.f0_hz[both])
    return float(np.sqrt(np.mean(diff ** 2)))


def vuv_error(ref: F0Contour, hyp: F0Contour) -> float:
    """Percentage of frames whose voiced flags disagree."""
    t = min(len(ref), len(hyp))
    ref = align_f0(ref, t)
    hyp = align_f0(hyp, t)
    return float(100.0 * np.mean(ref.voiced != hyp.voiced))


def sim(e_a: TimbreEmbedding, e_b: TimbreEmbedding) -> float:
    """Cosine similarity between two timbre embeddings."""
    if e_a.dim != e_b.dim:
        raise InvalidEmbeddingError(f"dims differ: {e_a.dim} vs {e_b.dim}")
    a = e_a.vector.astype(np.float64)
    b = e_b.vector.astype(np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < 1e-12 or nb < 1e-12:
        raise InvalidEmbeddingError("zero-norm embedding")
    return float(a @ b / (na * nb))


def mel_cepstra(w: Waveform, n_mels: int = MCD_N_MELS) -> np.ndarray:
    """Per-frame DCT-II (orthonormal) of the log-mel, coefficients 1..24.

    The log floor sits at denormal level so a pure gain change shifts every
    log-mel cell uniformly and lands entirely in the excluded c0.
    """
    spec = default_frame_spec(w.sample_rate, 0.02,
                              win_samples=1024 if w.sample_rate <= 24000 else 2048)
    mel = log_mel(w, spec, fft_size=spec.win_samples, n_mels=n_mels, floor=1e-30)
    ceps = dct(mel.frames.astype(np.float64), type=2, norm="ortho", axis=1)
    return ceps[:, 1:MCD_COEFFS + 1]


def mcd(ref: Waveform, hyp: Waveform) -> float:
    """Mel-cepstral distortion in dB, frame-aligned by trimming."""
    try:
        c_ref = mel_cepstra(ref)
        c_hyp = mel_cepstra(hyp)
    except TooShortError as exc:
        raise TooShortError(f"audio too short for one MCD frame: {exc}") from exc
    t = min(c_ref.shape[0], c_hyp.shape[0])
    if t < 1:
        raise TooShortError("audio too short for one MCD frame")
    diff = c_ref[:t] - c_hyp[:t]
    return float(MCD_CONST * np.mean(np.sqrt(np.sum(diff ** 2, axis=1))))


# ---------------------------------------------------------------------------
# Manifest-driven evaluation
# ---------------------------------------------------------------------------

KNOWN_METRICS = ("lf0_rmse", "vuv", "sim", "mcd")
REPORT_COLUMNS = ("id", "failed", "lf0_rmse", "vuv_pct", "sim", "mcd", "f0_nan")


@dataclass
class PairRecord:
    id: str
    failed: bool = False
    error: str = ""
    lf0_rmse: float | None = None
    vuv_pct: float | None = None
    sim: float | None = None
    mcd: float | None = None
    f0_nan: bool = False


@dataclass
class MetricReport:
    records: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    embedder_kind: str = "builtin-spectral"

    @property
    def n_failed(self) -> int:
        return sum(1 for r in self.records if r.failed)


def read_pairs_manifest(path) -> list[dict]:
    """JSON-lines rows: {id, hyp_path, ref_path?, ref_embedding_path?, metrics}."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    rows = []
    for i, ln in enumerate(lines):
        try:
            row = json.loads(ln)
        except json.JSONDecodeError as exc:
            raise IoError(f"{path}:{i + 1}: invalid JSON ({exc})") from exc
        if "id" not in row or "hyp_path" not in row:
            raise IoError(f"{path}:{i + 1}: rows need at least id and hyp_path")
        row.setdefault("metrics", list(KNOWN_METRICS))
        rows.append(row)
    return rows


def _evaluate_row(row: dict, embedder, pitch_cfg: PitchConfig) -> PairRecord:
    rec = PairRecord(id=str(row["id"]))
    metrics = row.get("metrics", list(KNOWN_METRICS))
    unknown = set(metrics) - set(KNOWN_METRICS)
    if unknown:
        rec.failed = True
        rec.error = f"unknown metrics {sorted(unknown)}"
        return rec
    try:
        hyp = read_wav(row["hyp_path"])
        ref = read_wav(row["ref_path"]) if row.get("ref_path") else None

        needs_f0 = "lf0_rmse" in metrics or "vuv" in metrics
        if needs_f0:
            if ref is None:
                raise IoError("lf0_rmse/vuv need a ref_path")
            ref_f0 = estimate_f0(ref, pitch_cfg)
            hyp_f0 = estimate_f0(hyp, pitch_cfg)
            if "lf0_rmse" in metrics:
                value = lf0_rmse(ref_f0, hyp_f0)
                if math.isnan(value):
                    rec.f0_nan = True
                else:
                    rec.lf0_rmse = value
            if "vuv" in metrics:
                rec.vuv_pct = vuv_error(ref_f0, hyp_f0)

        if "sim" in metrics:
            hyp_emb = embedder.embed(hyp)
            if row.get("ref_embedding_path"):
                ref_emb = read_embedding_file(row["ref_embedding_path"],
                                              expected_dim=hyp_emb.dim)
            elif ref is not None:
                ref_emb = embedder.embed(ref)
            else:
                raise IoError("sim needs ref_path or ref_embedding_path")
            rec.sim = sim(hyp_emb, ref_emb)

        if "mcd" in metrics:
            if ref is None:
                raise IoError("mcd needs a ref_path")
            rec.mcd = mcd(ref, hyp)
    except Exception as exc:  # a bad row must not kill the run
        rec.failed = True
        rec.error = f"{type(exc).__name__}: {exc}"
    return rec


def evaluate_manifest(rows: list[dict], embedder=None,
                      pitch_cfg: PitchConfig = PitchConfig()) -> MetricReport:
    """Evaluate every pair row; failures are recorded, not raised."""
    if embedder is None:
        embedder = BuiltinSpectralEmbedder()
    report = MetricReport(embedder_kind=getattr(embedder, "kind", "unknown"))
    for row in sorted(rows, key=lambda r: str(r["id"])):
        report.records.append(_evaluate_row(row, embedder, pitch_cfg))

    ok = [r for r in report.records if not r.failed]
    lf0_values = [r.lf0_rmse for r in ok if r.lf0_rmse is not None]
    f0_attempts = [r for r in ok if r.lf0_rmse is not None or r.f0_nan]
    report.aggregates = {
        "count": len(report.records),
        "failed": report.n_failed,
        "lf0_rmse_mean": float(np.mean(lf0_values)) if lf0_values else None,
        "vuv_pct_mean": _mean_of(ok, "vuv_pct"),
        "sim_mean": _mean_of(ok, "sim"),
        "mcd_mean": _mean_of(ok, "mcd"),
        "f0_nan_pct": (100.0 * sum(r.f0_nan for r in f0_attempts) / len(f0_attempts))
        if f0_attempts else None,
    }
    return report


def _mean_of(records, attr):
    values = [getattr(r, attr) for r in records if getattr(r, attr) is not None]
    return float(np.mean(values)) if values else None


def write_report_csv(report: MetricReport, path) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(REPORT_COLUMNS)
            for r in report.records:
                writer.writerow([r.id, int(r.failed),
                                 _fmt(r.lf0_rmse), _fmt(r.vuv_pct),
                                 _fmt(r.sim), _fmt(r.mcd), int(r.f0_nan)])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _fmt(value):
    return "" if value is None else f"{value:.9g}"


def read_report_csv(path) -> list[dict]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def write_report_json(report: MetricReport, path) -> None:
    payload = {
        "embedder": report.embedder_kind,
        "columns": list(REPORT_COLUMNS),
        "rows": [{
            "id": r.id, "failed": r.failed, "error": r.error,
            "lf0_rmse": r.lf0_rmse, "vuv_pct": r.vuv_pct,
            "sim": r.sim, "mcd": r.mcd, "f0_nan": r.f0_nan,
        } for r in report.records],
        "aggregates": report.aggregates,
    }
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
