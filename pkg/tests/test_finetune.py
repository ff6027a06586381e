import numpy as np
import pytest

from nhsg import finetune as ft
from nhsg import stage2
from nhsg.dsp import FrameSpec, Waveform
from nhsg.errors import ConfigError, ShapeError, TooShortError
from nhsg.numerics import Tensor, backward
from nhsg.pitch import F0Contour
from nhsg.representation import ContentTokens, FrameRepresentation, TimbreEmbedding
from nhsg.seeding import stream

SR = 16000


def small_gcfg():
    return stage2.GeneratorConfig(token_vocab_sizes=((1, 8), (2, 8)),
                                  token_embed_dim=12, f0_embed_dim=4,
                                  upsample_factors=(4, 5), base_channels=8,
                                  residual_kernels=(3,), residual_dilations=(1, 2))


def small_pcfg(hop=20):
    return ft.PredictorConfig(kernel_sizes=(10, 3, 3, 2), strides=(5, 2, 2, 1),
                              paddings=(4, 1, 1, 1), channels=16,
                              token_vocab_sizes=((1, 8), (2, 8)), hop_samples=hop)


def random_z(t, layer_vocabs, hop, seed=0):
    rng = np.random.default_rng(seed)
    tokens = {l: rng.integers(0, k, t).astype(np.int64) for l, k in layer_vocabs}
    f0 = rng.uniform(100, 300, t)
    voiced = rng.random(t) > 0.25
    f0[~voiced] = 0.0
    if not voiced.any():
        voiced[0], f0[0] = True, 180.0
    spec = FrameSpec(hop_samples=hop, win_samples=hop, sample_rate=SR)
    return FrameRepresentation(
        tokens=ContentTokens(tokens=tokens, vocab_sizes=dict(layer_vocabs),
                             layer_ids=tuple(l for l, _ in layer_vocabs)),
        f0=F0Contour(f0_hz=f0, voiced=voiced, frame_spec=spec))


def make_sample(t, gcfg, seed, domain="human"):
    rng = np.random.default_rng(seed)
    hop = gcfg.hop_samples
    z = random_z(t, gcfg.token_vocab_sizes, hop, seed=seed)
    axis = np.arange(t * hop) / SR
    wave = Waveform(samples=(0.3 * np.sin(2 * np.pi * (150 + 30 * seed) * axis)
                             ).astype(np.float32), sample_rate=SR)
    emb = TimbreEmbedding(vector=rng.standard_normal(192).astype(np.float32),
                          source_id=f"{domain}{seed}")
    return stage2.VocoderSample(waveform=wave, z=z, embedding=emb, domain=domain,
                                sample_id=f"{domain}{seed}")


class TestPredictorConfig:
    def test_stride_product_must_equal_hop(self):
        with pytest.raises(ConfigError):
            ft.PredictorConfig(hop_samples=100)
        cfg = ft.PredictorConfig()  # full-scale strides, hop 882
        assert int(np.prod(cfg.strides)) == 882

    def test_toy_config_valid(self):
        cfg = ft.toy_predictor_config()
        assert int(np.prod(cfg.strides)) == cfg.hop_samples == 320

    def test_frame_arithmetic_on_random_lengths(self):
        cfg = ft.toy_predictor_config()
        rng = np.random.default_rng(1)
        for _ in range(20):
            n = int(rng.integers(cfg.hop_samples, 40 * cfg.hop_samples))
            conv = cfg.conv_frames(n)
            out = cfg.output_frames(n)
            assert out == n // cfg.hop_samples
            assert conv >= out  # trim only ever removes tail overhang
        for t in (1, 2, 3, 7):
            n = t * cfg.hop_samples
            assert cfg.output_frames(n) == t


class TestPredictorForward:
    def test_shapes_and_argmax_range(self):
        pcfg = small_pcfg()
        params = ft.build_predictor_params(pcfg, seed=0)
        rng = np.random.default_rng(0)
        n = 12 * pcfg.hop_samples
        w = Waveform(samples=rng.uniform(-0.5, 0.5, n).astype(np.float32),
                     sample_rate=SR)
        f0, tokens, timbre = ft.predictor_forward(w, params, pcfg)
        assert f0.shape == (12,)
        assert timbre.shape == (192,)
        for l, k in pcfg.token_vocab_sizes:
            assert tokens[l].shape == (12, k + 1)
            ids = tokens[l].data.argmax(axis=1)
            assert ids.min() >= 0 and ids.max() <= k

    def test_too_short(self):
        pcfg = small_pcfg()
        params = ft.build_predictor_params(pcfg, seed=0)
        w = Waveform(samples=np.zeros(5, np.float32), sample_rate=SR)
        with pytest.raises(TooShortError):
            ft.predictor_forward(w, params, pcfg)

    def test_gradient_check_reduced_stub(self):
        # single conv layer + heads, finite differences on a few parameters
        pcfg = ft.PredictorConfig(kernel_sizes=(4,), strides=(4,), paddings=(0,),
                                  channels=6, token_vocab_sizes=((1, 3),),
                                  hop_samples=4, timbre_dim=5)
        params = ft.build_predictor_params(pcfg, seed=1)
        rng = np.random.default_rng(2)
        x = rng.uniform(-0.5, 0.5, 16).astype(np.float32)

        def scalar():
            f0, tok, tim = ft.predictor_forward(
                Waveform(samples=x, sample_rate=SR), params, pcfg)
            return float(f0.data.sum() + tok[1].data.sum() + tim.data.sum())

        params.zero_grad()
        f0, tok, tim = ft.predictor_forward(Waveform(samples=x, sample_rate=SR),
                                            params, pcfg)
        from nhsg.numerics import add, sum_
        total = add(add(sum_(f0), sum_(tok[1])), sum_(tim))
        backward(total)
        h = 1e-2
        for name in ("conv0.v", "conv0.g", "f0_head.w", "timbre_head.b"):
            tensor = params[name]
            flat = tensor.data.reshape(-1)
            i = int(rng.integers(flat.size))
            orig = flat[i]
            flat[i] = orig + h
            up = scalar()
            flat[i] = orig - h
            down = scalar()
            flat[i] = orig
            numeric = (up - down) / (2 * h)
            analytic = float(tensor.grad.reshape(-1)[i])
            assert abs(analytic - numeric) <= 1e-2 + 1e-2 * max(abs(analytic), abs(numeric)), name


class TestUnpairedBatch:
    def batch(self, n):
        gcfg = small_gcfg()
        return [(make_sample(10, gcfg, i).z, make_sample(10, gcfg, i).waveform,
                 make_sample(10, gcfg, i).embedding) for i in range(n)]

    def test_derangement_of_two_swaps(self):
        rng = stream(0, "test-pair")
        batch = self.batch(2)
        pairs, assignment = ft.unpaired_batch(batch, rng, mode="derangement")
        assert list(assignment) == [1, 0]
        assert pairs[0][1] is batch[1][2]

    def test_seeded_reproducible(self):
        batch = self.batch(5)
        p1, a1 = ft.unpaired_batch(batch, stream(3, "p"), mode="uniform")
        p2, a2 = ft.unpaired_batch(batch, stream(3, "p"), mode="uniform")
        assert list(a1) == list(a2)

    def test_batch_of_one_self_pairs(self):
        batch = self.batch(1)
        pairs, assignment = ft.unpaired_batch(batch, stream(0, "p"), mode="derangement")
        assert list(assignment) == [0]

    def test_uniform_self_rate(self):
        rng = stream(7, "rate")
        batch = self.batch(4)
        hits = 0
        draws = 10000
        for _ in range(draws):
            _, a = ft.unpaired_batch(batch, rng, mode="uniform")
            hits += int(a[0] == 0)
        rate = hits / draws
        assert abs(rate - 1.0 / 4) < 0.02


class TestAuxiliaryLosses:
    def setup_all(self):
        gcfg = small_gcfg()
        pcfg = small_pcfg(hop=gcfg.hop_samples)
        pparams = ft.build_predictor_params(pcfg, seed=0)
        sample = make_sample(12, gcfg, 3)
        return gcfg, pcfg, pparams, sample

    def test_timbre_identity_zero(self):
        _, pcfg, pparams, sample = self.setup_all()
        f0_pred, _, timbre_pred = ft.predictor_forward(sample.waveform, pparams, pcfg)
        e_same = TimbreEmbedding(vector=timbre_pred.data.copy())
        _, _, lt, comps = ft.auxiliary_losses(sample.waveform, sample.z, e_same,
                                              pparams, pcfg)
        assert comps["timbre"] == pytest.approx(0.0, abs=1e-6)

    def test_timbre_opposite_two(self):
        _, pcfg, pparams, sample = self.setup_all()
        _, _, timbre_pred = ft.predictor_forward(sample.waveform, pparams, pcfg)
        e_opp = TimbreEmbedding(vector=-timbre_pred.data.copy())
        _, _, _, comps = ft.auxiliary_losses(sample.waveform, sample.z, e_opp,
                                             pparams, pcfg)
        assert comps["timbre"] == pytest.approx(2.0, abs=1e-6)

    def test_matches_scalar_oracle(self):
        # 3 frames, 2 layers: recompute CE / MSE / cosine by hand
        _, pcfg, pparams, _ = self.setup_all()
        gcfg = small_gcfg()
        z = random_z(3, pcfg.token_vocab_sizes, pcfg.hop_samples, seed=9)
        rng = np.random.default_rng(10)
        wave = Waveform(samples=rng.uniform(-0.5, 0.5, 3 * pcfg.hop_samples
                                            ).astype(np.float32), sample_rate=SR)
        e_tgt = TimbreEmbedding(vector=rng.standard_normal(192).astype(np.float32))
        lt, lf, lcos, comps = ft.auxiliary_losses(wave, z, e_tgt, pparams, pcfg)
        f0p, tkl, tmp = ft.predictor_forward(wave, pparams, pcfg)

        def ce(row, t):
            row = row.astype(np.float64)
            return -(row[t] - np.log(np.exp(row - row.max()).sum()) - row.max())

        oracle_token = 0.0
        for l, k in pcfg.token_vocab_sizes:
            rows = tkl[l].data[:, :k]
            oracle_token += np.mean([ce(rows[i], z.tokens.tokens[l][i])
                                     for i in range(3)])
        voiced = z.f0.voiced
        oracle_f0 = np.mean((f0p.data[voiced] - np.log(z.f0.f0_hz[voiced])) ** 2)
        a, b = e_tgt.vector.astype(np.float64), tmp.data.astype(np.float64)
        oracle_timbre = 1.0 - a @ b / (np.linalg.norm(a) * np.linalg.norm(b))
        assert comps["token"] == pytest.approx(oracle_token, abs=1e-5)
        assert comps["f0"] == pytest.approx(oracle_f0, abs=1e-5)
        assert comps["timbre"] == pytest.approx(oracle_timbre, abs=1e-6)

    def test_frame_mismatch_beyond_one(self):
        _, pcfg, pparams, sample = self.setup_all()
        z5 = random_z(5, pcfg.token_vocab_sizes, pcfg.hop_samples, seed=2)
        with pytest.raises(ShapeError):
            ft.auxiliary_losses(sample.waveform, z5, sample.embedding, pparams, pcfg)

    def test_bounds(self):
        _, pcfg, pparams, sample = self.setup_all()
        _, _, _, comps = ft.auxiliary_losses(sample.waveform, sample.z,
                                             sample.embedding, pparams, pcfg)
        assert comps["token"] >= 0.0
        assert comps["f0"] >= 0.0
        assert 0.0 <= comps["timbre"] <= 2.0


class TestFinetuneLoop:
    def setup_corpus(self):
        gcfg = small_gcfg()
        dcfg = stage2.DiscriminatorConfig(periods=(2, 3), spectral_ffts=(128,),
                                          n_bands=2)
        pcfg = small_pcfg(hop=gcfg.hop_samples)
        humans = [make_sample(30, gcfg, i, "human") for i in range(3)]
        nonhumans = [make_sample(30, gcfg, 10 + i, "bird") for i in range(3)]
        fcfg = ft.FinetuneConfig(steps=4, batch_size=2, crop_frames=16,
                                 mel_scales=(stage2.MelScale(128, 32, 128, 12),))
        return gcfg, dcfg, pcfg, humans, nonhumans, fcfg

    def test_runs_and_logs(self, tmp_path):
        gcfg, dcfg, pcfg, humans, nonhumans, fcfg = self.setup_corpus()
        gparams = stage2.build_generator_params(gcfg, seed=0)
        log = tmp_path / "ft.csv"
        ckpt = tmp_path / "ft.nhck"
        _, _, _, history, info = ft.finetune(
            gparams, humans, nonhumans, gcfg, dcfg, pcfg, fcfg, seed=0,
            log_path=log, checkpoint_path=ckpt)
        assert len(history) == 4
        assert ckpt.exists()
        header = log.read_text().splitlines()[0]
        assert header == "step,adv_g,adv_d,fm,mel,token,f0,timbre"
        assert info["unpaired_generations"] == 8

    def test_empty_nonhuman_rejected(self):
        gcfg, dcfg, pcfg, humans, _, fcfg = self.setup_corpus()
        gparams = stage2.build_generator_params(gcfg, seed=0)
        with pytest.raises(ConfigError):
            ft.finetune(gparams, humans, [], gcfg, dcfg, pcfg, fcfg)

    def test_oversampling_ratio_respected(self):
        gcfg, dcfg, pcfg, humans, nonhumans, _ = self.setup_corpus()
        fcfg = ft.FinetuneConfig(steps=60, batch_size=2, crop_frames=16,
                                 oversampling_ratio=0.9, unpaired_weight=0.0,
                                 mel_scales=(stage2.MelScale(128, 32, 128, 12),))
        gparams = stage2.build_generator_params(gcfg, seed=0)
        _, _, _, _, info = ft.finetune(gparams, humans, nonhumans, gcfg, dcfg,
                                       pcfg, fcfg, seed=4)
        ratio = info["nonhuman_draws"] / max(info["human_draws"], 1)
        assert abs(ratio - 0.9) / 0.9 < 0.25  # short run; acceptance uses 1000 steps

    def test_reduces_to_stage2_with_unpaired_off(self):
        gcfg, dcfg, pcfg, humans, nonhumans, _ = self.setup_corpus()
        merged = humans + nonhumans
        mel = (stage2.MelScale(128, 32, 128, 12),)
        seed = 21
        tcfg = stage2.Stage2TrainConfig(steps=6, batch_size=2, crop_frames=16,
                                        mel_scales=mel)
        g1, d1, hist_s2 = stage2.train_stage2(merged, gcfg, dcfg, tcfg, seed=seed)

        fcfg = ft.FinetuneConfig(steps=6, batch_size=2, crop_frames=16,
                                 sampling="uniform", pairing="self",
                                 unpaired_weight=0.0, mel_scales=mel)
        g2, d2, _, hist_ft, _ = ft.finetune(
            stage2.build_generator_params(gcfg, seed=seed),
            humans, nonhumans, gcfg, dcfg, pcfg, fcfg, seed=seed,
            dparams=stage2.build_discriminator_params(dcfg, seed=seed))
        for a, b in zip(hist_s2, hist_ft):
            for key in ("adv_g", "adv_d", "fm", "mel"):
                assert a[key] == b[key], key
        for name in g1.names():
            assert g1[name].data.tobytes() == g2[name].data.tobytes()
