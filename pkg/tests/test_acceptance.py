"""Acceptance suite: one test per primary criterion, one PASS/FAIL line each.

Run alone with ``pytest tests/test_acceptance.py -s`` (or ``python -m
tests.test_acceptance``); the summary lines also appear at the end of any
pytest run that includes this file.
"""
import contextlib
import math
import sys
import time

import numpy as np
import pytest
import torch

from igcfat.config import default_config_text, load_config
from igcfat.data import (DatasetManifest, ManifestEntry, filter_by_height, iterations_per_epoch, micro_dataset,
                         prepare_gt)
from igcfat.degradation import LEVELS, DegradationLevelSpec, apply_draw, degrade, draw_in_range, sample_draw, sample_level
from igcfat.evalkit import as_upscaler, evaluate
from igcfat.imageops import psnr
from igcfat.losses import LossWeights, gan_loss_g, l1_loss, perceptual_loss, total_generator_loss
from igcfat.nets import (CFATGenerator, DiscriminatorConfig, GeneratorConfig, SemanticUNetDiscriminator,
                         ToyFeatureExtractor, pvm_features, rect_merge, rect_partition, spectral_norms, tri_merge,
                         tri_partition)
from igcfat.trainer import TrainConfig, UsmConfig, init_state, load_checkpoint, pretrain, save_checkpoint, train
from igcfat.wavelet import SUBBANDS, WaveletLossConfig, swt2, wavelet_loss

from .conftest import TINY_GEN, benign_round
from .oracles import LN2, PSNR_ONE_LSB_DB, central_difference, chi_square_pvalue, haar_filters, swt_bruteforce

RESULTS: list[str] = []


@contextlib.contextmanager
def criterion(name):
    """Record one PASS/FAIL line; ``detail`` entries are appended to it."""
    detail: list[str] = []
    try:
        yield detail
    except BaseException as exc:
        line = f"FAIL  {name}: {'; '.join(detail + [type(exc).__name__ + ': ' + str(exc).splitlines()[0]])}"
        RESULTS.append(line)
        print(line)
        raise
    line = f"PASS  {name}: {'; '.join(detail)}"
    RESULTS.append(line)
    print(line)


@pytest.fixture(scope="module")
def shipped():
    return load_config()


@pytest.fixture(scope="module")
def fullscale(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "full_scale.yaml"
    path.write_text(default_config_text("full_scale.yaml"))
    return load_config(path)


# 1
def test_full_scale_results_not_reproduced(fullscale):
    with criterion("full-scale reference results (documented non-goal)") as d:
        assert fullscale.pretrain.iterations == 86300 and fullscale.finetune.iterations == 43150
        assert fullscale.pretrain.batch == 4 and fullscale.pretrain.lr == 1e-4
        assert fullscale.degradation.probs == (0.3, 0.3, 0.4)
        d.append("full-scale config validates (86300 + 43150 iterations, batch 4, lr 1e-4); "
                 "not trained here, so reference PSNR/LPIPS are not claimed")


# 2
def test_sampler_chi_square():
    with criterion("degradation sampler chi-square") as d:
        probs = (0.3, 0.3, 0.4)
        rng = np.random.default_rng(20240611)
        t0 = time.perf_counter()
        draws = [sample_level(rng, probs) for _ in range(100_000)]
        elapsed = time.perf_counter() - t0
        counts = [draws.count(lv) for lv in LEVELS]
        p = chi_square_pvalue(counts, probs)
        d.append(f"counts {counts}, p = {p:.3f} (alpha 0.01), {elapsed:.2f} s")
        assert p > 0.01
        assert elapsed < 5.0


# 3
def test_degradation_fuzz(shipped):
    with criterion("degradation fuzz 10^4 draws") as d:
        deg = shipped.degradation
        rng = np.random.default_rng(99)
        hr = rng.random((32, 32, 3))
        replayed = 0
        for i in range(10_000):
            seed = int(rng.integers(2**63))
            lr, draw = deg.degrade(hr, seed)
            spec = deg[draw.level]
            assert draw_in_range(draw, spec), draw
            assert draw.order == (2 if draw.level == "D3" else 1)
            if i % 20 == 0:  # full pixel replay on every 20th draw; parameter replay on all
                lr2, draw2 = deg.degrade(hr, draw.seed)
                assert draw2 == draw and np.array_equal(lr2, lr)
                assert np.array_equal(apply_draw(hr, draw), lr)
                replayed += 1
            else:
                r = np.random.default_rng(seed)
                level = sample_level(r, deg.probs)
                assert sample_draw(deg[level], r, seed=seed, hr_size=(32, 32)) == draw
        d.append(f"10000 draws in range with correct order; {replayed} bit-exact pixel replays, "
                 "all draws re-derived identically from their seeds")


# 4
def test_swt_identities():
    with criterion("SWT identities") as d:
        worst_const = 0.0
        for w in ("haar", "db2"):
            b = swt2(np.full((10, 12), 0.73), w)
            worst_const = max(worst_const, float((b.ll - 0.73).abs().max()),
                              *(float(x.abs().max()) for x in (b.lh, b.hl, b.hh)))
        imp = np.zeros((9, 9))
        imp[4, 4] = 1.0
        got, want = swt2(imp, "haar").as_dict(), swt_bruteforce(imp, *haar_filters())
        worst_imp = max(float(np.abs(got[k].numpy() - want[k]).max()) for k in SUBBANDS)
        r = np.random.default_rng(1)
        x, y = r.random((16, 16)), r.random((16, 16))
        worst_lin = max(float((l_ - (2.5 * a - 0.7 * c)).abs().max())
                        for l_, a, c in zip(swt2(2.5 * x - 0.7 * y), swt2(x), swt2(y)))
        d.append(f"constant {worst_const:.1e}, impulse vs oracle {worst_imp:.1e}, linearity {worst_lin:.1e}")
        assert worst_const <= 1e-7 and worst_imp <= 1e-7 and worst_lin <= 1e-6


# 5
def test_wavelet_loss_gradient():
    with criterion("wavelet-loss gradient vs finite differences") as d:
        cfg = WaveletLossConfig()
        r = np.random.default_rng(5)
        worst = 0.0
        for _ in range(20):
            sr, gt = r.random((1, 3, 8, 8)), r.random((1, 3, 8, 8))
            t = torch.tensor(sr, requires_grad=True)
            wavelet_loss(t, torch.tensor(gt), cfg).backward()
            fd = central_difference(lambda v: float(wavelet_loss(torch.tensor(v), torch.tensor(gt), cfg)), sr)
            worst = max(worst, float(np.linalg.norm(t.grad.numpy() - fd) / np.linalg.norm(fd)))
        d.append(f"max relative error {worst:.2e} over 20 pairs (double)")
        assert worst <= 1e-4


# 6
def test_partition_exactness():
    with criterion("partition exactness") as d:
        cases = 0
        for window in (4, 8):
            for h in range(8, 18):
                for w in range(8, 18):
                    x = torch.arange(1, h * w + 1, dtype=torch.float64).reshape(1, h, w, 1)
                    for part, merge in ((rect_partition, rect_merge), (tri_partition, tri_merge)):
                        groups, info = part(x, window)
                        vals = groups[..., 0].flatten()
                        vals = vals[vals > 0]
                        assert vals.numel() == h * w and torch.unique(vals).numel() == h * w
                        assert torch.equal(merge(groups, info), x)
                        cases += 1
        d.append(f"{cases} (partition, window, H, W) cases: disjoint exact covers, inverse is identity")


# 7
def test_generator_shape_and_gradient():
    with criterion("generator shape/gradient") as d:
        t0 = time.perf_counter()
        torch.manual_seed(0)
        gen = CFATGenerator(GeneratorConfig())
        sizes = [(8, 8), (9, 13), (16, 16), (17, 23), (31, 8), (40, 57), (64, 64), (63, 33)]
        with torch.no_grad():
            for h, w in sizes:
                assert gen(torch.rand(1, 3, h, w)).shape == (1, 3, 4 * h, 4 * w)
        x, y = torch.rand(2, 3, 16, 16), torch.rand(2, 3, 64, 64)
        gen.zero_grad()
        (gen(x) - y).abs().mean().backward()
        params = list(gen.named_parameters())
        dead = [n for n, p in params if p.grad is None or not torch.any(p.grad != 0)]
        elapsed = time.perf_counter() - t0
        d.append(f"{len(sizes)} sizes incl. odd dims are x4; {len(params) - len(dead)}/{len(params)} "
                 f"parameters get nonzero gradient; {elapsed:.1f} s")
        assert not dead, dead
        assert elapsed < 60


# 8
def test_discriminator_contract():
    with criterion("discriminator contract") as d:
        torch.manual_seed(0)
        disc = SemanticUNetDiscriminator(DiscriminatorConfig())
        img = torch.rand(2, 3, 64, 64)
        sem = pvm_features(img, "toy")
        out = disc(img, sem)
        assert out.shape == (2, 64, 64)
        with torch.no_grad():
            delta = float((disc(img, sem.features, 4) - disc(img, torch.rand_like(sem.features), 4)).abs().mean())
        opt = torch.optim.Adam(disc.parameters(), lr=1e-3)
        for _ in range(3):
            opt.zero_grad()
            disc(img, sem).mean().backward()
            opt.step()
        sigma = max(spectral_norms(disc).values())
        d.append(f"output {tuple(out.shape)}; mean |delta| under semantic change {delta:.2e}; "
                 f"max spectral norm {sigma:.7f}")
        assert delta > 0 and sigma <= 1 + 1e-3


# 9
def test_loss_identities():
    with criterion("loss identities") as d:
        ext = ToyFeatureExtractor().double()
        g = torch.Generator().manual_seed(2)
        sr = torch.rand(2, 3, 16, 16, generator=g, dtype=torch.float64)
        gt = torch.rand(2, 3, 16, 16, generator=g, dtype=torch.float64)
        fake = torch.randn(2, 16, 16, generator=g, dtype=torch.float64)
        wcfg = WaveletLossConfig()
        singles = [l1_loss(sr, gt), perceptual_loss(sr, gt, ext), wavelet_loss(sr, gt, wcfg), gan_loss_g(fake)]
        iso = max(abs(float(total_generator_loss(sr, gt, fake, LossWeights(*np.eye(4)[i]), wcfg, ext)[0]) - float(s))
                  for i, s in enumerate(singles))
        opt, _ = total_generator_loss(gt, gt, torch.ones(2, 16, 16, dtype=torch.float64), LossWeights(), wcfg, ext,
                                      gan_mode="lsgan")
        base = np.array([0.6, 0.3, 1.1, 0.02])
        t0 = float(total_generator_loss(sr, gt, fake, LossWeights(*base), wcfg, ext)[0])
        lin = 0.0
        for i, s in enumerate(singles):
            w = base.copy()
            w[i] += 0.4
            t1 = float(total_generator_loss(sr, gt, fake, LossWeights(*w), wcfg, ext)[0])
            lin = max(lin, abs((t1 - t0) - 0.4 * float(s)))
        vanilla = float(gan_loss_g(torch.zeros(4, dtype=torch.float64)))
        d.append(f"isolation {iso:.1e}; total at optimum {float(opt):.1e}; linearity {lin:.1e}; "
                 f"vanilla at logit 0 = {vanilla:.6f} (ln 2)")
        assert iso <= 1e-7 and float(opt) == 0.0 and lin <= 1e-7 and abs(vanilla - LN2) < 1e-12


# 10
@pytest.mark.slow
def test_overfit_smoke():
    with criterion("overfit smoke test") as d:
        patch = micro_dataset(size=(96, 128), count=1)["astronaut_0"][16:80, 32:96]
        spec_ = DegradationLevelSpec("D1", (benign_round(),))
        # desk override: lr 1e-3 (the schedule's 1e-4 is tuned for 86k iterations)
        cfg = TrainConfig(iterations=500, batch=1, patch_size=64, lr=1e-3, usm=UsmConfig(enabled=False), seed=0)
        t0 = time.perf_counter()
        state = pretrain([patch], cfg, spec_, GeneratorConfig())
        elapsed = time.perf_counter() - t0
        lr_img, _ = degrade(patch, spec_, 0)
        value = psnr(as_upscaler(state.generator)(lr_img), patch)
        d.append(f"PSNR {value:.2f} dB after 500 iterations (> 35 required), {elapsed:.0f} s")
        assert value > 35 and elapsed < 300


# 11
def test_determinism(tmp_path):
    with criterion("determinism and resume") as d:
        r = np.random.default_rng(0)
        images = [r.random((32, 32, 3)), r.random((40, 24, 3))]
        spec_ = load_config().degradation["D1"]
        cfg = TrainConfig(iterations=50, batch=2, patch_size=16, lr=1e-3, seed=11, usm=UsmConfig(sigma=2.0))
        a = pretrain(images, cfg, spec_, TINY_GEN)
        b = pretrain(images, cfg, spec_, TINY_GEN)
        assert a.loss_log == b.loss_log
        c = init_state(cfg, TINY_GEN)
        train(c, images, spec_, cfg, until=30)
        save_checkpoint(c, tmp_path / "k.pt")
        resumed = train(load_checkpoint(tmp_path / "k.pt"), images, spec_, cfg)
        tail = resumed.losses("l1")[30:]
        assert len(tail) == 20 and tail == a.losses("l1")[30:]
        d.append("two 50-iteration runs bit-identical; resume at 30 reproduces 20 losses exactly")


# 12
def test_data_protocol():
    with criterion("data protocol") as d:
        land = prepare_gt(np.full((2000, 4000, 3), 0.5))
        port = prepare_gt(np.full((4000, 2000, 3), 0.5))
        assert land.shape[:2] == (1000, 2000) and port.shape[:2] == (2000, 1000)
        kept, excluded = filter_by_height([("h816", np.zeros((816, 1224, 3))), ("h1000", np.zeros((1000, 1500, 3)))])
        assert [e["name"] for e in excluded] == ["h816"] and [k for k, _ in kept] == ["h1000"]
        manifest = DatasetManifest([ManifestEntry(f"{i}.png", "train", f"gt/{i}.png") for i in range(3450)])
        per_epoch = iterations_per_epoch(len(manifest.split("train")), 4)
        rel = abs(per_epoch - 86300 / 100) / per_epoch
        d.append(f"2000x1000 / 1000x2000 outputs; height 816 excluded; {per_epoch} iterations/epoch "
                 f"vs 863 (rel {rel:.1e})")
        assert rel <= 1e-3


# 13
def test_metrics(micro_val):
    with criterion("metrics") as d:
        z = np.zeros((16, 16, 3))
        lsb = psnr(z, z + 1 / 255)
        unit = psnr(z, np.ones_like(z))
        bic = evaluate("bicubic", micro_val, metrics=["psnr"]).aggregate["mean_psnr_db"]
        nn_ = evaluate("nearest", micro_val, metrics=["psnr"]).aggregate["mean_psnr_db"]
        d.append(f"1/255 error -> {lsb:.4f} dB, unit error -> {unit:.4f} dB; "
                 f"micro val bicubic {bic:.2f} dB vs nearest {nn_:.2f} dB")
        assert abs(lsb - PSNR_ONE_LSB_DB) <= 1e-3 and abs(unit) <= 1e-3 and bic > nn_
        assert math.isclose(lsb, 20 * math.log10(255), abs_tol=1e-9)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s", "-p", "no:cacheprovider"]))
