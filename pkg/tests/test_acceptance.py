"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The two training-based criteria share one module-scoped fixture that runs the
full desk-scale protocol (2000 synthetic 32x32 images, 10 epochs, batch 40,
three seeds, lambda in {0, default}).
"""

import math
import time
from contextlib import contextmanager
from dataclasses import replace

import numpy as np
import pytest
import torch

import tvgan
from tvgan import (SynthClassParams, TrainConfig, batch_tv, d_loss, fid,
                   frechet_distance, g_loss, gaussian_stats, normalize,
                   denormalize, sample_latent, synth_palm_lines, tv_value,
                   tv_subgradient)
from tvgan.fid import GaussianStats, RandomConvEmbedder


@contextmanager
def report(number, name):
    outcome = {"ok": False}
    try:
        yield outcome
        outcome["ok"] = True
    finally:
        status = "PASS" if outcome["ok"] else "FAIL"
        print(f"\nACCEPTANCE {number} {name}: {status}")


def tv_oracle(image):
    a = np.asarray(image, dtype=np.float64)
    total = 0.0
    h, w = a.shape
    for i in range(h):
        for j in range(w):
            if i + 1 < h:
                total += abs(a[i + 1, j] - a[i, j])
            if j + 1 < w:
                total += abs(a[i, j + 1] - a[i, j])
    return total


def test_criterion_1_tv_exactness():
    """100 fixed-seed images, 1x1 through 16x16, rel err <= 1e-12, < 5 s."""
    with report(1, "tv-value-exactness"):
        rng = np.random.default_rng(101)
        start = time.monotonic()
        for k in range(100):
            h = int(rng.integers(1, 17))
            w = int(rng.integers(1, 17))
            image = rng.normal(scale=3.0, size=(h, w))
            expected = tv_oracle(image)
            got = tv_value(image)
            assert got == pytest.approx(expected, rel=1e-12, abs=1e-12)
        elapsed = time.monotonic() - start
        assert elapsed < 5.0, f"took {elapsed:.1f}s"


def test_criterion_2_tv_subgradient():
    """FD match at rel 1e-4 on 100 kink-free images; convexity on 1000 pairs.

    Entries whose sign terms cancel to an exact 0 are compared with a 1e-7
    absolute floor (finite differences produce pure roundoff there).
    """
    with report(2, "tv-subgradient"):
        rng = np.random.default_rng(202)
        start = time.monotonic()
        step = 1e-6
        checked = 0
        while checked < 100:
            h = int(rng.integers(2, 17))
            w = int(rng.integers(2, 17))
            image = rng.uniform(-1, 1, size=(h, w))
            gaps = [np.abs(np.diff(image, axis=-1)),
                    np.abs(np.diff(image, axis=-2))]
            if any(g.size and g.min() < 1e-3 for g in gaps):
                continue
            checked += 1
            grad = tv_subgradient(image)
            for idx in np.ndindex(image.shape):
                plus = image.copy()
                plus[idx] += step
                minus = image.copy()
                minus[idx] -= step
                fd = (tv_value(plus) - tv_value(minus)) / (2 * step)
                assert grad[idx] == pytest.approx(fd, rel=1e-4, abs=1e-7)
        for _ in range(1000):
            shape = (int(rng.integers(1, 9)), int(rng.integers(1, 9)))
            y = rng.normal(size=shape)
            z = rng.normal(size=shape)
            lhs = tv_value(z)
            rhs = tv_value(y) + float((tv_subgradient(y) * (z - y)).sum())
            assert lhs >= rhs - 1e-9 * (1 + abs(lhs) + abs(rhs))
        elapsed = time.monotonic() - start
        assert elapsed < 30.0, f"took {elapsed:.1f}s"


def test_criterion_3_frechet_exactness():
    """Analytic cases at 1e-10; 50 SPD pairs vs product-eig oracle at 1e-8."""
    with report(3, "frechet-distance-exactness"):
        start = time.monotonic()
        identical = GaussianStats(np.arange(4.0), np.diag([1.0, 2, 3, 4]), 10)
        assert frechet_distance(identical, identical) == pytest.approx(
            0.0, abs=1e-10)
        a = GaussianStats(np.zeros(2), np.eye(2), 10)
        b = GaussianStats(np.ones(2), np.eye(2), 10)
        assert frechet_distance(a, b) == pytest.approx(2.0, abs=1e-10)
        c = GaussianStats(np.zeros(2), np.diag([1.0, 4.0]), 10)
        d = GaussianStats(np.zeros(2), np.diag([4.0, 1.0]), 10)
        assert frechet_distance(c, d) == pytest.approx(2.0, abs=1e-10)

        rng = np.random.default_rng(303)

        def spd(dim):
            m = rng.normal(size=(dim, dim))
            return m @ m.T + 0.05 * np.eye(dim)

        for _ in range(50):
            dim = int(rng.integers(2, 9))
            sa = GaussianStats(rng.normal(size=dim), spd(dim), 100)
            sb = GaussianStats(rng.normal(size=dim), spd(dim), 100)
            eigvals = np.linalg.eigvals(sa.covariance @ sb.covariance)
            cross = np.sqrt(np.clip(eigvals.real, 0, None)).sum()
            diff = sa.mean - sb.mean
            expected = float(diff @ diff + np.trace(sa.covariance)
                             + np.trace(sb.covariance) - 2 * cross)
            assert frechet_distance(sa, sb) == pytest.approx(expected,
                                                             rel=1e-8)
            assert frechet_distance(sa, sb) == pytest.approx(
                frechet_distance(sb, sa), abs=1e-8, rel=1e-8)
            q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
            t = rng.normal(size=dim)
            sa2 = GaussianStats(q @ sa.mean + t, q @ sa.covariance @ q.T, 100)
            sb2 = GaussianStats(q @ sb.mean + t, q @ sb.covariance @ q.T, 100)
            assert frechet_distance(sa2, sb2) == pytest.approx(
                frechet_distance(sa, sb), rel=1e-8, abs=1e-8)
        elapsed = time.monotonic() - start
        assert elapsed < 10.0, f"took {elapsed:.1f}s"


def test_criterion_4_loss_reductions():
    """lambda=0 equals the plain non-saturating loss bit-for-bit; analytic
    2 ln 2 and ln 2 values on all-0.5 scores at 1e-12."""
    with report(4, "loss-reductions"):
        rng = np.random.default_rng(404)
        scores = torch.from_numpy(rng.uniform(0.05, 0.95, size=24))
        images = torch.from_numpy(rng.uniform(-1, 1, size=(24, 1, 16, 16)))
        losses = g_loss(scores, images, 0.0)
        plain = -torch.log(scores.clamp(1e-7, 1 - 1e-7)).mean()
        assert float(losses.total) == float(plain)

        half = torch.full((40,), 0.5, dtype=torch.float64)
        assert float(d_loss(half, half)) == pytest.approx(2 * math.log(2),
                                                          abs=1e-12)
        constant = torch.zeros(40, 1, 8, 8, dtype=torch.float64)
        adv = g_loss(half, constant, 1.0)
        assert float(adv.adversarial) == pytest.approx(math.log(2),
                                                       abs=1e-12)
        assert float(adv.tv) == 0.0


def test_criterion_5_deterministic_resume(tmp_path):
    """train 2 epochs == train 1 + checkpoint round-trip + train 1."""
    with report(5, "deterministic-resume"):
        config = TrainConfig(epochs=2, batch_size=40, image_size=32,
                             base_channels=8, latent_dim=16, synthetic=True,
                             synth_count=80, seed=11, workers=0)
        dataset = tvgan.synthetic_dataset(config.synth_count,
                                          config.image_size, config.synth)
        full, trace_full = tvgan.train(config, dataset)
        half, trace_one = tvgan.train(replace(config, epochs=1), dataset)
        path = tmp_path / "mid.tvgn"
        tvgan.save_checkpoint(path, half)
        resumed, trace_two = tvgan.train(config, dataset,
                                         resume_from=tvgan.load_checkpoint(path))
        assert trace_full.records == trace_one.records + trace_two.records
        for group in ("gen_state", "disc_state", "gen_opt_state",
                      "disc_opt_state"):
            expect = getattr(full, group)
            got = getattr(resumed, group)
            assert set(expect) == set(got)
            for key, value in expect.items():
                assert np.array_equal(got[key], value), f"{group}/{key}"


DESK = TrainConfig(epochs=10, batch_size=40, image_size=32, base_channels=32,
                   synthetic=True, synth_count=2000)


@pytest.fixture(scope="module")
def desk_protocol():
    """Six desk-scale runs: lambda in {0, default} x seeds {0, 1, 2}."""
    dataset = tvgan.synthetic_dataset(DESK.synth_count, DESK.image_size,
                                      DESK.synth)
    runs = {}
    timings = {0.0: 0.0, DESK.lambda_tv: 0.0}
    for lam in (0.0, DESK.lambda_tv):
        for seed in (0, 1, 2):
            config = replace(DESK, lambda_tv=lam, seed=seed)
            start = time.monotonic()
            ckpt, trace = tvgan.train(config, dataset)
            samples = tvgan.sample(ckpt, 1000,
                                   tvgan.derive_seed(seed, "acceptance"))
            timings[lam] += time.monotonic() - start
            runs[(lam, seed)] = {
                "trace": trace,
                "sample_tv": batch_tv(samples, "mean"),
                "samples": samples,
            }
    return {"runs": runs, "timings": timings}


def test_criterion_6_training_health(desk_protocol):
    """>=2 of 3 seeds: mean g_adv falls from first to final epoch; all
    losses finite. Under 15 CPU-minutes."""
    with report(6, "desk-training-health"):
        decreasing = 0
        for seed in (0, 1, 2):
            trace = desk_protocol["runs"][(DESK.lambda_tv, seed)]["trace"]
            for record in trace:
                assert math.isfinite(record.d_loss)
                assert math.isfinite(record.g_adv)
                assert math.isfinite(record.g_tv)
                assert math.isfinite(record.g_total)
            first = trace.epoch_mean(1, "g_adv")
            last = trace.epoch_mean(DESK.epochs, "g_adv")
            if last < first:
                decreasing += 1
        assert decreasing >= 2, f"only {decreasing} of 3 seeds improved"
        elapsed = desk_protocol["timings"][DESK.lambda_tv]
        assert elapsed < 15 * 60, f"took {elapsed:.0f}s"


def test_criterion_7_tv_pressure(desk_protocol):
    """Across-seed mean sample TV strictly lower with the default lambda
    than without. Under 30 CPU-minutes for the whole A/B."""
    with report(7, "tv-pressure-ab"):
        runs = desk_protocol["runs"]
        tv_plain = np.mean([runs[(0.0, s)]["sample_tv"] for s in (0, 1, 2)])
        tv_reg = np.mean([runs[(DESK.lambda_tv, s)]["sample_tv"]
                          for s in (0, 1, 2)])
        print(f"\nmean sample TV: lambda=0 -> {tv_plain:.2f}, "
              f"lambda={DESK.lambda_tv:g} -> {tv_reg:.2f}")
        assert tv_reg < tv_plain
        elapsed = sum(desk_protocol["timings"].values())
        assert elapsed < 30 * 60, f"took {elapsed:.0f}s"


def test_trained_model_is_closer_to_its_training_class(desk_protocol):
    # not a numbered criterion: a trained model scores a lower distance
    # against its own class than against a different class seed
    samples = desk_protocol["runs"][(DESK.lambda_tv, 0)]["samples"]
    embedder = RandomConvEmbedder()
    own = synth_palm_lines(1000, DESK.image_size, DESK.synth)
    other = synth_palm_lines(
        1000, DESK.image_size, replace(DESK.synth, class_seed=1))
    assert fid(own, samples, embedder) < fid(other, samples, embedder)


def test_criterion_8_fid_separation():
    """Within-class FID < between-class FID for 3 class-pair seeds,
    >= 500 samples per side. Under 5 minutes."""
    with report(8, "fid-class-separation"):
        start = time.monotonic()
        embedder = RandomConvEmbedder()
        for pair_seed in range(3):
            params_a = SynthClassParams(class_seed=2 * pair_seed)
            params_b = SynthClassParams(class_seed=2 * pair_seed + 1)
            batch_a = synth_palm_lines(1000, 32, params_a)
            batch_b = synth_palm_lines(500, 32, params_b)
            within = fid(batch_a[:500], batch_a[500:], embedder)
            between = fid(batch_a[:500], batch_b, embedder)
            print(f"\npair {pair_seed}: within={within:.4f} "
                  f"between={between:.4f}")
            assert within < between
        elapsed = time.monotonic() - start
        assert elapsed < 5 * 60, f"took {elapsed:.0f}s"


def test_criterion_9_contract_suite():
    """Shape/range contracts, trace arithmetic, normalization round trip."""
    with report(9, "contract-suite"):
        config = TrainConfig(image_size=32, base_channels=8, latent_dim=16,
                             synthetic=True, synth_count=90, epochs=3,
                             batch_size=40, seed=2)
        gen = tvgan.build_generator(config).eval()
        disc = tvgan.build_discriminator(config).eval()
        with torch.no_grad():
            out = gen(sample_latent(5, 16, seed=0))
            scores = disc(out)
        assert out.shape == (5, 1, 32, 32)
        assert out.min() >= -1.0 and out.max() <= 1.0
        assert scores.shape == (5,)
        assert (scores > 0).all() and (scores < 1).all()

        gen64 = tvgan.build_generator(
            replace(config, image_size=64)).eval()
        with torch.no_grad():
            assert gen64(sample_latent(2, 16, seed=1)).shape == (2, 1, 64, 64)

        dataset = tvgan.synthetic_dataset(config.synth_count,
                                          config.image_size, config.synth)
        _, trace = tvgan.train(config, dataset)
        assert len(trace) == config.epochs * (len(dataset)
                                              // config.batch_size)

        levels = np.arange(256, dtype=np.uint8)
        assert np.array_equal(denormalize(normalize(levels)), levels)
