"""Acceptance criteria 1-10.

Each test appends one ``[PASS]``/``[FAIL]`` line to the run summary (see
``conftest.py``) before asserting, so the summary lists every criterion
even when some fail.
"""

import hashlib
import json
import time

import numpy as np
from conftest import ACCEPTANCE_LINES

from keepaugment.augment import (
    apply_ops,
    augment_batch,
    keep_cutmix,
    keep_cutout,
    keep_paste,
)
from keepaugment.cli import main as cli_main
from keepaugment.config import AugmentConfig, TransformPolicy
from keepaugment.evaluation import bench_saliency, fidelity_sweep
from keepaugment.io import (
    decode_ppm,
    decode_raw,
    encode_ppm,
    encode_raw,
    make_synthetic,
    read_cifar10,
    stack_records,
)
from keepaugment.nn import ToyNet, train_toy
from keepaugment.regions import (
    build_sat,
    candidate_scores,
    quantile_threshold,
    region_score,
    sample_high_region,
    sample_low_region,
)
from keepaugment.saliency import vanilla_saliency
from keepaugment.tensor import Rect, RngStream


def record(number, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] AC{number:<2} {detail}")
    assert ok, detail


def naive_sum(saliency, rect):
    total = 0.0
    for i in range(rect.top, rect.bottom):
        for j in range(rect.left, rect.right):
            total += saliency[i, j]
    return total


def test_ac01_gradient_matches_finite_differences():
    start = time.perf_counter()
    gen = np.random.default_rng(101)
    net = ToyNet((8, 8, 3), 4, rng=gen)
    eps = 1e-3
    worst = 0.0
    for _ in range(20):
        x = gen.random((8, 8, 3))
        label = int(gen.integers(4))
        fd = np.zeros_like(x)
        for idx in np.ndindex(x.shape):
            xp, xm = x.copy(), x.copy()
            xp[idx] += eps
            xm[idx] -= eps
            fd[idx] = (net.forward(xp)[label] - net.forward(xm)[label]) / (2 * eps)
        expected = np.abs(fd).max(axis=2)
        got = vanilla_saliency(net, x, label)
        rel = np.abs(got - expected) / np.maximum(np.abs(expected), 1e-12)
        worst = max(worst, float(rel.max()))
    elapsed = time.perf_counter() - start
    record(1, worst < 1e-3 and elapsed < 10, f"saliency vs central FD: max rel err {worst:.2e} (< 1e-3), {elapsed:.1f}s (< 10s)")


def test_ac02_sat_matches_naive_sum():
    start = time.perf_counter()
    gen = np.random.default_rng(202)
    worst = 0.0
    for _ in range(100):
        m = gen.random((16, 16))
        sat = build_sat(m)
        for top in range(13):
            for left in range(13):
                rect = Rect(top, left, 4, 4)
                expected = naive_sum(m, rect)
                worst = max(worst, abs(region_score(sat, rect) - expected) / expected)
    elapsed = time.perf_counter() - start
    record(2, worst <= 1e-4 and elapsed < 5, f"SAT region sums: max rel err {worst:.2e} (<= 1e-4), {elapsed:.1f}s (< 5s)")


def test_ac03_sampler_contracts():
    gen = np.random.default_rng(303)
    taus = (0.2, 0.4, 0.6, 0.8)
    violations = monotone_failures = 0
    for k in range(1000):
        size = int(gen.integers(8, 25))
        m = gen.random((size, size)) * (gen.random((size, size)) < gen.uniform(0.05, 1.0))
        h, w = (int(v) for v in gen.integers(1, 7, size=2))
        cs = candidate_scores(m, h, w)
        sat = build_sat(m)
        thresholds = [quantile_threshold(cs, t) for t in taus]
        if thresholds != sorted(thresholds):
            monotone_failures += 1
        threshold = quantile_threshold(cs, taus[k % 4])
        for _ in range(10):
            if region_score(sat, sample_low_region(cs, gen)) > threshold:
                violations += 1
            if region_score(sat, sample_high_region(cs, gen)) < threshold:
                violations += 1
    ok = violations == 0 and monotone_failures == 0
    record(3, ok, f"samplers: {violations} threshold violations in 20000 draws, {monotone_failures} non-monotone maps of 1000")


def test_ac04_cut_and_paste_exactness():
    start = time.perf_counter()
    gen = np.random.default_rng(404)
    failures = 0
    for k in range(500):
        h, w = (int(v) for v in gen.integers(8, 33, size=2))
        c = int(gen.choice([1, 3]))
        image = gen.uniform(0.01, 1.0, size=(h, w, c))
        sal = gen.random((h, w)) ** 3
        region = [int(gen.integers(1, h + 1)), int(gen.integers(1, w + 1))]
        policy = TransformPolicy(magnitude=int(gen.integers(0, 31)))
        cut_cfg = AugmentConfig(mode="keep-cutout", region=region, tau=float(gen.uniform(0.05, 0.95)))
        paste_cfg = AugmentConfig(mode="keep-paste", region=region, policy=policy, tau=cut_cfg.tau)

        out, info = keep_cutout(image, sal, cut_cfg, RngStream(k), return_info=True)
        mask = Rect.from_list(info["rect"]).mask(image.shape)
        zeroed = np.all(out == 0, axis=2)
        if not (np.array_equal(zeroed, mask) and np.array_equal(out[~mask], image[~mask])):
            failures += 1

        out, info = keep_paste(image, sal, paste_cfg, RngStream(k), return_info=True)
        mask = Rect.from_list(info["rect"]).mask(image.shape)
        transformed = apply_ops(image, info["ops"])
        if out[mask].tobytes() != image[mask].tobytes() or out[~mask].tobytes() != transformed[~mask].tobytes():
            failures += 1
    elapsed = time.perf_counter() - start
    record(4, failures == 0 and elapsed < 10, f"cut/paste exactness: {failures} mismatches in 500 cases, {elapsed:.1f}s (< 10s)")


def test_ac05_cutmix_lambda():
    gen = np.random.default_rng(505)
    images = gen.random((300, 32, 32, 3))
    labels = gen.integers(0, 10, 300)
    maps = gen.random((300, 32, 32))
    cfg = AugmentConfig(mode="keep-cutmix", region=16, seed=5)
    bad = mixed = 0
    results = augment_batch(images, labels, cfg, saliency_maps=maps)
    for i, res in enumerate(results):
        ya, yb = int(labels[i]), int(labels[res.info["partner"]])
        expected = ((ya, 0.75), (yb, 0.25)) if ya != yb else ((ya, 1.0),)
        mixed += ya != yb
        if res.label.entries != expected or res.info["lambda"] != 0.75:
            bad += 1
    # and the single-image operation directly
    for k in range(200):
        _, label = keep_cutmix(images[k], 1, images[k + 1], 2, maps[k], cfg, RngStream(k))
        bad += label.entries != ((1, 0.75), (2, 0.25))
    record(5, bad == 0 and mixed > 0, f"cutmix 32x32/16x16: {bad} labels differ from (yA 0.75, yB 0.25) over 500 outputs")


def test_ac06_hot_region_preserved():
    gen = np.random.default_rng(606)
    cut_cfg = AugmentConfig(mode="keep-cutout", region=8, tau=0.6)
    paste_cfg = AugmentConfig(mode="keep-paste", region=16, tau=0.6, policy=TransformPolicy(magnitude=30))
    cut_hits = paste_hits = 0
    for k in range(1000):
        top, left = (int(v) for v in gen.integers(10, 19, size=2))
        sal = gen.uniform(0.0, 1e-3, size=(32, 32))
        sal[top : top + 4, left : left + 4] = gen.uniform(0.9, 1.0, size=(4, 4))
        image = gen.uniform(0.05, 1.0, size=(32, 32, 3))
        hot = Rect(top, left, 4, 4).mask(image.shape)
        out = keep_cutout(image, sal, cut_cfg, RngStream(k))
        cut_hits += not np.array_equal(out[hot], image[hot])
        out = keep_paste(image, sal, paste_cfg, RngStream(k))
        paste_hits += not np.array_equal(out[hot], image[hot])
    ok = cut_hits == 0 and paste_hits == 0
    record(6, ok, f"hot 4x4 block, tau 0.6: cut in {cut_hits}/1000 keep-cutout draws, lost in {paste_hits}/1000 keep-paste draws")


def test_ac07_fidelity_trend():
    start = time.perf_counter()
    images, labels = stack_records(make_synthetic(2000, 32, rng=0))
    net, acc = train_toy(images, labels, epochs=10, rng=0)
    plain = fidelity_sweep(net, images, labels, "plain-cutout", [4, 8, 12], trials=3, seed=0)
    keep = fidelity_sweep(net, images, labels, "keep-cutout", [12], trials=3, seed=0, saliency_net=net)
    f = plain.fidelity
    non_increasing = all(b <= a + 0.01 for a, b in zip(f, f[1:]))
    gain = keep.fidelity[0] - f[2]
    elapsed = time.perf_counter() - start
    ok = acc >= 0.95 and non_increasing and gain >= 0.02 and elapsed < 180
    detail = (
        f"oracle acc {acc:.3f}; cutout fidelity 4/8/12 = {f[0]:.4f}/{f[1]:.4f}/{f[2]:.4f}; "
        f"keep-cutout gain at 12 = {gain:+.4f} (>= 0.02); {elapsed:.0f}s incl. training (< 180s)"
    )
    record(7, ok, detail)


def test_ac08_lowres_speedup():
    gen = np.random.default_rng(808)
    images = gen.random((50, 224, 224, 3))
    labels = gen.integers(0, 2, 50)
    net = ToyNet((224, 224, 3), 2, early_head=True, rng=0)
    net_lr = ToyNet((112, 112, 3), 2, rng=1)
    report = bench_saliency(["full", "low-res", "early-head"], images, labels, net, net_lr=net_lr, repetitions=3)
    low, early = report.speedup["low-resolution"], report.speedup["early-head"]
    ok = low >= 2.0 and early > 1.0
    record(8, ok, f"224x224 x50: low-res speedup {low:.2f}x (>= 2.0), early-head {early:.2f}x (> 1.0)")


def test_ac09_parallelism_determinism(tmp_path):
    root = tmp_path
    assert cli_main(["make-synthetic", "--n", "1000", "--size", "32", "--seed", "9", "--out", str(root / "data")]) == 0
    assert cli_main(["train-toy", "--data", str(root / "data"), "--epochs", "1", "--out", str(root / "model")]) == 0
    (root / "cfg.json").write_text(json.dumps({"mode": "keep-paste", "region": 16, "seed": 3}))
    for p in ("1", "8"):
        code = cli_main(
            [
                "augment", "--data", str(root / "data"), "--model", str(root / "model"),
                "--config", str(root / "cfg.json"), "--parallelism", p, "--out", str(root / f"out{p}"),
            ]
        )
        assert code == 0

    def digests(directory):
        # manifest.json records the output directory itself, so it is compared separately
        return {
            f.name: hashlib.sha256(f.read_bytes()).hexdigest()
            for f in sorted(directory.iterdir())
            if f.name != "manifest.json"
        }

    a, b = digests(root / "out1"), digests(root / "out8")
    ma = json.loads((root / "out1" / "manifest.json").read_text())
    mb = json.loads((root / "out8" / "manifest.json").read_text())
    ma.pop("output"), mb.pop("output")
    ok = a == b and len(a) == 1001 and ma == mb
    record(9, ok, f"augment --parallelism 1 vs 8: {len(a)} files, hashes {'identical' if a == b else 'DIFFER'}")


def test_ac10_format_roundtrips(tmp_path):
    gen = np.random.default_rng(1010)
    raw_bad = 0
    for _ in range(100):
        shape = tuple(int(v) for v in gen.integers(1, 20, size=3))
        arr = (gen.standard_normal(shape) * 10.0 ** gen.integers(-5, 6)).astype(np.float32)
        raw_bad += decode_raw(encode_raw(arr)).tobytes() != arr.tobytes()
    ppm_err = 0.0
    for _ in range(100):
        img = gen.random((int(gen.integers(1, 40)), int(gen.integers(1, 40)), 3))
        ppm_err = max(ppm_err, float(np.abs(decode_ppm(encode_ppm(img)) - img).max()))
    labels = gen.integers(0, 10, 100)
    pixels = gen.integers(0, 256, (100, 3072), dtype=np.uint8)
    (tmp_path / "data_batch.bin").write_bytes(b"".join(bytes([l]) + p.tobytes() for l, p in zip(labels, pixels)))
    records = read_cifar10(tmp_path / "data_batch.bin")
    cifar_ok = (
        len(records) == 100
        and all(r.image.shape == (32, 32, 3) and 0 <= r.image.min() and r.image.max() <= 1 for r in records)
        and [r.label for r in records] == list(labels)
        and np.array_equal(records[0].image[:, :, 0].reshape(-1) * 255, pixels[0, :1024])
    )
    ok = raw_bad == 0 and ppm_err <= 1 / 510 and cifar_ok
    detail = f"raw: {raw_bad}/100 inexact; PPM max err {ppm_err:.5f} (<= {1 / 510:.5f}); CIFAR 100 records {'ok' if cifar_ok else 'BAD'}"
    record(10, ok, detail)
