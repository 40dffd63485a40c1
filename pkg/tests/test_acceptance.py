"""Acceptance gate: one test per criterion, summarized at the end of the run."""

import math
import time

import numpy as np
import pytest

from cocomatte.coco_ingest import RleSegmentation, compress_rle, decode_counts_string, decode_rle, encode_rle
from cocomatte.fusion import BELOW_TAU, DISJOINT, FusionConfig, fuse_accessories
from cocomatte.losses import GhmConfig, ghm_trimap_loss, ghm_weights, matting_loss, regularization_loss, total_loss
from cocomatte.mask_ops import dilate, erode
from cocomatte.metrics import all_metrics, conn_metric, grad_metric, imq, pixel_metrics
from cocomatte.pipeline import INDEX_NAME, PipelineConfig, build_dataset, evaluate
from cocomatte.solver import SolverConfig, build_matting_laplacian, solve_alpha_unclamped
from cocomatte.synthetic import BALL, BOTTLE, PERSON, TIE, composite_instance, scenes, write_config, write_scene_set
from cocomatte.trimap import BG, FG, UNK, TrimapConfig, adaptive_kernel_size, make_trimap
from oracles import brute_dilate, brute_erode, conn_loop, dense_alpha, dense_laplacian, ghm_two_pass, grad_loop

SEED = 7


def report(label, ok):
    print(f"{label}: {'pass' if ok else 'FAIL'}")
    assert ok


@pytest.mark.acceptance(1, "morphology matches brute force")
def test_ac01_morphology():
    rng = np.random.default_rng(SEED)
    elapsed = 0.0
    ok = True
    for _ in range(200):
        h, w = rng.integers(1, 33, size=2)
        m = rng.random((h, w)) < rng.uniform(0.05, 0.95)
        k = int(rng.integers(1, 9))
        t0 = time.perf_counter()
        d, e = dilate(m, k), erode(m, k)
        elapsed += time.perf_counter() - t0
        ok &= np.array_equal(d, brute_dilate(m, k))
        ok &= np.array_equal(e, brute_erode(m, k))
        ok &= np.array_equal(e, ~dilate(~m, k))
    print(f"AC01 fast-path time {elapsed:.3f}s")
    report("AC01 morphology", ok and elapsed < 10)


def _scene(sid):
    sc = next(s for s in scenes() if s["id"] == sid)
    insts = sc["instances"]
    human = next(i for i in insts if i["category_id"] == PERSON)
    others = [(i["id"], i["category_id"], i["mask"]) for i in insts if i is not human]
    return (human["id"], human["mask"]), others


@pytest.mark.acceptance(2, "fusion scenes and tau monotonicity")
def test_ac02_fusion():
    cfg = FusionConfig(tau=0.8, filter_dilate_k=4, accessory_ids={TIE, BOTTLE, BALL})
    tie = fuse_accessories(*_scene(1), cfg)
    ball = fuse_accessories(*_scene(2), cfg)
    bottle = fuse_accessories(*_scene(3), cfg)
    ok = tie.merged_ids == [102] and tie.skipped_ids == []
    ok &= ball.merged_ids == [] and ball.skipped_ids == [(202, DISJOINT)]
    ok &= bottle.merged_ids == [] and (302, BELOW_TAU) in bottle.skipped_ids

    rng = np.random.default_rng(SEED)
    for _ in range(30):
        human = np.zeros((48, 48), bool)
        r, c = rng.integers(0, 20, 2)
        human[r : r + 24, c : c + 20] = True
        others = []
        for j in range(5):
            m = np.zeros((48, 48), bool)
            rr, cc = rng.integers(0, 40, 2)
            hh, ww = rng.integers(2, 12, 2)
            m[rr : rr + hh, cc : cc + ww] = True
            others.append((10 + j, int(rng.choice([TIE, BOTTLE, BALL])), m))
        merged = [set(fuse_accessories((1, human), others, FusionConfig(tau=t, accessory_ids={TIE, BOTTLE})).merged_ids) for t in (0.5, 0.8, 0.95)]
        ok &= merged[0] >= merged[1] >= merged[2]
    report("AC02 fusion", bool(ok))


@pytest.mark.acceptance(3, "adaptive kernel size")
def test_ac03_adaptive_kernel():
    ok = adaptive_kernel_size(np.ones((120, 120), bool), 12) == 10
    ok &= adaptive_kernel_size(np.ones((6, 6), bool), 12) == 1
    report("AC03 adaptive kernel", ok)


@pytest.mark.acceptance(4, "trimap partition")
def test_ac04_trimap():
    rng = np.random.default_rng(SEED)
    ok = True
    for _ in range(100):
        h, w = rng.integers(8, 41, size=2)
        m = np.zeros((h, w), bool)
        for _ in range(rng.integers(1, 4)):
            r0, c0 = rng.integers(0, h), rng.integers(0, w)
            m[r0 : r0 + rng.integers(1, h), c0 : c0 + rng.integers(1, w)] = True
        m ^= rng.random((h, w)) < 0.03
        if not m.any():
            m[h // 2, w // 2] = True
        tri, omega = make_trimap(m, TrimapConfig(), return_omega=True)
        grown = brute_dilate(m, 4)
        fg, bg, unk = tri == FG, tri == BG, tri == UNK
        ok &= bool(((fg.astype(int) + bg + unk) == 1).all())
        ok &= not (fg & ~grown).any() and not (bg & grown).any()
        ok &= omega == max(1, math.floor(math.sqrt(grown.sum()) / 12 + 0.5))
        ok &= np.array_equal(fg, brute_erode(grown, omega)) and np.array_equal(bg, brute_erode(~grown, omega))
    report("AC04 trimap partition", ok)


@pytest.mark.acceptance(5, "solver agrees with dense solve")
def test_ac05_solver():
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    worst_cg = worst_known = worst_sym = worst_row = 0.0
    for n in range(20):
        # even trials: noise images with random trimaps; odd trials: exact two-color composites
        if n % 2 == 0:
            img = rng.random((8, 8, 3))
            tri = np.full((8, 8), 0.5)
            tri[:, :2], tri[:, -2:] = 1.0, 0.0
            extra = rng.random((8, 8)) < 0.2
            tri[extra] = rng.choice([0.0, 1.0], size=extra.sum())
        else:
            img, tri, _ = composite_instance(rng)
        L = build_matting_laplacian(img)
        worst_sym = max(worst_sym, abs(L - L.T).max())
        worst_row = max(worst_row, np.abs(L @ np.ones(64)).max())
        if n < 4:
            assert np.allclose(L.toarray(), dense_laplacian(img), rtol=0, atol=1e-8)
        raw = solve_alpha_unclamped(img, tri, SolverConfig())
        worst_cg = max(worst_cg, np.abs(raw - dense_alpha(img, tri)).max())
        if n % 2:
            worst_known = max(worst_known, np.abs(raw - tri)[tri != UNK].max())
    elapsed = time.perf_counter() - t0
    print(f"AC05 cg-vs-dense {worst_cg:.2e}, symmetry {worst_sym:.1e}, row sum {worst_row:.1e}, known {worst_known:.1e}, {elapsed:.2f}s")
    report("AC05 solver", worst_cg <= 1e-4 and worst_sym <= 1e-10 and worst_row <= 1e-10 and worst_known <= 0.01 and elapsed < 30)


@pytest.mark.acceptance(6, "loss identities")
def test_ac06_losses():
    rng = np.random.default_rng(SEED)
    a = rng.random((16, 16))
    tri = rng.choice([0.0, 0.5, 1.0], size=a.shape)
    ok = matting_loss(a, a, tri)[0] == 0.0
    ok &= abs(regularization_loss(np.full((8, 8), 0.5), rng.random((8, 8))) - math.log(2)) <= 1e-9
    p = np.zeros((8, 8, 3))
    p[..., 0] = p[..., 2] = 0.5
    ok &= abs(ghm_trimap_loss(p, np.zeros((8, 8)), GhmConfig(10)) - (-math.log(0.5)) / 10) <= 1e-9
    for _ in range(50):
        shape = tuple(int(s) for s in rng.integers(2, 20, 2))
        e = np.exp(rng.normal(size=shape + (3,)) * 2)
        probs = e / e.sum(axis=2, keepdims=True)
        cls = rng.integers(0, 3, size=shape)
        p_true = np.take_along_axis(probs, cls[..., None], axis=2)[..., 0]
        bins = np.minimum(np.floor((1 - p_true) * 10), 9)
        w = ghm_weights(p_true, 10)
        ok &= abs(w.sum() - len(np.unique(bins)) * p_true.size / 10) <= 1e-9
        loss = ghm_trimap_loss(probs, np.array([0.0, 0.5, 1.0])[cls])
        ref, ref_wsum = ghm_two_pass(probs, cls, 10)
        ok &= abs(loss - ref) <= 1e-9 and abs(ref_wsum - w.sum()) <= 1e-9
    ok &= abs(total_loss((1.0, 1.0, 1.0)) - 1.25) <= 1e-12
    report("AC06 losses", ok)


@pytest.mark.acceptance(7, "metric identities and oracles")
def test_ac07_metrics():
    rng = np.random.default_rng(SEED)
    a = rng.random((16, 16))
    ok = all(v == 0 for v in all_metrics(a, a).values())
    sad, mse, mad = pixel_metrics(np.full((40, 50), 0.5), np.zeros((40, 50)))
    ok &= abs(sad - 1.0) < 1e-12 and abs(mse - 0.25) < 1e-12 and abs(mad - 0.5) < 1e-12
    ok &= abs(grad_metric(a + 0.2, a)) < 1e-12
    for _ in range(5):
        p, g = rng.random((16, 16)), rng.random((16, 16))
        d = p - g
        ok &= abs(pixel_metrics(p, g)[0] - sum(abs(x) for x in d.ravel()) / 1000) <= 1e-8
        ok &= abs(pixel_metrics(p, g)[1] - sum(x * x for x in d.ravel()) / d.size) <= 1e-8
        ok &= abs(grad_metric(p, g) - grad_loop(p, g)) <= 1e-8
        ok &= abs(conn_metric(p, g) - conn_loop(p, g)) <= 1e-8
    report("AC07 metrics", ok)


def _blob(r0, r1, c0, c1):
    a = np.zeros((24, 24))
    a[r0:r1, c0:c1] = 1.0
    return a


@pytest.mark.acceptance(8, "IMQ properties")
def test_ac08_imq():
    rng = np.random.default_rng(SEED)
    gts = [(1, _blob(0, 10, 0, 10)), (2, _blob(12, 24, 12, 24)), (3, _blob(0, 8, 14, 24))]
    ok = imq(gts, gts) == 100.0
    ok &= imq([], gts) == 0.0
    ok &= imq([(5, _blob(0, 10, 0, 10)), (6, _blob(14, 20, 0, 6))], [gts[0]]) == 50.0
    preds = [(10 + i, np.clip(a + 0.2 * rng.random(a.shape), 0, 1)) for i, a in gts] + [(20, _blob(14, 22, 2, 10))]
    base = imq(preds, gts)
    for _ in range(10):
        ok &= imq([preds[k] for k in rng.permutation(4)], [gts[k] for k in rng.permutation(3)]) == pytest.approx(base, abs=1e-12)
    report("AC08 IMQ", ok)


def _snapshot(out):
    return {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}


@pytest.mark.acceptance(9, "end-to-end golden run")
def test_ac09_golden_run(tmp_path):
    t0 = time.perf_counter()
    write_scene_set(tmp_path, seed=SEED)
    cfg = PipelineConfig.load(write_config(tmp_path))
    records, summary = build_dataset(cfg)
    first = _snapshot(cfg.output_dir)
    build_dataset(cfg)
    second = _snapshot(cfg.output_dir)
    retained = summary["human_instances"]
    self_eval = evaluate(cfg.output_dir / "alphas", cfg.output_dir / "alphas")
    elapsed = time.perf_counter() - t0
    print(f"AC09 {len(records)} records for {retained} retained humans, {len(first)} files, {elapsed:.2f}s")
    ok = first == second and INDEX_NAME in first
    ok &= len(records) == retained == 6 and summary["images"] == 5
    ok &= all(v == 0 for v in self_eval.aggregate.values()) and len(self_eval.per_image) == summary["active"]
    report("AC09 golden run", ok and elapsed < 60)


@pytest.mark.acceptance(10, "RLE round trip and compressed fixtures")
def test_ac10_rle():
    rng = np.random.default_rng(SEED)
    ok = True
    for _ in range(500):
        h, w = rng.integers(1, 40, size=2)
        m = rng.random((h, w)) < rng.uniform(0, 1)
        rle = encode_rle(m)
        ok &= np.array_equal(decode_rle(rle), m) and np.array_equal(decode_rle(compress_rle(rle)), m)
    # hand-decoded: 'i' = 57 -> low bits 25 with continuation, '0' ends it
    ok &= decode_counts_string("i0") == [25]
    # '4', '2', '5' at indices 3..5 are deltas on the count two places back
    ok &= decode_counts_string("312425") == [3, 1, 2, 5, 4, 10]
    # 'O' = 31 -> sign-extended -1, so the fourth run is 1 - 1
    ok &= decode_counts_string("111O") == [1, 1, 1, 0]
    ok &= decode_rle(RleSegmentation((2, 3), "222")).astype(int).tolist() == [[0, 1, 0], [0, 1, 0]]
    report("AC10 RLE", ok)
