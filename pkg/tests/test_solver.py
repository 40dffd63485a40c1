import sys

import numpy as np
import pytest

from cocomatte import pngio
from cocomatte.errors import BackendFailed, BackendTimeout, BadOutput, DimensionMismatch, IllPosed, ImageTooSmall, NotConverged
from cocomatte.solver import (
    ExternalBackendConfig,
    SolverConfig,
    build_matting_laplacian,
    run_external_backend,
    solve_alpha,
    solve_alpha_unclamped,
)
from cocomatte.synthetic import composite_instance
from cocomatte.trimap import UNK
from oracles import dense_alpha, dense_laplacian


def random_trimap(rng, h=8, w=8):
    """Left columns FG, right columns BG, random unknown pixels in between."""
    tri = np.full((h, w), 0.5)
    tri[:, :2] = 1.0
    tri[:, -2:] = 0.0
    extra = rng.random((h, w)) < 0.2
    tri[extra] = rng.choice([0.0, 1.0], size=extra.sum())
    return tri


def test_constant_image_single_window():
    img = np.full((3, 3, 3), 0.4)
    L = build_matting_laplacian(img).toarray()
    np.testing.assert_allclose(L, np.eye(9) - np.ones((9, 9)) / 9, atol=1e-12)
    np.testing.assert_allclose(L.sum(axis=1), 0, atol=1e-10)


@pytest.mark.parametrize("channels", [1, 3])
def test_laplacian_matches_dense_oracle(rng, channels):
    img = rng.random((6, 6, channels))
    L = build_matting_laplacian(img).toarray()
    np.testing.assert_allclose(L, dense_laplacian(img), atol=1e-9, rtol=0)


def test_grayscale_2d_input(rng):
    img = rng.random((5, 6))
    np.testing.assert_allclose(
        build_matting_laplacian(img).toarray(), build_matting_laplacian(img[:, :, None]).toarray()
    )


def test_laplacian_structure(rng):
    for _ in range(5):
        img = rng.random((7, 9, 3))
        L = build_matting_laplacian(img)
        assert abs(L - L.T).max() <= 1e-10
        assert np.abs(L @ np.ones(L.shape[0])).max() <= 1e-10
        for _ in range(5):
            x = rng.normal(size=L.shape[0])
            assert x @ (L @ x) >= -1e-8


def test_window_radius_two(rng):
    img = rng.random((6, 7, 3))
    cfg = SolverConfig(window_radius=2)
    np.testing.assert_allclose(build_matting_laplacian(img, cfg).toarray(), dense_laplacian(img, r=2), atol=1e-9)


def test_image_too_small():
    with pytest.raises(ImageTooSmall):
        build_matting_laplacian(np.zeros((2, 5, 3)))


def test_fully_known_trimap_returned_exactly(rng):
    tri = (rng.random((6, 6)) > 0.5).astype(float)
    np.testing.assert_array_equal(solve_alpha(rng.random((6, 6, 3)), tri), tri)


def test_gradient_band_monotone():
    h = w = 8
    img = np.zeros((h, w, 3))
    img[:, :3] = 1.0
    img[:, 3] = 2 / 3
    img[:, 4] = 1 / 3
    tri = np.full((h, w), 0.5)
    tri[:, :3] = 1.0
    tri[:, 5:] = 0.0
    alpha = solve_alpha(img, tri)
    oracle = dense_alpha(img, tri)
    np.testing.assert_allclose(alpha, np.clip(oracle, 0, 1), atol=1e-4)
    assert (alpha >= 0).all() and (alpha <= 1).all()
    assert (np.diff(alpha, axis=1) <= 1e-6).all()


def test_cg_matches_dense_solve(rng):
    for _ in range(5):
        img = rng.random((8, 8, 3))
        tri = random_trimap(rng)
        raw = solve_alpha_unclamped(img, tri)
        np.testing.assert_allclose(raw, dense_alpha(img, tri), atol=1e-4)


def test_known_pixel_residual_on_composites(rng):
    for _ in range(10):
        img, tri, alpha = composite_instance(rng)
        raw = solve_alpha_unclamped(img, tri)
        known = tri != UNK
        assert np.abs(raw - tri)[known].max() <= 0.01
        np.testing.assert_allclose(raw, alpha, atol=1e-3)


def test_known_pixels_can_drift_on_noise(rng):
    # conflicting constraints on pure noise are pulled by up to ||L|| / weight
    img = rng.random((8, 8, 3))
    tri = random_trimap(rng)
    drift = np.abs(dense_alpha(img, tri) - tri)[tri != UNK].max()
    assert 0 < drift <= 9 / 100


def test_deterministic(rng):
    img = rng.random((8, 8, 3))
    tri = random_trimap(rng)
    np.testing.assert_array_equal(solve_alpha(img, tri), solve_alpha(img, tri))


def test_flipping_fg_to_bg_never_raises_alpha(rng):
    img = np.full((7, 7), 0.3)
    for _ in range(5):
        tri = random_trimap(rng, 7, 7)
        fg = np.argwhere(tri == 1.0)
        r, c = fg[rng.integers(len(fg))]
        flipped = tri.copy()
        flipped[r, c] = 0.0
        before = dense_alpha(img, tri)
        after = dense_alpha(img, flipped)
        assert (after <= before + 1e-12).all()
        np.testing.assert_allclose(solve_alpha_unclamped(img, flipped), after, atol=1e-4)


def test_errors(rng):
    img = rng.random((8, 8, 3))
    with pytest.raises(DimensionMismatch):
        solve_alpha(img, np.zeros((7, 8)))
    only_fg = np.full((8, 8), 0.5)
    only_fg[:, :2] = 1
    with pytest.raises(IllPosed):
        solve_alpha(img, only_fg)
    with pytest.raises(NotConverged) as info:
        solve_alpha(img, random_trimap(rng), SolverConfig(max_iterations=2))
    assert info.value.residual > 1e-6


# --- external backend ----------------------------------------------------------

COPY_BACKEND = "import shutil, sys; shutil.copy(sys.argv[2], sys.argv[3])"


def _files(tmp_path, rng):
    img_path = tmp_path / "img.png"
    tri_path = tmp_path / "tri.png"
    pngio.write_uint8(img_path, (rng.random((6, 5, 3)) * 255).astype(np.uint8))
    pngio.write_uint8(tri_path, np.array([[0, 128, 255, 255, 0]] * 6, dtype=np.uint8))
    return img_path, tri_path


def _script(tmp_path, body):
    path = tmp_path / "backend.py"
    path.write_text(body)
    return f"{sys.executable} {path} {{image}} {{trimap}} {{out}}"


def test_identity_backend(tmp_path, rng):
    img, tri = _files(tmp_path, rng)
    cfg = ExternalBackendConfig(_script(tmp_path, COPY_BACKEND))
    alpha = run_external_backend(img, tri, cfg)
    np.testing.assert_allclose(alpha, pngio.read_gray(tri))


def test_backend_failure(tmp_path, rng):
    img, tri = _files(tmp_path, rng)
    with pytest.raises(BackendFailed):
        run_external_backend(img, tri, ExternalBackendConfig(_script(tmp_path, "import sys; sys.exit(1)")))


def test_backend_wrong_size(tmp_path, rng):
    img, tri = _files(tmp_path, rng)
    body = "import sys\nfrom PIL import Image\nImage.new('L', (3, 3)).save(sys.argv[3])\n"
    with pytest.raises(BadOutput):
        run_external_backend(img, tri, ExternalBackendConfig(_script(tmp_path, body)))


def test_backend_missing_output(tmp_path, rng):
    img, tri = _files(tmp_path, rng)
    with pytest.raises(BadOutput):
        run_external_backend(img, tri, ExternalBackendConfig(_script(tmp_path, "pass")))


def test_backend_timeout(tmp_path, rng):
    img, tri = _files(tmp_path, rng)
    cfg = ExternalBackendConfig(_script(tmp_path, "import time; time.sleep(5)"), timeout=0.3)
    with pytest.raises(BackendTimeout):
        run_external_backend(img, tri, cfg)


def test_template_requires_placeholders():
    with pytest.raises(ValueError):
        ExternalBackendConfig("matte {image} {out}")


def test_paths_with_spaces(tmp_path, rng):
    sub = tmp_path / "dir with space"
    sub.mkdir()
    img, tri = _files(sub, rng)
    alpha = run_external_backend(img, tri, ExternalBackendConfig(_script(tmp_path, COPY_BACKEND)))
    assert alpha.shape == (6, 5)
