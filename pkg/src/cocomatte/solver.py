"""Trimap-to-alpha solvers.

The built-in solver minimises the closed-form matting energy
``a' L a + lambda_c (a - t)' D (a - t)`` where ``L`` is the matting
Laplacian built from local colour windows and ``D`` marks trimap pixels of
known value. The normal equations are solved with Jacobi-preconditioned
conjugate gradient. Any trimap-based network can be plugged in instead
through :func:`run_external_backend`.
"""

from __future__ import annotations

import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numpy.lib.stride_tricks import sliding_window_view

from . import pngio
from .errors import (
    BackendFailed,
    BackendTimeout,
    BadOutput,
    DimensionMismatch,
    IllPosed,
    ImageTooSmall,
    NotConverged,
)
from .trimap import regions

PLACEHOLDERS = ("{image}", "{trimap}", "{out}")


@dataclass
class SolverConfig:
    window_radius: int = 1
    epsilon_reg: float = 1e-7
    constraint_weight: float = 100.0
    # 1e-6 leaves errors near 0.1 on poorly conditioned 8x8 systems
    cg_tolerance: float = 1e-8
    max_iterations: int = 2000

    def __post_init__(self):
        if self.window_radius < 1:
            raise ValueError("window_radius must be >= 1")
        if self.epsilon_reg <= 0 or self.constraint_weight <= 0:
            raise ValueError("epsilon_reg and constraint_weight must be positive")


@dataclass
class ExternalBackendConfig:
    command_template: str
    timeout: float = 300.0

    def __post_init__(self):
        missing = [p for p in PLACEHOLDERS if p not in self.command_template]
        if missing:
            raise ValueError(f"command template lacks placeholders {missing}")


def _as_image(image) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"image must be HxW, HxWx1 or HxWx3, got {img.shape}")
    return img


def build_matting_laplacian(image, cfg: SolverConfig | None = None) -> sp.csr_matrix:
    """Sparse N x N matting Laplacian over all fully interior windows."""
    cfg = cfg or SolverConfig()
    img = _as_image(image)
    h, w, c = img.shape
    ws = 2 * cfg.window_radius + 1
    if h < ws or w < ws:
        raise ImageTooSmall(f"image {h}x{w} is smaller than the {ws}x{ws} window")
    n = ws * ws

    idx = np.arange(h * w).reshape(h, w)
    win_idx = sliding_window_view(idx, (ws, ws)).reshape(-1, n)
    win = img.reshape(-1, c)[win_idx]  # (K, n, c)
    dev = win - win.mean(axis=1, keepdims=True)
    cov = np.einsum("kni,knj->kij", dev, dev) / n
    inv = np.linalg.inv(cov + (cfg.epsilon_reg / n) * np.eye(c))
    affinity = (1.0 + np.einsum("kni,kij,kmj->knm", dev, inv, dev)) / n
    vals = np.eye(n) - affinity

    rows = np.broadcast_to(win_idx[:, :, None], vals.shape)
    cols = np.broadcast_to(win_idx[:, None, :], vals.shape)
    off = rows != cols
    N = h * w
    lap = sp.coo_matrix((vals[off], (rows[off], cols[off])), shape=(N, N)).tocsr()
    # window blocks are symmetric up to rounding; make the sum symmetric exactly
    lap = ((lap + lap.T) * 0.5).tocsr()
    # Diagonal from the off-diagonal row sums: near-singular window covariances
    # amplify rounding in the direct per-window diagonal by up to n / epsilon.
    return (lap - sp.diags(np.asarray(lap.sum(axis=1)).ravel())).tocsr()


def conjugate_gradient(A, b, x0, tol: float, max_iterations: int):
    """Jacobi-preconditioned CG. Returns ``(x, relative_residual, iterations)``."""
    x = np.array(x0, dtype=np.float64)
    diag = A.diagonal()
    inv_diag = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 1.0)
    b_norm = np.linalg.norm(b)
    if b_norm == 0:
        return np.zeros_like(x), 0.0, 0
    r = b - A @ x
    rel = np.linalg.norm(r) / b_norm
    if rel <= tol:
        return x, rel, 0
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    for it in range(1, max_iterations + 1):
        Ap = A @ p
        step = rz / (p @ Ap)
        x += step * p
        r -= step * Ap
        rel = np.linalg.norm(r) / b_norm
        if rel <= tol:
            return x, rel, it
        z = inv_diag * r
        rz_next = r @ z
        p = z + (rz_next / rz) * p
        rz = rz_next
    # recompute from scratch so the reported residual is not a recurrence artefact
    rel = np.linalg.norm(b - A @ x) / b_norm
    return x, rel, max_iterations


def matting_system(image, trimap, cfg: SolverConfig | None = None):
    """Return ``(A, b, x0)`` for ``(L + lambda_c D) a = lambda_c D t``."""
    cfg = cfg or SolverConfig()
    fg, bg, unk = regions(trimap)
    known = (fg | bg).ravel().astype(np.float64)
    t = fg.ravel().astype(np.float64)
    lap = build_matting_laplacian(image, cfg)
    lam = cfg.constraint_weight
    A = (lap + sp.diags(lam * known)).tocsr()
    b = lam * known * t
    x0 = np.where(unk.ravel(), 0.5, t)
    return A, b, x0


def _check_inputs(image, trimap):
    tri = np.asarray(trimap, dtype=np.float64)
    if np.shape(image)[:2] != tri.shape:
        raise DimensionMismatch(f"image {np.shape(image)[:2]} vs trimap {tri.shape}")
    return tri


def solve_alpha_unclamped(image, trimap, cfg: SolverConfig | None = None) -> np.ndarray:
    cfg = cfg or SolverConfig()
    tri = _check_inputs(image, trimap)
    fg, bg, unk = regions(tri)
    if not unk.any():
        return fg.astype(np.float64)
    if not fg.any() or not bg.any():
        raise IllPosed("trimap has unknown pixels but lacks foreground or background")
    A, b, x0 = matting_system(image, tri, cfg)
    x, rel, iters = conjugate_gradient(A, b, x0, cfg.cg_tolerance, cfg.max_iterations)
    if not rel <= cfg.cg_tolerance:
        raise NotConverged(float(rel), iters)
    return x.reshape(tri.shape)


def solve_alpha(image, trimap, cfg: SolverConfig | None = None) -> np.ndarray:
    """Closed-form matte for ``image`` given a {0, 0.5, 1} trimap, clamped to [0, 1]."""
    return np.clip(solve_alpha_unclamped(image, trimap, cfg), 0.0, 1.0)


def format_command(template: str, image_path, trimap_path, out_path) -> list[str]:
    cmd = template
    for key, value in (("{image}", image_path), ("{trimap}", trimap_path), ("{out}", out_path)):
        cmd = cmd.replace(key, shlex.quote(os.fspath(value)))
    return shlex.split(cmd)


def run_external_backend(image_path, trimap_path, cfg: ExternalBackendConfig, out_path=None) -> np.ndarray:
    """Run an external matting command and read its 8-bit grayscale output."""
    expected = pngio.read_gray_uint8(trimap_path).shape
    with tempfile.TemporaryDirectory() as tmp:
        out = out_path or os.path.join(tmp, "alpha.png")
        argv = format_command(cfg.command_template, image_path, trimap_path, out)
        try:
            proc = subprocess.run(argv, capture_output=True, timeout=cfg.timeout, check=False)
        except subprocess.TimeoutExpired as exc:
            raise BackendTimeout(f"backend exceeded {cfg.timeout}s: {argv[0]}") from exc
        except OSError as exc:
            raise BackendFailed(f"could not launch {argv[0]}: {exc}") from exc
        if proc.returncode != 0:
            tail = proc.stderr.decode(errors="replace").strip()[-500:]
            raise BackendFailed(f"backend exited with status {proc.returncode}: {tail}")
        if not os.path.exists(out):
            raise BadOutput(f"backend wrote no output at {out}")
        try:
            alpha = pngio.read_gray(out)
        except Exception as exc:  # PIL raises a variety of types for bad files
            raise BadOutput(f"unreadable backend output: {exc}") from exc
        if alpha.shape != expected:
            raise BadOutput(f"backend output {alpha.shape} does not match trimap {expected}")
        return alpha

