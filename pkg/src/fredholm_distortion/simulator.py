"""Forward rendering of point-source scenes through a distorted PSF kernel.

For a point-source object the imaging integral collapses to::

    I(u, v) = sum_s flux_s * p(u - x_s + f(u, v, x_s, y_s), v - y_s + g(u, v, x_s, y_s))

evaluated at every pixel center. ``p`` is the reference PSF and ``f, g`` are
the distortion functions. Each source only touches the pixels where the
warped argument falls inside the PSF support, so rendering works on a
window around the (displaced) PSF center of every source.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distortion import (DEFAULT_MONOMIALS, DistortionPolynomial, eval_f, eval_g,
                         polynomial_from_config)
from .grid import PointSourceScene, ScalarField, axis_coords, block_downsample

__all__ = [
    "NoDistortion",
    "PolynomialDistortion",
    "LogarithmicDistortion",
    "NoiseSpec",
    "SINGLE_TERM_CATALOG",
    "render_fredholm",
    "render_sources",
    "add_poisson_noise",
    "render_downsampled_scene",
    "rendered_fluxes",
    "distortion_from_config",
    "PolynomialRenderer",
]


@dataclass(frozen=True)
class NoDistortion:
    """Shift-invariant imaging, ``f = g = 0``."""

    def fg(self, u, v, x, y):
        return 0.0, 0.0


@dataclass(frozen=True)
class PolynomialDistortion:
    poly: DistortionPolynomial

    def fg(self, u, v, x, y):
        return eval_f(self.poly, u, v, x, y), eval_g(self.poly, u, v, x, y)


@dataclass(frozen=True)
class LogarithmicDistortion:
    """``f = cf * x * log(1 + scale (u^2 + v^2))``, ``g = cg * y * log(...)``."""

    cf: float = 1.0
    cg: float = 1.0
    scale: float = 1e-5

    def __post_init__(self):
        if self.scale < 0:
            raise ValueError("scale must be >= 0")

    def fg(self, u, v, x, y):
        lg = np.log1p(self.scale * (np.asarray(u) ** 2 + np.asarray(v) ** 2))
        return self.cf * x * lg, self.cg * y * lg


@dataclass(frozen=True)
class NoiseSpec:
    """Additive Poisson background of mean ``lam`` per pixel.

    Draws come from numpy's PCG64 generator seeded with ``seed``.
    """

    lam: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")


# Single-term f distortions with their demonstration coefficients, keyed by
# monomial label; values are (i, j, m, n, coefficient).
SINGLE_TERM_CATALOG = {
    "ux": (1, 0, 1, 0, 5e-4),
    "vx": (1, 0, 0, 1, 1e-3),
    "u2x": (1, 0, 2, 0, 3e-6),
    "v2x": (1, 0, 0, 2, 3e-6),
    "uvx": (1, 0, 1, 1, 3e-6),
    "u2x2": (2, 0, 2, 0, 1e-8),
    "v2x2": (2, 0, 0, 2, 1e-8),
    "uvx2": (2, 0, 1, 1, 1e-8),
}


def _psf_center(fg, x, y, radius, max_iter=60):
    """Solve ``u = x - f(u, v, x, y)``, ``v = y - g(...)`` by fixed-point iteration.

    Returns None when the iteration does not settle.
    """
    uc, vc = x, y
    for _ in range(max_iter):
        with np.errstate(all="ignore"):
            f, g = fg(uc, vc, x, y)
            un, vn = x - float(f), y - float(g)
        if not (math.isfinite(un) and math.isfinite(vn)):
            return None
        if abs(un - uc) < 1e-3 and abs(vn - vc) < 1e-3:
            return un, vn
        uc, vc = un, vn
    return None


def _windows(canvas, center, half):
    """Row and column index ranges of a square window, clipped to the canvas."""
    w, h = canvas
    if center is None:
        return (0, h), (0, w)
    cu, cv = center
    c = int(round(cu + (w - 1) / 2.0))
    r = int(round(cv + (h - 1) / 2.0))
    # a window wholly off the canvas collapses to an empty range
    r0 = min(max(r - half, 0), h)
    c0 = min(max(c - half, 0), w)
    return ((r0, max(min(r + half + 1, h), r0)),
            (c0, max(min(c + half + 1, w), c0)))


def _edge_active(vals, rows, cols, canvas):
    """True if the window cuts through non-zero PSF values away from the canvas edge."""
    w, h = canvas
    if vals.size == 0:
        return False
    return ((rows[0] > 0 and vals[0].any()) or (rows[1] < h and vals[-1].any())
            or (cols[0] > 0 and vals[:, 0].any()) or (cols[1] < w and vals[:, -1].any()))


def render_sources(xs, ys, fluxes, canvas, psf, fg=None) -> np.ndarray:
    """Render point sources as a ``(height, width)`` array.

    ``fg(u, v, x, y)`` returns the distortion pair; ``None`` renders
    undistorted PSFs. Sources need not lie on the canvas.
    """
    w, h = canvas
    uu = axis_coords(w)
    vv = axis_coords(h)
    image = np.zeros((h, w))
    base_half = int(math.ceil(psf.support_radius)) + 2
    for x, y, flux in zip(np.asarray(xs, float), np.asarray(ys, float),
                          np.asarray(fluxes, float)):
        if flux == 0:
            continue
        center = (x, y) if fg is None else _psf_center(fg, x, y, psf.support_radius)
        half = base_half
        while True:
            rows, cols = _windows(canvas, center, half)
            u = uu[cols[0]:cols[1]][None, :]
            v = vv[rows[0]:rows[1]][:, None]
            if fg is None:
                du, dv = u - x, v - y
            else:
                f, g = fg(u, v, x, y)
                du, dv = u - x + f, v - y + g
            du, dv = np.broadcast_arrays(du, dv)
            vals = flux * psf(du, dv)
            if center is None or not _edge_active(vals, rows, cols, canvas):
                break
            if rows == (0, h) and cols == (0, w):
                break
            half *= 2
        image[rows[0]:rows[1], cols[0]:cols[1]] += vals
    return image


def render_fredholm(scene: PointSourceScene, psf, distortion=None) -> ScalarField:
    """Impulse-sampled image of ``scene`` through the distorted kernel."""
    distortion = distortion or NoDistortion()
    fg = None if isinstance(distortion, NoDistortion) else distortion.fg
    return ScalarField(render_sources(scene.x, scene.y, scene.flux, scene.canvas, psf, fg))


def rendered_fluxes(scene: PointSourceScene, psf, distortion=None) -> np.ndarray:
    """Per-source flux actually deposited on the canvas.

    Warping changes the kernel's integral, so these differ from the nominal
    fluxes under distortion.
    """
    distortion = distortion or NoDistortion()
    fg = None if isinstance(distortion, NoDistortion) else distortion.fg
    return np.array([render_sources([x], [y], [fl], scene.canvas, psf, fg).sum()
                     for x, y, fl in scene.sources])


def add_poisson_noise(image: ScalarField, noise: NoiseSpec) -> ScalarField:
    """Add an independent Poisson(``lam``) background draw to every pixel."""
    if np.any(image.data < 0):
        raise ValueError("image has negative pixels")
    if noise.lam == 0:
        return image
    rng = np.random.default_rng(noise.seed)
    return ScalarField(image.data + rng.poisson(noise.lam, size=image.shape))


def render_downsampled_scene(scene: PointSourceScene, psf, distortion=None,
                             factor: int = 1) -> ScalarField:
    """Render at full resolution, then sum ``factor x factor`` pixel blocks."""
    w, h = scene.canvas
    if w % factor or h % factor:
        raise ValueError(f"canvas {w}x{h} not divisible by {factor}")
    return block_downsample(render_fredholm(scene, psf, distortion), factor)


def distortion_from_config(cfg):
    """``None``/``{}`` (no distortion), ``{"logarithmic": {...}}`` or a polynomial block."""
    if not cfg or cfg.get("none"):
        return NoDistortion()
    if "logarithmic" in cfg:
        lg = cfg["logarithmic"]
        return LogarithmicDistortion(float(lg.get("cf", 1.0)), float(lg.get("cg", 1.0)),
                                     float(lg.get("scale", 1e-5)))
    if "single_term" in cfg:
        i, j, m, n, c = SINGLE_TERM_CATALOG[cfg["single_term"]]
        c = float(cfg.get("c", c))
        from .distortion import MonomialTerm
        return PolynomialDistortion(DistortionPolynomial((MonomialTerm(i, j, m, n, c),)))
    return PolynomialDistortion(polynomial_from_config(cfg))


class PolynomialRenderer:
    """Repeated rendering of one scene for many coefficient vectors.

    The distortion is linear in ``theta`` over a fixed monomial basis, so the
    monomial images of each source window are tabulated once and reused;
    ``f`` and ``g`` then cost one contraction per window. Windows follow the
    displaced PSF centers and are re-tabulated only when they move.
    """

    cache_limit = 512 * 2 ** 20

    def __init__(self, scene: PointSourceScene, psf, monomials=DEFAULT_MONOMIALS,
                 downsample: int = 1):
        self.scene = scene
        self.psf = psf
        self.monomials = tuple(tuple(int(p) for p in e) for e in monomials)
        self.downsample = int(downsample)
        w, h = scene.canvas
        if w % self.downsample or h % self.downsample:
            raise ValueError("canvas not divisible by the down-sample factor")
        self._uu = axis_coords(w)
        self._vv = axis_coords(h)
        self._cache: dict = {}
        self._cache_bytes = 0
        self._half = int(math.ceil(psf.support_radius)) + 2

    @property
    def n_params(self) -> int:
        return 2 * len(self.monomials)

    def _basis(self, s, rows, cols):
        key = (s, rows, cols)
        hit = self._cache.get(key)
        if hit is None:
            x, y, _ = self.scene.sources[s]
            u = self._uu[cols[0]:cols[1]][None, :]
            v = self._vv[rows[0]:rows[1]][:, None]
            hit = np.stack([np.broadcast_to(x ** i * y ** j * u ** m * v ** n,
                                            (rows[1] - rows[0], cols[1] - cols[0]))
                            for i, j, m, n in self.monomials])
            if self._cache_bytes + hit.nbytes > self.cache_limit:
                self._cache.clear()
                self._cache_bytes = 0
            self._cache[key] = hit
            self._cache_bytes += hit.nbytes
        return hit

    def _point_fg(self, theta):
        k = len(self.monomials)
        tf, tg = theta[:k], theta[k:]

        def fg(u, v, x, y):
            mono = np.array([x ** i * y ** j * u ** m * v ** n
                             for i, j, m, n in self.monomials])
            return float(tf @ mono), float(tg @ mono)
        return fg

    def render(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.size != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters")
        k = len(self.monomials)
        tf, tg = theta[:k], theta[k:]
        canvas = self.scene.canvas
        w, h = canvas
        image = np.zeros((h, w))
        point_fg = self._point_fg(theta)
        for s, (x, y, flux) in enumerate(self.scene.sources):
            if flux == 0:
                continue
            center = _psf_center(point_fg, x, y, self.psf.support_radius)
            half = self._half
            while True:
                rows, cols = _windows(canvas, center, half)
                basis = self._basis(s, rows, cols)
                f = np.tensordot(tf, basis, axes=1)
                g = np.tensordot(tg, basis, axes=1)
                u = self._uu[cols[0]:cols[1]][None, :]
                v = self._vv[rows[0]:rows[1]][:, None]
                vals = flux * self.psf(u - x + f, v - y + g)
                if center is None or not _edge_active(vals, rows, cols, canvas):
                    break
                if rows == (0, h) and cols == (0, w):
                    break
                half *= 2
            image[rows[0]:rows[1], cols[0]:cols[1]] += vals
        if self.downsample > 1:
            d = self.downsample
            image = image.reshape(h // d, d, w // d, d).sum(axis=(1, 3))
        return image
