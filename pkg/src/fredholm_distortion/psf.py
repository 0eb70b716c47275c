"""Reference point spread functions.

Two kinds are supported: an analytic circular Gaussian, and a tabulated PSF
(usually measured from an image and upsampled in frequency space) evaluated
by bilinear interpolation on its fine grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .grid import ScalarField

__all__ = [
    "GaussianPsf",
    "TabulatedPsf",
    "PsfExtractionError",
    "gaussian_psf_eval",
    "pixel_integrated_gaussian",
    "pixel_integrated_gaussian_image",
    "gaussian_image",
    "extract_reference_psf",
    "upsample_psf_frequency",
    "tabulated_psf_eval",
    "psf_from_config",
]


class PsfExtractionError(ValueError):
    pass


def gaussian_psf_eval(sigma: float, u, v):
    """Unit-integral circular Gaussian ``exp(-(u^2+v^2)/(2 sigma^2)) / (2 pi sigma^2)``."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    out = np.exp(-(u * u + v * v) / (2.0 * sigma * sigma)) / (2.0 * np.pi * sigma * sigma)
    return out if out.ndim else float(out)


def _pixel_factor(sigma, t, c):
    s = sigma * math.sqrt(2.0)
    return 0.5 * (erf((t + 0.5 - c) / s) - erf((t - 0.5 - c) / s))


def pixel_integrated_gaussian(sigma: float, i, j, center=(0.0, 0.0), flux: float = 1.0):
    """Flux of a Gaussian spot collected by the unit pixel centered at ``(i, j)``.

    ``i`` and ``j`` are pixel-center coordinates along u and v.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    out = flux * _pixel_factor(sigma, np.asarray(i, float), center[0]) \
        * _pixel_factor(sigma, np.asarray(j, float), center[1])
    return out if np.ndim(out) else float(out)


def gaussian_image(shape, sigma: float, center=(0.0, 0.0), flux: float = 1.0) -> ScalarField:
    """Impulse samples of ``flux * p(u - cx, v - cy)`` on a ``(height, width)`` grid."""
    h, w = shape
    field = ScalarField.zeros(w, h)
    uu, vv = field.coords()
    gx = np.exp(-(uu - center[0]) ** 2 / (2 * sigma ** 2))
    gy = np.exp(-(vv - center[1]) ** 2 / (2 * sigma ** 2))
    return ScalarField(flux * np.outer(gy, gx) / (2 * np.pi * sigma ** 2))


def pixel_integrated_gaussian_image(shape, sigma: float, center=(0.0, 0.0),
                                    flux: float = 1.0) -> ScalarField:
    h, w = shape
    field = ScalarField.zeros(w, h)
    uu, vv = field.coords()
    return ScalarField(flux * np.outer(_pixel_factor(sigma, vv, center[1]),
                                       _pixel_factor(sigma, uu, center[0])))


@dataclass(frozen=True)
class GaussianPsf:
    sigma: float
    cutoff_sigmas: float = 8.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @property
    def support_radius(self) -> float:
        return self.cutoff_sigmas * self.sigma

    def __call__(self, du, dv):
        r2 = du * du + dv * dv
        s2 = self.sigma * self.sigma
        out = np.exp(-r2 / (2.0 * s2)) / (2.0 * np.pi * s2)
        return np.where(r2 <= self.support_radius ** 2, out, 0.0)


@dataclass(frozen=True)
class TabulatedPsf:
    """PSF table with pitch ``1/upsample_factor`` coarse pixels.

    ``anchor`` is the fractional (row, column) index of the PSF center in the
    fine table. Values are per coarse pixel (the coarse table sums to the flux
    it was normalized to).
    """

    table: ScalarField
    upsample_factor: int = 1
    anchor: tuple[float, float] | None = None

    def __post_init__(self):
        if int(self.upsample_factor) < 1:
            raise ValueError("upsample_factor must be >= 1")
        object.__setattr__(self, "upsample_factor", int(self.upsample_factor))
        if self.anchor is None:
            h, w = self.table.shape
            f = self.upsample_factor
            # coarse center sits at fine index f * (coarse center index)
            object.__setattr__(self, "anchor",
                               (f * ((h + f - 1) // f - 1) / 2.0,
                                f * ((w + f - 1) // f - 1) / 2.0))

    @property
    def flux(self) -> float:
        return self.table.sum() / self.upsample_factor ** 2

    @property
    def support_radius(self) -> float:
        h, w = self.table.shape
        a0, a1 = self.anchor
        ext = max(a0, h - 1 - a0, a1, w - 1 - a1)
        return math.sqrt(2.0) * ext / self.upsample_factor

    def __call__(self, du, dv):
        return tabulated_psf_eval(self, du, dv)


def tabulated_psf_eval(psf: TabulatedPsf, du, dv):
    """Bilinear lookup at displacement ``(du, dv)`` (coarse pixels) from the anchor.

    Zero outside the table.
    """
    f = psf.upsample_factor
    table = psf.table.data
    h, w = table.shape
    du = np.asarray(du, dtype=np.float64)
    dv = np.asarray(dv, dtype=np.float64)
    r = psf.anchor[0] + f * dv
    c = psf.anchor[1] + f * du
    inside = (r >= 0) & (r <= h - 1) & (c >= 0) & (c <= w - 1)
    r = np.where(inside, r, 0.0)
    c = np.where(inside, c, 0.0)
    r0 = np.minimum(np.floor(r).astype(np.intp), max(h - 2, 0))
    c0 = np.minimum(np.floor(c).astype(np.intp), max(w - 2, 0))
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    tr = r - r0
    tc = c - c0
    out = ((1 - tr) * ((1 - tc) * table[r0, c0] + tc * table[r0, c1])
           + tr * ((1 - tc) * table[r1, c0] + tc * table[r1, c1]))
    out = np.where(inside, out, 0.0)
    return out if out.ndim else float(out)


def extract_reference_psf(image: ScalarField, center=(0.0, 0.0), window: int = 50,
                          other_sources=None) -> ScalarField:
    """Crop, background-subtract and flux-normalize the PSF nearest ``center``.

    The window is forced odd so the peak sits on a pixel center. The
    background floor is the median of the crop perimeter. ``other_sources``
    (an ``(n, 2)`` array of source positions) enables an isolation check:
    any other source inside the crop raises :class:`PsfExtractionError`.
    """
    window = int(window)
    if window < 1:
        raise ValueError("window must be >= 1")
    if window % 2 == 0:
        window += 1
    half = window // 2
    m_c, n_c = image.coord_to_index(*center)
    m_c, n_c = int(round(float(m_c))), int(round(float(n_c)))
    h, w = image.shape
    if m_c - half < 0 or n_c - half < 0 or m_c + half >= h or n_c + half >= w:
        raise PsfExtractionError(
            f"{window}x{window} window at {center} exceeds the {w}x{h} image")
    if other_sources is not None:
        pts = np.asarray(other_sources, dtype=np.float64).reshape(-1, 2)
        cu, cv = image.index_to_coord(m_c, n_c)
        d = np.maximum(np.abs(pts[:, 0] - cu), np.abs(pts[:, 1] - cv))
        near = pts[(d <= half + 0.5) & ~((np.abs(pts[:, 0] - center[0]) < 1e-9)
                                         & (np.abs(pts[:, 1] - center[1]) < 1e-9))]
        if len(near):
            raise PsfExtractionError(
                f"neighbor sources inside the extraction window: {near.tolist()}")
    crop = np.array(image.data[m_c - half:m_c + half + 1, n_c - half:n_c + half + 1])
    perimeter = np.concatenate([crop[0], crop[-1], crop[1:-1, 0], crop[1:-1, -1]])
    crop = crop - np.median(perimeter)
    total = crop.sum()
    if not total > 0:
        raise PsfExtractionError("extracted PSF has non-positive flux")
    return ScalarField(crop / total)


def upsample_psf_frequency(psf: ScalarField, factor: int = 8) -> ScalarField:
    """Band-limited upsampling by zero-padding the 2D spectrum.

    The result has shape ``(factor*H, factor*W)``; fine sample ``factor*k``
    equals coarse sample ``k``. Values keep the coarse-pixel scale, so the fine
    table sums to ``factor**2`` times the coarse sum.
    """
    factor = int(factor)
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if factor == 1:
        return psf
    data = psf.data
    h, w = data.shape
    spec = np.fft.fft2(data)
    H, W = factor * h, factor * w
    padded = np.zeros((H, W), dtype=complex)
    rows = _split_bins(h, H)
    cols = _split_bins(w, W)
    for src_r, dst_r, wr in rows:
        for src_c, dst_c, wc in cols:
            padded[dst_r, dst_c] += wr * wc * spec[src_r, src_c]
    fine = np.fft.ifft2(padded).real * factor * factor
    return ScalarField(fine)


def _split_bins(n, big):
    """Index maps placing an ``n``-point spectrum into a ``big``-point one.

    Even ``n`` splits the Nyquist bin evenly across +/- frequencies so the
    interpolant stays real.
    """
    pos = n // 2 + (n % 2)  # bins 0..pos-1 are non-negative frequencies
    out = [(slice(0, pos), slice(0, pos), 1.0)]
    if n % 2:
        if n > 1:
            out.append((slice(pos, n), slice(big - (n - pos), big), 1.0))
    else:
        nyq = n // 2
        out = [(slice(0, nyq), slice(0, nyq), 1.0),
               (slice(nyq, nyq + 1), slice(nyq, nyq + 1), 0.5),
               (slice(nyq, nyq + 1), slice(big - nyq, big - nyq + 1), 0.5)]
        if nyq > 1:
            out.append((slice(nyq + 1, n), slice(big - nyq + 1, big), 1.0))
    return out


def psf_from_config(cfg: dict, base_dir=None):
    """``{"gaussian": {"sigma": s}}`` or ``{"table": path, "upsample": f}``."""
    if "gaussian" in cfg:
        g = cfg["gaussian"]
        return GaussianPsf(float(g["sigma"]), float(g.get("cutoff_sigmas", 8.0)))
    if "table" in cfg:
        from pathlib import Path

        from .grid import read_fgrid

        path = Path(cfg["table"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return TabulatedPsf(read_fgrid(path), int(cfg.get("upsample", 1)))
    raise ValueError("psf config needs a 'gaussian' or 'table' entry")
