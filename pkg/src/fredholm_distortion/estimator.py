"""Recovery of distortion parameters from an observed point-source image.

The reconstruction ``I'`` is rendered from the known scene for a trial
parameter vector and compared with the observation through the value
function ``V = sum (I - I')**2``. Two models are supported:

* ``"fredholm"``: polynomial distortion of the PSF argument (12 coefficients
  in the default basis);
* ``"pinhole"``: each source drawn with the undistorted PSF at a warped
  position ``x_d = (1 + k1 x + k2 y + k3 x^2 + k4 y^2) x`` and
  ``y_d = (1 + k5 x + k6 y + k7 x^2 + k8 y^2) y``.

Parameters are minimized with a bounded trust-region least-squares solver,
restarted from several points in the box.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .distortion import DEFAULT_MONOMIALS, ThetaVector
from .grid import PointSourceScene, ScalarField
from .simulator import PolynomialRenderer, render_sources

__all__ = [
    "PinholeParams",
    "FitOptions",
    "FitReport",
    "FitError",
    "pinhole_warp",
    "value_function",
    "estimate_lambda",
    "chi_squared",
    "fit",
    "Reconstructor",
]

log = logging.getLogger(__name__)


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class PinholeParams:
    k: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(t) for t in np.asarray(self.k, dtype=np.float64).ravel())
        if len(vals) != 8:
            raise ValueError("PinholeParams needs 8 values")
        if not all(math.isfinite(t) for t in vals):
            raise ValueError("PinholeParams must be finite")
        object.__setattr__(self, "k", vals)

    def __array__(self, dtype=None, copy=None):
        return np.array(self.k, dtype=dtype)


def pinhole_warp(params, x, y):
    """Distorted position ``(x_d, y_d)`` of an object-plane point."""
    k = np.asarray(params, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xd = (1 + k[0] * x + k[1] * y + k[2] * x * x + k[3] * y * y) * x
    yd = (1 + k[4] * x + k[5] * y + k[6] * x * x + k[7] * y * y) * y
    if xd.ndim == 0:
        return float(xd), float(yd)
    return xd, yd


class Reconstructor:
    """Renders the model image for a parameter vector.

    ``downsample`` > 1 renders on the scene canvas and block-sums the result,
    matching an observation recorded at the coarser resolution.
    """

    def __init__(self, scene: PointSourceScene, psf, model: str = "fredholm",
                 downsample: int = 1, monomials=DEFAULT_MONOMIALS):
        if model not in ("fredholm", "pinhole"):
            raise ValueError(f"unknown model {model!r}")
        self.scene = scene
        self.psf = psf
        self.model = model
        self.downsample = int(downsample)
        w, h = scene.canvas
        self.shape = (h // self.downsample, w // self.downsample)
        if model == "fredholm":
            self._poly = PolynomialRenderer(scene, psf, monomials, self.downsample)
            self.n_params = self._poly.n_params
        else:
            self.n_params = 8

    def render(self, params) -> np.ndarray:
        p = np.asarray(params, dtype=np.float64)
        if p.size != self.n_params:
            raise ValueError(f"{self.model} model takes {self.n_params} parameters")
        if self.model == "fredholm":
            return self._poly.render(p)
        xd, yd = pinhole_warp(p, self.scene.x, self.scene.y)
        image = render_sources(xd, yd, self.scene.flux, self.scene.canvas, self.psf)
        d = self.downsample
        if d > 1:
            h, w = image.shape
            image = image.reshape(h // d, d, w // d, d).sum(axis=(1, 3))
        return image


def _as_array(img):
    return img.data if isinstance(img, ScalarField) else np.asarray(img, dtype=np.float64)


def _check_same(a, b):
    if a.shape != b.shape:
        raise ValueError(f"grid mismatch: {a.shape} vs {b.shape}")


def value_function(observed, scene: PointSourceScene, psf, params, *,
                   downsample: int = 1, monomials=DEFAULT_MONOMIALS) -> float:
    """Sum of squared residuals between ``observed`` and the model image.

    The model is chosen by the type of ``params``: :class:`PinholeParams`
    selects the pinhole model, anything else (a :class:`ThetaVector` or
    plain array) the Fredholm model.
    """
    model = "pinhole" if isinstance(params, PinholeParams) else "fredholm"
    rec = Reconstructor(scene, psf, model, downsample, monomials)
    obs = _as_array(observed)
    if obs.shape != rec.shape:
        raise ValueError(f"grid mismatch: observed {obs.shape}, model {rec.shape}")
    r = obs - rec.render(params)
    return float(np.dot(r.ravel(), r.ravel()))


def estimate_lambda(observed, reconstructed) -> float:
    """Mean residual, the background estimate ``sum(I - I') / (M N)``."""
    a, b = _as_array(observed), _as_array(reconstructed)
    _check_same(a, b)
    return float((a - b).mean())


def chi_squared(observed, reconstructed, lambda_hat: float) -> float:
    """``sum (I - I' - lambda_hat)**2 / (M N lambda_hat)``."""
    if not lambda_hat > 0:
        raise ValueError("chi-squared needs a positive background estimate")
    a, b = _as_array(observed), _as_array(reconstructed)
    _check_same(a, b)
    r = a - b - lambda_hat
    return float(np.dot(r.ravel(), r.ravel()) / (r.size * lambda_hat))


@dataclass(frozen=True)
class FitOptions:
    """Settings for :func:`fit`.

    ``bounds`` is the absolute half-width of the parameter box. The first
    start is the origin (or ``initial``); the others are drawn uniformly from
    ``[-start_box, start_box]``, since far inside the box the warped PSFs
    leave the canvas and V goes flat. ``fd_step`` is the central-difference
    step in scaled units (parameter times ``param_scale``). ``tol_v`` is the
    relative decrease of the objective below which a start stops;
    ``tol_step`` the scaled step norm below which it stops.

    With ``background="profile"`` the objective is V after removing the mean
    residual, i.e. a constant background fitted alongside the parameters.
    Warping changes the flux a PSF deposits, so an unmodeled Poisson
    background otherwise pulls the fit towards flux-inflating distortions.
    ``"none"`` minimizes the plain V.
    """

    model: str = "fredholm"
    starts: int = 8
    bounds: float = 1e-4
    start_box: float = 5e-6
    fd_step: float = 1e-2
    tol_v: float = 1e-10
    tol_step: float = 1e-12
    param_scale: float = 1e6
    max_evals: int = 200
    seed: int = 7
    downsample: int = 1
    initial: tuple | None = None
    background: str = "profile"

    def __post_init__(self):
        if self.background not in ("profile", "none"):
            raise ValueError("background must be 'profile' or 'none'")

    @classmethod
    def from_config(cls, cfg: dict) -> "FitOptions":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(cfg) - known
        if unknown:
            raise ValueError(f"unknown fit options: {sorted(unknown)}")
        return cls(**cfg)


@dataclass
class FitReport:
    model: str
    params: np.ndarray
    value: float
    lambda_hat: float
    chi2: float
    starts: int
    iterations: int
    converged: bool
    residue: ScalarField = field(repr=False)
    objective: float = math.nan
    value_per_source_flux: float = math.nan
    value_per_total_flux: float = math.nan
    start_values: list = field(default_factory=list)
    message: str = ""

    @property
    def params_scaled(self) -> np.ndarray:
        return np.asarray(self.params) * 1e6

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("residue")
        out["params"] = [float(p) for p in self.params]
        out["params_1e-6"] = [float(p) for p in self.params_scaled]
        for key in ("value", "objective", "lambda_hat", "chi2", "value_per_source_flux",
                    "value_per_total_flux"):
            if not math.isfinite(out[key]):
                out[key] = None
        return out


def _start_points(n_params, options, rng):
    scale = options.param_scale
    box = options.bounds * scale
    first = np.zeros(n_params)
    if options.initial is not None:
        first = np.clip(np.asarray(options.initial, float) * scale, -box, box)
    pts = [first]
    spread = min(options.start_box, options.bounds) * scale
    for _ in range(max(options.starts, 1) - 1):
        pts.append(rng.uniform(-spread, spread, size=n_params))
    return pts


def fit(observed, scene: PointSourceScene, psf, model: str | None = None,
        options: FitOptions | None = None) -> FitReport:
    """Least-squares fit of distortion parameters to ``observed``.

    The observation is assumed to be already corrected for sensor sampling.
    The best of ``options.starts`` local runs (lowest objective) is reported.
    ``value`` is the plain V at the solution, ``objective`` the minimized
    quantity (equal to V when ``options.background == "none"``), and
    ``start_values`` the final objective of every start.
    """
    options = options or FitOptions()
    model = model or options.model
    rec = Reconstructor(scene, psf, model, options.downsample)
    obs = _as_array(observed)
    if obs.shape != rec.shape:
        raise ValueError(f"grid mismatch: observed {obs.shape}, model {rec.shape}")
    obs_flat = obs.ravel()
    scale = options.param_scale
    box = options.bounds * scale
    h = options.fd_step

    profile = options.background == "profile"

    def residuals(z):
        r = obs_flat - rec.render(z / scale).ravel()
        return r - r.mean() if profile else r

    def jacobian(z):
        cols = []
        for k in range(z.size):
            zp = z.copy()
            zm = z.copy()
            # stay inside the box; shrink to a one-sided step at a bound
            zp[k] = min(z[k] + h, box)
            zm[k] = max(z[k] - h, -box)
            cols.append(-(rec.render(zp / scale) - rec.render(zm / scale)).ravel()
                        / (zp[k] - zm[k]))
        jac = np.column_stack(cols)
        return jac - jac.mean(axis=0) if profile else jac

    rng = np.random.default_rng(options.seed)
    best = None
    start_values = []
    for n, z0 in enumerate(_start_points(rec.n_params, options, rng)):
        try:
            v0 = float(np.sum(residuals(z0) ** 2))
            if not math.isfinite(v0):
                raise FloatingPointError("non-finite V at start point")
            res = least_squares(residuals, z0, jac=jacobian, bounds=(-box, box),
                                method="trf", x_scale=1.0, ftol=options.tol_v,
                                xtol=options.tol_step, gtol=1e-15,
                                max_nfev=options.max_evals)
            v = 2.0 * float(res.cost)
            if not math.isfinite(v):
                raise FloatingPointError("non-finite V at solution")
        except (FloatingPointError, ValueError, np.linalg.LinAlgError) as exc:
            log.warning("start %d discarded: %s", n, exc)
            start_values.append(math.nan)
            continue
        log.info("start %d: V0=%.6g -> V=%.6g (%d evals, status %d)",
                 n, v0, v, res.nfev, res.status)
        start_values.append(v)
        if best is None or v < best[0]:
            best = (v, res)
    if best is None:
        raise FitError("every start failed")
    objective, res = best
    params = res.x / scale
    model_img = rec.render(params)
    resid = obs - model_img
    v = float(np.dot(resid.ravel(), resid.ravel()))
    lam = estimate_lambda(obs, model_img)
    chi2 = chi_squared(obs, model_img, lam) if lam > 0 else math.nan
    flux = scene.flux
    return FitReport(
        model=model,
        params=params,
        value=v,
        objective=objective,
        lambda_hat=max(lam, 0.0),
        chi2=chi2,
        starts=len(start_values),
        iterations=int(res.njev or 0),
        converged=bool(res.status > 0),
        residue=ScalarField(resid),
        value_per_source_flux=v / float(np.mean(flux)) ** 2 if len(flux) else math.nan,
        value_per_total_flux=v / float(np.sum(flux)) ** 2 if len(flux) else math.nan,
        start_values=start_values,
        message=str(res.message),
    )


def theta_report(report: FitReport) -> ThetaVector:
    if report.model != "fredholm":
        raise ValueError("not a Fredholm fit")
    return ThetaVector(report.params)
