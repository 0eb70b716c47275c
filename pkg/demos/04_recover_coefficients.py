"""
Recovering distortion coefficients
==================================

With the scene known, the twelve polynomial coefficients are found by
minimizing the squared difference between the observation and a rendered
model. Noise-free data is matched to rounding error; a Poisson background
sets a floor on the achievable accuracy.
"""

import numpy as np

from fredholm_distortion.distortion import theta_to_polynomial
from fredholm_distortion.estimator import FitOptions, fit
from fredholm_distortion.grid import PointSourceScene
from fredholm_distortion.psf import GaussianPsf
from fredholm_distortion.simulator import (NoiseSpec, PolynomialDistortion, add_poisson_noise,
                                           render_fredholm)

theta = np.array([0, -2, 0, 2, 1, 2, 0, 1, 0, 3, 1, -1]) * 1e-6
scene = PointSourceScene.grid((255, 255), 5, 50, 1e5)
psf = GaussianPsf(10.0)
clean = render_fredholm(scene, psf, PolynomialDistortion(theta_to_polynomial(theta)))

print("source  ", np.round(theta * 1e6, 3))
for lam in (0.0, 10.0):
    observed = add_poisson_noise(clean, NoiseSpec(lam, seed=1))
    report = fit(observed, scene, psf, options=FitOptions(starts=2))
    print(f"lambda={lam:<4g}", np.round(report.params_scaled, 3),
          f"lambda_hat={report.lambda_hat:.3f}",
          f"chi2={report.chi2:.4f}" if np.isfinite(report.chi2) else "")
