"""
Fitting a polynomial to a non-polynomial distortion
===================================================

When the true warp is logarithmic in the field radius, the polynomial basis
can only approximate it. Unlike the polynomial scene, which is matched to
rounding error, the best polynomial fit leaves a large residue.
"""

from pathlib import Path

import numpy as np

from fredholm_distortion.distortion import theta_to_polynomial
from fredholm_distortion.estimator import FitOptions, fit
from fredholm_distortion.grid import PointSourceScene, export_png
from fredholm_distortion.psf import GaussianPsf
from fredholm_distortion.simulator import (LogarithmicDistortion, PolynomialDistortion,
                                           render_fredholm)

out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)

scene = PointSourceScene.grid((255, 255), 5, 50, 1e5)
psf = GaussianPsf(10.0)
opts = FitOptions(starts=1)

theta = np.array([0, -2, 0, 2, 1, 2, 0, 1, 0, 3, 1, -1]) * 1e-6
poly = fit(render_fredholm(scene, psf, PolynomialDistortion(theta_to_polynomial(theta))),
           scene, psf, options=opts)
logf = fit(render_fredholm(scene, psf, LogarithmicDistortion(scale=1e-5)), scene, psf, options=opts)

print(f"polynomial scene:  V / flux^2 = {poly.value_per_source_flux:.3g}")
print(f"logarithmic scene: V / flux^2 = {logf.value_per_source_flux:.3g}")
print("fitted coefficients (1e-6):", np.round(logf.params_scaled, 2))
print(f"residue range [{logf.residue.data.min():.1f}, {logf.residue.data.max():.1f}]")
export_png(logf.residue, out / "logarithmic_residue.png")
