"""Simulation and estimation of shift-variant field distortion.

Images of point-source scenes are rendered through a reference PSF whose
arguments are warped by position-dependent distortion functions. The
package also models the sensor's pixel-integration sampling and inverts
it, and recovers the distortion coefficients from observed images.
"""

from .distortion import (DEFAULT_MONOMIALS, DistortionPolynomial, MonomialTerm,
                         ThetaVector, eval_f, eval_g, theta_to_polynomial,
                         validate_dfc)
from .estimator import (FitOptions, FitReport, PinholeParams, chi_squared,
                        estimate_lambda, fit, pinhole_warp, value_function)
from .grid import (PointSourceScene, ScalarField, block_downsample, read_fgrid,
                   shannon_eval, write_fgrid)
from .psf import (GaussianPsf, TabulatedPsf, extract_reference_psf,
                  gaussian_psf_eval, pixel_integrated_gaussian,
                  tabulated_psf_eval, upsample_psf_frequency)
from .sampling import (SamplingMatrix, build_r_matrix, correct_sampling,
                       sensor_sample, sine_integral)
from .simulator import (LogarithmicDistortion, NoDistortion, NoiseSpec,
                        PolynomialDistortion, add_poisson_noise,
                        render_downsampled_scene, render_fredholm)

__version__ = "0.1.0"
