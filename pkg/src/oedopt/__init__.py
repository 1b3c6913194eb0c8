"""Gradient-based stochastic optimization for Bayesian experimental design.

Estimates expected information gain with a nested Monte Carlo scheme,
differentiates it analytically through Legendre polynomial chaos
surrogates, and maximizes it by Robbins-Monro stochastic approximation
or by sample average approximation with BFGS.  The bundled benchmark
places a sensor to locate a diffusing contaminant source.
"""

from .bounds import Bounds
from .eig import (EIGEstimator, EIGSampleSet, EIGValueAndGrad, NoiseModel,
                  PriorSpec, draw_sample_set, eig_gradient, eig_value,
                  eig_value_fresh, log_likelihood)
from .harness import (ExperimentConfig, ExperimentMatrixResult, emit_reports,
                      mse_of_cell, posterior_map, run_matrix)
from .models import (DiffusionConfig, DiffusionForwardModel, DiffusionSolver,
                     ForwardModel, LinearGaussianModel, SurrogateForwardModel,
                     diffusion_forward, diffusion_solve,
                     linear_gaussian_eig, linear_gaussian_forward)
from .optim import (BFGSOptions, GainSchedule, GapEstimate, OptimizationTrace,
                    RMOptions, Termination, bfgs_maximize, rm_optimize,
                    robbins_monro, saa_optimize)
from .polychaos import (AffineMap, IndexSet, PCExpansion, QuadratureRule,
                        box_maps, clenshaw_curtis_1d, legendre_derivative,
                        legendre_value, project, smolyak_quadrature,
                        tensor_quadrature, total_order_index_set)

__version__ = "0.1.0"
