"""Greedy recovery of signals from unions of subspaces.

A generalized CoSaMP engine over pluggable union-of-subspaces models
(k-sparse, block-sparse, low-rank, dictionary-sparse, cosparse and their
sums), a synthesis + analysis variant for two-component signals, Gaussian
mean width tools, and experiment drivers.
"""
from .engine import (NumericalAbort, RecoverySettings, RecoveryTrace, cgls, constrained_least_squares,
                     halt_check, run_gcosamp)
from .metrics import psnr, relative_error
from .models import (AnalysisModel, BlockSparseModel, CombinedModel, KSparseModel, LowRankModel, Subspace,
                     SynthesisModel, UnionModel, combined, project, select_subspace, subspace_basis,
                     sum_subspaces)
from .operators import (AnalysisOperator, DenseOperator, FiniteDifference2D, IdentityOperator, LinearOperator,
                        SamplingMask, ShapeError, SubsampledFourierOperator, SynthesisDictionary,
                        build_finite_difference, build_local_dct, gaussian_operator, sample_laplace_noise,
                        scale_noise_to_ratio, variable_density_mask)
from .sacosamp import joint_constrained_ls, run_sacosamp, split_constrained_ls
from .theory import (BoundReport, WidthEstimate, bound_report, expected_gaussian_norm, mc_mean_width,
                     verify_gordon, verify_projected_contraction, width_upper_bound)

__version__ = "0.1.0"
