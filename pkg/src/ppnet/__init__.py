"""Parametric bio-inspired early-vision model and image-quality metric.

A numpy/scipy library built around four ideas: convolution kernels
synthesized from a small set of generative parameters (Gaussians,
difference-of-Gaussians, Gabors), divisive normalization as the
nonlinearity, a psychophysically calibrated default parameter set, and a
correlation-against-opinion evaluation and fitting harness.
"""

__version__ = "0.1.0"

from .errors import (ConfigurationError, DataError, InputError, NumericalError,
                     ParameterError, PpnetError, UsageError)
from .tensor import ImageTensor, KernelTensor, conv2d, max_pool_2x2
from .kernels import (ChannelMeta, ChannelMix, DnNeighborhoodParams, DoGParams,
                      GaborParams, GaussianParams, circular_distance,
                      dn_neighborhood_kernel, dog_kernel, gabor_kernel,
                      gaussian_kernel)
from .layers import (ColorMatrix, DnParams, FeatureNeighborhood,
                     GaussianNeighborhood, PointwiseNeighborhood, color_matrix,
                     divisive_norm, param_conv)
from .model import (CompiledModel, LayerTaps, ModelConfig, ModelState,
                    ParamCounts, build_bio_model, channel_layout, count_params,
                    forward, load_params, save_params, states_equal)
from .metric import (ChannelErrors, channel_errors, distance_from_errors,
                     perceptual_distance)
from .dataset import (IqaRecord, Manifest, load_image_as_tensor, load_manifest,
                      read_image, save_manifest, write_pgm, write_ppm)
from .evaluate import (ConsistencyReport, CorrelationReport, evaluate_dataset,
                       monte_carlo_rho_max, pearson, ssim)
from .fit import (FitReport, FreezeSpec, SweepReport, fit_final_scale,
                  fit_freeze_ladder, project_constraints, random_init_sweep)
from .viz import RenderSpec, render_kernels, render_responses
from .synthetic import (distort, make_grating, make_test_image,
                        write_synthetic_database)
