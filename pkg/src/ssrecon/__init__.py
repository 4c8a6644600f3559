"""Self-supervised physics-guided unrolled reconstruction of undersampled multi-coil MRI."""

__version__ = "0.1.0"

from .core import fft2c, ifft2c, norms, vdot
from .encoding import CoilSensitivities, SenseOperator, sense_adjoint, sense_forward, sense_normal
from .errors import (ConfigError, DegenerateSplitError, FormatError, NormalizationError, NumericError,
                     ParameterError, ReconError, ShapeError)
from .metrics import MetricReport, nmse, ssim
from .network import NetConfig, NetworkParams, count_params, init_params, resnet_forward, unrolled_forward
from .sampling import GAUSSIAN, UNIFORM, SamplingMask, SplitSpec, make_omega_mask, split_omega
from .solvers import cg_sense, conjugate_gradient, dc_solve, tgv_reconstruct
from .training import (SELFSUP, SUPERVISED, AdamState, GradientBundle, LossSpec, adam_step, backprop, fit,
                       norm_l1l2_loss, selfsup_loss, supervised_loss)
