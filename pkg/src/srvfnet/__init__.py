"""Elastic alignment of 1-D functional data with square-root velocity functions.

Classical dynamic-programming matching and Karcher means live alongside
SrvfNet, a generative encoder/decoder that predicts warps to a fixed or
jointly estimated template.
"""
from .diffeo import PiConfig, compose, gamma_dot, invert, is_valid_diffeo, pi_layer, velocity_to_gamma, warp_srvf
from .elastic import DpConfig, KarcherResult, dp_align, dp_align_many, karcher_mean
from .estimators import KarcherMean, SrvfNet, SrvfTransformer
from .exceptions import (CsvFormatError, DegenerateInputError, DimensionError, NumericError,
                         PreconditionError)
from .functional import from_srvf, geodesic_distance, inner_product, numerical_derivative, to_srvf
from .losses import LossWeights, estimate_template, fr_loss, grad2_penalty, grad_penalty, kl_loss
from .training import TrainConfig, train

__version__ = "0.1.0"
