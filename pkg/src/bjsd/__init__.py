"""Sequentially decoupling estimation of Box-Jenkins models."""

from .arx import ArxFit, aic_select_order, fit_arx, recommended_order, truncation_tail
from .estimators import BoxJenkinsSD, BoxJenkinsSDGN
from .exceptions import ModelValidationError, RankDeficiencyError, UnstableFilterError
from .model import BjModel, ThetaVector, sec51_model, sec52_model
from .pem import GnReport, cramer_rao, gn_refine, gn_step, jacobian, pem_loss, prediction_error, predictor
from .poly import Polynomial, RationalFilter, coprime, is_stable, max_root_magnitude, poly_from_roots, poly_mul
from .sd import SdEstimate, sd_estimate
from .signals import (
    ClosedLoopSpec,
    Dataset,
    InputSpec,
    apply_filter,
    gen_closed_loop,
    gen_open_loop,
    sample_random_bj,
    scale_noise_for_snr,
    simulate_bj,
)

__version__ = "0.1.0"
