"""Adaptive tests of homogeneity for Poisson processes on [0, 1]."""

from .calibration import (
    CalibrationConfig,
    ModelSelection,
    QuantileTable,
    Thresholding,
    calibrate,
    calibrate_model_selection,
    calibrate_thresholding,
    load_table,
    save_table,
)
from .haar import HaarIndex, IndexSet, alpha_hat, phi, t_doubleprime, t_lambda, t_prime
from .intensity import (
    S1,
    S2,
    S3,
    S4,
    S5,
    Constant,
    HaarSpike,
    PiecewiseConstant,
    evaluate,
    haar_coefficients,
    make_spike_alternative,
)
from .poisson import PatternBatch, PointPattern, simulate, simulate_conditional_uniform
from .procedures import TestVerdict

__version__ = "0.1.0"
