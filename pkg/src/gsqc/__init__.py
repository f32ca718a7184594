"""Graph signal compression by joint sampling and dithered scalar quantization."""

from .graph import Graph, SpectralGraph, eigendecompose, gft, igft, normalized_laplacian, random_geometric_graph
from .signal_model import SignalModel, covariance, mmse_estimator, mmse_floor, sample_signal
from .quantization import QuantizerBank, calibrate_supports, error_covariance, quantize_scalar, quantize_vector_dithered
from .designs import CompressionDesign, load_design, optimal_recovery, save_design
from .unconstrained import (
    BitAllocation,
    design_unconstrained,
    greedy_bit_allocation,
    solve_alphas,
    waterfill_real_bits,
)

__version__ = "0.1.0"
