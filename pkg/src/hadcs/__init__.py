"""Hadamard-mask compressed sensing: masks, measurement, sparse and
dictionary-based recovery, coherence-driven row design and BER sweeps."""

__version__ = "0.1.0"

from ._accel import backend
from .channel import Image, MeasurementVector, NoiseSpec, add_noise, measure, pixel_power
from .corpus import augment, full_corpus, render_letter
from .design import DesignConfig, Strategy, design_report, design_rows
from .dictionary import DictionaryStack, TrainConfig, decode, encode, init_stack, loss, mutual_coherence_effective, train
from .evaluation import EvalContext, EvalRecord, Solver, SweepSummary, ber, max_lossless_M, summarize, sweep, trial
from .reconstruction import ReconResult, SolverConfig, binary_threshold, lasso_fista, reconstruct_dl, soft_threshold
from .sensing import (
    MaskKind,
    MaskMatrix,
    SensingMatrix,
    build_sensing_matrix,
    make_mask,
    mutual_coherence,
    sylvester_hadamard,
    twin_prime_smatrix,
)
