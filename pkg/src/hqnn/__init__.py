"""Hybrid quantum-classical and classical MNIST classifiers on a statevector simulator."""
from .circuit import (PqcLayout, QuantumModel, encode_chunk, encode_chunk_binary,
                      pqc_forward_analytic, pqc_forward_statevector, pqc_gradient)
from .experiment import RunConfig, compare_runs, emit_report, run_training
from .nn import BaselineModel
from .qsim import StateVector, apply_single, apply_two, expectation_z, new_statevector

__version__ = "0.1.0"
