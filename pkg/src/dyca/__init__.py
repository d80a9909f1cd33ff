"""Dynamical Component Analysis (DyCA) and an eigenvalue-threshold event detector."""

from .baselines import IcaModel, PcaModel, baseline_project, ica_fit, pca_fit
from .core import (DycaModel, DycaOptions, correlation_matrices, cost_function, dyca_eigenvalues,
                   dyca_fit, estimate_linear_coeffs, min_cost, project)
from .detector import (DetectorConfig, MetricsReport, SweepResult, WindowResult, compute_metrics,
                       detect, threshold_sweep)
from .errors import DycaError, InputError, NumericalError
from .io import read_annotations, read_recording, write_annotations, write_recording
from .signal import Signal, WindowConfig, estimate_derivative, make_signal, sliding_windows
from .synth import (AnnotatedRecording, EmbeddingSpec, Scenario, ShilnikovParams, build_scenario,
                    compose_recording, embed, shilnikov_trajectory)

__version__ = "0.1.0"
